#pragma once

// Shared value types for the radio: acoustic feature vectors, catalog
// entries, primes, songs, ratings and listener preferences, plus their
// canonical JSON shapes.

#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "afm/errors.hpp"

namespace afm {

using Json = nlohmann::json;

// UTC milliseconds since the Unix epoch.
using TimestampMs = std::int64_t;

inline TimestampMs now_utc_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

// ---------------------------------------------------------------------------
// FeatureVector

inline constexpr std::size_t kFeatureCount = 9;
inline constexpr std::size_t kPromptFeatureCount = 3 * kFeatureCount;

enum class Feature : std::size_t {
  danceability,
  energy,
  key,
  loudness,
  speechiness,
  acousticness,
  instrumentalness,
  liveness,
  valence,
};

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "danceability", "energy",           "key",      "loudness", "speechiness",
    "acousticness", "instrumentalness", "liveness", "valence"};

// Valid range of each dimension; key is the 0-11 pitch class divided by 11.
inline constexpr std::pair<double, double> feature_domain(std::size_t dim) {
  return dim == static_cast<std::size_t>(Feature::loudness)
             ? std::pair{-60.0, 0.0}
             : std::pair{0.0, 1.0};
}

inline constexpr double normalize_key(int pitch_class) { return pitch_class / 11.0; }

struct FeatureVector {
  std::array<double, kFeatureCount> values{};

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }
  double operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }

  static FeatureVector filled(double x) {
    FeatureVector v;
    v.values.fill(x);
    return v;
  }

  bool is_finite() const {
    for (double x : values)
      if (!std::isfinite(x)) return false;
    return true;
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline void require_finite(const FeatureVector& v, std::string_view what) {
  if (!v.is_finite())
    throw ValidationError(std::string(what) + ": features must be finite");
}

// ---------------------------------------------------------------------------
// Catalog entries and primes

struct ArtistProfile {
  std::string artist_id;
  std::string display_name;
  FeatureVector features;
  friend bool operator==(const ArtistProfile&, const ArtistProfile&) = default;
};

struct GenreProfile {
  std::string genre_id;
  std::string display_name;
  FeatureVector features;
  friend bool operator==(const GenreProfile&, const GenreProfile&) = default;
};

struct Prime {
  std::string prime_id;
  std::string contributor_name;
  FeatureVector prime_artist_features;
  std::string audio_ref;
  TimestampMs submitted_at = 0;
  friend bool operator==(const Prime&, const Prime&) = default;
};

// Prime block, artist block, genre block; each in FeatureVector order.
struct PromptFeatures {
  std::array<double, kPromptFeatureCount> values{};

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  friend bool operator==(const PromptFeatures&, const PromptFeatures&) = default;
};

struct Song {
  std::string song_id;
  std::string prime_id;
  std::string artist_prompt;
  std::string genre_prompt;
  PromptFeatures prompt_features;
  FeatureVector song_features;
  std::string audio_ref;
  TimestampMs created_at = 0;
  friend bool operator==(const Song&, const Song&) = default;
};

// ---------------------------------------------------------------------------
// Ratings

enum class RatingQuestion : std::size_t {
  happy,
  danceable,
  artificial,
  clear_lyrics,
  instrumental,
  upbeat,
  like,
};

inline constexpr std::size_t kQuestionCount = 7;

inline constexpr std::array<RatingQuestion, kQuestionCount> kAllQuestions = {
    RatingQuestion::happy,        RatingQuestion::danceable,
    RatingQuestion::artificial,   RatingQuestion::clear_lyrics,
    RatingQuestion::instrumental, RatingQuestion::upbeat,
    RatingQuestion::like};

inline constexpr std::array<std::string_view, kQuestionCount> kQuestionNames = {
    "happy", "danceable", "artificial", "clear_lyrics", "instrumental", "upbeat", "like"};

// Wording shown to listeners.
inline constexpr std::array<std::string_view, kQuestionCount> kQuestionPrompts = {
    "How happy is this song?",        "How danceable is this song?",
    "How artificial is this song?",   "How clear are the lyrics?",
    "How instrumental is this song?", "How upbeat is this song?",
    "How much do you like this song?"};

inline constexpr std::size_t index_of(RatingQuestion q) { return static_cast<std::size_t>(q); }

inline std::string_view to_string(RatingQuestion q) { return kQuestionNames[index_of(q)]; }

inline std::optional<RatingQuestion> parse_question(std::string_view name) {
  for (std::size_t i = 0; i < kQuestionCount; ++i)
    if (kQuestionNames[i] == name) return kAllQuestions[i];
  return std::nullopt;
}

// Maps 1-5 stars onto the [-2, 2] range used by the quality score.
inline double center_likert(int raw) {
  if (raw < 1 || raw > 5)
    throw ValidationError("likert answer must be in 1..5, got " + std::to_string(raw));
  return static_cast<double>(raw - 3);
}

inline bool valid_stars(int stars) { return stars >= 1 && stars <= 5; }

struct Rating {
  std::string rating_id;
  std::string listener_id;
  std::string song_id;
  std::array<std::optional<int>, kQuestionCount> answers{};
  TimestampMs submitted_at = 0;

  std::optional<int> answer(RatingQuestion q) const { return answers[index_of(q)]; }

  void set_answer(RatingQuestion q, int stars) {
    if (!valid_stars(stars))
      throw ValidationError("likert answer must be in 1..5, got " + std::to_string(stars));
    answers[index_of(q)] = stars;
  }

  std::size_t answer_count() const {
    std::size_t n = 0;
    for (const auto& a : answers) n += a.has_value();
    return n;
  }

  friend bool operator==(const Rating&, const Rating&) = default;
};

inline std::string rating_id_for(std::string_view listener_id, std::string_view song_id) {
  return std::string(listener_id) + ":" + std::string(song_id);
}

// ---------------------------------------------------------------------------
// Preferences

enum class PreferenceAspect : std::size_t { difference, happy, danceable, artificial, upbeat };

inline constexpr std::size_t kAspectCount = 5;

inline constexpr std::array<std::string_view, kAspectCount> kAspectNames = {
    "difference", "happy", "danceable", "artificial", "upbeat"};

// The rating question each rateable aspect reads; difference has none.
inline constexpr std::array<std::optional<RatingQuestion>, kAspectCount> kAspectQuestion = {
    std::nullopt, RatingQuestion::happy, RatingQuestion::danceable, RatingQuestion::artificial,
    RatingQuestion::upbeat};

inline constexpr double kPreferenceBound = 2.0;

struct PreferenceProfile {
  std::string listener_id;
  std::array<double, kAspectCount> weights{2.0, 0.0, 0.0, 0.0, 0.0};

  double weight(PreferenceAspect a) const { return weights[static_cast<std::size_t>(a)]; }
  double& weight(PreferenceAspect a) { return weights[static_cast<std::size_t>(a)]; }

  void validate() const {
    for (std::size_t i = 0; i < kAspectCount; ++i) {
      const double w = weights[i];
      if (!std::isfinite(w) || w < -kPreferenceBound || w > kPreferenceBound)
        throw ValidationError("preference weight '" + std::string(kAspectNames[i]) +
                              "' must be within [-2, 2]");
    }
  }

  friend bool operator==(const PreferenceProfile&, const PreferenceProfile&) = default;
};

// ---------------------------------------------------------------------------
// Prompt features

inline PromptFeatures concat_prompt_features(const FeatureVector& prime, const FeatureVector& artist,
                                             const FeatureVector& genre) {
  PromptFeatures out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    out.values[i] = prime[i];
    out.values[kFeatureCount + i] = artist[i];
    out.values[2 * kFeatureCount + i] = genre[i];
  }
  return out;
}

inline PromptFeatures prompt_features(const Prime& prime, const ArtistProfile& artist,
                                      const GenreProfile& genre) {
  require_finite(prime.prime_artist_features, "prime " + prime.prime_id);
  require_finite(artist.features, "artist " + artist.artist_id);
  require_finite(genre.features, "genre " + genre.genre_id);
  return concat_prompt_features(prime.prime_artist_features, artist.features, genre.features);
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(Json& j, const FeatureVector& v) { j = v.values; }

inline void from_json(const Json& j, FeatureVector& v) {
  if (!j.is_array() || j.size() != kFeatureCount)
    throw ValidationError("feature vector must be an array of 9 numbers");
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!j[i].is_number()) throw ValidationError("feature vector must contain only numbers");
    v.values[i] = j[i].get<double>();
  }
  require_finite(v, "feature vector");
}

inline void to_json(Json& j, const PromptFeatures& p) { j = p.values; }

inline void from_json(const Json& j, PromptFeatures& p) {
  if (!j.is_array() || j.size() != kPromptFeatureCount)
    throw ValidationError("prompt features must be an array of 27 numbers");
  for (std::size_t i = 0; i < kPromptFeatureCount; ++i) p.values[i] = j[i].get<double>();
}

inline void to_json(Json& j, const ArtistProfile& a) {
  j = Json{{"artist_id", a.artist_id}, {"display_name", a.display_name}, {"features", a.features}};
}

inline void from_json(const Json& j, ArtistProfile& a) {
  j.at("artist_id").get_to(a.artist_id);
  a.display_name = j.value("display_name", a.artist_id);
  j.at("features").get_to(a.features);
}

inline void to_json(Json& j, const GenreProfile& g) {
  j = Json{{"genre_id", g.genre_id}, {"display_name", g.display_name}, {"features", g.features}};
}

inline void from_json(const Json& j, GenreProfile& g) {
  j.at("genre_id").get_to(g.genre_id);
  g.display_name = j.value("display_name", g.genre_id);
  j.at("features").get_to(g.features);
}

inline void to_json(Json& j, const Prime& p) {
  j = Json{{"prime_id", p.prime_id},
           {"contributor_name", p.contributor_name},
           {"prime_artist_features", p.prime_artist_features},
           {"audio_ref", p.audio_ref},
           {"submitted_at", p.submitted_at}};
}

inline void from_json(const Json& j, Prime& p) {
  j.at("prime_id").get_to(p.prime_id);
  j.at("contributor_name").get_to(p.contributor_name);
  j.at("prime_artist_features").get_to(p.prime_artist_features);
  p.audio_ref = j.value("audio_ref", std::string{});
  p.submitted_at = j.value("submitted_at", TimestampMs{0});
}

inline void to_json(Json& j, const Song& s) {
  j = Json{{"song_id", s.song_id},
           {"prime_id", s.prime_id},
           {"artist_prompt", s.artist_prompt},
           {"genre_prompt", s.genre_prompt},
           {"prompt_features", s.prompt_features},
           {"song_features", s.song_features},
           {"audio_ref", s.audio_ref},
           {"created_at", s.created_at}};
}

inline void from_json(const Json& j, Song& s) {
  j.at("song_id").get_to(s.song_id);
  j.at("prime_id").get_to(s.prime_id);
  j.at("artist_prompt").get_to(s.artist_prompt);
  j.at("genre_prompt").get_to(s.genre_prompt);
  j.at("prompt_features").get_to(s.prompt_features);
  j.at("song_features").get_to(s.song_features);
  j.at("audio_ref").get_to(s.audio_ref);
  j.at("created_at").get_to(s.created_at);
}

inline void to_json(Json& j, const Rating& r) {
  Json answers = Json::object();
  for (auto q : kAllQuestions)
    if (auto a = r.answer(q)) answers[std::string(to_string(q))] = *a;
  j = Json{{"rating_id", r.rating_id},
           {"listener_id", r.listener_id},
           {"song_id", r.song_id},
           {"answers", answers},
           {"submitted_at", r.submitted_at}};
}

inline void from_json(const Json& j, Rating& r) {
  j.at("listener_id").get_to(r.listener_id);
  j.at("song_id").get_to(r.song_id);
  r.rating_id = j.value("rating_id", rating_id_for(r.listener_id, r.song_id));
  r.submitted_at = j.value("submitted_at", TimestampMs{0});
  r.answers = {};
  for (const auto& [name, value] : j.at("answers").items()) {
    const auto q = parse_question(name);
    if (!q) throw ValidationError("unknown rating question '" + name + "'");
    if (!value.is_number_integer()) throw ValidationError("answer to '" + name + "' must be an integer");
    r.set_answer(*q, value.get<int>());
  }
}

inline void to_json(Json& j, const PreferenceProfile& p) {
  Json weights = Json::object();
  for (std::size_t i = 0; i < kAspectCount; ++i) weights[std::string(kAspectNames[i])] = p.weights[i];
  j = Json{{"listener_id", p.listener_id}, {"weights", weights}};
}

// Missing aspects keep their defaults; unknown aspects are rejected.
inline std::array<double, kAspectCount> parse_preference_weights(const Json& weights,
                                                                 std::array<double, kAspectCount> base) {
  if (!weights.is_object()) throw ValidationError("weights must be an object");
  for (const auto& [name, value] : weights.items()) {
    std::size_t i = 0;
    while (i < kAspectCount && kAspectNames[i] != name) ++i;
    if (i == kAspectCount) throw ValidationError("unknown preference aspect '" + name + "'");
    if (!value.is_number()) throw ValidationError("weight '" + name + "' must be a number");
    base[i] = value.get<double>();
  }
  return base;
}

inline void from_json(const Json& j, PreferenceProfile& p) {
  p.listener_id = j.value("listener_id", std::string{});
  p.weights = parse_preference_weights(j.at("weights"), PreferenceProfile{}.weights);
  p.validate();
}

}  // namespace afm
