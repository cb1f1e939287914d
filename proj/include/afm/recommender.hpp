#pragma once

// Personalized next-song selection. The quality score Q of the song that just
// ended is a preference-weighted sum of the listener's centered ratings; the
// next song z is drawn with probability proportional to d(z, x)^(Q/B), so
// Q > 0 favors distant songs, Q < 0 near ones and Q = 0 is uniform.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "afm/domain.hpp"
#include "afm/errors.hpp"
#include "afm/random.hpp"

namespace afm {

struct RecommenderConfig {
  double B = 1.0;
  double exponent_clamp = 8.0;
  double distance_floor = 1e-9;

  void validate() const {
    if (!(B > 0.0) || !(exponent_clamp > 0.0) || !(distance_floor > 0.0))
      throw ValidationError("recommender parameters must be positive");
  }
};

struct SessionState {
  std::string listener_id;
  std::optional<std::string> current_song_id;
  std::vector<std::string> played_song_ids;  // insertion order
  PreferenceProfile preference;
  std::uint64_t rng_seed = 0;
  std::uint64_t step = 0;

  bool has_played(std::string_view song_id) const {
    return std::find(played_song_ids.begin(), played_song_ids.end(), song_id) != played_song_ids.end();
  }

  friend bool operator==(const SessionState&, const SessionState&) = default;
};

// Each selection step draws from its own stream, so a session can be replayed
// from (seed, step) alone.
inline Rng session_rng(const SessionState& s) { return Rng(mix_seed(s.rng_seed, s.step)); }

// Store-wide mean centered answer per question for one song.
using QuestionMeans = std::array<std::optional<double>, kQuestionCount>;

// The difference weight enters as an additive bias; each rateable aspect
// multiplies the listener's own centered answer, falling back to the
// store-wide mean and then to zero.
inline double quality_score(const Rating* listener_rating, const QuestionMeans& store_means,
                            const PreferenceProfile& prefs) {
  prefs.validate();
  double q = prefs.weight(PreferenceAspect::difference);
  for (std::size_t a = 0; a < kAspectCount; ++a) {
    const auto question = kAspectQuestion[a];
    if (!question) continue;
    double r = 0.0;
    if (listener_rating != nullptr && listener_rating->answer(*question)) {
      r = center_likert(*listener_rating->answer(*question));
    } else if (store_means[index_of(*question)]) {
      r = *store_means[index_of(*question)];
    }
    q += r * prefs.weights[a];
  }
  return q;
}

struct CandidateSong {
  std::string song_id;
  FeatureVector features;  // already standardized
};

inline double euclidean_distance(const FeatureVector& a, const FeatureVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kFeatureCount; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double sampling_exponent(double q, const RecommenderConfig& cfg) {
  return std::clamp(q / cfg.B, -cfg.exponent_clamp, cfg.exponent_clamp);
}

// Closed-form p(z | x) over the candidates. Computed in log space so large
// exponents cannot overflow.
inline std::vector<double> selection_probabilities(const FeatureVector& current,
                                                   std::span<const CandidateSong> candidates, double q,
                                                   const RecommenderConfig& cfg) {
  cfg.validate();
  const std::size_t n = candidates.size();
  std::vector<double> p(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
  const double e = sampling_exponent(q, cfg);
  if (n == 0 || e == 0.0) return p;
  std::vector<double> logw(n);
  for (std::size_t i = 0; i < n; ++i)
    logw[i] = e * std::log(std::max(euclidean_distance(candidates[i].features, current), cfg.distance_floor));
  const double top = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += (p[i] = std::exp(logw[i] - top));
  for (double& x : p) x /= total;
  return p;
}

// Draws the next song. Without a current song (session start) or at Q = 0 the
// draw is exactly uniform. Returns nothing when the candidate pool is empty.
inline std::optional<std::string> next_song(const FeatureVector* current_features,
                                            std::span<const CandidateSong> candidates, double q,
                                            const RecommenderConfig& cfg, Rng& rng) {
  if (candidates.empty()) return std::nullopt;
  if (current_features == nullptr || sampling_exponent(q, cfg) == 0.0)
    return candidates[uniform_index(rng, candidates.size())].song_id;
  const auto p = selection_probabilities(*current_features, candidates, q, cfg);
  const double u = uniform_unit(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return candidates[i].song_id;
  }
  // u landed in the rounding slack above the last partial sum.
  for (std::size_t i = p.size(); i-- > 0;)
    if (p[i] > 0.0) return candidates[i].song_id;
  return candidates.back().song_id;
}

inline std::vector<std::string> unplayed_song_ids(const SessionState& session,
                                                  std::span<const std::string> all_song_ids) {
  std::vector<std::string> out;
  for (const auto& id : all_song_ids)
    if (!session.has_played(id)) out.push_back(id);
  return out;
}

// Marks song_id as now playing. Once every song in the store has been played
// the pool restarts from just the current song.
inline SessionState advance_session(SessionState session, const std::string& song_id,
                                    std::span<const std::string> all_song_ids) {
  session.current_song_id = song_id;
  if (!session.has_played(song_id)) session.played_song_ids.push_back(song_id);
  const bool covered = std::all_of(all_song_ids.begin(), all_song_ids.end(),
                                   [&](const std::string& id) { return session.has_played(id); });
  if (covered) session.played_song_ids = {song_id};
  ++session.step;
  return session;
}

}  // namespace afm
