#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <memory>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "afm/domain.hpp"
#include "afm/errors.hpp"

namespace afm {

inline constexpr double kStddevFloor = 1e-9;

// Per-dimension z-scoring statistics over the song features in the store.
// Fewer than two samples leaves the transform as the identity.
struct Standardization {
  FeatureVector mean = FeatureVector::filled(0.0);
  FeatureVector stddev = FeatureVector::filled(1.0);
  std::size_t sample_count = 0;

  bool is_identity() const { return sample_count < 2; }

  FeatureVector apply(const FeatureVector& v) const {
    if (is_identity()) return v;
    FeatureVector out;
    for (std::size_t i = 0; i < kFeatureCount; ++i) out[i] = (v[i] - mean[i]) / stddev[i];
    return out;
  }

  // Population standard deviation, floored at kStddevFloor.
  static Standardization fit(std::span<const FeatureVector> samples) {
    Standardization s;
    s.sample_count = samples.size();
    if (samples.size() < 2) return s;
    const double n = static_cast<double>(samples.size());
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      double sum = 0.0;
      for (const auto& v : samples) sum += v[i];
      const double mean = sum / n;
      double ss = 0.0;
      for (const auto& v : samples) ss += (v[i] - mean) * (v[i] - mean);
      s.mean[i] = mean;
      s.stddev[i] = std::max(std::sqrt(ss / n), kStddevFloor);
    }
    return s;
  }
};

class Catalog {
 public:
  Catalog(std::vector<ArtistProfile> artists, std::vector<GenreProfile> genres)
      : artists_(std::move(artists)), genres_(std::move(genres)) {
    if (artists_.empty()) throw LoadError("catalog has no artists");
    if (genres_.empty()) throw LoadError("catalog has no genres");
    for (std::size_t i = 0; i < artists_.size(); ++i) {
      require_finite(artists_[i].features, "artist " + artists_[i].artist_id);
      if (!artist_index_.emplace(artists_[i].artist_id, i).second)
        throw LoadError("duplicate artist_id '" + artists_[i].artist_id + "'");
    }
    for (std::size_t i = 0; i < genres_.size(); ++i) {
      require_finite(genres_[i].features, "genre " + genres_[i].genre_id);
      if (!genre_index_.emplace(genres_[i].genre_id, i).second)
        throw LoadError("duplicate genre_id '" + genres_[i].genre_id + "'");
    }
  }

  // Fixture order is preserved; samplers and exhaustive searches rely on it.
  const std::vector<ArtistProfile>& artists() const { return artists_; }
  const std::vector<GenreProfile>& genres() const { return genres_; }

  const ArtistProfile* find_artist(std::string_view id) const {
    auto it = artist_index_.find(std::string(id));
    return it == artist_index_.end() ? nullptr : &artists_[it->second];
  }

  const GenreProfile* find_genre(std::string_view id) const {
    auto it = genre_index_.find(std::string(id));
    return it == genre_index_.end() ? nullptr : &genres_[it->second];
  }

  const ArtistProfile& artist(std::string_view id) const {
    if (const auto* a = find_artist(id)) return *a;
    throw NotFoundError("unknown artist '" + std::string(id) + "'");
  }

  const GenreProfile& genre(std::string_view id) const {
    if (const auto* g = find_genre(id)) return *g;
    throw NotFoundError("unknown genre '" + std::string(id) + "'");
  }

  const Standardization& standardization() const { return standardization_; }

  // Copy of this catalog whose standardization covers the given songs.
  Catalog with_song_statistics(std::span<const FeatureVector> song_features) const {
    Catalog copy = *this;
    copy.standardization_ = Standardization::fit(song_features);
    return copy;
  }

  friend bool operator==(const Catalog& a, const Catalog& b) {
    return a.artists_ == b.artists_ && a.genres_ == b.genres_;
  }

 private:
  std::vector<ArtistProfile> artists_;
  std::vector<GenreProfile> genres_;
  std::unordered_map<std::string, std::size_t> artist_index_;
  std::unordered_map<std::string, std::size_t> genre_index_;
  Standardization standardization_;
};

inline FeatureVector standardize(const FeatureVector& v, const Catalog& catalog) {
  return catalog.standardization().apply(v);
}

inline FeatureVector aggregate_artist_features(std::span<const FeatureVector> song_features) {
  if (song_features.empty()) throw ValidationError("cannot aggregate an empty feature list");
  FeatureVector mean = FeatureVector::filled(0.0);
  for (const auto& v : song_features)
    for (std::size_t i = 0; i < kFeatureCount; ++i) mean[i] += v[i];
  for (std::size_t i = 0; i < kFeatureCount; ++i)
    mean[i] /= static_cast<double>(song_features.size());
  return mean;
}

namespace detail {

inline FeatureVector parse_record_features(const Json& record, const std::string& where) {
  if (!record.contains("features")) throw LoadError(where + ": missing 'features'");
  const Json& f = record["features"];
  if (!f.is_array()) throw LoadError(where + ": 'features' must be an array");
  if (f.size() != kFeatureCount)
    throw LoadError(where + ": feature array has " + std::to_string(f.size()) +
                    " elements, expected " + std::to_string(kFeatureCount));
  FeatureVector v;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!f[i].is_number()) throw LoadError(where + ": feature " + std::to_string(i) + " is not a number");
    v[i] = f[i].get<double>();
  }
  if (!v.is_finite()) throw LoadError(where + ": features must be finite");
  return v;
}

inline std::string parse_record_id(const Json& record, const char* key, const std::string& where) {
  if (!record.is_object() || !record.contains(key) || !record[key].is_string())
    throw LoadError(where + ": missing string '" + key + "'");
  return record[key].get<std::string>();
}

}  // namespace detail

inline Catalog load_catalog(const Json& doc) {
  if (!doc.is_object()) throw LoadError("catalog document must be a JSON object");
  for (const char* key : {"artists", "genres"})
    if (!doc.contains(key) || !doc[key].is_array())
      throw LoadError(std::string("catalog document needs an '") + key + "' array");

  std::vector<ArtistProfile> artists;
  for (std::size_t i = 0; i < doc["artists"].size(); ++i) {
    const Json& rec = doc["artists"][i];
    std::string where = "artists[" + std::to_string(i) + "]";
    ArtistProfile a;
    a.artist_id = detail::parse_record_id(rec, "artist_id", where);
    where += " ('" + a.artist_id + "')";
    a.display_name = rec.value("display_name", a.artist_id);
    a.features = detail::parse_record_features(rec, where);
    artists.push_back(std::move(a));
  }
  std::vector<GenreProfile> genres;
  for (std::size_t i = 0; i < doc["genres"].size(); ++i) {
    const Json& rec = doc["genres"][i];
    std::string where = "genres[" + std::to_string(i) + "]";
    GenreProfile g;
    g.genre_id = detail::parse_record_id(rec, "genre_id", where);
    where += " ('" + g.genre_id + "')";
    g.display_name = rec.value("display_name", g.genre_id);
    g.features = detail::parse_record_features(rec, where);
    genres.push_back(std::move(g));
  }
  return Catalog(std::move(artists), std::move(genres));
}

inline Catalog load_catalog(std::istream& in) {
  Json doc = Json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw LoadError("catalog document is not valid JSON");
  return load_catalog(doc);
}

inline Catalog load_catalog_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open catalog '" + path.string() + "'");
  return load_catalog(in);
}

inline Json catalog_to_json(const Catalog& c) {
  return Json{{"artists", c.artists()}, {"genres", c.genres()}};
}

// Source of artist and genre covariates. The shipped provider reads a JSON
// fixture; a live adapter would implement the same interface.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual Catalog load() const = 0;
};

class JsonFileFeatureProvider final : public FeatureProvider {
 public:
  explicit JsonFileFeatureProvider(std::filesystem::path path) : path_(std::move(path)) {}
  Catalog load() const override { return load_catalog_file(path_); }

 private:
  std::filesystem::path path_;
};

// Holds the current catalog snapshot. Readers get a shared_ptr to an
// immutable Catalog; replace() swaps the whole snapshot.
class CatalogHandle {
 public:
  explicit CatalogHandle(Catalog initial)
      : current_(std::make_shared<const Catalog>(std::move(initial))) {}

  std::shared_ptr<const Catalog> snapshot() const {
    std::lock_guard lock(mutex_);
    return current_;
  }

  void replace(Catalog next) {
    auto ptr = std::make_shared<const Catalog>(std::move(next));
    std::lock_guard lock(mutex_);
    current_ = std::move(ptr);
  }

  void reload(const FeatureProvider& provider) { replace(provider.load()); }

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const Catalog> current_;
};

}  // namespace afm
