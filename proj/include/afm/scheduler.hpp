#pragma once

// Prompt scheduling: fit a rating predictor on the 27 prompt covariates,
// draw M candidate (artist, genre) pairs, rank them by predicted rating and
// pick uniformly among the top gamma. gamma = 1 is pure exploitation,
// gamma = M pure exploration.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "afm/catalog.hpp"
#include "afm/domain.hpp"
#include "afm/errors.hpp"
#include "afm/random.hpp"

namespace afm {

// ---------------------------------------------------------------------------
// Outcome

enum class OutcomeMode { mean_like, variance_like, weighted_mix };

inline std::string_view to_string(OutcomeMode m) {
  switch (m) {
    case OutcomeMode::mean_like: return "mean_like";
    case OutcomeMode::variance_like: return "variance_like";
    case OutcomeMode::weighted_mix: return "weighted_mix";
  }
  return "unknown";
}

inline OutcomeMode parse_outcome_mode(std::string_view s) {
  if (s == "mean_like") return OutcomeMode::mean_like;
  if (s == "variance_like") return OutcomeMode::variance_like;
  if (s == "weighted_mix") return OutcomeMode::weighted_mix;
  throw ValidationError("unknown outcome mode '" + std::string(s) + "'");
}

struct OutcomeSpec {
  OutcomeMode mode = OutcomeMode::mean_like;
  std::array<double, kQuestionCount> mix_weights{};  // weighted_mix only
};

// Outcome for one song from all of its ratings; nothing when no rating has
// the answers the mode needs (the song is then left out of training).
inline std::optional<double> compute_outcome(std::span<const Rating> ratings, const OutcomeSpec& spec) {
  auto centered_answers = [&](RatingQuestion q) {
    std::vector<double> xs;
    for (const auto& r : ratings)
      if (auto a = r.answer(q)) xs.push_back(center_likert(*a));
    return xs;
  };
  auto mean = [](const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
  };

  switch (spec.mode) {
    case OutcomeMode::mean_like: {
      const auto likes = centered_answers(RatingQuestion::like);
      if (likes.empty()) return std::nullopt;
      return mean(likes);
    }
    case OutcomeMode::variance_like: {
      const auto likes = centered_answers(RatingQuestion::like);
      if (likes.empty()) return std::nullopt;
      const double m = mean(likes);
      double ss = 0.0;
      for (double x : likes) ss += (x - m) * (x - m);
      return ss / static_cast<double>(likes.size());
    }
    case OutcomeMode::weighted_mix: {
      double total = 0.0;
      bool any = false;
      for (auto q : kAllQuestions) {
        const auto xs = centered_answers(q);
        if (xs.empty()) continue;
        any = true;
        total += spec.mix_weights[index_of(q)] * mean(xs);
      }
      if (!any) return std::nullopt;
      return total;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Rating model

struct TrainingRow {
  PromptFeatures features;
  double outcome = 0.0;
};

// Ridge regression on per-dimension standardized prompt features with an
// unpenalized intercept.
struct RatingModel {
  std::array<double, kPromptFeatureCount> weights{};  // standardized units
  double intercept = 0.0;
  std::array<double, kPromptFeatureCount> feature_mean{};
  std::array<double, kPromptFeatureCount> feature_scale{};
  double ridge_lambda = 0.0;
  std::size_t training_count = 0;
  OutcomeSpec outcome;

  double predict(const PromptFeatures& x) const {
    double y = intercept;
    for (std::size_t i = 0; i < kPromptFeatureCount; ++i)
      y += weights[i] * (x[i] - feature_mean[i]) / feature_scale[i];
    return y;
  }

  // Coefficients in the original feature units.
  std::array<double, kPromptFeatureCount> raw_weights() const {
    std::array<double, kPromptFeatureCount> w{};
    for (std::size_t i = 0; i < kPromptFeatureCount; ++i) w[i] = weights[i] / feature_scale[i];
    return w;
  }

  double raw_intercept() const {
    double b = intercept;
    for (std::size_t i = 0; i < kPromptFeatureCount; ++i)
      b -= weights[i] * feature_mean[i] / feature_scale[i];
    return b;
  }
};

// Minimizes sum (y - w.z - b)^2 + lambda |w|^2 over standardized features z.
// Solved by QR on the lambda-augmented design, which never forms X^T X.
inline RatingModel fit_rating_model(std::span<const TrainingRow> rows, double lambda,
                                    OutcomeSpec outcome = {}) {
  if (rows.empty()) throw ValidationError("fit_rating_model needs at least one row");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ValidationError("ridge_lambda must be a finite nonnegative number");
  constexpr auto d = static_cast<Eigen::Index>(kPromptFeatureCount);
  const auto n = static_cast<Eigen::Index>(rows.size());

  RatingModel model;
  model.ridge_lambda = lambda;
  model.training_count = rows.size();
  model.outcome = outcome;

  double y_mean = 0.0;
  for (const auto& r : rows) {
    if (!std::isfinite(r.outcome)) throw ValidationError("training outcome must be finite");
    y_mean += r.outcome;
  }
  y_mean /= static_cast<double>(n);

  for (Eigen::Index j = 0; j < d; ++j) {
    double m = 0.0;
    for (const auto& r : rows) m += r.features[j];
    m /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& r : rows) ss += (r.features[j] - m) * (r.features[j] - m);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    model.feature_mean[j] = m;
    // A constant column standardizes to zeros; any scale works, keep 1.
    model.feature_scale[j] = sd > 1e-12 * std::max(1.0, std::abs(m)) ? sd : 1.0;
  }

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + d, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n + d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < d; ++j)
      a(i, j) = (r.features[j] - model.feature_mean[j]) / model.feature_scale[j];
    b(i) = r.outcome - y_mean;
  }
  const double root_lambda = std::sqrt(lambda);
  for (Eigen::Index j = 0; j < d; ++j) a(n + j, j) = root_lambda;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < d) {
    if (lambda == 0.0)
      throw ValidationError("rating model design is rank deficient; use ridge_lambda > 0");
    throw ValidationError("rating model design is numerically degenerate");
  }
  const Eigen::VectorXd w = qr.solve(b);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!std::isfinite(w(j))) throw ValidationError("rating model fit produced non-finite weights");
    model.weights[j] = w(j);
  }
  model.intercept = y_mean;
  return model;
}

// ---------------------------------------------------------------------------
// Candidates

struct PromptCandidate {
  std::string artist_id;
  std::string genre_id;
  friend bool operator==(const PromptCandidate&, const PromptCandidate&) = default;
};

class CandidateSampler {
 public:
  virtual ~CandidateSampler() = default;
  virtual std::vector<PromptCandidate> sample(const Catalog& catalog, std::size_t count, Rng& rng) const = 0;
};

// Independent uniform draws over artists and genres; duplicates allowed.
class UniformCandidateSampler final : public CandidateSampler {
 public:
  std::vector<PromptCandidate> sample(const Catalog& catalog, std::size_t count, Rng& rng) const override {
    const auto& artists = catalog.artists();
    const auto& genres = catalog.genres();
    if (artists.empty() || genres.empty()) throw ValidationError("cannot sample from an empty catalog");
    std::vector<PromptCandidate> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
      const auto a = uniform_index(rng, artists.size());
      const auto g = uniform_index(rng, genres.size());
      out.push_back({artists[a].artist_id, genres[g].genre_id});
    }
    return out;
  }
};

inline std::vector<PromptCandidate> sample_candidates(const Catalog& catalog, std::size_t count, Rng& rng) {
  return UniformCandidateSampler{}.sample(catalog, count, rng);
}

struct ScoredCandidate {
  PromptCandidate candidate;
  double predicted = 0.0;
  std::size_t position = 0;  // index in the sampled list
};

// Sorted by descending prediction; ties keep sampling order.
inline std::vector<ScoredCandidate> rank_candidates(const Prime& prime, const Catalog& catalog,
                                                    const RatingModel& model,
                                                    std::span<const PromptCandidate> candidates) {
  std::vector<ScoredCandidate> scored;
  scored.reserve(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto& c = candidates[k];
    const auto x = prompt_features(prime, catalog.artist(c.artist_id), catalog.genre(c.genre_id));
    scored.push_back({c, model.predict(x), k});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredCandidate& a, const ScoredCandidate& b) { return a.predicted > b.predicted; });
  return scored;
}

// Mean prediction of the top gamma entries: the expected predicted rating of
// a uniform pick among them.
inline double expected_selected_prediction(std::span<const ScoredCandidate> ranked, std::size_t gamma) {
  gamma = std::min(gamma, ranked.size());
  double s = 0.0;
  for (std::size_t i = 0; i < gamma; ++i) s += ranked[i].predicted;
  return gamma == 0 ? 0.0 : s / static_cast<double>(gamma);
}

// ---------------------------------------------------------------------------
// Decision

struct SchedulerConfig {
  std::size_t M = 64;
  std::size_t gamma = 8;
  double ridge_lambda = 1.0;
  std::size_t min_ratings_for_fit = 30;
  std::size_t min_songs_for_fit = 10;
  OutcomeSpec outcome;
  std::optional<std::uint64_t> rng_seed;

  void validate() const {
    if (M < 1) throw ValidationError("scheduler.M must be positive");
    if (gamma < 1 || gamma > M) throw ValidationError("scheduler.gamma must be within [1, M]");
    if (!(ridge_lambda >= 0.0) || !std::isfinite(ridge_lambda))
      throw ValidationError("scheduler.ridge_lambda must be nonnegative");
    for (double w : outcome.mix_weights)
      if (!std::isfinite(w)) throw ValidationError("scheduler outcome mix weights must be finite");
  }
};

enum class DecisionMode { cold_start, fitted };

inline std::string_view to_string(DecisionMode m) {
  return m == DecisionMode::cold_start ? "cold_start" : "fitted";
}

struct PromptDecision {
  std::string prime_id;
  std::string artist_prompt;
  std::string genre_prompt;
  std::optional<double> predicted_rating;  // absent for cold_start
  std::size_t candidate_pool_size = 0;
  DecisionMode mode_used = DecisionMode::cold_start;
};

inline void to_json(Json& j, const PromptDecision& d) {
  j = Json{{"prime_id", d.prime_id},
           {"artist_prompt", d.artist_prompt},
           {"genre_prompt", d.genre_prompt},
           {"predicted_rating", d.predicted_rating ? Json(*d.predicted_rating) : Json(nullptr)},
           {"candidate_pool_size", d.candidate_pool_size},
           {"mode_used", to_string(d.mode_used)}};
}

struct StoreCounts {
  std::size_t ratings = 0;
  std::size_t songs = 0;
};

inline bool has_enough_data(const StoreCounts& counts, const SchedulerConfig& cfg) {
  return counts.ratings >= cfg.min_ratings_for_fit && counts.songs >= cfg.min_songs_for_fit;
}

inline PromptDecision select_prompt(const Prime& prime, const Catalog& catalog, const RatingModel* model,
                                    const StoreCounts& counts, const SchedulerConfig& cfg, Rng& rng,
                                    const CandidateSampler& sampler = UniformCandidateSampler{}) {
  cfg.validate();
  PromptDecision d;
  d.prime_id = prime.prime_id;
  if (model == nullptr || !has_enough_data(counts, cfg)) {
    const auto pick = sampler.sample(catalog, 1, rng).front();
    d.artist_prompt = pick.artist_id;
    d.genre_prompt = pick.genre_id;
    d.candidate_pool_size = 1;
    d.mode_used = DecisionMode::cold_start;
    return d;
  }
  const auto candidates = sampler.sample(catalog, cfg.M, rng);
  const auto ranked = rank_candidates(prime, catalog, *model, candidates);
  const auto& chosen = ranked[uniform_index(rng, std::min(cfg.gamma, ranked.size()))];
  d.artist_prompt = chosen.candidate.artist_id;
  d.genre_prompt = chosen.candidate.genre_id;
  d.predicted_rating = chosen.predicted;
  d.candidate_pool_size = candidates.size();
  d.mode_used = DecisionMode::fitted;
  return d;
}

// ---------------------------------------------------------------------------
// Training data from the store

// One row per song whose ratings yield an outcome.
inline std::vector<TrainingRow> build_training_rows(std::span<const Song> songs,
                                                    const std::map<std::string, std::vector<Rating>>& ratings_by_song,
                                                    const OutcomeSpec& outcome) {
  std::vector<TrainingRow> rows;
  for (const auto& s : songs) {
    auto it = ratings_by_song.find(s.song_id);
    if (it == ratings_by_song.end()) continue;
    if (auto y = compute_outcome(it->second, outcome)) rows.push_back({s.prompt_features, *y});
  }
  return rows;
}

// Fits the model when the store clears the cold-start thresholds.
inline std::optional<RatingModel> train_if_ready(std::span<const Song> songs,
                                                 const std::map<std::string, std::vector<Rating>>& ratings_by_song,
                                                 const SchedulerConfig& cfg) {
  StoreCounts counts{0, songs.size()};
  for (const auto& [id, rs] : ratings_by_song) counts.ratings += rs.size();
  if (!has_enough_data(counts, cfg)) return std::nullopt;
  const auto rows = build_training_rows(songs, ratings_by_song, cfg.outcome);
  if (rows.empty()) return std::nullopt;
  return fit_rating_model(rows, cfg.ridge_lambda, cfg.outcome);
}

}  // namespace afm
