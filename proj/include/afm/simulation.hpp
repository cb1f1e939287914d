#pragma once

// Desk-scale closed loop: synthetic listeners with planted preferences rate
// mock-generated songs, the scheduler refits each epoch, and each epoch
// reports how good the scheduled prompts were under the planted function.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "afm/catalog.hpp"
#include "afm/domain.hpp"
#include "afm/errors.hpp"
#include "afm/generation_queue.hpp"
#include "afm/generator.hpp"
#include "afm/random.hpp"
#include "afm/scheduler.hpp"

namespace afm {

enum class PopulationKind { linear, quadratic };

inline PopulationKind parse_population_kind(std::string_view s) {
  if (s == "linear") return PopulationKind::linear;
  if (s == "quadratic") return PopulationKind::quadratic;
  throw ValidationError("population must be 'linear' or 'quadratic'");
}

// Ground-truth score over prompt features on the centered [-2, 2] scale:
// intercept + w.x + sum q_j (x_j - c_j)^2. Linear populations have q = 0.
struct LatentFunction {
  std::array<double, kPromptFeatureCount> weights{};
  double intercept = 0.0;
  std::array<double, kPromptFeatureCount> curvature{};
  std::array<double, kPromptFeatureCount> center{};

  double operator()(const PromptFeatures& x) const {
    double s = intercept;
    for (std::size_t j = 0; j < kPromptFeatureCount; ++j) {
      s += weights[j] * x[j];
      const double d = x[j] - center[j];
      s += curvature[j] * d * d;
    }
    return s;
  }
};

struct SyntheticListener {
  std::string listener_id;
  LatentFunction latent;
  double noise_sd = 0.0;

  // Clamped rounding of the latent score plus noise, on 1..5 stars.
  int answer(double latent_score, Rng& rng) const {
    const double noise = noise_sd > 0.0 ? noise_sd * standard_normal(rng) : 0.0;
    return static_cast<int>(std::clamp(std::lround(3.0 + latent_score + noise), 1L, 5L));
  }
};

struct OracleBest {
  std::string artist_id;
  std::string genre_id;
  double score = 0.0;
};

// Exhaustive argmax over all catalog pairs; ties keep the first pair in
// catalog order.
inline OracleBest oracle_best_pair(const Catalog& catalog, const Prime& prime, const LatentFunction& f) {
  std::optional<OracleBest> best;
  for (const auto& a : catalog.artists())
    for (const auto& g : catalog.genres()) {
      const double s = f(concat_prompt_features(prime.prime_artist_features, a.features, g.features));
      if (!best || s > best->score) best = OracleBest{a.artist_id, g.genre_id, s};
    }
  return *best;
}

struct SimulationConfig {
  std::size_t population_size = 40;
  std::size_t epochs = 20;
  std::size_t primes_per_epoch = 5;
  std::size_t ratings_per_song = 5;
  std::size_t gamma = 8;
  std::size_t M = 64;
  std::uint64_t seed = 7;
  double noise_sd = 0.0;
  // Half-width of each listener's uniform intercept offset around the
  // population function; the offsets are centered so their mean is zero.
  double listener_spread = 0.5;
  // Standard deviation of planted scores over catalog pairs.
  double score_scale = 1.0;
  PopulationKind population = PopulationKind::linear;
  double ridge_lambda = 1.0;
  std::size_t min_ratings_for_fit = 30;
  std::size_t min_songs_for_fit = 10;

  void validate() const {
    if (population_size == 0) throw ValidationError("population size must be positive");
    if (epochs == 0) throw ValidationError("epochs must be positive");
    if (primes_per_epoch == 0) throw ValidationError("primes per epoch must be positive");
    if (ratings_per_song == 0 || ratings_per_song > population_size)
      throw ValidationError("ratings per song must be within [1, population size]");
    if (M == 0) throw ValidationError("M must be positive");
    if (gamma == 0 || gamma > M) throw ValidationError("gamma must be within [1, M]");
    if (!(noise_sd >= 0.0)) throw ValidationError("noise must be nonnegative");
    if (!(listener_spread >= 0.0)) throw ValidationError("listener spread must be nonnegative");
    if (!(ridge_lambda >= 0.0)) throw ValidationError("ridge lambda must be nonnegative");
  }

  SchedulerConfig scheduler() const {
    SchedulerConfig s;
    s.M = M;
    s.gamma = gamma;
    s.ridge_lambda = ridge_lambda;
    s.min_ratings_for_fit = min_ratings_for_fit;
    s.min_songs_for_fit = min_songs_for_fit;
    return s;
  }
};

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  std::size_t songs = 0;  // generated this epoch
  double mean_true = 0.0;
  double mean_like = 0.0;  // centered
  double regret = 0.0;     // mean over this epoch's decisions
  std::size_t fitted_decisions = 0;

  friend bool operator==(const EpochReport&, const EpochReport&) = default;
};

inline void to_json(Json& j, const EpochReport& r) {
  j = Json{{"epoch", r.epoch},         {"songs", r.songs},   {"mean_true", r.mean_true},
           {"mean_like", r.mean_like}, {"regret", r.regret}, {"fitted_decisions", r.fitted_decisions}};
}

namespace detail {

// Per-block spread of catalog features, used to put planted weights on a
// comparable scale across dimensions.
inline std::array<double, kPromptFeatureCount> prompt_feature_spread(const Catalog& catalog,
                                                                     std::array<double, kPromptFeatureCount>& center) {
  std::vector<FeatureVector> artists, genres;
  for (const auto& a : catalog.artists()) artists.push_back(a.features);
  for (const auto& g : catalog.genres()) genres.push_back(g.features);
  const auto sa = Standardization::fit(artists);
  const auto sg = Standardization::fit(genres);
  std::array<double, kPromptFeatureCount> spread{};
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const double a_sd = artists.size() > 1 ? sa.stddev[i] : 1.0;
    const double g_sd = genres.size() > 1 ? sg.stddev[i] : 1.0;
    const double a_mean = artists.size() > 1 ? sa.mean[i] : artists[0][i];
    const double g_mean = genres.size() > 1 ? sg.mean[i] : genres[0][i];
    spread[i] = std::max(a_sd, 1e-6);  // primes are drawn around artists
    spread[kFeatureCount + i] = std::max(a_sd, 1e-6);
    spread[2 * kFeatureCount + i] = std::max(g_sd, 1e-6);
    center[i] = a_mean;
    center[kFeatureCount + i] = a_mean;
    center[2 * kFeatureCount + i] = g_mean;
  }
  return spread;
}

inline FeatureVector mean_artist_features(const Catalog& catalog) {
  std::vector<FeatureVector> fs;
  for (const auto& a : catalog.artists()) fs.push_back(a.features);
  return aggregate_artist_features(fs);
}

}  // namespace detail

// Random planted function, normalized so scores over the catalog's pairs
// (for an average prime) have mean 0 and the requested standard deviation.
inline LatentFunction plant_latent_function(const Catalog& catalog, PopulationKind kind, Rng& rng,
                                           double target_sd = 1.0) {
  LatentFunction f;
  const auto spread = detail::prompt_feature_spread(catalog, f.center);
  for (std::size_t j = 0; j < kPromptFeatureCount; ++j) {
    f.weights[j] = standard_normal(rng) / spread[j];
    if (kind == PopulationKind::quadratic) f.curvature[j] = standard_normal(rng) / (spread[j] * spread[j]);
  }
  const FeatureVector reference = detail::mean_artist_features(catalog);
  std::vector<double> scores;
  for (const auto& a : catalog.artists())
    for (const auto& g : catalog.genres())
      scores.push_back(f(concat_prompt_features(reference, a.features, g.features)));
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / static_cast<double>(scores.size()));
  const double scale = sd > 1e-12 ? target_sd / sd : target_sd;
  for (std::size_t j = 0; j < kPromptFeatureCount; ++j) {
    f.weights[j] *= scale;
    f.curvature[j] *= scale;
  }
  f.intercept = -mean * scale;
  return f;
}

// Correlation of each non-`like` question's latent score with the `like`
// score, plus a shift of its mean, giving the stats output some structure.
struct QuestionModel {
  double like_loading = 0.0;
  double shift = 0.0;
};

inline constexpr std::array<QuestionModel, kQuestionCount> kSyntheticQuestionModels = {{
    {0.0, 0.0},    // happy
    {0.75, 0.0},   // danceable
    {0.0, 1.0},    // artificial
    {0.35, -1.0},  // clear_lyrics
    {0.44, 0.0},   // instrumental
    {0.0, 0.0},    // upbeat
    {1.0, 0.0},    // like
}};

class Simulation {
 public:
  Simulation(const Catalog& catalog, SimulationConfig config)
      : config_(config),
        catalog_(catalog),
        queue_(repo_, catalog_, std::make_shared<MockGenerator>(), QueueConfig{1u << 30, {}, config.seed},
               [this] { return ++clock_; }) {
    config_.validate();
    Rng population_rng(mix_seed(config_.seed, 0));
    truth_ = plant_latent_function(catalog, config_.population, population_rng, config_.score_scale);
    for (std::size_t q = 0; q < kQuestionCount; ++q)
      question_latent_[q] = plant_latent_function(catalog, config_.population, population_rng, config_.score_scale);
    // Evenly spaced offsets, shuffled, so the population mean is exactly the
    // planted function.
    std::vector<double> offsets(config_.population_size, 0.0);
    if (config_.population_size > 1)
      for (std::size_t i = 0; i < offsets.size(); ++i)
        offsets[i] = config_.listener_spread * (2.0 * static_cast<double>(i) / static_cast<double>(offsets.size() - 1) - 1.0);
    shuffle(std::span<double>(offsets), population_rng);
    for (std::size_t i = 0; i < config_.population_size; ++i) {
      char id[48];
      std::snprintf(id, sizeof id, "sim-listener-%03zu", i + 1);
      SyntheticListener l{id, truth_, config_.noise_sd};
      l.latent.intercept += offsets[i];
      listeners_.push_back(std::move(l));
    }
  }

  const LatentFunction& truth() const { return truth_; }
  const std::vector<SyntheticListener>& listeners() const { return listeners_; }

  std::vector<EpochReport> run() {
    std::vector<EpochReport> reports;
    for (std::size_t e = 1; e <= config_.epochs; ++e) reports.push_back(run_epoch(e));
    return reports;
  }

  // Every rating produced so far, ordered by song then listener.
  std::vector<Rating> ratings() const {
    std::vector<Rating> out;
    for (const auto& [song, rs] : ratings_by_song_) out.insert(out.end(), rs.begin(), rs.end());
    return out;
  }

  // Decisions taken so far, paired with their true score and the oracle best.
  struct DecisionTrace {
    std::size_t epoch = 0;
    Prime prime;
    PromptDecision decision;
    double true_score = 0.0;
    double oracle_score = 0.0;
    // True scores of the sampled candidates (fitted decisions only).
    std::vector<double> candidate_true_scores;
  };
  const std::vector<DecisionTrace>& trace() const { return trace_; }

 private:
  Prime make_prime(std::size_t ordinal) {
    const auto& artists = catalog_.snapshot()->artists();
    const FeatureVector& base = artists[uniform_index(prime_rng_, artists.size())].features;
    Prime p;
    char id[48];
    std::snprintf(id, sizeof id, "sim-prime-%06zu", ordinal);
    p.prime_id = id;
    p.contributor_name = "synthetic";
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      const auto [lo, hi] = feature_domain(i);
      const double jitter = (hi - lo) * 0.05 * standard_normal(prime_rng_);
      p.prime_artist_features[i] = std::clamp(base[i] + jitter, lo, hi);
    }
    p.submitted_at = clock_;
    return p;
  }

  EpochReport run_epoch(std::size_t epoch) {
    const auto catalog = catalog_.snapshot();
    const SchedulerConfig sched = config_.scheduler();
    std::optional<RatingModel> model;
    try {
      model = train_if_ready(songs_, ratings_by_song_, sched);
    } catch (const ValidationError&) {
      model.reset();
    }
    StoreCounts counts{rating_count_, songs_.size()};

    EpochReport rep;
    rep.epoch = epoch;
    double like_sum = 0.0;
    std::size_t like_n = 0;
    for (std::size_t k = 0; k < config_.primes_per_epoch; ++k) {
      const Prime prime = make_prime(++prime_count_);
      repo_.add_prime(prime);

      // The candidate draw is replayed from a copy of the stream so the
      // trace can score the same candidates the scheduler saw.
      Rng before = sched_rng_;
      const PromptDecision decision =
          select_prompt(prime, *catalog, model ? &*model : nullptr, counts, sched, sched_rng_);
      DecisionTrace tr;
      tr.epoch = epoch;
      tr.prime = prime;
      tr.decision = decision;
      tr.true_score = truth_(prompt_features(prime, catalog->artist(decision.artist_prompt),
                                             catalog->genre(decision.genre_prompt)));
      tr.oracle_score = oracle_best_pair(*catalog, prime, truth_).score;
      if (decision.mode_used == DecisionMode::fitted) {
        ++rep.fitted_decisions;
        for (const auto& c : sample_candidates(*catalog, sched.M, before))
          tr.candidate_true_scores.push_back(
              truth_(prompt_features(prime, catalog->artist(c.artist_id), catalog->genre(c.genre_id))));
      }

      queue_.enqueue(prime.prime_id, decision.artist_prompt, decision.genre_prompt);
      const auto job = queue_.run_worker_step();
      if (!job || job->state != JobState::complete) throw Error("simulated generation failed");
      const Song song = *repo_.find_song(*job->result_song_id);
      songs_.push_back(song);
      ++rep.songs;

      for (const std::size_t li : pick_raters()) {
        const auto& listener = listeners_[li];
        const double like_score = listener.latent(song.prompt_features);
        Rating r;
        r.listener_id = listener.listener_id;
        r.song_id = song.song_id;
        r.rating_id = rating_id_for(r.listener_id, r.song_id);
        r.submitted_at = ++clock_;
        for (std::size_t q = 0; q < kQuestionCount; ++q) {
          const auto& qm = kSyntheticQuestionModels[q];
          double s = qm.like_loading * like_score + qm.shift;
          if (q != index_of(RatingQuestion::like))
            s += std::sqrt(1.0 - qm.like_loading * qm.like_loading) * question_latent_[q](song.prompt_features);
          r.answers[q] = listener.answer(s, rating_rng_);
        }
        like_sum += center_likert(*r.answer(RatingQuestion::like));
        ++like_n;
        ratings_by_song_[song.song_id].push_back(r);
        ++rating_count_;
      }

      rep.mean_true += tr.true_score;
      rep.regret += tr.oracle_score - tr.true_score;
      trace_.push_back(std::move(tr));
    }
    const double n = static_cast<double>(config_.primes_per_epoch);
    rep.mean_true /= n;
    rep.regret /= n;
    rep.mean_like = like_n ? like_sum / static_cast<double>(like_n) : 0.0;
    return rep;
  }

  std::vector<std::size_t> pick_raters() {
    std::vector<std::size_t> idx(listeners_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    shuffle(std::span<std::size_t>(idx), rating_rng_);
    idx.resize(config_.ratings_per_song);
    return idx;
  }

  SimulationConfig config_;
  CatalogHandle catalog_;
  InMemoryJobRepository repo_;
  TimestampMs clock_ = 0;
  GenerationQueue queue_;

  LatentFunction truth_;
  std::array<LatentFunction, kQuestionCount> question_latent_;
  std::vector<SyntheticListener> listeners_;

  Rng prime_rng_{mix_seed(config_.seed, 1)};
  Rng sched_rng_{mix_seed(config_.seed, 2)};
  Rng rating_rng_{mix_seed(config_.seed, 3)};

  std::vector<Song> songs_;
  std::map<std::string, std::vector<Rating>> ratings_by_song_;
  std::size_t rating_count_ = 0;
  std::size_t prime_count_ = 0;
  std::vector<DecisionTrace> trace_;
};

inline std::vector<EpochReport> run_simulation(const Catalog& catalog, const SimulationConfig& config) {
  return Simulation(catalog, config).run();
}

inline std::string reports_to_csv(const std::vector<EpochReport>& reports) {
  std::string out = "epoch,songs,mean_true,mean_like,regret\n";
  char buf[160];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.9f,%.9f,%.9f\n", r.epoch, r.songs, r.mean_true, r.mean_like,
                  r.regret);
    out += buf;
  }
  return out;
}

}  // namespace afm
