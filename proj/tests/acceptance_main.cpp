// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Reference values come from the oracles in this directory.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "afm/analytics.hpp"
#include "afm/recommender.hpp"
#include "afm/scheduler.hpp"
#include "afm/simulation.hpp"
#include "oracles.hpp"
#include "queue_support.hpp"
#include "service_support.hpp"
#include "stats_support.hpp"
#include "test_support.hpp"

using namespace afm;

namespace {

struct Verdict {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) detail = what;
    ok = ok && cond;
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// p(z|x) proportional to max(d, floor)^(Q/B), computed without the library.
std::vector<long double> closed_form(const FeatureVector& x, const std::vector<CandidateSong>& c, double q) {
  const long double e = std::clamp(q, -8.0, 8.0);
  std::vector<long double> w(c.size());
  long double total = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    long double d2 = 0;
    for (std::size_t k = 0; k < kFeatureCount; ++k) d2 += (long double)(c[i].features[k] - x[k]) * (c[i].features[k] - x[k]);
    const long double d = std::max(std::sqrt(d2), 1e-9L);
    total += (w[i] = std::pow(d, e));
  }
  for (auto& v : w) v /= total;
  return w;
}

std::vector<CandidateSong> random_songs(Rng& rng, std::size_t n) {
  std::vector<CandidateSong> out;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector f;
    for (std::size_t k = 0; k < kFeatureCount; ++k) f[k] = standard_normal(rng);
    out.push_back({"song" + std::to_string(i), f});
  }
  return out;
}

Verdict recommender_exactness() {
  Verdict v;
  Rng gen(1001);
  double pooled_stat = 0;
  std::size_t pooled_dof = 0, cells = 0;
  std::vector<std::pair<double, std::size_t>> per_cell;
  const std::size_t draws = 100000;
  for (std::size_t n = 1; n <= 10; ++n) {
    auto songs = random_songs(gen, n);
    if (n >= 4) songs[n - 1].features = songs[0].features;  // duplicate point
    FeatureVector x;
    for (std::size_t k = 0; k < kFeatureCount; ++k) x[k] = standard_normal(gen);
    if (n >= 6) x = songs[1].features;  // current song in the pool: floored distance
    for (double q : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
      ++cells;
      const auto ref = closed_form(x, songs, q);
      const auto lib = selection_probabilities(x, songs, q, {});
      for (std::size_t i = 0; i < n; ++i)
        v.require(std::fabs(lib[i] - static_cast<double>(ref[i])) < 1e-12, fmt("closed form mismatch n=%g Q=%g", n, q));
      if (q == 0.0)
        for (double p : lib) v.require(p == 1.0 / static_cast<double>(n), "Q=0 not exactly uniform");
      std::map<std::string, std::size_t> idx;
      for (std::size_t i = 0; i < n; ++i) idx.emplace(songs[i].song_id, i);
      std::vector<std::size_t> counts(n, 0);
      Rng rng(mix_seed(1001, cells));
      for (std::size_t d = 0; d < draws; ++d) ++counts[idx.at(*next_song(&x, songs, q, {}, rng))];
      if (n == 1) {
        v.require(counts[0] == draws, "single song not always chosen");
        continue;
      }
      // Categories expected fewer than 5 times share one bin.
      std::vector<std::size_t> binned;
      std::vector<double> prob;
      std::size_t rest_count = 0;
      double rest_prob = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double p = static_cast<double>(ref[i]);
        if (p * draws >= 5) {
          binned.push_back(counts[i]);
          prob.push_back(p);
        } else {
          rest_count += counts[i];
          rest_prob += p;
        }
      }
      if (rest_count > 0 || rest_prob > 0) {
        binned.push_back(rest_count);
        prob.push_back(rest_prob);
      }
      if (binned.size() < 2) {
        v.require(rest_count == 0 || rest_prob * draws >= 1e-3, "draws landed on a near-impossible song");
        continue;
      }
      const double stat = test::chi_square(binned, prob, draws);
      pooled_stat += stat;
      pooled_dof += binned.size() - 1;
      per_cell.push_back({stat, binned.size() - 1});
    }
  }
  // Family-wise alpha 0.01: pooled statistic at 0.01, each cell at 0.01/cells.
  const double crit = test::chi_square_critical(pooled_dof, 0.01);
  v.require(pooled_stat < crit, fmt("pooled chi2 %.2f >= %.2f", pooled_stat, crit));
  for (const auto& [stat, dof] : per_cell)
    v.require(stat < test::chi_square_critical(dof, 0.01 / static_cast<double>(per_cell.size())),
              fmt("cell chi2 %.2f with %g dof", stat, dof));
  if (v.ok) v.detail = fmt("pooled chi2 %.1f on %g dof (crit %.1f)", pooled_stat, pooled_dof, crit);
  return v;
}

Verdict sign_law() {
  Verdict v;
  std::size_t checks = 0;
  const FeatureVector x{};
  for (double near = 0.0; near <= 3.0; near += 0.25)
    for (double far = near + 0.25; far <= 4.0; far += 0.25)
      for (double q = -3.0; q <= 3.0; q += 0.5) {
        FeatureVector a{}, b{};
        a[0] = near;
        b[1] = far;
        const std::vector<CandidateSong> c = {{"near", a}, {"far", b}};
        const double p = selection_probabilities(x, c, q, {})[0];
        const long double e = q;
        const long double dn = std::max<long double>(near, 1e-9L), df = far;
        const long double exact = std::pow(dn, e) / (std::pow(dn, e) + std::pow(df, e));
        v.require(std::fabs(p - static_cast<double>(exact)) < 1e-12, fmt("p=%g near=%g Q=%g", p, near, q));
        if (q < 0) v.require(p > 0.5, fmt("Q=%g near=%g: p=%g not > 1/2", q, near, p));
        if (q > 0) v.require(p < 0.5, fmt("Q=%g near=%g: p=%g not < 1/2", q, near, p));
        if (q == 0) v.require(p == 0.5, "Q=0 not exactly 1/2");
        ++checks;
      }
  if (v.ok) v.detail = std::to_string(checks) + " (distance pair, Q) cases";
  return v;
}

Verdict scheduler_endpoints() {
  Verdict v;
  const Catalog c = test::fixture_catalog();
  Rng rng(1003);
  std::vector<TrainingRow> rows;
  for (int i = 0; i < 80; ++i) {
    const auto p = test::make_prime("p", test::random_features(rng));
    const auto cand = sample_candidates(c, 1, rng).front();
    rows.push_back({prompt_features(p, c.artist(cand.artist_id), c.genre(cand.genre_id)), uniform_real(rng, -2, 2)});
  }
  const auto model = fit_rating_model(rows, 1.0);
  SchedulerConfig cfg;
  cfg.gamma = 1;
  std::size_t hits = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto prime = test::make_prime("p", test::random_features(rng));
    Rng replay = rng;
    const auto cands = sample_candidates(c, cfg.M, replay);
    const auto d = select_prompt(prime, c, &model, {1000, 1000}, cfg, rng);
    const auto& best = cands[oracle::argmax_position(prime, c, model, cands)];
    hits += d.artist_prompt == best.artist_id && d.genre_prompt == best.genre_id;
  }
  v.require(hits == 1000, std::to_string(hits) + "/1000 argmax");

  // gamma = M over a fixed list of all 64 distinct pairs.
  struct AllPairs final : CandidateSampler {
    std::vector<PromptCandidate> all;
    std::vector<PromptCandidate> sample(const Catalog&, std::size_t, Rng&) const override { return all; }
  } sampler;
  for (const auto& a : c.artists())
    for (const auto& g : c.genres()) sampler.all.push_back({a.artist_id, g.genre_id});
  cfg.M = sampler.all.size();
  cfg.gamma = cfg.M;
  std::vector<std::size_t> counts(cfg.M, 0);
  const auto prime = test::make_prime("p", c.artists()[0].features);
  const std::size_t n = 10000;
  for (std::size_t t = 0; t < n; ++t) {
    const auto d = select_prompt(prime, c, &model, {1000, 1000}, cfg, rng, sampler);
    const auto it = std::find(sampler.all.begin(), sampler.all.end(), PromptCandidate{d.artist_prompt, d.genre_prompt});
    ++counts[static_cast<std::size_t>(it - sampler.all.begin())];
  }
  const double stat = test::chi_square(counts, std::vector<double>(cfg.M, 1.0 / cfg.M), n);
  const double crit = test::chi_square_critical(cfg.M - 1, 0.01);
  v.require(stat < crit, fmt("gamma=M chi2 %.2f >= %.2f", stat, crit));
  if (v.ok) v.detail = fmt("argmax 1000/1000, gamma=M chi2 %.1f (crit %.1f)", stat, crit);
  return v;
}

Verdict model_fit() {
  Verdict v;
  Rng rng(1004);
  double worst = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 30 + uniform_index(rng, 100);
    const double lambda = std::exp(uniform_real(rng, std::log(1e-3), std::log(10.0)));
    std::vector<TrainingRow> rows;
    for (std::size_t i = 0; i < n; ++i) {
      PromptFeatures x;
      for (std::size_t j = 0; j < kPromptFeatureCount; ++j) x[j] = uniform_real(rng, -3, 3);
      rows.push_back({x, uniform_real(rng, -2, 2)});
    }
    const auto m = fit_rating_model(rows, lambda);
    const auto o = oracle::ridge_normal_equations(rows, lambda);
    for (std::size_t j = 0; j < kPromptFeatureCount; ++j) worst = std::max(worst, std::fabs(m.weights[j] - o.weights[j]));
    worst = std::max(worst, std::fabs(m.intercept - o.intercept));
  }
  v.require(worst < 1e-9, fmt("max deviation from normal equations %.3g", worst));

  std::array<double, kPromptFeatureCount> w{};
  for (auto& x : w) x = uniform_real(rng, -1, 1);
  const double b = -0.4;
  std::vector<TrainingRow> rows;
  for (int i = 0; i < 300; ++i) {
    PromptFeatures x;
    double y = b;
    for (std::size_t j = 0; j < kPromptFeatureCount; ++j) y += w[j] * (x[j] = uniform_real(rng, -3, 3));
    rows.push_back({x, y});
  }
  const auto m = fit_rating_model(rows, 1e-9);
  double planted = std::fabs(m.raw_intercept() - b);
  const auto raw = m.raw_weights();
  for (std::size_t j = 0; j < kPromptFeatureCount; ++j) planted = std::max(planted, std::fabs(raw[j] - w[j]));
  v.require(planted < 1e-6, fmt("planted recovery error %.3g", planted));
  if (v.ok) v.detail = fmt("oracle max dev %.2g, planted error %.2g", worst, planted);
  return v;
}

Verdict closed_loop() {
  Verdict v;
  const auto c = test::fixture_catalog();
  int adaptive = 0, control = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto improves = [&](std::size_t gamma) {
      SimulationConfig cfg;
      cfg.seed = seed;
      cfg.gamma = gamma;
      cfg.population_size = 40;
      cfg.primes_per_epoch = 5;
      cfg.epochs = 20;
      cfg.M = 64;
      cfg.noise_sd = 0.0;
      const auto r = run_simulation(c, cfg);
      double first = 0, last = 0;
      for (std::size_t e = 0; e < 5; ++e) {
        first += r[e].mean_true;
        last += r[r.size() - 5 + e].mean_true;
      }
      return last > first;
    };
    adaptive += improves(8);
    control += improves(64);
  }
  v.require(adaptive >= 16, std::to_string(adaptive) + "/20 seeds improved with gamma=8");
  v.require(control <= 12, std::to_string(control) + "/20 seeds improved with gamma=M");
  if (v.ok) v.detail = "gamma=8 " + std::to_string(adaptive) + "/20, gamma=M " + std::to_string(control) + "/20";
  return v;
}

Verdict analytics() {
  Verdict v;
  Rng rng(1006);
  double worst = 0;
  for (int f = 0; f < 50; ++f) {
    const std::size_t n = 5 + uniform_index(rng, 100);
    std::vector<double> x(n), y(n);
    const double rho = uniform_real(rng, -0.9, 0.9);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = standard_normal(rng);
      y[i] = rho * x[i] + standard_normal(rng);
    }
    const auto got = pearson_test(x, y);
    const auto ref = oracle::pearson(x, y);
    if (got.status != CellStatus::ok) {
      v.require(false, "fixture not computable");
      continue;
    }
    worst = std::max({worst, std::fabs(*got.r - ref.r), std::fabs(*got.t - ref.t), std::fabs(*got.p - ref.p)});
  }
  v.require(worst < 1e-6, fmt("pearson max deviation %.3g", worst));
  for (double df : {0.5, 1.0, 2.0, 30.0, 1e6}) v.require(student_t_cdf(0.0, df) == 0.5, "tcdf(0) != 0.5");
  double sym = 0;
  for (int i = 0; i < 5000; ++i) {
    const double t = uniform_real(rng, -50, 50), df = std::exp(uniform_real(rng, std::log(0.5), std::log(1e5)));
    sym = std::max(sym, std::fabs(student_t_cdf(t, df) + student_t_cdf(-t, df) - 1.0));
  }
  v.require(sym < 1e-10, fmt("symmetry deviation %.3g", sym));
  const auto rs = test::planted_correlation_ratings(rng, 71, 0.75, 10);
  const auto cell = correlation_matrix(rs)[index_of(RatingQuestion::like)][index_of(RatingQuestion::danceable)];
  v.require(cell.n == 71 && cell.r && std::fabs(*cell.r - 0.75) <= 0.05, "planted r not recovered");
  v.require(cell.p_value && *cell.p_value < 0.001, "planted p not < 0.001");
  if (v.ok) v.detail = fmt("pearson dev %.2g, symmetry dev %.2g, planted r %.4f", worst, sym, *cell.r);
  return v;
}

Verdict event_sourcing() {
  Verdict v;
  const Catalog catalog = test::fixture_catalog();
  std::size_t ops = 0;
  for (std::uint64_t seq = 1; seq <= 1000 && v.ok; ++seq) {
    test::TempDir dir;
    const auto cfg = test::service_config(dir.path());
    Rng rng(mix_seed(1007, seq));
    std::string before;
    {
      auto svc = test::make_service(cfg, catalog);
      ops += test::run_api_sequence(*svc, rng, 10 + uniform_index(rng, 40)).operations;
      before = svc->snapshot().dump();
    }
    auto svc = test::make_service(cfg, catalog);
    v.require(svc->snapshot().dump() == before, "snapshot differs after restart, sequence " + std::to_string(seq));
    v.require(RadioStore::replay(read_event_log_file(dir.path() / "events.jsonl")).snapshot().dump() == before,
              "offline replay differs, sequence " + std::to_string(seq));
  }
  if (v.ok) v.detail = "1000 sequences, " + std::to_string(ops) + " operations";
  return v;
}

Verdict queue_state_machine() {
  Verdict v;
  const auto c = test::fixture_catalog();
  std::size_t completed = 0, crashes = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto out = test::run_queue_property(c, mix_seed(1008, seed), 1000);
    for (const auto& p : out.problems) v.require(false, p);
    completed += out.completed;
    crashes += out.crashes;
  }
  v.require(completed > 0 && crashes > 0, "sequence exercised no completions or crashes");
  if (v.ok) v.detail = "5 x 1000 steps, " + std::to_string(completed) + " completed, " + std::to_string(crashes) + " crashes";
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;  // 0: none
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria = {
      {"recommender-exactness", 30, recommender_exactness},
      {"recommender-sign-law", 0, sign_law},
      {"scheduler-endpoints", 10, scheduler_endpoints},
      {"model-fit", 5, model_fit},
      {"closed-loop-adaptation", 120, closed_loop},
      {"analytics-correctness", 0, analytics},
      {"event-sourcing-round-trip", 0, event_sourcing},
      {"generation-queue-state-machine", 0, queue_state_machine},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.ok = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs >= c.budget_s) {
      v.ok = false;
      v.detail += fmt(" (over %.0f s budget)", c.budget_s);
    }
    failures += !v.ok;
    std::printf("%s %s [%.2fs] %s\n", v.ok ? "PASS" : "FAIL", c.name, secs, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
