#pragma once

// Rating analytics: per-question distributions, the pairwise Pearson
// correlation matrix with significance stars, and one-sided Welch tests of
// each question against the pooled answers to the other six.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "afm/domain.hpp"
#include "afm/statistics.hpp"

namespace afm {

struct QuestionSummary {
  RatingQuestion question = RatingQuestion::like;
  std::size_t count = 0;
  std::array<std::size_t, 5> histogram{};  // stars 1..5
  std::optional<double> mean;
  std::optional<double> stddev;  // sample standard deviation, needs count >= 2
};

inline std::vector<QuestionSummary> summarize_questions(std::span<const Rating> ratings) {
  std::vector<QuestionSummary> out;
  for (auto q : kAllQuestions) {
    QuestionSummary s;
    s.question = q;
    double sum = 0.0;
    for (const auto& r : ratings) {
      if (auto a = r.answer(q)) {
        ++s.count;
        ++s.histogram[static_cast<std::size_t>(*a - 1)];
        sum += *a;
      }
    }
    if (s.count > 0) {
      const double mean = sum / static_cast<double>(s.count);
      s.mean = mean;
      if (s.count >= 2) {
        double ss = 0.0;
        for (const auto& r : ratings)
          if (auto a = r.answer(q)) ss += (*a - mean) * (*a - mean);
        s.stddev = std::sqrt(ss / static_cast<double>(s.count - 1));
      }
    }
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Correlations

enum class AnalysisUnit { per_song_mean, per_rating };

inline std::string_view to_string(AnalysisUnit u) {
  return u == AnalysisUnit::per_song_mean ? "per_song_mean" : "per_rating";
}

inline AnalysisUnit parse_analysis_unit(std::string_view s) {
  if (s == "per_song_mean") return AnalysisUnit::per_song_mean;
  if (s == "per_rating") return AnalysisUnit::per_rating;
  throw ValidationError("unknown analysis unit '" + std::string(s) + "'");
}

enum class CellStatus { ok, diagonal, insufficient_data, zero_variance, exact_fit };

inline std::string_view to_string(CellStatus s) {
  switch (s) {
    case CellStatus::ok: return "ok";
    case CellStatus::diagonal: return "diagonal";
    case CellStatus::insufficient_data: return "insufficient_data";
    case CellStatus::zero_variance: return "zero_variance";
    case CellStatus::exact_fit: return "exact_fit";
  }
  return "unknown";
}

// Significance marks: "." p <= .1, "*" <= .05, "**" <= .01, "***" <= .001.
inline std::string_view significance_stars(std::optional<double> p) {
  if (!p) return "";
  if (*p <= 0.001) return "***";
  if (*p <= 0.01) return "**";
  if (*p <= 0.05) return "*";
  if (*p <= 0.1) return ".";
  return "";
}

struct PearsonResult {
  std::optional<double> r;
  std::optional<double> t;
  std::optional<double> p;  // two-sided
  std::size_t n = 0;
  CellStatus status = CellStatus::insufficient_data;
};

inline PearsonResult pearson_test(std::span<const double> x, std::span<const double> y) {
  PearsonResult res;
  res.n = std::min(x.size(), y.size());
  if (res.n < 3) return res;
  const double n = static_cast<double>(res.n);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < res.n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < res.n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    res.status = CellStatus::zero_variance;
    return res;
  }
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  res.r = r;
  if (1.0 - r * r < 1e-12) {
    res.status = CellStatus::exact_fit;
    return res;
  }
  const double df = n - 2.0;
  const double t = r * std::sqrt(df / (1.0 - r * r));
  res.t = t;
  res.p = std::min(1.0, 2.0 * student_t_cdf(-std::abs(t), df));
  res.status = CellStatus::ok;
  return res;
}

struct CorrelationCell {
  RatingQuestion question_a = RatingQuestion::happy;
  RatingQuestion question_b = RatingQuestion::happy;
  std::optional<double> r;
  std::optional<double> t;
  std::optional<double> p_value;
  std::size_t n = 0;
  CellStatus status = CellStatus::insufficient_data;

  std::string_view stars() const { return significance_stars(p_value); }
};

using CorrelationMatrix = std::array<std::array<CorrelationCell, kQuestionCount>, kQuestionCount>;

// One observation per unit: either each rating, or each song's mean answers.
// Entries are absent where the unit has no answer to that question.
using Observation = std::array<std::optional<double>, kQuestionCount>;

inline std::vector<Observation> observations(std::span<const Rating> ratings, AnalysisUnit unit) {
  std::vector<Observation> out;
  if (unit == AnalysisUnit::per_rating) {
    for (const auto& r : ratings) {
      Observation o;
      for (auto q : kAllQuestions)
        if (auto a = r.answer(q)) o[index_of(q)] = static_cast<double>(*a);
      out.push_back(o);
    }
    return out;
  }
  struct Acc {
    std::array<double, kQuestionCount> sum{};
    std::array<std::size_t, kQuestionCount> count{};
  };
  std::map<std::string, Acc> by_song;
  for (const auto& r : ratings) {
    auto& acc = by_song[r.song_id];
    for (auto q : kAllQuestions)
      if (auto a = r.answer(q)) {
        acc.sum[index_of(q)] += *a;
        ++acc.count[index_of(q)];
      }
  }
  for (const auto& [song, acc] : by_song) {
    Observation o;
    for (std::size_t i = 0; i < kQuestionCount; ++i)
      if (acc.count[i] > 0) o[i] = acc.sum[i] / static_cast<double>(acc.count[i]);
    out.push_back(o);
  }
  return out;
}

inline CorrelationMatrix correlation_matrix(std::span<const Rating> ratings,
                                            AnalysisUnit unit = AnalysisUnit::per_song_mean) {
  const auto obs = observations(ratings, unit);
  CorrelationMatrix m;
  for (std::size_t a = 0; a < kQuestionCount; ++a) {
    for (std::size_t b = a; b < kQuestionCount; ++b) {
      std::vector<double> xs, ys;
      for (const auto& o : obs)
        if (o[a] && o[b]) {
          xs.push_back(*o[a]);
          ys.push_back(*o[b]);
        }
      CorrelationCell cell;
      cell.question_a = kAllQuestions[a];
      cell.question_b = kAllQuestions[b];
      cell.n = xs.size();
      if (a == b) {
        cell.r = 1.0;
        cell.status = CellStatus::diagonal;
      } else {
        const auto res = pearson_test(xs, ys);
        cell.r = res.r;
        cell.t = res.t;
        cell.p_value = res.p;
        cell.status = res.status;
      }
      m[a][b] = cell;
      std::swap(cell.question_a, cell.question_b);
      m[b][a] = cell;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// One-sided Welch test

enum class TestStatus { ok, insufficient_data };

struct WelchResult {
  std::optional<double> t;
  std::optional<double> df;
  std::optional<double> p_greater;  // H1: mean(x) > mean(y)
  std::optional<double> p_less;     // H1: mean(x) < mean(y)
  std::size_t n_x = 0;
  std::size_t n_y = 0;
  TestStatus status = TestStatus::insufficient_data;
};

inline WelchResult welch_test(std::span<const double> x, std::span<const double> y) {
  WelchResult res;
  res.n_x = x.size();
  res.n_y = y.size();
  if (x.size() < 2 || y.size() < 2) return res;
  auto moments = [](std::span<const double> v) {
    double m = 0.0;
    for (double e : v) m += e;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double e : v) ss += (e - m) * (e - m);
    return std::pair{m, ss / static_cast<double>(v.size() - 1)};
  };
  const auto [mx, vx] = moments(x);
  const auto [my, vy] = moments(y);
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  const double ax = vx / nx;
  const double ay = vy / ny;
  const double se2 = ax + ay;
  const double diff = mx - my;
  res.status = TestStatus::ok;
  if (se2 <= 0.0) {
    // Both groups constant: the comparison is deterministic.
    res.df = nx + ny - 2.0;
    if (diff == 0.0) {
      res.t = 0.0;
      res.p_greater = res.p_less = 0.5;
    } else {
      res.t = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      res.p_greater = diff > 0 ? 0.0 : 1.0;
      res.p_less = 1.0 - *res.p_greater;
    }
    return res;
  }
  const double t = diff / std::sqrt(se2);
  const double df = se2 * se2 / (ax * ax / (nx - 1.0) + ay * ay / (ny - 1.0));
  res.t = t;
  res.df = df;
  res.p_greater = student_t_cdf(-t, df);
  res.p_less = student_t_cdf(t, df);
  return res;
}

struct QuestionTest {
  RatingQuestion question = RatingQuestion::like;
  WelchResult result;
};

// Answers to `question` against the pooled answers to the other six.
inline QuestionTest one_sided_question_test(std::span<const Rating> ratings, RatingQuestion question) {
  std::vector<double> x, y;
  for (const auto& r : ratings)
    for (auto q : kAllQuestions)
      if (auto a = r.answer(q)) (q == question ? x : y).push_back(static_cast<double>(*a));
  return {question, welch_test(x, y)};
}

// ---------------------------------------------------------------------------
// Report

struct StatsReport {
  AnalysisUnit unit = AnalysisUnit::per_song_mean;
  std::size_t rating_count = 0;
  std::vector<QuestionSummary> summaries;
  CorrelationMatrix correlations;
  std::vector<QuestionTest> tests;
};

inline StatsReport compute_stats(std::span<const Rating> ratings, AnalysisUnit unit) {
  StatsReport rep;
  rep.unit = unit;
  rep.rating_count = ratings.size();
  rep.summaries = summarize_questions(ratings);
  rep.correlations = correlation_matrix(ratings, unit);
  for (auto q : kAllQuestions) rep.tests.push_back(one_sided_question_test(ratings, q));
  return rep;
}

namespace detail {
inline Json opt_json(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) {
    if (v && std::isinf(*v)) return *v > 0 ? Json("inf") : Json("-inf");
    return nullptr;
  }
  return *v;
}
}  // namespace detail

inline Json stats_to_json(const StatsReport& rep) {
  Json summaries = Json::array();
  for (const auto& s : rep.summaries)
    summaries.push_back({{"question", to_string(s.question)},
                         {"count", s.count},
                         {"histogram", s.histogram},
                         {"mean", detail::opt_json(s.mean)},
                         {"stddev", detail::opt_json(s.stddev)}});
  Json matrix = Json::array();
  for (const auto& row : rep.correlations) {
    Json jrow = Json::array();
    for (const auto& c : row)
      jrow.push_back({{"question_a", to_string(c.question_a)},
                      {"question_b", to_string(c.question_b)},
                      {"r", detail::opt_json(c.r)},
                      {"t", detail::opt_json(c.t)},
                      {"n", c.n},
                      {"p_value", detail::opt_json(c.p_value)},
                      {"stars", c.stars()},
                      {"status", to_string(c.status)}});
    matrix.push_back(std::move(jrow));
  }
  Json tests = Json::array();
  for (const auto& t : rep.tests)
    tests.push_back({{"question", to_string(t.question)},
                     {"t", detail::opt_json(t.result.t)},
                     {"df", detail::opt_json(t.result.df)},
                     {"p_greater", detail::opt_json(t.result.p_greater)},
                     {"p_less", detail::opt_json(t.result.p_less)},
                     {"n_question", t.result.n_x},
                     {"n_others", t.result.n_y},
                     {"status", t.result.status == TestStatus::ok ? "ok" : "insufficient_data"}});
  Json questions = Json::array();
  for (auto q : kAllQuestions) questions.push_back(to_string(q));
  return Json{{"unit", to_string(rep.unit)},
              {"rating_count", rep.rating_count},
              {"questions", questions},
              {"summaries", summaries},
              {"correlations", matrix},
              {"question_tests", tests}};
}

// r values with significance marks appended; empty cells are not computable.
inline std::string correlation_csv(const CorrelationMatrix& m) {
  std::string out = "question";
  for (auto q : kAllQuestions) out += "," + std::string(to_string(q));
  out += "\n";
  for (std::size_t a = 0; a < kQuestionCount; ++a) {
    out += std::string(to_string(kAllQuestions[a]));
    for (std::size_t b = 0; b < kQuestionCount; ++b) {
      out += ",";
      const auto& c = m[a][b];
      if (c.r) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", *c.r);
        out += buf;
        out += c.stars();
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace afm
