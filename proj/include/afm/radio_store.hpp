#pragma once

// In-memory state rebuilt by folding the event log. apply() is the only
// mutator, so replaying the same records always yields the same store.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "afm/catalog.hpp"
#include "afm/domain.hpp"
#include "afm/errors.hpp"
#include "afm/event_log.hpp"
#include "afm/generation_queue.hpp"
#include "afm/recommender.hpp"
#include "afm/scheduler.hpp"

namespace afm {

class RadioStore {
 public:
  void apply(const EventRecord& rec) {
    switch (rec.kind) {
      case EventKind::prime_added: {
        auto p = rec.payload.get<Prime>();
        primes_[p.prime_id] = std::move(p);
        break;
      }
      case EventKind::job_enqueued: {
        auto job = rec.payload.get<GenerationJob>();
        if (jobs_.contains(job.job_id)) throw PersistenceError("job '" + job.job_id + "' enqueued twice");
        if (job.state != JobState::queued) throw PersistenceError("job '" + job.job_id + "' enqueued in non-queued state");
        job_order_.push_back(job.job_id);
        jobs_.emplace(job.job_id, std::move(job));
        break;
      }
      case EventKind::job_transition: {
        auto job = rec.payload.get<GenerationJob>();
        auto it = jobs_.find(job.job_id);
        if (it == jobs_.end()) throw PersistenceError("transition for unknown job '" + job.job_id + "'");
        if (!is_legal_transition(it->second.state, job.state))
          throw PersistenceError("illegal transition " + std::string(to_string(it->second.state)) + " -> " +
                                 std::string(to_string(job.state)) + " for job '" + job.job_id + "'");
        it->second = std::move(job);
        break;
      }
      case EventKind::song_added: {
        auto s = rec.payload.get<Song>();
        if (songs_.contains(s.song_id)) break;
        song_order_.push_back(s.song_id);
        songs_.emplace(s.song_id, std::move(s));
        refresh_standardization();
        break;
      }
      case EventKind::rating_submitted: {
        const auto partial = rec.payload.get<Rating>();
        auto& r = ratings_[{partial.listener_id, partial.song_id}];
        if (r.rating_id.empty()) {
          r.rating_id = partial.rating_id;
          r.listener_id = partial.listener_id;
          r.song_id = partial.song_id;
        }
        for (std::size_t i = 0; i < kQuestionCount; ++i)
          if (partial.answers[i]) r.answers[i] = partial.answers[i];
        r.submitted_at = partial.submitted_at;
        break;
      }
      case EventKind::preference_updated: {
        auto p = rec.payload.get<PreferenceProfile>();
        preferences_[p.listener_id] = std::move(p);
        break;
      }
    }
    last_sequence_ = rec.sequence_number;
  }

  static RadioStore replay(std::span<const EventRecord> records) {
    RadioStore s;
    for (const auto& r : records) s.apply(r);
    return s;
  }

  // Canonical JSON of the whole store: maps sorted by key, songs and jobs in
  // insertion order.
  Json snapshot() const {
    Json primes = Json::array();
    for (const auto& [id, p] : primes_) primes.push_back(p);
    Json songs = Json::array();
    for (const auto& id : song_order_) songs.push_back(songs_.at(id));
    Json jobs = Json::array();
    for (const auto& id : job_order_) jobs.push_back(jobs_.at(id));
    Json ratings = Json::array();
    for (const auto& [key, r] : ratings_) ratings.push_back(r);
    Json prefs = Json::array();
    for (const auto& [id, p] : preferences_) prefs.push_back(p);
    return Json{{"last_sequence", last_sequence_}, {"primes", primes}, {"songs", songs},
                {"jobs", jobs},                    {"ratings", ratings}, {"preferences", prefs}};
  }

  const Prime* find_prime(std::string_view id) const { return find_in(primes_, id); }
  const Song* find_song(std::string_view id) const { return find_in(songs_, id); }
  const GenerationJob* find_job(std::string_view id) const { return find_in(jobs_, id); }

  const Rating* find_rating(const std::string& listener_id, const std::string& song_id) const {
    auto it = ratings_.find({listener_id, song_id});
    return it == ratings_.end() ? nullptr : &it->second;
  }

  PreferenceProfile preference(const std::string& listener_id) const {
    auto it = preferences_.find(listener_id);
    if (it != preferences_.end()) return it->second;
    PreferenceProfile p;
    p.listener_id = listener_id;
    return p;
  }

  std::size_t prime_count() const { return primes_.size(); }
  std::size_t song_count() const { return songs_.size(); }
  std::size_t rating_count() const { return ratings_.size(); }
  std::size_t job_count() const { return jobs_.size(); }
  std::uint64_t last_sequence() const { return last_sequence_; }

  std::size_t answer_count() const {
    std::size_t n = 0;
    for (const auto& [k, r] : ratings_) n += r.answer_count();
    return n;
  }

  std::vector<Song> songs() const {
    std::vector<Song> out;
    out.reserve(song_order_.size());
    for (const auto& id : song_order_) out.push_back(songs_.at(id));
    return out;
  }

  const std::vector<std::string>& song_ids() const { return song_order_; }

  std::vector<GenerationJob> jobs() const {
    std::vector<GenerationJob> out;
    for (const auto& id : job_order_) out.push_back(jobs_.at(id));
    return out;
  }

  // Ordered by (listener_id, song_id).
  std::vector<Rating> ratings() const {
    std::vector<Rating> out;
    out.reserve(ratings_.size());
    for (const auto& [k, r] : ratings_) out.push_back(r);
    return out;
  }

  std::map<std::string, std::vector<Rating>> ratings_by_song() const {
    std::map<std::string, std::vector<Rating>> out;
    for (const auto& [k, r] : ratings_) out[r.song_id].push_back(r);
    return out;
  }

  QuestionMeans question_means(const std::string& song_id) const {
    std::array<double, kQuestionCount> sum{};
    std::array<std::size_t, kQuestionCount> count{};
    for (auto it = ratings_.begin(); it != ratings_.end(); ++it) {
      if (it->second.song_id != song_id) continue;
      for (std::size_t i = 0; i < kQuestionCount; ++i)
        if (auto a = it->second.answers[i]) {
          sum[i] += center_likert(*a);
          ++count[i];
        }
    }
    QuestionMeans out;
    for (std::size_t i = 0; i < kQuestionCount; ++i)
      if (count[i] > 0) out[i] = sum[i] / static_cast<double>(count[i]);
    return out;
  }

  // Z-scoring statistics over all stored song features; refreshed whenever a
  // song is added.
  const Standardization& song_standardization() const { return standardization_; }

 private:
  template <typename Map>
  static const typename Map::mapped_type* find_in(const Map& m, std::string_view id) {
    auto it = m.find(std::string(id));
    return it == m.end() ? nullptr : &it->second;
  }

  std::map<std::string, Prime> primes_;
  std::map<std::string, Song> songs_;
  std::vector<std::string> song_order_;
  std::map<std::string, GenerationJob> jobs_;
  std::vector<std::string> job_order_;
  std::map<std::pair<std::string, std::string>, Rating> ratings_;
  std::map<std::string, PreferenceProfile> preferences_;
  std::uint64_t last_sequence_ = 0;

  Standardization standardization_;

  void refresh_standardization() {
    std::vector<FeatureVector> fs;
    fs.reserve(songs_.size());
    for (const auto& id : song_order_) fs.push_back(songs_.at(id).song_features);
    standardization_ = Standardization::fit(fs);
  }
};

}  // namespace afm
