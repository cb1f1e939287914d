#pragma once

// The slow generation pipeline as a FIFO job queue. Backend latency is a
// configurable delay (default 0) so the loop stays testable.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "afm/catalog.hpp"
#include "afm/domain.hpp"
#include "afm/errors.hpp"
#include "afm/generator.hpp"
#include "afm/random.hpp"

namespace afm {

enum class JobState { queued, running, complete, failed };

inline std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::complete: return "complete";
    case JobState::failed: return "failed";
  }
  return "unknown";
}

inline JobState parse_job_state(std::string_view s) {
  if (s == "queued") return JobState::queued;
  if (s == "running") return JobState::running;
  if (s == "complete") return JobState::complete;
  if (s == "failed") return JobState::failed;
  throw ValidationError("unknown job state '" + std::string(s) + "'");
}

inline constexpr bool is_legal_transition(JobState from, JobState to) {
  return (from == JobState::queued && to == JobState::running) ||
         (from == JobState::running && (to == JobState::complete || to == JobState::failed));
}

struct GenerationJob {
  std::string job_id;
  std::string prime_id;
  std::string artist_prompt;
  std::string genre_prompt;
  JobState state = JobState::queued;
  TimestampMs enqueued_at = 0;
  std::optional<TimestampMs> started_at;
  std::optional<TimestampMs> finished_at;
  std::optional<std::string> result_song_id;
  std::optional<std::string> failure_reason;

  friend bool operator==(const GenerationJob&, const GenerationJob&) = default;
};

// Checks the per-state field invariants; returns a description of the first
// violation, or nothing.
inline std::optional<std::string> job_invariant_violation(const GenerationJob& job) {
  if (job.state == JobState::complete && !job.result_song_id) return "complete job without song";
  if (job.state == JobState::failed && !job.failure_reason) return "failed job without reason";
  if (job.state == JobState::queued && (job.started_at || job.finished_at)) return "queued job with timestamps";
  if (job.state == JobState::running && (!job.started_at || job.finished_at)) return "running job timestamps";
  if (job.started_at && *job.started_at < job.enqueued_at) return "started before enqueued";
  if (job.finished_at && (!job.started_at || *job.finished_at < *job.started_at))
    return "finished before started";
  return std::nullopt;
}

inline void to_json(Json& j, const GenerationJob& job) {
  auto opt = [](const auto& v) { return v ? Json(*v) : Json(nullptr); };
  j = Json{{"job_id", job.job_id},
           {"prime_id", job.prime_id},
           {"artist_prompt", job.artist_prompt},
           {"genre_prompt", job.genre_prompt},
           {"state", to_string(job.state)},
           {"enqueued_at", job.enqueued_at},
           {"started_at", opt(job.started_at)},
           {"finished_at", opt(job.finished_at)},
           {"result_song_id", opt(job.result_song_id)},
           {"failure_reason", opt(job.failure_reason)}};
}

inline void from_json(const Json& j, GenerationJob& job) {
  auto opt_ts = [&](const char* k) -> std::optional<TimestampMs> {
    if (!j.contains(k) || j[k].is_null()) return std::nullopt;
    return j[k].get<TimestampMs>();
  };
  auto opt_str = [&](const char* k) -> std::optional<std::string> {
    if (!j.contains(k) || j[k].is_null()) return std::nullopt;
    return j[k].get<std::string>();
  };
  j.at("job_id").get_to(job.job_id);
  j.at("prime_id").get_to(job.prime_id);
  j.at("artist_prompt").get_to(job.artist_prompt);
  j.at("genre_prompt").get_to(job.genre_prompt);
  job.state = parse_job_state(j.at("state").get<std::string>());
  j.at("enqueued_at").get_to(job.enqueued_at);
  job.started_at = opt_ts("started_at");
  job.finished_at = opt_ts("finished_at");
  job.result_song_id = opt_str("result_song_id");
  job.failure_reason = opt_str("failure_reason");
}

// Persistence port for the queue. save_song must be idempotent by song_id.
class JobRepository {
 public:
  virtual ~JobRepository() = default;
  virtual std::optional<Prime> find_prime(std::string_view prime_id) const = 0;
  virtual void save_job(const GenerationJob& job) = 0;
  virtual void save_song(const Song& song) = 0;
  virtual bool has_song(std::string_view song_id) const = 0;
  // All jobs ever saved, in enqueue order.
  virtual std::vector<GenerationJob> load_jobs() const = 0;
};

class InMemoryJobRepository final : public JobRepository {
 public:
  void add_prime(Prime p) {
    std::lock_guard lock(mutex_);
    primes_[p.prime_id] = std::move(p);
  }

  std::optional<Prime> find_prime(std::string_view prime_id) const override {
    std::lock_guard lock(mutex_);
    auto it = primes_.find(std::string(prime_id));
    if (it == primes_.end()) return std::nullopt;
    return it->second;
  }

  void save_job(const GenerationJob& job) override {
    std::lock_guard lock(mutex_);
    auto it = job_index_.find(job.job_id);
    if (it == job_index_.end()) {
      job_index_.emplace(job.job_id, jobs_.size());
      jobs_.push_back(job);
    } else {
      jobs_[it->second] = job;
    }
  }

  void save_song(const Song& song) override {
    std::lock_guard lock(mutex_);
    if (songs_.contains(song.song_id)) return;
    songs_.emplace(song.song_id, song);
    song_order_.push_back(song.song_id);
  }

  bool has_song(std::string_view song_id) const override {
    std::lock_guard lock(mutex_);
    return songs_.contains(std::string(song_id));
  }

  std::vector<GenerationJob> load_jobs() const override {
    std::lock_guard lock(mutex_);
    return jobs_;
  }

  std::vector<Song> songs() const {
    std::lock_guard lock(mutex_);
    std::vector<Song> out;
    out.reserve(song_order_.size());
    for (const auto& id : song_order_) out.push_back(songs_.at(id));
    return out;
  }

  std::optional<Song> find_song(std::string_view song_id) const {
    std::lock_guard lock(mutex_);
    auto it = songs_.find(std::string(song_id));
    if (it == songs_.end()) return std::nullopt;
    return it->second;
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Prime> primes_;
  std::vector<GenerationJob> jobs_;
  std::map<std::string, std::size_t> job_index_;
  std::map<std::string, Song> songs_;
  std::vector<std::string> song_order_;
};

struct QueueConfig {
  std::size_t capacity = 1000;
  std::chrono::milliseconds latency{0};
  std::uint64_t seed = 0;
};

// Points inside run_worker_step where a test can inject a simulated crash.
enum class WorkerPhase { marked_running, generated, song_saved };

struct SimulatedCrash : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string job_id_for(std::size_t ordinal) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "job-%06zu", ordinal);
  return buf;
}

// Songs are keyed by the job that made them, which gives at-most-once song
// persistence when a step is retried after a crash.
inline std::string song_id_for_job(std::string_view job_id) {
  constexpr std::string_view prefix = "job-";
  if (job_id.starts_with(prefix)) return "song-" + std::string(job_id.substr(prefix.size()));
  return "song-" + std::string(job_id);
}

// Single consumer, many producers. State is rebuilt from the repository on
// construction, so constructing a new queue over the same repository is a
// restart: jobs left running are resumed first.
class GenerationQueue {
 public:
  using Clock = std::function<TimestampMs()>;
  using FaultInjector = std::function<void(WorkerPhase, const GenerationJob&)>;

  GenerationQueue(JobRepository& repo, const CatalogHandle& catalog,
                  std::shared_ptr<const GeneratorBackend> backend, QueueConfig config = {},
                  Clock clock = now_utc_ms)
      : repo_(repo),
        catalog_(catalog),
        backend_(std::move(backend)),
        config_(config),
        clock_(std::move(clock)) {
    std::deque<std::string> running;
    for (auto& job : repo_.load_jobs()) {
      if (job.state == JobState::running) running.push_back(job.job_id);
      if (job.state == JobState::queued) pending_.push_back(job.job_id);
      jobs_[job.job_id] = std::move(job);
    }
    pending_.insert(pending_.begin(), running.begin(), running.end());
    next_ordinal_ = jobs_.size() + 1;
  }

  GenerationQueue(const GenerationQueue&) = delete;
  GenerationQueue& operator=(const GenerationQueue&) = delete;

  void set_fault_injector(FaultInjector f) { fault_ = std::move(f); }

  GenerationJob enqueue(const std::string& prime_id, const std::string& artist_prompt,
                        const std::string& genre_prompt) {
    const auto catalog = catalog_.snapshot();
    if (!repo_.find_prime(prime_id)) throw ValidationError("unknown prime '" + prime_id + "'");
    if (!catalog->find_artist(artist_prompt))
      throw ValidationError("unknown artist '" + artist_prompt + "'");
    if (!catalog->find_genre(genre_prompt)) throw ValidationError("unknown genre '" + genre_prompt + "'");

    std::lock_guard lock(mutex_);
    if (pending_.size() >= config_.capacity)
      throw BackPressureError("generation queue is at capacity (" + std::to_string(config_.capacity) + ")");
    GenerationJob job;
    while (jobs_.contains(job_id_for(next_ordinal_))) ++next_ordinal_;
    job.job_id = job_id_for(next_ordinal_++);
    job.prime_id = prime_id;
    job.artist_prompt = artist_prompt;
    job.genre_prompt = genre_prompt;
    job.state = JobState::queued;
    job.enqueued_at = clock_();
    repo_.save_job(job);
    jobs_[job.job_id] = job;
    pending_.push_back(job.job_id);
    return job;
  }

  // Processes the oldest pending job. Backend failures are recorded on the
  // job; only a SimulatedCrash (tests) escapes.
  std::optional<GenerationJob> run_worker_step() {
    GenerationJob job;
    {
      std::lock_guard lock(mutex_);
      if (pending_.empty()) return std::nullopt;
      job = jobs_.at(pending_.front());
      if (job.state == JobState::queued) {
        job.state = JobState::running;
        job.started_at = std::max(clock_(), job.enqueued_at);
        repo_.save_job(job);
        jobs_[job.job_id] = job;
      }
    }
    inject(WorkerPhase::marked_running, job);

    const std::string song_id = song_id_for_job(job.job_id);
    if (!repo_.has_song(song_id)) {
      std::optional<Song> song;
      std::string failure;
      try {
        song = produce_song(job, song_id);
      } catch (const std::exception& e) {
        failure = e.what();
        if (failure.empty()) failure = "generation failed";
      }
      if (!song) return finish(std::move(job), std::nullopt, failure);
      inject(WorkerPhase::generated, job);
      repo_.save_song(*song);
      inject(WorkerPhase::song_saved, job);
    }
    return finish(std::move(job), song_id, {});
  }

  std::optional<GenerationJob> job(std::string_view job_id) const {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(std::string(job_id));
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<GenerationJob> jobs() const {
    std::lock_guard lock(mutex_);
    std::vector<GenerationJob> out;
    for (const auto& [id, j] : jobs_) out.push_back(j);
    return out;
  }

  std::size_t pending_count() const {
    std::lock_guard lock(mutex_);
    return pending_.size();
  }

  const QueueConfig& config() const { return config_; }

 private:
  void inject(WorkerPhase phase, const GenerationJob& job) {
    if (fault_) fault_(phase, job);
  }

  Song produce_song(const GenerationJob& job, const std::string& song_id) {
    if (config_.latency.count() > 0) std::this_thread::sleep_for(config_.latency);
    const auto catalog = catalog_.snapshot();
    const auto prime = repo_.find_prime(job.prime_id);
    if (!prime) throw Error("prime '" + job.prime_id + "' no longer exists");
    const ArtistProfile& artist = catalog->artist(job.artist_prompt);
    const GenreProfile& genre = catalog->genre(job.genre_prompt);
    const GeneratedAudio audio =
        backend_->generate(*prime, artist, genre, mix_seed(config_.seed, fnv1a64(job.job_id)));
    require_finite(audio.song_features, "generated song");
    Song song;
    song.song_id = song_id;
    song.prime_id = prime->prime_id;
    song.artist_prompt = artist.artist_id;
    song.genre_prompt = genre.genre_id;
    song.prompt_features = prompt_features(*prime, artist, genre);
    song.song_features = audio.song_features;
    song.audio_ref = audio.audio_ref;
    song.created_at = clock_();
    return song;
  }

  GenerationJob finish(GenerationJob job, std::optional<std::string> song_id, std::string failure) {
    std::lock_guard lock(mutex_);
    job.finished_at = std::max(clock_(), *job.started_at);
    if (song_id) {
      job.state = JobState::complete;
      job.result_song_id = std::move(song_id);
    } else {
      job.state = JobState::failed;
      job.failure_reason = std::move(failure);
    }
    repo_.save_job(job);
    jobs_[job.job_id] = job;
    if (!pending_.empty() && pending_.front() == job.job_id) pending_.pop_front();
    return job;
  }

  JobRepository& repo_;
  const CatalogHandle& catalog_;
  std::shared_ptr<const GeneratorBackend> backend_;
  QueueConfig config_;
  Clock clock_;
  FaultInjector fault_;

  mutable std::mutex mutex_;
  std::map<std::string, GenerationJob> jobs_;
  std::deque<std::string> pending_;
  std::size_t next_ordinal_ = 1;
};

}  // namespace afm
