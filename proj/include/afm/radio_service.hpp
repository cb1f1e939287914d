#pragma once

// The radio service: listener sessions, rating ingestion, preferences, admin
// prime submission with scheduling, the generation worker and stats. All
// mutations go through one event log writer; the HTTP layer in http_api.hpp
// only translates requests to these calls.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "afm/analytics.hpp"
#include "afm/catalog.hpp"
#include "afm/config.hpp"
#include "afm/domain.hpp"
#include "afm/errors.hpp"
#include "afm/event_log.hpp"
#include "afm/generation_queue.hpp"
#include "afm/generator.hpp"
#include "afm/radio_store.hpp"
#include "afm/random.hpp"
#include "afm/recommender.hpp"
#include "afm/scheduler.hpp"

namespace afm {

struct ApiResult {
  int status = 200;
  Json body;
};

inline ApiResult api_error(int status, std::string_view code, std::string_view message) {
  return {status, Json{{"error", code}, {"message", message}}};
}

// 128 random bits as 32 hex characters.
inline std::string new_session_token() {
  std::random_device rd;
  std::string out;
  for (int i = 0; i < 4; ++i) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", static_cast<unsigned>(rd()));
    out += buf;
  }
  return out;
}

inline bool is_session_token(std::string_view token) {
  return token.size() == 32 && std::all_of(token.begin(), token.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

inline std::string listener_id_for(std::string_view token) { return "listener-" + hex64(fnv1a64(token)); }

inline std::shared_ptr<const GeneratorBackend> make_generator(const ServiceConfig& cfg) {
  if (cfg.generator == "external")
    return std::make_shared<ExternalCommandGenerator>(cfg.generator_command, cfg.data_dir / "scratch");
  return std::make_shared<MockGenerator>();
}

class RadioService {
 public:
  using Clock = std::function<TimestampMs()>;

  // An empty data_dir keeps the event log in memory only.
  RadioService(ServiceConfig config, Catalog catalog, std::shared_ptr<const GeneratorBackend> backend = nullptr,
               Clock clock = now_utc_ms)
      : config_(std::move(config)),
        catalog_(std::move(catalog)),
        clock_(std::move(clock)),
        repo_(*this) {
    config_.validate();
    if (!config_.data_dir.empty()) log_ = EventLog::open(config_.data_dir / "events.jsonl", config_.log_fsync);
    store_ = RadioStore::replay(log_.records());
    if (!backend) backend = make_generator(config_);
    queue_ = std::make_unique<GenerationQueue>(repo_, catalog_, std::move(backend), config_.queue, clock_);
  }

  RadioService(const RadioService&) = delete;
  RadioService& operator=(const RadioService&) = delete;

  ~RadioService() { stop_worker(); }

  const ServiceConfig& config() const { return config_; }
  GenerationQueue& queue() { return *queue_; }
  const CatalogHandle& catalog() const { return catalog_; }

  // -------------------------------------------------------------------------
  // Listener endpoints

  ApiResult next_song(const std::optional<std::string>& token) {
    auto session = session_for(token);
    std::lock_guard session_lock(session->mutex);
    if (!admit(*session)) return api_error(429, "rate_limited", "too many requests for this session");

    std::shared_lock lock(store_mutex_);
    const auto& ids = store_.song_ids();
    if (ids.empty()) return api_error(409, "catalog_empty", "no songs have been generated yet");

    const PreferenceProfile prefs = store_.preference(session->state.listener_id);
    std::optional<double> q;
    const Song* current = nullptr;
    if (session->state.current_song_id) current = store_.find_song(*session->state.current_song_id);
    if (current) {
      q = quality_score(store_.find_rating(session->state.listener_id, current->song_id),
                        store_.question_means(current->song_id), prefs);
    }

    std::vector<std::string> pool = unplayed_song_ids(session->state, ids);
    if (pool.empty()) {
      for (const auto& id : ids)
        if (!current || id != current->song_id) pool.push_back(id);
    }
    if (pool.empty()) pool = ids;

    const Standardization& z = store_.song_standardization();
    std::vector<CandidateSong> candidates;
    candidates.reserve(pool.size());
    for (const auto& id : pool) candidates.push_back({id, z.apply(store_.find_song(id)->song_features)});
    std::optional<FeatureVector> current_features;
    if (current) current_features = z.apply(current->song_features);

    Rng rng = session_rng(session->state);
    const auto chosen = afm::next_song(current_features ? &*current_features : nullptr, candidates, q.value_or(0.0),
                                       config_.recommender, rng);
    std::array<RatingQuestion, kQuestionCount> order = kAllQuestions;
    shuffle(std::span<RatingQuestion>(order), rng);

    session->state.preference = prefs;
    session->state = advance_session(std::move(session->state), *chosen, ids);

    const Song& song = *store_.find_song(*chosen);
    Json questions = Json::array();
    Json question_order = Json::array();
    for (auto qn : order) {
      question_order.push_back(to_string(qn));
      questions.push_back({{"question", to_string(qn)}, {"prompt", kQuestionPrompts[index_of(qn)]}});
    }
    return {200, Json{{"session", session->token},
                      {"listener_id", session->state.listener_id},
                      {"song", song_json(song)},
                      {"audio_url", audio_url(song.song_id)},
                      {"question_order", question_order},
                      {"questions", questions},
                      {"quality_score", q ? Json(*q) : Json(nullptr)}}};
  }

  // Body: {"session", "song_id", "question", "stars"}.
  ApiResult rate(const Json& body) {
    if (!body.is_object()) return api_error(400, "bad_request", "expected a JSON object");
    const auto token = string_field(body, "session");
    if (!token) return api_error(400, "missing_session", "'session' is required");
    auto session = session_for(token);
    std::lock_guard session_lock(session->mutex);
    if (!admit(*session)) return api_error(429, "rate_limited", "too many requests for this session");

    const auto song_id = string_field(body, "song_id");
    const auto question_name = string_field(body, "question");
    if (!song_id || !question_name) return api_error(422, "invalid_rating", "'song_id' and 'question' are required");
    const auto question = parse_question(*question_name);
    if (!question) return api_error(422, "invalid_question", "unknown question '" + *question_name + "'");
    if (!body.contains("stars") || !body["stars"].is_number_integer() || !valid_stars(body["stars"].get<int>()))
      return api_error(422, "invalid_stars", "'stars' must be an integer from 1 to 5");
    const int stars = body["stars"].get<int>();

    std::unique_lock lock(store_mutex_);
    if (!store_.find_song(*song_id)) return api_error(404, "unknown_song", "no song '" + *song_id + "'");
    const std::string& listener = session->state.listener_id;
    if (const Rating* existing = store_.find_rating(listener, *song_id);
        existing && existing->answer(*question) == stars) {
      return {200, Json{{"status", "unchanged"}, {"session", session->token}}};
    }
    Rating partial;
    partial.listener_id = listener;
    partial.song_id = *song_id;
    partial.rating_id = rating_id_for(listener, *song_id);
    partial.set_answer(*question, stars);
    partial.submitted_at = clock_();
    const auto& rec = append_locked(EventKind::rating_submitted, partial);
    return {200, Json{{"status", "recorded"}, {"session", session->token}, {"sequence", rec.sequence_number}}};
  }

  ApiResult get_preferences(const std::optional<std::string>& token) {
    auto session = session_for(token);
    std::lock_guard session_lock(session->mutex);
    if (!admit(*session)) return api_error(429, "rate_limited", "too many requests for this session");
    std::shared_lock lock(store_mutex_);
    Json j = store_.preference(session->state.listener_id);
    j["session"] = session->token;
    return {200, j};
  }

  // Body: {"session", "weights": {aspect: value}}. Aspects left out take
  // their defaults.
  ApiResult put_preferences(const Json& body) {
    if (!body.is_object()) return api_error(400, "bad_request", "expected a JSON object");
    auto session = session_for(string_field(body, "session"));
    std::lock_guard session_lock(session->mutex);
    if (!admit(*session)) return api_error(429, "rate_limited", "too many requests for this session");
    PreferenceProfile p;
    p.listener_id = session->state.listener_id;
    try {
      if (!body.contains("weights")) throw ValidationError("'weights' is required");
      p.weights = parse_preference_weights(body["weights"], PreferenceProfile{}.weights);
      p.validate();
    } catch (const ValidationError& e) {
      return api_error(422, "invalid_preferences", e.what());
    }
    std::unique_lock lock(store_mutex_);
    if (store_.preference(p.listener_id) != p) append_locked(EventKind::preference_updated, p);
    session->state.preference = p;
    Json j = p;
    j["session"] = session->token;
    return {200, j};
  }

  // -------------------------------------------------------------------------
  // Admin

  // Body: {"prime_id"?, "contributor_name", "prime_artist_features": [9], "audio_ref"?}.
  ApiResult submit_prime(std::string_view admin_token, const Json& body) {
    if (config_.admin_token.empty() || admin_token != config_.admin_token)
      return api_error(401, "unauthorized", "admin token required");
    if (!body.is_object()) return api_error(422, "invalid_prime", "expected a JSON object");

    std::lock_guard schedule_lock(schedule_mutex_);
    Prime prime;
    try {
      if (!body.contains("prime_artist_features")) throw ValidationError("'prime_artist_features' is required");
      body["prime_artist_features"].get_to(prime.prime_artist_features);
      prime.contributor_name = body.value("contributor_name", std::string{});
      prime.audio_ref = body.value("audio_ref", std::string{});
      if (body.contains("prime_id") && !body["prime_id"].is_string())
        throw ValidationError("'prime_id' must be a string");
      prime.prime_id = body.value("prime_id", std::string{});
    } catch (const std::exception& e) {
      return api_error(422, "invalid_prime", e.what());
    }

    std::vector<Song> songs;
    std::map<std::string, std::vector<Rating>> ratings;
    std::size_t ordinal = 0;
    {
      std::unique_lock lock(store_mutex_);
      ordinal = store_.prime_count() + 1;
      if (prime.prime_id.empty()) {
        for (std::size_t k = ordinal;; ++k) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "prime-%06zu", k);
          prime.prime_id = buf;
          if (!store_.find_prime(prime.prime_id)) break;
        }
      } else if (store_.find_prime(prime.prime_id)) {
        return api_error(409, "duplicate_prime", "prime '" + prime.prime_id + "' already exists");
      }
      prime.submitted_at = clock_();
      append_locked(EventKind::prime_added, prime);
      songs = store_.songs();
      ratings = store_.ratings_by_song();
    }

    StoreCounts counts{0, songs.size()};
    for (const auto& [id, rs] : ratings) counts.ratings += rs.size();
    std::optional<RatingModel> model;
    try {
      model = train_if_ready(songs, ratings, config_.scheduler);
    } catch (const ValidationError&) {
      model.reset();  // fall back to cold start
    }
    Rng rng(config_.scheduler.rng_seed ? mix_seed(*config_.scheduler.rng_seed, ordinal) : std::random_device{}());
    const auto catalog = catalog_.snapshot();
    const PromptDecision decision =
        select_prompt(prime, *catalog, model ? &*model : nullptr, counts, config_.scheduler, rng);

    try {
      const GenerationJob job = queue_->enqueue(prime.prime_id, decision.artist_prompt, decision.genre_prompt);
      worker_cv_.notify_all();
      return {201, Json{{"prime_id", prime.prime_id}, {"job_id", job.job_id}, {"decision", decision}}};
    } catch (const BackPressureError& e) {
      return api_error(503, "queue_full", e.what());
    }
  }

  // -------------------------------------------------------------------------
  // Read-only endpoints

  ApiResult stats(std::string_view unit_name = "per_song_mean") const {
    AnalysisUnit unit;
    try {
      unit = parse_analysis_unit(unit_name);
    } catch (const ValidationError& e) {
      return api_error(422, "invalid_unit", e.what());
    }
    std::shared_lock lock(store_mutex_);
    const auto ratings = store_.ratings();
    lock.unlock();
    return {200, stats_to_json(compute_stats(ratings, unit))};
  }

  ApiResult get_song(std::string_view song_id) const {
    std::shared_lock lock(store_mutex_);
    const Song* s = store_.find_song(song_id);
    if (!s) return api_error(404, "unknown_song", "no song '" + std::string(song_id) + "'");
    return {200, song_json(*s)};
  }

  ApiResult get_job(std::string_view job_id) const {
    std::shared_lock lock(store_mutex_);
    const GenerationJob* j = store_.find_job(job_id);
    if (!j) return api_error(404, "unknown_job", "no job '" + std::string(job_id) + "'");
    return {200, Json(*j)};
  }

  // Placeholder WAV for a song, cached under data_dir/audio when persistent.
  std::optional<std::vector<std::uint8_t>> audio(std::string_view song_id) const {
    FeatureVector features;
    {
      std::shared_lock lock(store_mutex_);
      const Song* s = store_.find_song(song_id);
      if (!s) return std::nullopt;
      features = s->song_features;
    }
    const bool cacheable = !config_.data_dir.empty() && std::all_of(song_id.begin(), song_id.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    });
    const auto path = config_.data_dir / "audio" / (std::string(song_id) + ".wav");
    if (cacheable && std::filesystem::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
    }
    auto wav = render_placeholder_tone(features);
    if (cacheable) {
      std::filesystem::create_directories(path.parent_path());
      std::ofstream out(path, std::ios::binary);
      out.write(reinterpret_cast<const char*>(wav.data()), static_cast<std::streamsize>(wav.size()));
    }
    return wav;
  }

  // -------------------------------------------------------------------------
  // Worker

  std::optional<GenerationJob> run_worker_step() { return queue_->run_worker_step(); }

  void start_worker() {
    if (worker_.joinable()) return;
    stop_ = false;
    worker_ = std::thread([this] {
      while (!stop_) {
        if (queue_->run_worker_step()) continue;
        std::unique_lock lock(worker_mutex_);
        worker_cv_.wait_for(lock, config_.worker_tick, [this] { return stop_.load(); });
      }
    });
  }

  void stop_worker() {
    if (!worker_.joinable()) return;
    {
      std::lock_guard lock(worker_mutex_);
      stop_ = true;
    }
    worker_cv_.notify_all();
    worker_.join();
  }

  // -------------------------------------------------------------------------
  // Introspection

  Json snapshot() const {
    std::shared_lock lock(store_mutex_);
    return store_.snapshot();
  }

  std::vector<EventRecord> events() const {
    std::shared_lock lock(store_mutex_);
    return log_.records();
  }

  // Copy of the store, for tests and tools.
  RadioStore store() const {
    std::shared_lock lock(store_mutex_);
    return store_;
  }

  std::optional<SessionState> session_state(const std::string& token) const {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(token);
    if (it == sessions_.end()) return std::nullopt;
    std::lock_guard session_lock(it->second->mutex);
    return it->second->state;
  }

  static std::string audio_url(std::string_view song_id) { return "/audio/" + std::string(song_id) + ".wav"; }

 private:
  struct Session {
    std::string token;
    SessionState state;
    TimestampMs created_at = 0;
    std::deque<TimestampMs> recent_requests;
    std::mutex mutex;
  };

  class StoreJobRepository final : public JobRepository {
   public:
    explicit StoreJobRepository(RadioService& svc) : svc_(svc) {}

    std::optional<Prime> find_prime(std::string_view prime_id) const override {
      std::shared_lock lock(svc_.store_mutex_);
      const Prime* p = svc_.store_.find_prime(prime_id);
      if (!p) return std::nullopt;
      return *p;
    }

    void save_job(const GenerationJob& job) override {
      std::unique_lock lock(svc_.store_mutex_);
      const bool known = svc_.store_.find_job(job.job_id) != nullptr;
      svc_.append_locked(known ? EventKind::job_transition : EventKind::job_enqueued, job);
    }

    void save_song(const Song& song) override {
      std::unique_lock lock(svc_.store_mutex_);
      if (svc_.store_.find_song(song.song_id)) return;
      svc_.append_locked(EventKind::song_added, song);
    }

    bool has_song(std::string_view song_id) const override {
      std::shared_lock lock(svc_.store_mutex_);
      return svc_.store_.find_song(song_id) != nullptr;
    }

    std::vector<GenerationJob> load_jobs() const override {
      std::shared_lock lock(svc_.store_mutex_);
      return svc_.store_.jobs();
    }

   private:
    RadioService& svc_;
  };

  template <typename T>
  const EventRecord& append_locked(EventKind kind, const T& payload) {
    const EventRecord& rec = log_.append(kind, Json(payload), clock_());
    store_.apply(rec);
    return rec;
  }

  static std::optional<std::string> string_field(const Json& body, const char* key) {
    if (!body.contains(key) || !body[key].is_string()) return std::nullopt;
    return body[key].get<std::string>();
  }

  Json song_json(const Song& song) const {
    Json j = song;
    const auto catalog = catalog_.snapshot();
    if (const auto* a = catalog->find_artist(song.artist_prompt)) j["artist_name"] = a->display_name;
    if (const auto* g = catalog->find_genre(song.genre_prompt)) j["genre_name"] = g->display_name;
    j["audio_url"] = audio_url(song.song_id);
    return j;
  }

  // Known tokens return their session; unknown well-formed tokens are
  // re-adopted (a client returning after a restart keeps its listener id);
  // anything else gets a fresh token.
  std::shared_ptr<Session> session_for(const std::optional<std::string>& token) {
    std::lock_guard lock(sessions_mutex_);
    if (token) {
      auto it = sessions_.find(*token);
      if (it != sessions_.end()) return it->second;
    }
    auto s = std::make_shared<Session>();
    s->token = token && is_session_token(*token) ? *token : new_session_token();
    s->created_at = clock_();
    s->state.listener_id = listener_id_for(s->token);
    s->state.preference.listener_id = s->state.listener_id;
    s->state.rng_seed =
        config_.session_seed ? mix_seed(*config_.session_seed, fnv1a64(s->token)) : std::random_device{}() * 0x100000001ULL;
    sessions_.emplace(s->token, s);
    return s;
  }

  bool admit(Session& s) {
    if (config_.rate_limit_per_sec <= 0.0) return true;
    const TimestampMs now = clock_();
    while (!s.recent_requests.empty() && s.recent_requests.front() <= now - 1000) s.recent_requests.pop_front();
    if (static_cast<double>(s.recent_requests.size()) >= config_.rate_limit_per_sec) return false;
    s.recent_requests.push_back(now);
    return true;
  }

  ServiceConfig config_;
  CatalogHandle catalog_;
  Clock clock_;

  mutable std::shared_mutex store_mutex_;
  EventLog log_;
  RadioStore store_;

  StoreJobRepository repo_;
  std::unique_ptr<GenerationQueue> queue_;
  std::mutex schedule_mutex_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;

  std::thread worker_;
  std::mutex worker_mutex_;
  std::condition_variable worker_cv_;
  std::atomic<bool> stop_{false};
};

}  // namespace afm
