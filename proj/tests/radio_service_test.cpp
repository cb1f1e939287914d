#include <gtest/gtest.h>

#include <thread>

#include "service_support.hpp"

using namespace afm;
using test::kAdminToken;
using test::token;

namespace {

Json rate_body(const std::string& tok, const std::string& song, std::string_view q, Json stars) {
  return Json{{"session", tok}, {"song_id", song}, {"question", q}, {"stars", std::move(stars)}};
}

}  // namespace

TEST(RadioService, NextOnEmptyStoreIsConflict) {
  auto svc = test::make_service(test::service_config());
  const auto r = svc->next_song(std::nullopt);
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(r.body["error"], "catalog_empty");
}

TEST(RadioService, NextServesSongWithShuffledQuestions) {
  auto svc = test::make_service(test::service_config());
  test::seed_songs(*svc, 3);
  const auto r = svc->next_song(std::nullopt);
  ASSERT_EQ(r.status, 200);
  EXPECT_TRUE(is_session_token(r.body["session"].get<std::string>()));
  EXPECT_EQ(r.body["questions"].size(), kQuestionCount);
  std::vector<std::string> order = r.body["question_order"];
  std::sort(order.begin(), order.end());
  std::vector<std::string> names(kQuestionNames.begin(), kQuestionNames.end());
  std::sort(names.begin(), names.end());
  EXPECT_EQ(order, names);
  const std::string song = r.body["song"]["song_id"];
  EXPECT_EQ(r.body["audio_url"], "/audio/" + song + ".wav");
  EXPECT_TRUE(r.body["quality_score"].is_null());
  EXPECT_TRUE(r.body["song"].contains("artist_name"));
}

TEST(RadioService, SessionWalksThroughUnplayedSongs) {
  auto svc = test::make_service(test::service_config());
  test::seed_songs(*svc, 5);
  std::set<std::string> seen;
  for (int i = 0; i < 5; ++i) {
    const auto r = svc->next_song(token(1));
    ASSERT_EQ(r.status, 200);
    seen.insert(r.body["song"]["song_id"].get<std::string>());
  }
  EXPECT_EQ(seen.size(), 5u);
  const auto state = svc->session_state(token(1));
  ASSERT_TRUE(state);
  EXPECT_TRUE(state->current_song_id);
  EXPECT_TRUE(state->has_played(*state->current_song_id));
}

TEST(RadioService, SingleSongStoreRepeats) {
  auto svc = test::make_service(test::service_config());
  test::seed_songs(*svc, 1);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(svc->next_song(token(2)).status, 200);
}

TEST(RadioService, QualityScoreReflectsRating) {
  auto svc = test::make_service(test::service_config());
  test::seed_songs(*svc, 4);
  const auto first = svc->next_song(token(3));
  const std::string song = first.body["song"]["song_id"];
  ASSERT_EQ(svc->rate(rate_body(token(3), song, "happy", 5)).status, 200);
  const auto put = svc->put_preferences(Json{{"session", token(3)}, {"weights", {{"difference", 0}, {"happy", 1}}}});
  ASSERT_EQ(put.status, 200);
  const auto second = svc->next_song(token(3));
  ASSERT_EQ(second.status, 200);
  EXPECT_DOUBLE_EQ(second.body["quality_score"].get<double>(), 2.0);  // centered 5 stars
}

TEST(RadioService, RateValidation) {
  auto svc = test::make_service(test::service_config());
  test::seed_songs(*svc, 1);
  const std::string song = svc->store().song_ids()[0];
  const auto tok = token(4);
  EXPECT_EQ(svc->rate(rate_body(tok, song, "mood", 3)).status, 422);
  EXPECT_EQ(svc->rate(rate_body(tok, song, "like", 0)).status, 422);
  EXPECT_EQ(svc->rate(rate_body(tok, song, "like", 6)).status, 422);
  EXPECT_EQ(svc->rate(rate_body(tok, song, "like", 2.5)).status, 422);
  EXPECT_EQ(svc->rate(rate_body(tok, song, "like", "3")).status, 422);
  EXPECT_EQ(svc->rate(rate_body(tok, "song-x", "like", 3)).status, 404);
  EXPECT_EQ(svc->rate(Json{{"song_id", song}, {"question", "like"}, {"stars", 3}}).status, 400);
  EXPECT_EQ(svc->rate(Json::array()).status, 400);
  EXPECT_EQ(svc->store().rating_count(), 0u);
}

TEST(RadioService, RatingUpsertAndIdempotence) {
  auto svc = test::make_service(test::service_config());
  test::seed_songs(*svc, 1);
  const std::string song = svc->store().song_ids()[0];
  const auto tok = token(5);
  auto r = svc->rate(rate_body(tok, song, "like", 4));
  EXPECT_EQ(r.body["status"], "recorded");
  const auto events = svc->events().size();
  r = svc->rate(rate_body(tok, song, "like", 4));
  EXPECT_EQ(r.body["status"], "unchanged");
  EXPECT_EQ(svc->events().size(), events);
  svc->rate(rate_body(tok, song, "like", 2));
  svc->rate(rate_body(tok, song, "upbeat", 5));
  const auto store = svc->store();
  EXPECT_EQ(store.rating_count(), 1u);
  const Rating* rt = store.find_rating(listener_id_for(tok), song);
  ASSERT_NE(rt, nullptr);
  EXPECT_EQ(rt->answer(RatingQuestion::like), 2);
  EXPECT_EQ(rt->answer(RatingQuestion::upbeat), 5);
  EXPECT_EQ(rt->rating_id, rating_id_for(listener_id_for(tok), song));
}

TEST(RadioService, PreferencesDefaultsAndRoundTrip) {
  auto svc = test::make_service(test::service_config());
  auto r = svc->get_preferences(token(6));
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["weights"]["difference"], 2.0);
  EXPECT_EQ(r.body["weights"]["happy"], 0.0);

  r = svc->put_preferences(Json{{"session", token(6)}, {"weights", {{"happy", -1.5}, {"upbeat", 2}}}});
  ASSERT_EQ(r.status, 200);
  r = svc->get_preferences(token(6));
  EXPECT_EQ(r.body["weights"]["happy"], -1.5);
  EXPECT_EQ(r.body["weights"]["upbeat"], 2.0);
  EXPECT_EQ(r.body["weights"]["difference"], 2.0);

  EXPECT_EQ(svc->put_preferences(Json{{"session", token(6)}, {"weights", {{"happy", 2.01}}}}).status, 422);
  EXPECT_EQ(svc->put_preferences(Json{{"session", token(6)}, {"weights", {{"tempo", 1}}}}).status, 422);
  EXPECT_EQ(svc->put_preferences(Json{{"session", token(6)}}).status, 422);
  EXPECT_EQ(svc->get_preferences(token(6)).body["weights"]["happy"], -1.5);
}

TEST(RadioService, AdminRequiresToken) {
  auto svc = test::make_service(test::service_config());
  Rng rng(1);
  EXPECT_EQ(svc->submit_prime("", test::prime_body(test::random_features(rng))).status, 401);
  EXPECT_EQ(svc->submit_prime("nope", test::prime_body(test::random_features(rng))).status, 401);
  auto cfg = test::service_config();
  cfg.admin_token.clear();
  auto closed = test::make_service(cfg);
  EXPECT_EQ(closed->submit_prime("", test::prime_body(test::random_features(rng))).status, 401);
}

TEST(RadioService, PrimeValidationAndDuplicates) {
  auto svc = test::make_service(test::service_config());
  Rng rng(2);
  EXPECT_EQ(svc->submit_prime(kAdminToken, Json{{"contributor_name", "x"}}).status, 422);
  EXPECT_EQ(svc->submit_prime(kAdminToken, Json{{"prime_artist_features", {1, 2, 3}}}).status, 422);
  EXPECT_EQ(svc->submit_prime(kAdminToken, Json{{"prime_id", 7}, {"prime_artist_features", test::random_features(rng)}}).status, 422);
  const auto ok = svc->submit_prime(kAdminToken, test::prime_body(test::random_features(rng), "mine"));
  ASSERT_EQ(ok.status, 201);
  EXPECT_EQ(ok.body["prime_id"], "mine");
  EXPECT_EQ(ok.body["decision"]["mode_used"], "cold_start");
  EXPECT_EQ(svc->submit_prime(kAdminToken, test::prime_body(test::random_features(rng), "mine")).status, 409);
  const auto auto_id = svc->submit_prime(kAdminToken, test::prime_body(test::random_features(rng)));
  EXPECT_EQ(auto_id.body["prime_id"], "prime-000002");
}

TEST(RadioService, QueueFullIsServiceUnavailable) {
  auto cfg = test::service_config();
  cfg.queue.capacity = 2;
  auto svc = test::make_service(cfg);
  Rng rng(3);
  EXPECT_EQ(svc->submit_prime(kAdminToken, test::prime_body(test::random_features(rng))).status, 201);
  EXPECT_EQ(svc->submit_prime(kAdminToken, test::prime_body(test::random_features(rng))).status, 201);
  const auto r = svc->submit_prime(kAdminToken, test::prime_body(test::random_features(rng)));
  EXPECT_EQ(r.status, 503);
  EXPECT_EQ(r.body["error"], "queue_full");
  svc->run_worker_step();
  EXPECT_EQ(svc->submit_prime(kAdminToken, test::prime_body(test::random_features(rng))).status, 201);
}

TEST(RadioService, JobAndSongLookup) {
  auto svc = test::make_service(test::service_config());
  Rng rng(4);
  const auto r = svc->submit_prime(kAdminToken, test::prime_body(test::random_features(rng)));
  const std::string job = r.body["job_id"];
  EXPECT_EQ(svc->get_job(job).body["state"], "queued");
  svc->run_worker_step();
  const auto j = svc->get_job(job);
  EXPECT_EQ(j.body["state"], "complete");
  const std::string song = j.body["result_song_id"];
  EXPECT_EQ(svc->get_song(song).status, 200);
  EXPECT_EQ(svc->get_song("nope").status, 404);
  EXPECT_EQ(svc->get_job("nope").status, 404);
}

TEST(RadioService, AudioIsValidWav) {
  test::TempDir dir;
  auto svc = test::make_service(test::service_config(dir.path()));
  test::seed_songs(*svc, 1);
  const std::string song = svc->store().song_ids()[0];
  const auto wav = svc->audio(song);
  ASSERT_TRUE(wav);
  ASSERT_GT(wav->size(), 44u);
  EXPECT_EQ(std::string(wav->begin(), wav->begin() + 4), "RIFF");
  EXPECT_EQ(std::string(wav->begin() + 8, wav->begin() + 12), "WAVE");
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "audio" / (song + ".wav")));
  EXPECT_EQ(*svc->audio(song), *wav);
  EXPECT_FALSE(svc->audio("nope"));
}

TEST(RadioService, StatsEndpoint) {
  auto svc = test::make_service(test::service_config());
  auto r = svc->stats();
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["rating_count"], 0);
  EXPECT_EQ(svc->stats("per_listener").status, 422);

  test::seed_songs(*svc, 1);
  const std::string song = svc->store().song_ids()[0];
  svc->rate(rate_body(token(7), song, "like", 4));
  r = svc->stats("per_rating");
  EXPECT_EQ(r.body["unit"], "per_rating");
  EXPECT_EQ(r.body["rating_count"], 1);
  EXPECT_EQ(r.body["summaries"][index_of(RatingQuestion::like)]["mean"], 4.0);
  EXPECT_TRUE(r.body["summaries"][index_of(RatingQuestion::like)]["stddev"].is_null());
}

TEST(RadioService, RateLimitPerSession) {
  auto cfg = test::service_config();
  cfg.rate_limit_per_sec = 10;
  auto svc = test::make_service(cfg);
  int limited = 0;
  for (int i = 0; i < 11; ++i) limited += svc->get_preferences(token(8)).status == 429;
  EXPECT_EQ(limited, 1);
  EXPECT_EQ(svc->get_preferences(token(9)).status, 200);
}

TEST(RadioService, MalformedTokenGetsFreshSession) {
  auto svc = test::make_service(test::service_config());
  const auto r = svc->get_preferences(std::string("not-a-token"));
  EXPECT_NE(r.body["session"], "not-a-token");
  EXPECT_TRUE(is_session_token(r.body["session"].get<std::string>()));
}

TEST(RadioService, ConcurrentRatingsAllLand) {
  auto svc = test::make_service(test::service_config());
  test::seed_songs(*svc, 3);
  const auto songs = svc->store().song_ids();
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (std::size_t i = 0; i < songs.size(); ++i)
        for (auto q : kAllQuestions) svc->rate(rate_body(token(100 + t), songs[i], to_string(q), 1 + (t + i) % 5));
    });
  for (auto& th : threads) th.join();
  const auto store = svc->store();
  EXPECT_EQ(store.rating_count(), 8 * songs.size());
  EXPECT_EQ(store.answer_count(), 8 * songs.size() * kQuestionCount);
  const auto events = svc->events();
  for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i].sequence_number, i + 1);
}

TEST(RadioService, BackgroundWorkerDrainsQueue) {
  auto cfg = test::service_config();
  cfg.worker_tick = std::chrono::milliseconds(5);
  auto svc = test::make_service(cfg);
  svc->start_worker();
  Rng rng(5);
  for (int i = 0; i < 5; ++i) svc->submit_prime(kAdminToken, test::prime_body(test::random_features(rng)));
  for (int spin = 0; spin < 400 && svc->store().song_count() < 5; ++spin)
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  svc->stop_worker();
  EXPECT_EQ(svc->store().song_count(), 5u);
}

TEST(RadioService, FittedDecisionsOnceEnoughData) {
  auto cfg = test::service_config();
  cfg.scheduler.min_ratings_for_fit = 10;
  cfg.scheduler.min_songs_for_fit = 5;
  auto svc = test::make_service(cfg);
  test::seed_songs(*svc, 6);
  const auto songs = svc->store().song_ids();
  for (std::size_t i = 0; i < songs.size(); ++i)
    for (std::size_t l = 0; l < 2; ++l) svc->rate(rate_body(token(200 + l), songs[i], "like", 1 + (i + l) % 5));
  Rng rng(6);
  const auto r = svc->submit_prime(kAdminToken, test::prime_body(test::random_features(rng)));
  ASSERT_EQ(r.status, 201);
  EXPECT_EQ(r.body["decision"]["mode_used"], "fitted");
}

TEST(RadioService, RestartReplaysIdenticalState) {
  test::TempDir dir;
  const auto cfg = test::service_config(dir.path());
  std::string before;
  {
    auto svc = test::make_service(cfg);
    Rng rng(9);
    test::run_api_sequence(*svc, rng, 400);
    before = svc->snapshot().dump();
  }
  auto again = test::make_service(cfg);
  EXPECT_EQ(again->snapshot().dump(), before);
}

TEST(RadioService, ShadowModelAgreesWithStore) {
  auto svc = test::make_service(test::service_config());
  Rng rng(10);
  const auto out = test::run_api_sequence(*svc, rng, 600);
  const auto store = svc->store();
  EXPECT_EQ(store.rating_count(), out.shadow_ratings.size());
  for (const auto& [key, answers] : out.shadow_ratings) {
    const Rating* r = store.find_rating(key.first, key.second);
    ASSERT_NE(r, nullptr);
    EXPECT_EQ(r->answers, answers);
  }
  for (const auto& [listener, w] : out.shadow_preferences) EXPECT_EQ(store.preference(listener).weights, w);
}

TEST(RadioService, RestartResumesInterruptedJob) {
  test::TempDir dir;
  const auto cfg = test::service_config(dir.path());
  {
    auto svc = test::make_service(cfg);
    Rng rng(11);
    svc->submit_prime(kAdminToken, test::prime_body(test::random_features(rng)));
    svc->queue().set_fault_injector([](WorkerPhase phase, const GenerationJob&) {
      if (phase == WorkerPhase::marked_running) throw SimulatedCrash("crash");
    });
    EXPECT_THROW(svc->run_worker_step(), SimulatedCrash);
    EXPECT_EQ(svc->store().jobs()[0].state, JobState::running);
  }
  auto svc = test::make_service(cfg);
  ASSERT_TRUE(svc->run_worker_step());
  const auto store = svc->store();
  EXPECT_EQ(store.jobs()[0].state, JobState::complete);
  EXPECT_EQ(store.song_count(), 1u);
}

TEST(RadioService, SessionReadoptedAfterRestart) {
  test::TempDir dir;
  const auto cfg = test::service_config(dir.path());
  std::string song;
  {
    auto svc = test::make_service(cfg);
    test::seed_songs(*svc, 2);
    song = svc->store().song_ids()[0];
    svc->rate(rate_body(token(12), song, "like", 5));
  }
  auto svc = test::make_service(cfg);
  const auto r = svc->next_song(token(12));
  EXPECT_EQ(r.body["session"], token(12));
  EXPECT_EQ(r.body["listener_id"], listener_id_for(token(12)));
  EXPECT_EQ(svc->store().find_rating(listener_id_for(token(12)), song)->answer(RatingQuestion::like), 5);
}
