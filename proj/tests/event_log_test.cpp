#include <gtest/gtest.h>

#include "afm/event_log.hpp"
#include "afm/radio_store.hpp"
#include "service_support.hpp"
#include "test_support.hpp"

using namespace afm;

namespace {

Rating partial(std::string listener, std::string song, RatingQuestion q, int stars, TimestampMs ts) {
  Rating r;
  r.listener_id = std::move(listener);
  r.song_id = std::move(song);
  r.rating_id = rating_id_for(r.listener_id, r.song_id);
  r.set_answer(q, stars);
  r.submitted_at = ts;
  return r;
}

}  // namespace

TEST(EventLog, SequenceNumbersAreContiguous) {
  test::TempDir dir;
  const auto path = dir.path() / "events.jsonl";
  {
    auto log = EventLog::open(path, false);
    for (int i = 0; i < 10; ++i) log.append(EventKind::rating_submitted, partial("l", "s", RatingQuestion::like, 1 + i % 5, i), i);
    EXPECT_EQ(log.last_sequence(), 10u);
  }
  auto log = EventLog::open(path, false);
  ASSERT_EQ(log.records().size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(log.records()[i].sequence_number, i + 1);
  EXPECT_EQ(log.append(EventKind::preference_updated, PreferenceProfile{"l"}, 99).sequence_number, 11u);
}

TEST(EventLog, RecordLayout) {
  EventLog log;
  const auto& rec = log.append(EventKind::prime_added, Json{{"x", 1}}, 42);
  const Json j = rec;
  EXPECT_EQ(j.dump(), R"({"kind":"prime_added","payload":{"x":1},"seq":1,"ts":42})");
}

TEST(EventLog, TornFinalLineIsDroppedAndTruncated) {
  test::TempDir dir;
  const auto path = dir.path() / "events.jsonl";
  {
    auto log = EventLog::open(path, true);
    log.append(EventKind::prime_added, Json{{"a", 1}}, 1);
    log.append(EventKind::prime_added, Json{{"a", 2}}, 2);
  }
  const auto intact = test::slurp(path);
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << R"({"seq":3,"ts":3,"kind":"prime_ad)";
  }
  auto log = EventLog::open(path, false);
  EXPECT_EQ(log.records().size(), 2u);
  EXPECT_EQ(test::slurp(path), intact);
  log.append(EventKind::prime_added, Json{{"a", 3}}, 3);
  EXPECT_EQ(read_event_log_file(path).size(), 3u);
}

TEST(EventLog, CorruptInteriorLineIsAnError) {
  EXPECT_THROW(parse_event_log("garbage\n{}\n"), PersistenceError);
  EXPECT_THROW(parse_event_log(R"({"seq":2,"ts":0,"kind":"prime_added","payload":{}})"
                               "\n"),
               PersistenceError);
  EXPECT_THROW(parse_event_log(R"({"seq":1,"ts":0,"kind":"bogus","payload":{}})"
                               "\n"),
               PersistenceError);
}

TEST(EventLog, EmptyAndBlankInput) {
  EXPECT_TRUE(parse_event_log("").records.empty());
  EXPECT_TRUE(parse_event_log("\n\n").records.empty());
}

TEST(RadioStore, PartialRatingsMerge) {
  EventLog log;
  log.append(EventKind::rating_submitted, partial("l1", "s1", RatingQuestion::like, 4, 10), 10);
  log.append(EventKind::rating_submitted, partial("l1", "s1", RatingQuestion::happy, 2, 11), 11);
  log.append(EventKind::rating_submitted, partial("l1", "s1", RatingQuestion::like, 5, 12), 12);
  const auto store = RadioStore::replay(log.records());
  ASSERT_EQ(store.rating_count(), 1u);
  const Rating* r = store.find_rating("l1", "s1");
  ASSERT_NE(r, nullptr);
  EXPECT_EQ(r->answer(RatingQuestion::like), 5);
  EXPECT_EQ(r->answer(RatingQuestion::happy), 2);
  EXPECT_FALSE(r->answer(RatingQuestion::danceable));
  EXPECT_EQ(r->submitted_at, 12);
  EXPECT_EQ(store.answer_count(), 2u);
}

TEST(RadioStore, RejectsIllegalHistories) {
  GenerationJob job;
  job.job_id = "job-000001";
  job.prime_id = "p";
  job.artist_prompt = "a";
  job.genre_prompt = "g";
  job.state = JobState::queued;
  EventLog log;
  log.append(EventKind::job_enqueued, job, 1);
  RadioStore s;
  s.apply(log.records()[0]);
  EXPECT_THROW(s.apply(log.records()[0]), PersistenceError);

  job.state = JobState::complete;
  job.result_song_id = "song-000001";
  job.finished_at = 3;
  log.append(EventKind::job_transition, job, 2);
  EXPECT_THROW(s.apply(log.records()[1]), PersistenceError);  // queued -> complete skips running
}

TEST(RadioStore, QuestionMeansAreCentered) {
  EventLog log;
  log.append(EventKind::rating_submitted, partial("l1", "s", RatingQuestion::like, 5, 1), 1);
  log.append(EventKind::rating_submitted, partial("l2", "s", RatingQuestion::like, 2, 1), 1);
  log.append(EventKind::rating_submitted, partial("l3", "t", RatingQuestion::like, 1, 1), 1);
  const auto means = RadioStore::replay(log.records()).question_means("s");
  EXPECT_DOUBLE_EQ(*means[index_of(RatingQuestion::like)], 0.5);
  EXPECT_FALSE(means[index_of(RatingQuestion::happy)]);
}

TEST(RadioStore, ReplayOfServiceLogEqualsLiveSnapshot) {
  test::TempDir dir;
  auto svc = test::make_service(test::service_config(dir.path()));
  Rng rng(8);
  test::run_api_sequence(*svc, rng, 300);
  const auto live = svc->snapshot().dump();
  EXPECT_EQ(RadioStore::replay(svc->events()).snapshot().dump(), live);
  EXPECT_EQ(RadioStore::replay(read_event_log_file(dir.path() / "events.jsonl")).snapshot().dump(), live);
}
