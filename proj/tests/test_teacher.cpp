#include <doctest.h>

#include <thread>

#include "sepoa/errors.hpp"
#include "sepoa/teacher.hpp"
#include "test_util.hpp"

using namespace sepoa;
using namespace sepoa::testing;
using namespace std::chrono_literals;

namespace {

Query query_with(double sum0, double sum1, double traj0 = 0.0, double traj1 = 0.0) {
  Query q;
  q.seg0 = segment_of(ramp(5, [&](int t) { return t == 0 ? sum0 : 0.0; }), 0);
  q.seg1 = segment_of(ramp(5, [&](int t) { return t == 0 ? sum1 : 0.0; }), 1);
  q.traj0_return_gt = traj0;
  q.traj1_return_gt = traj1;
  return q;
}

}  // namespace

TEST_CASE("oracle prefers the larger segment sum") {
  Rng rng(1);
  auto out = oracle_label(query_with(5.0, 3.0), rng);
  CHECK(out.y == Preference::prefer_first());
  CHECK_FALSE(out.was_random);
  CHECK(oracle_label(query_with(1.0, 3.0), rng).y == Preference::prefer_second());

  int first = 0;
  for (int i = 0; i < 2000; ++i) {
    auto tie = oracle_label(query_with(2.0, 2.0), rng);
    CHECK(tie.was_random);
    first += tie.y == Preference::prefer_first();
  }
  CHECK(std::abs(first / 2000.0 - 0.5) < 0.05);

  for (double scale : {0.01, 3.0, 1e4}) {
    CHECK(oracle_label(query_with(5.0 * scale, 3.0 * scale), rng).y == Preference::prefer_first());
    CHECK(oracle_label(query_with(-5.0 * scale, 3.0 * scale), rng).y == Preference::prefer_second());
  }
}

TEST_CASE("recent average window") {
  std::vector<double> r = {100.0, 1.0, 2.0, 3.0};
  CHECK(recent_average(r, 3) == doctest::Approx(2.0));
  CHECK(recent_average(r, 10) == doctest::Approx(26.5));
  CHECK_THROWS(recent_average(std::vector<double>{}, 10));
}

TEST_CASE("noisy teacher threshold arithmetic") {
  NoisyTeacherConfig cfg{0.1, 10};
  std::vector<double> recent = {10.0};
  auto close = query_with(4.0, 1.0, 10.0, 10.5);
  CHECK_FALSE(is_distinguishable(close, recent, cfg));
  Rng rng(2);
  CHECK(noisy_label(close, recent, cfg, rng).was_random);

  NoisyTeacherConfig wide{0.3, 10};
  auto far = query_with(1.0, 4.0, 10.0, 20.0);
  CHECK(is_distinguishable(far, recent, wide));
  auto out = noisy_label(far, recent, wide, rng);
  CHECK_FALSE(out.was_random);
  CHECK(out.y == Preference::prefer_second());

  NoisyTeacherConfig edge{0.5, 10};
  CHECK(is_distinguishable(query_with(0.0, 1.0, 10.0, 15.0), recent, edge));

  NoisyTeacherConfig zero{0.0, 10};
  CHECK(is_distinguishable(query_with(0.0, 1.0, 3.0, 3.0), recent, zero));
}

TEST_CASE("noisy teacher with zero error rate matches the oracle") {
  NoisyTeacherConfig zero{0.0, 10};
  std::vector<double> recent = {5.0, 6.0};
  Rng pick(3), a(11), b(11);
  for (int i = 0; i < 500; ++i) {
    double s0 = static_cast<double>(uniform_index(pick, 4));
    double s1 = static_cast<double>(uniform_index(pick, 4));
    auto q = query_with(s0, s1, uniform01(pick), uniform01(pick));
    auto n = noisy_label(q, recent, zero, a);
    auto o = oracle_label(q, b);
    CHECK(n.y == o.y);
    CHECK(n.was_random == o.was_random);
  }
}

TEST_CASE("noisy teacher is a fair coin below the threshold") {
  NoisyTeacherConfig cfg{0.3, 10};
  std::vector<double> recent = {100.0};
  Rng pick(4), rng(5);
  int first = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    double base = 50.0 + 10.0 * uniform01(pick);
    auto q = query_with(9.0, 1.0, base, base + 29.0 * uniform01(pick));
    auto out = noisy_label(q, recent, cfg, rng);
    CHECK(out.was_random == !is_distinguishable(q, recent, cfg));
    first += out.y == Preference::prefer_first();
  }
  CHECK(std::abs(first / double(n) - 0.5) <= 0.02);
}

TEST_CASE("choice parsing") {
  CHECK(parse_choice("left") == Choice::Left);
  CHECK(parse_choice("right") == Choice::Right);
  CHECK(parse_choice("skip") == Choice::Skip);
  CHECK_FALSE(parse_choice("LEFT").has_value());
}

TEST_CASE("mailbox delivers a label exactly once") {
  LabelMailbox box;
  CHECK_THROWS_AS(box.enqueue(query_with(1, 2), "point_runner"), ServiceUnavailable);
  box.open();
  auto id = box.enqueue(query_with(1, 2), "point_runner");
  auto pending = box.oldest_pending();
  REQUIRE(pending);
  CHECK(pending->query_id == id);
  CHECK(pending->left_positions.size() == 5);
  CHECK(pending->step_count == 5);
  CHECK(box.queue_depth() == 1);

  CHECK(box.await(id, 0ms).resolution == LabelMailbox::Resolution::Pending);
  CHECK(box.post(id, Choice::Left) == PostResult::Accepted);
  CHECK(box.post(id, Choice::Right) == PostResult::Conflict);
  CHECK(box.post("nope", Choice::Left) == PostResult::NotFound);
  CHECK(box.status().feedback_used == 1);
  CHECK(box.queue_depth() == 0);

  auto d = box.await(id, 0ms);
  CHECK(d.resolution == LabelMailbox::Resolution::Labeled);
  CHECK(d.y == Preference::prefer_first());
  CHECK(box.await(id, 0ms).resolution == LabelMailbox::Resolution::Pending);
  CHECK(box.collect().empty());

  auto id2 = box.enqueue(query_with(1, 2), "point_runner");
  box.post(id2, Choice::Right);
  auto got = box.collect();
  REQUIRE(got.size() == 1);
  CHECK(got[0].y == Preference::prefer_second());
  CHECK(box.collect().empty());
}

TEST_CASE("skipped queries are re-queued twice then dropped") {
  LabelMailbox box;
  box.open();
  auto a = box.enqueue(query_with(1, 2), "point_runner");
  auto b = box.enqueue(query_with(1, 2), "point_runner");
  CHECK(box.post(a, Choice::Skip) == PostResult::Accepted);
  CHECK(box.oldest_pending()->query_id == b);
  CHECK(box.post(a, Choice::Skip) == PostResult::Accepted);
  CHECK(box.queue_depth() == 2);
  CHECK(box.post(a, Choice::Skip) == PostResult::Accepted);
  CHECK(box.queue_depth() == 1);
  CHECK(box.await(a, 0ms).resolution == LabelMailbox::Resolution::Dropped);
  CHECK(box.post(a, Choice::Left) == PostResult::Conflict);
  CHECK(box.status().feedback_used == 0);
  CHECK(box.collect().empty());
}

TEST_CASE("remote human label") {
  LabelMailbox box;
  CHECK_THROWS_AS(remote_human_label(box, query_with(1, 2), "point_runner", 10ms), ServiceUnavailable);
  box.open();

  auto timed_out = remote_human_label(box, query_with(1, 2), "point_runner", 10ms);
  CHECK(timed_out.resolution == LabelMailbox::Resolution::Pending);
  CHECK_FALSE(timed_out.outcome);
  CHECK(box.post(timed_out.query_id, Choice::Skip) == PostResult::Accepted);
  CHECK(box.post(timed_out.query_id, Choice::Skip) == PostResult::Accepted);
  CHECK(box.post(timed_out.query_id, Choice::Skip) == PostResult::Accepted);

  std::thread labeler([&] {
    while (true) {
      auto p = box.oldest_pending();
      if (p) {
        box.post(p->query_id, Choice::Left);
        return;
      }
      std::this_thread::sleep_for(1ms);
    }
  });
  auto res = remote_human_label(box, query_with(1, 2), "point_runner", 5000ms);
  labeler.join();
  CHECK(res.resolution == LabelMailbox::Resolution::Labeled);
  REQUIRE(res.outcome);
  CHECK(res.outcome->y == Preference::prefer_first());
}

TEST_CASE("progress is reported in status") {
  LabelMailbox box;
  box.set_progress(600, 1234, 42.5);
  auto s = box.status();
  CHECK(s.n_total == 600);
  CHECK(s.step == 1234);
  CHECK(s.latest_return == 42.5);
}
