#include <doctest.h>

#include <map>

#include "sepoa/core.hpp"
#include "sepoa/errors.hpp"
#include "sepoa/reward.hpp"
#include "test_util.hpp"

using namespace sepoa;
using sepoa::testing::flat;
using sepoa::testing::ramp;

TEST_CASE("segment return sums ground truth rewards") {
  Segment s;
  s.transitions = ramp(5, [](int t) { return 0.5 * t; });
  CHECK(s.return_gt() == doctest::Approx(5.0));
}

TEST_CASE("preference validity") {
  CHECK(Preference::prefer_first().valid());
  CHECK(Preference::prefer_second().valid());
  CHECK_FALSE((Preference{1, 1}).valid());
  CHECK_FALSE((Preference{0, 0}).valid());
}

TEST_CASE("buffer indexes trajectories and fills bookkeeping") {
  ReplayBuffer buf(1000);
  int a = buf.add_trajectory({{1.0}}, ramp(10, [](int) { return 1.0; }));
  int b = buf.add_trajectory({{2.0}}, flat(5));
  CHECK(a != b);
  CHECK(buf.size() == 15);
  const auto* rec = buf.find(a);
  REQUIRE(rec != nullptr);
  CHECK(rec->closed);
  CHECK(rec->length == 10);
  CHECK(rec->return_gt == doctest::Approx(10.0));
  auto traj = buf.trajectory(b);
  CHECK(traj.transitions.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(traj.transitions[i].step == i);
    CHECK(traj.transitions[i].traj_id == b);
    CHECK(traj.transitions[i].skill.values == std::vector<double>{2.0});
  }
  CHECK(buf.find(99) == nullptr);
}

TEST_CASE("trajectory return equals the sum of its rewards") {
  ReplayBuffer buf(1000);
  int id = buf.add_trajectory({}, ramp(37, [](int t) { return std::sin(t); }));
  auto traj = buf.trajectory(id);
  double total = 0.0;
  for (const auto& t : traj.transitions) total += t.r_gt;
  CHECK(std::abs(traj.return_gt - total) < 1e-9);
}

TEST_CASE("open trajectories are not eligible") {
  ReplayBuffer buf(1000);
  buf.begin_trajectory({});
  for (auto& t : flat(60)) buf.append(t);
  CHECK(buf.eligible(50).empty());
  Rng rng(1);
  CHECK_THROWS_AS(sample_segment(buf, 50, rng), NoEligibleTrajectory);
  buf.end_trajectory();
  CHECK(buf.eligible(50).size() == 1);
}

TEST_CASE("sample_segment on a single exact-length trajectory") {
  ReplayBuffer buf(1000);
  buf.add_trajectory({}, flat(50));
  Rng rng(3);
  auto s = sample_segment(buf, 50, rng);
  CHECK(s.start == 0);
  CHECK(s.length() == 50);
}

TEST_CASE("sample_segment offsets are uniform") {
  ReplayBuffer buf(1000);
  buf.add_trajectory({}, flat(52));
  Rng rng(7);
  std::map<int, int> counts;
  const int n = 30000;
  for (int i = 0; i < n; ++i) ++counts[sample_segment(buf, 50, rng).start];
  REQUIRE(counts.size() == 3);
  for (auto [start, c] : counts) {
    CHECK(start >= 0);
    CHECK(start <= 2);
    CHECK(std::abs(c / double(n) - 1.0 / 3.0) < 0.015);
  }
}

TEST_CASE("sample_segment on an empty buffer throws") {
  ReplayBuffer buf(10);
  Rng rng(1);
  CHECK_THROWS_AS(sample_segment(buf, 5, rng), NoEligibleTrajectory);
}

TEST_CASE("segments are contiguous windows of one trajectory") {
  ReplayBuffer buf(500);
  Rng rng(11);
  for (int k = 0; k < 12; ++k) buf.add_trajectory({}, ramp(60 + k, [](int t) { return t; }));
  for (int i = 0; i < 500; ++i) {
    auto s = sample_segment(buf, 50, rng);
    REQUIRE(s.length() == 50);
    for (std::size_t j = 0; j < s.length(); ++j) {
      CHECK(s.transitions[j].traj_id == s.traj_id);
      CHECK(s.transitions[j].step == s.start + static_cast<int>(j));
    }
  }
}

TEST_CASE("eviction drops whole oldest trajectories") {
  ReplayBuffer buf(100);
  int first = buf.add_trajectory({}, flat(40));
  buf.add_trajectory({}, flat(40));
  buf.add_trajectory({}, flat(40));
  CHECK(buf.size() <= 100);
  CHECK(buf.find(first) == nullptr);
  for (const auto& rec : buf.trajectories()) {
    auto t = buf.trajectory(rec.traj_id);
    CHECK(t.transitions.front().step == 0);
    CHECK(t.transitions.size() == 40);
  }
  ReplayBuffer tiny(10);
  CHECK_THROWS(tiny.add_trajectory({}, flat(11)));
}

TEST_CASE("segments stay contiguous across evictions and relabels") {
  ReplayBuffer buf(300);
  Rng rng(5);
  for (int k = 0; k < 30; ++k) {
    buf.add_trajectory({}, ramp(55 + (k % 7), [](int t) { return t; }));
    relabel(buf, [k](std::span<const double> s, int) { return s[0] + k; });
    auto s = sample_segment(buf, 50, rng);
    for (std::size_t j = 1; j < s.length(); ++j) CHECK(s.transitions[j].step == s.transitions[j - 1].step + 1);
  }
}

TEST_CASE("queries come from distinct trajectories") {
  ReplayBuffer buf(5000);
  Rng rng(9);
  buf.add_trajectory({}, flat(80));
  CHECK_THROWS_AS(sample_query(buf, 50, 60, rng), NoEligibleTrajectory);
  for (int k = 0; k < 4; ++k) buf.add_trajectory({{double(k)}}, ramp(80, [k](int) { return k; }));
  for (int i = 0; i < 200; ++i) {
    auto q = sample_query(buf, 50, 60, rng);
    CHECK(q.seg0.traj_id != q.seg1.traj_id);
    CHECK(q.seg0.length() == 50);
    REQUIRE(q.wide0.has_value());
    CHECK(q.wide0->length() == 60);
    CHECK(q.seg0.start == q.wide0->start + 5);
    CHECK(q.seg1.start == q.wide1->start + 5);
    CHECK(q.traj0_return_gt == doctest::Approx(buf.find(q.seg0.traj_id)->return_gt));
  }
  auto q = sample_query(buf, 50, 50, rng);
  CHECK_FALSE(q.wide0.has_value());
}

TEST_CASE("relabel writes the ensemble-mean reward") {
  EnvSpec spec{"toy", 4, 9, 200, 0.1, {1, 1, 1, 1}};
  RewardEnsemble ens(spec, {2, 8, 1e-3}, 1);
  sepoa::testing::make_constant(ens.member(0), 0.2);
  sepoa::testing::make_constant(ens.member(1), 0.4);
  ReplayBuffer buf(1000);
  CHECK(relabel(buf, ens) == 0);
  buf.add_trajectory({}, ramp(30, [](int t) { return t; }));
  CHECK(relabel(buf, ens) == 30);
  for (std::size_t i = 0; i < buf.size(); ++i) CHECK(buf.at(i).r_hat == doctest::Approx(0.3).epsilon(1e-12));

  RewardEnsemble same(spec, {3, 8, 1e-3}, 2);
  for (std::size_t m = 0; m < 3; ++m) sepoa::testing::make_constant(same.member(m), 0.3);
  relabel(buf, same);
  for (std::size_t i = 0; i < buf.size(); ++i) CHECK(buf.at(i).r_hat == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("relabel is idempotent and preserves order") {
  EnvSpec spec{"toy", 4, 9, 200, 0.1, {10, 10, 10, 10}};
  RewardEnsemble ens(spec, {3, 16, 1e-3}, 4);
  ReplayBuffer buf(1000);
  buf.add_trajectory({}, ramp(40, [](int t) { return t; }));
  relabel(buf, ens);
  std::vector<double> first;
  for (std::size_t i = 0; i < buf.size(); ++i) first.push_back(buf.at(i).r_hat);
  relabel(buf, ens);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    CHECK(buf.at(i).r_hat == first[i]);
    CHECK(buf.at(i).step == static_cast<int>(i));
  }
}
