#include <doctest.h>

#include <atomic>
#include <thread>

#include "sepoa/errors.hpp"
#include "sepoa/orchestrator.hpp"

using namespace sepoa;
using namespace std::chrono_literals;

namespace {

RunConfig small_config() {
  RunConfig c;
  c.skill_dim = 4;
  c.pretrain_steps = 1000;
  c.online_steps = 2000;
  c.feedback_frequency = 500;
  c.metrics_every = 500;
  c.queries_per_session = 4;
  c.total_feedback = 10;
  c.reward_epochs = 3;
  c.warmup = 200;
  c.particles = 256;
  c.estimator_steps = 20;
  c.task_samples = 10;
  c.buffer_capacity = 100000;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(RunConfig{}.validate());
  CHECK_NOTHROW(small_config().validate());
  auto bad = [](auto edit) {
    RunConfig c = small_config();
    edit(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad([](RunConfig& c) { c.env = "cheetah"; });
  bad([](RunConfig& c) { c.selection = "random"; });
  bad([](RunConfig& c) { c.teacher = "crowd"; });
  bad([](RunConfig& c) { c.skill_method = "cic"; });
  bad([](RunConfig& c) { c.epsilon = 1.0; });
  bad([](RunConfig& c) { c.queries_per_session = 0; });
  bad([](RunConfig& c) { c.total_feedback = 3; });
  bad([](RunConfig& c) { c.metrics_every = 700; });
  bad([](RunConfig& c) { c.crop_max = 70; });
  bad([](RunConfig& c) { c.ensemble_size = 1; });
  bad([](RunConfig& c) { c.gamma = 1.0; });

  CHECK(small_config().skill_space().kind == SkillSpace::Kind::ContinuousSphere);
  RunConfig d = small_config();
  d.skill_method = "diayn";
  CHECK(d.skill_space().is_discrete());
  CHECK(d.pretrain_config().steps == d.pretrain_steps);
}

TEST_CASE("no feedback budget means no stored triples") {
  RunConfig c = small_config();
  c.total_feedback = 0;
  auto m = run(c);
  CHECK(m.triples_stored == 0);
  CHECK(m.queries_issued == 0);
  CHECK(m.sessions == 0);
  REQUIRE(m.rows.size() == 4);
  for (const auto& r : m.rows) CHECK(r.feedback_used == 0);
  CHECK_FALSE(m.pretrain_intrinsic_returns.empty());
}

TEST_CASE("feedback budget is respected") {
  RunConfig c = small_config();
  c.teacher = "oracle";
  auto m = run(c);
  CHECK(m.triples_stored == 10);
  CHECK(m.sessions == 3);
  CHECK(m.queries_issued == 10);
  CHECK(m.labels_matching_oracle == 10);
  int prev = 0;
  for (const auto& r : m.rows) {
    CHECK(r.feedback_used >= prev);
    CHECK(r.feedback_used <= c.total_feedback);
    prev = r.feedback_used;
  }
  CHECK(m.rows.back().feedback_used == 10);
  CHECK(m.rows.back().step == c.online_steps);
  CHECK(m.distinguishable_ratio() == doctest::Approx(1.0));
}

TEST_CASE("runs are reproducible") {
  RunConfig c = small_config();
  auto a = run(c);
  auto b = run(c);
  CHECK(a.rows == b.rows);
  CHECK(a.episode_returns_gt == b.episode_returns_gt);
  c.seed = 4;
  auto other = run(c);
  CHECK(other.episode_returns_gt != a.episode_returns_gt);
}

TEST_CASE("scratch runs skip pretraining") {
  RunConfig c = small_config();
  c.pretrain_steps = 0;
  auto m = run(c);
  CHECK(m.pretrain_intrinsic_returns.empty());
  CHECK(m.rows.size() == 4);
  CHECK(m.triples_stored <= c.total_feedback);
}

TEST_CASE("ablation grid") {
  RunConfig c = small_config();
  auto cells = ablate(c, {});
  REQUIRE(cells.size() == 4);
  int scratch = 0;
  for (const auto& cell : cells) {
    CHECK(cell.metrics.rows.size() == 4);
    const bool pre = cell.name.find("pretrain") != std::string::npos;
    CHECK(pre == (cell.config.pretrain_steps > 0));
    CHECK(pre != cell.metrics.pretrain_intrinsic_returns.empty());
    scratch += !pre;
    const bool skill = cell.name.find("skill") != std::string::npos;
    CHECK(cell.config.selection == (skill ? "skill" : "disagreement"));
    CHECK(cell.config.seed == c.seed);
  }
  CHECK(scratch == 2);
  CHECK(cells[0].metrics.pretrain_intrinsic_returns == cells[1].metrics.pretrain_intrinsic_returns);

  AblationToggles all;
  all.vary_surf = true;
  c.online_steps = 1000;
  CHECK(ablate(c, all).size() == 8);
}

TEST_CASE("human teacher needs an open mailbox") {
  RunConfig c = small_config();
  c.teacher = "human";
  CHECK_THROWS_AS(run(c), ServiceUnavailable);
  LabelMailbox closed;
  CHECK_THROWS_AS(run(c, nullptr, &closed), ServiceUnavailable);
}

TEST_CASE("human teacher labels flow through the mailbox once") {
  RunConfig c = small_config();
  c.teacher = "human";
  c.human_timeout_ms = 5000;
  LabelMailbox box;
  box.open();
  std::atomic<bool> done = false;
  std::atomic<int> posted = 0;
  std::thread labeler([&] {
    while (!done) {
      if (auto p = box.oldest_pending()) {
        if (box.post(p->query_id, posted % 3 == 0 ? Choice::Skip : Choice::Left) == PostResult::Accepted) ++posted;
      } else {
        std::this_thread::sleep_for(1ms);
      }
    }
  });
  auto m = run(c, nullptr, &box);
  done = true;
  labeler.join();
  CHECK(m.triples_stored == box.status().feedback_used);
  CHECK(m.triples_stored <= c.total_feedback);
  CHECK(m.triples_stored > 0);
  CHECK(box.collect().empty());
}
