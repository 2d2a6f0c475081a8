#include <gtest/gtest.h>

#include <sstream>

#include "mccsim/sim_core.hpp"

using namespace mccsim;

namespace {

struct Recorder : Actor {
  std::vector<std::pair<SimTime, std::uint64_t>> seen;
  Engine* engine = nullptr;
  void on_event(const SimEvent& ev) override {
    seen.emplace_back(ev.at, std::get<HostScriptStep>(ev.payload).token);
    EXPECT_EQ(engine->now(), ev.at);
  }
};

struct Chain : Actor {
  Engine* engine = nullptr;
  ActorId self = kNoActor;
  int left = 0;
  void on_event(const SimEvent&) override {
    if (left-- > 0) engine->schedule_in(10, self, HostScriptStep{});
  }
};

}  // namespace

TEST(Engine, OrdersByTimeThenInsertion) {
  Engine e;
  Recorder r;
  r.engine = &e;
  const ActorId a = e.add_actor(r, "rec");
  e.schedule(20, a, HostScriptStep{1});
  e.schedule(10, a, HostScriptStep{2});
  e.schedule(20, a, HostScriptStep{3});
  e.schedule(10, a, HostScriptStep{4});
  EXPECT_EQ(e.run_until(kForever), RunOutcome::Quiescent);
  const std::vector<std::pair<SimTime, std::uint64_t>> want{{10, 2}, {10, 4}, {20, 1}, {20, 3}};
  EXPECT_EQ(r.seen, want);
  EXPECT_EQ(e.processed(), 4u);
}

TEST(Engine, CancelledEventsNeverFire) {
  Engine e;
  Recorder r;
  r.engine = &e;
  const ActorId a = e.add_actor(r, "rec");
  const EventHandle h = e.schedule(5, a, HostScriptStep{1});
  e.schedule(6, a, HostScriptStep{2});
  EXPECT_TRUE(e.cancel(h));
  EXPECT_FALSE(e.cancel(h));
  EXPECT_EQ(e.pending(), 1u);
  e.run_until(kForever);
  ASSERT_EQ(r.seen.size(), 1u);
  EXPECT_EQ(r.seen[0].second, 2u);
  EXPECT_FALSE(e.cancel(h));
}

TEST(Engine, LimitStopsBeforeLaterEvents) {
  Engine e;
  Chain c;
  c.engine = &e;
  c.self = e.add_actor(c, "chain");
  c.left = 100;
  e.schedule(0, c.self, HostScriptStep{});
  EXPECT_EQ(e.run_until(55), RunOutcome::LimitReached);
  EXPECT_EQ(e.now(), 55u);
  EXPECT_EQ(e.processed(), 6u);
  EXPECT_EQ(e.run_until(kForever), RunOutcome::Quiescent);
  EXPECT_EQ(e.now(), 1000u);
}

TEST(Engine, WatchdogFiresAfterEarliestBlock) {
  Engine e(1, 500);
  Recorder r;
  r.engine = &e;
  const ActorId a = e.add_actor(r, "rec");
  e.schedule(100, a, HostScriptStep{1});
  e.add_blocked_probe([](std::vector<BlockedMcc>& out) {
    out.push_back({7, 40});
    out.push_back({9, 80});
  });
  EXPECT_EQ(e.run_until(kForever), RunOutcome::Deadlock);
  EXPECT_EQ(e.now(), 540u);
  EXPECT_EQ(e.deadlock_suspects(), (std::vector<MccId>{7, 9}));
}

TEST(Engine, WatchdogNeverRewindsTime) {
  Engine e(1, 10);
  Recorder r;
  r.engine = &e;
  const ActorId a = e.add_actor(r, "rec");
  e.schedule(1000, a, HostScriptStep{1});
  e.add_blocked_probe([](std::vector<BlockedMcc>& out) { out.push_back({1, 0}); });
  EXPECT_EQ(e.run_until(kForever), RunOutcome::Deadlock);
  EXPECT_EQ(e.now(), 1000u);
}

TEST(Engine, DeadlineBeyondLimitIsLimitReached) {
  Engine e(1, 1000);
  e.add_blocked_probe([](std::vector<BlockedMcc>& out) { out.push_back({1, 0}); });
  EXPECT_EQ(e.run_until(200), RunOutcome::LimitReached);
  EXPECT_EQ(e.now(), 200u);
  EXPECT_TRUE(e.deadlock_suspects().empty());
}

TEST(Engine, TraceHashIsReproducibleAndSensitive) {
  auto run = [](SimTime second) {
    Engine e;
    Recorder r;
    r.engine = &e;
    const ActorId a = e.add_actor(r, "rec");
    e.schedule(3, a, HostScriptStep{1});
    e.schedule(second, a, HostScriptStep{2});
    std::ostringstream trace;
    e.set_trace(&trace);
    e.run_until(kForever);
    return std::make_pair(e.trace_hash(), trace.str());
  };
  EXPECT_EQ(run(9), run(9));
  EXPECT_NE(run(9).first, run(10).first);
  const std::string text = run(9).second;
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

TEST(SimConfig, ValidateRejectsNonsense) {
  SimConfig c;
  EXPECT_NO_THROW(c.validate());
  c.watchdog_ns = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.far_bandwidth_bytes_per_us = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.dispatch_step_budget = 0;
  EXPECT_THROW(c.validate(), Error);
}
