#include <gtest/gtest.h>

#include <set>
#include <sstream>
#include <vector>

#include "ace/io.hpp"
#include "ace/search.hpp"

using ace::Mask;
using ace::SearchHistory;
using ace::SearchOptions;

namespace {

ace::ReplayTable two_candidate_table() {
  return ace::ReplayTable({{Mask::parse("11"), 0.5}, {Mask::parse("10"), 0.9}, {Mask::parse("01"), 0.4}});
}

ace::SyntheticLandscape interaction_landscape() {
  return ace::SyntheticLandscape(
      {{0.05, -0.08, 0.02, -0.04, 0.06, -0.02}, {{0, 1, 0.2}, {2, 3, 0.15}, {4, 5, 0.1}}, 0.0, std::nullopt, 1});
}

SearchOptions opts(std::size_t steps, std::uint64_t seed) {
  SearchOptions o;
  o.max_steps = steps;
  o.seed = seed;
  return o;
}

std::string jsonl(const ace::RunLog& log) {
  std::ostringstream os;
  ace::write_run_jsonl(os, log);
  return os.str();
}

ace::CachedPredictions make_predictions(std::vector<std::vector<ace::Prediction>> dev, std::vector<int> dev_gold) {
  ace::CachedPredictions p;
  for (auto& d : dev) p.candidates.push_back({d, d});
  p.dev_gold = dev_gold;
  p.test_gold = std::move(dev_gold);
  return p;
}

}  // namespace

TEST(SearchHistory, KeepsHigherScoreAndFirstSeenOrder) {
  SearchHistory h;
  EXPECT_TRUE(h.record(Mask::parse("10"), 0.6, 1));
  EXPECT_TRUE(h.record(Mask::parse("01"), 0.7, 2));
  EXPECT_FALSE(h.record(Mask::parse("10"), 0.5, 3));
  EXPECT_EQ(*h.score_of(Mask::parse("10")), 0.6);
  EXPECT_FALSE(h.record(Mask::parse("10"), 0.8, 4));
  EXPECT_EQ(*h.score_of(Mask::parse("10")), 0.8);
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h.entries()[0].mask.str(), "10");
  EXPECT_EQ(h.entries()[0].first_timestep, 1u);
  EXPECT_EQ(h.best().mask.str(), "10");
  EXPECT_THROW(h.record(Mask::parse("101"), 0.1, 5), ace::Error);
}

TEST(SearchHistory, BestBreaksTiesTowardEarliest) {
  SearchHistory h;
  h.record(Mask::parse("01"), 0.7, 1);
  h.record(Mask::parse("10"), 0.7, 2);
  EXPECT_EQ(h.best().mask.str(), "01");
}

TEST(RunAce, TwoStepReplayCoversBothBranches) {
  // Step 2 is either 10 (0.9) or 01 (0.4); best is max(0.5, step-2 score).
  auto table = two_candidate_table();
  std::set<std::string> branches;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto r = ace::run_ace(table, opts(2, seed));
    ASSERT_EQ(r.log.steps.size(), 2u);
    EXPECT_EQ(r.log.steps[0].mask.str(), "11");
    const auto second = r.log.steps[1].mask.str();
    ASSERT_TRUE(second == "10" || second == "01");
    branches.insert(second);
    if (second == "10") {
      EXPECT_EQ(r.best_mask.str(), "10");
      EXPECT_EQ(r.best_score, 0.9);
    } else {
      EXPECT_EQ(r.best_mask.str(), "11");
      EXPECT_EQ(r.best_score, 0.5);
    }
  }
  EXPECT_EQ(branches.size(), 2u);
}

TEST(RunAce, LoopContract) {
  auto land = interaction_landscape();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::size_t calls = 0;
    auto o = opts(25, seed);
    o.on_step = [&](const ace::StepRecord&) { ++calls; };
    const auto r = ace::run_ace(land, o);
    ASSERT_EQ(r.log.steps.size(), 25u);
    EXPECT_EQ(calls, 25u);
    EXPECT_EQ(r.log.steps[0].mask, Mask::all_ones(6));
    double best = 0.0;
    for (std::size_t k = 0; k < r.log.steps.size(); ++k) {
      const auto& s = r.log.steps[k];
      EXPECT_EQ(s.t, k + 1);
      EXPECT_TRUE(s.mask.any());
      if (k > 0) {
        EXPECT_NE(s.mask, r.log.steps[k - 1].mask);
        EXPECT_EQ(s.theta_before, r.log.steps[k - 1].theta_after);
      }
      best = std::max(best, s.score);
      EXPECT_EQ(s.best, best);
    }
    EXPECT_EQ(r.best_score, best);
    EXPECT_EQ(*r.history.score_of(r.best_mask), best);
  }
}

TEST(RunAce, RepeatedMaskWithLowerScoreKeepsStoredScore) {
  // Noisy landscape: each visit to a mask draws fresh noise.
  ace::SyntheticLandscape land({{0.1, 0.1}, {}, 0.1, 0.4, 3});
  const auto r = ace::run_ace(land, opts(40, 5));
  std::map<Mask, double> best_seen;
  bool saw_lower_repeat = false;
  for (const auto& s : r.log.steps) {
    auto it = best_seen.find(s.mask);
    if (it != best_seen.end() && s.score < it->second) saw_lower_repeat = true;
    best_seen[s.mask] = std::max(best_seen[s.mask], s.score);
  }
  EXPECT_TRUE(saw_lower_repeat);
  for (const auto& [mask, score] : best_seen) EXPECT_EQ(*r.history.score_of(mask), score);
}

TEST(RunAce, DeterministicLogBytes) {
  auto land = interaction_landscape();
  EXPECT_EQ(jsonl(ace::run_ace(land, opts(30, 9)).log), jsonl(ace::run_ace(land, opts(30, 9)).log));
  EXPECT_NE(jsonl(ace::run_ace(land, opts(30, 9)).log), jsonl(ace::run_ace(land, opts(30, 10)).log));
}

TEST(RunAce, RejectsBadConfig) {
  auto land = interaction_landscape();
  EXPECT_THROW(ace::run_ace(land, opts(1, 0)), ace::Error);
  auto o = opts(5, 0);
  o.controller.gamma = 1.5;
  EXPECT_THROW(ace::run_ace(land, o), ace::Error);
}

TEST(RunAce, UnknownReplayMaskPropagates) {
  ace::ReplayTable table({{Mask::parse("111"), 0.5}});
  try {
    ace::run_ace(table, opts(5, 1));
    FAIL();
  } catch (const ace::Error& e) {
    EXPECT_EQ(e.code(), ace::ErrorCode::UnknownMask);
  }
}

TEST(RunRandom, ThetaNeverMoves) {
  auto land = interaction_landscape();
  const auto r = ace::run_random(land, opts(30, 4));
  for (const auto& s : r.log.steps) {
    for (double p : s.probs) EXPECT_EQ(p, 0.5);
    EXPECT_EQ(s.theta_before, s.theta_after);
  }
  EXPECT_EQ(r.log.steps.size(), 30u);
  EXPECT_EQ(jsonl(r.log), jsonl(ace::run_random(land, opts(30, 4)).log));
}

TEST(RunRandom, ReplaysSeededRngStream) {
  // Oracle: two fair coin draws per attempt from the controller sub-stream,
  // rejecting the empty mask and the previous mask.
  auto table = two_candidate_table();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = ace::run_random(table, opts(3, seed));
    ace::Rng rng(ace::derive_seed(seed, "controller"));
    std::vector<std::string> expected{"11"};
    while (expected.size() < 3) {
      std::string m;
      for (int l = 0; l < 2; ++l) m += rng.uniform() < 0.5 ? '1' : '0';
      if (m != "00" && m != expected.back()) expected.push_back(m);
    }
    std::vector<std::string> got;
    for (const auto& s : r.log.steps) got.push_back(s.mask.str());
    EXPECT_EQ(got, expected) << "seed " << seed;
  }
}

TEST(RunRandom, WorkerCountDoesNotChangeLog) {
  auto land = interaction_landscape();
  auto serial = opts(30, 2);
  auto parallel = opts(30, 2);
  parallel.workers = 4;
  EXPECT_EQ(jsonl(ace::run_random(land, serial).log), jsonl(ace::run_random(land, parallel).log));
}

TEST(BudgetParity, AceAndRandomMakeExactlyTCalls) {
  struct Counting : ace::Evaluator {
    ace::SyntheticLandscape inner = interaction_landscape();
    std::size_t calls = 0;
    std::size_t num_candidates() const override { return inner.num_candidates(); }
    std::string id() const override { return "counting"; }
    bool concurrency_safe() const override { return false; }
    ace::EvaluationResult do_evaluate(const Mask& m, std::uint64_t seed) override {
      ++calls;
      return inner.evaluate(m, seed);
    }
  };
  Counting a, b;
  ace::run_ace(a, opts(17, 3));
  ace::run_random(b, opts(17, 3));
  EXPECT_EQ(a.calls, 17u);
  EXPECT_EQ(b.calls, 17u);
}

TEST(RunExhaustive, SingleCandidate) {
  ace::ReplayTable table({{Mask::parse("1"), 0.3}});
  const auto r = ace::run_exhaustive(table);
  ASSERT_EQ(r.table.size(), 1u);
  EXPECT_EQ(r.best_mask.str(), "1");
}

TEST(RunExhaustive, FindsAnalyticOptimumAndUpperBoundsSearch) {
  auto land = interaction_landscape();
  const auto r = ace::run_exhaustive(land);
  EXPECT_EQ(r.table.size(), 63u);
  Mask best;
  double best_score = -1;
  for (auto m : ace::enumerate_nonzero(6)) {
    if (land.noiseless_score(m) > best_score) best_score = land.noiseless_score(m), best = m;
  }
  EXPECT_EQ(r.best_mask, best);
  EXPECT_EQ(r.best_score, best_score);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    EXPECT_LE(ace::run_ace(land, opts(20, seed)).best_score, r.best_score);
    EXPECT_LE(ace::run_random(land, opts(20, seed)).best_score, r.best_score);
  }
  auto par = opts(2, 0);
  par.workers = 3;
  EXPECT_EQ(jsonl(ace::run_exhaustive(land, par).search.log), jsonl(r.search.log));
}

TEST(RunExhaustive, Guard) {
  ace::SyntheticLandscape big({std::vector<double>(25, 0.01), {}, 0.0, std::nullopt, 0});
  try {
    ace::run_exhaustive(big);
    FAIL();
  } catch (const ace::Error& e) {
    EXPECT_EQ(e.code(), ace::ErrorCode::LTooLarge);
  }
}

TEST(RunAll, EvaluatesFullConcatenationOnce) {
  auto land = interaction_landscape();
  const auto r = ace::run_all(land, opts(30, 1));
  ASSERT_EQ(r.log.steps.size(), 1u);
  EXPECT_EQ(r.best_mask, Mask::all_ones(6));
}

TEST(Ensemble, SingleModelSubsetMatchesModelAccuracy) {
  auto p = make_predictions({{{0, 0.9}, {1, 0.8}, {1, 0.6}}, {{1, 0.7}, {1, 0.9}, {0, 0.6}}}, {0, 1, 0});
  EXPECT_NEAR(ace::ensemble_accuracy(p, Mask::parse("10"), ace::SelectOn::Dev), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(ace::ensemble_accuracy(p, Mask::parse("01"), ace::SelectOn::Dev), 2.0 / 3.0, 1e-15);
}

TEST(Ensemble, MajorityBeatsConfidence) {
  auto p = make_predictions({{{0, 0.6}}, {{0, 0.6}}, {{1, 0.99}}}, {0});
  EXPECT_EQ(ace::vote(p, Mask::parse("111"), ace::SelectOn::Dev, 0), 0);
}

TEST(Ensemble, TieBrokenBySummedConfidence) {
  auto p = make_predictions({{{0, 0.9}}, {{1, 0.6}}}, {0});
  EXPECT_EQ(ace::vote(p, Mask::parse("11"), ace::SelectOn::Dev, 0), 0);
  auto q = make_predictions({{{0, 0.5}}, {{1, 0.4}}, {{1, 0.4}}, {{0, 0.2}}}, {1});
  EXPECT_EQ(ace::vote(q, Mask::parse("1111"), ace::SelectOn::Dev, 0), 1);
}

TEST(Ensemble, SearchSelectsOnRequestedSplit) {
  ace::CachedPredictions p;
  p.dev_gold = {0, 0};
  p.test_gold = {1, 1};
  p.candidates.push_back({{{0, 0.9}, {0, 0.9}}, {{0, 0.9}, {0, 0.9}}});
  p.candidates.push_back({{{1, 0.9}, {1, 0.9}}, {{1, 0.9}, {1, 0.9}}});
  const auto dev = ace::run_ensemble_search(p, ace::SelectOn::Dev);
  const auto test = ace::run_ensemble_search(p, ace::SelectOn::Test);
  EXPECT_EQ(dev.best_subset.str(), "10");
  EXPECT_EQ(test.best_subset.str(), "01");
  EXPECT_EQ(dev.table.size(), 3u);
  EXPECT_GE(test.test_score, dev.test_score);

  ace::CachedPredictions missing = p;
  missing.candidates[1].test.pop_back();
  EXPECT_THROW(ace::run_ensemble_search(missing, ace::SelectOn::Dev), ace::Error);
}

TEST(Curve, RunningMaximum) {
  ace::RunLog log;
  for (double s : {0.5, 0.4, 0.6}) {
    ace::StepRecord r;
    r.t = log.steps.size() + 1;
    r.score = s;
    log.steps.push_back(r);
  }
  const auto c = ace::best_so_far_curve(log);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0].best, 0.5);
  EXPECT_EQ(c[1].best, 0.5);
  EXPECT_EQ(c[2].best, 0.6);
  EXPECT_EQ(c[1].step_score, 0.4);
  EXPECT_THROW(ace::best_so_far_curve(ace::RunLog{}), ace::Error);
}

TEST(Curve, FlatForConstantScoresAndLengthT) {
  ace::SyntheticLandscape flat({{0.0, 0.0, 0.0}, {}, 0.0, 0.3, 0});
  const auto c = ace::best_so_far_curve(ace::run_ace(flat, opts(12, 1)).log);
  EXPECT_EQ(c.size(), 12u);
  for (const auto& p : c) EXPECT_EQ(p.best, 0.3);
}

TEST(Ablation, OneRowPerVariantAndSingleFlipEquivalence) {
  // With L = 2 and T = 2 every history distance is 1, so discounted and
  // undiscounted runs coincide.
  ace::SyntheticLandscape land({{0.1, -0.05}, {}, 0.0, 0.5, 0});
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  const auto rows = ace::run_reward_ablation(
      land, 2, seeds, {ace::RewardVariant::Discounted, ace::RewardVariant::Undiscounted, ace::RewardVariant::Simple});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].finals, rows[1].finals);
  EXPECT_EQ(rows[0].n, 4u);
  for (auto seed : seeds) {
    auto d = opts(2, seed);
    auto u = opts(2, seed);
    u.reward = ace::RewardVariant::Undiscounted;
    EXPECT_EQ(jsonl(ace::run_ace(land, d).log), jsonl(ace::run_ace(land, u).log));
  }
  std::ostringstream csv;
  ace::write_ablation_csv(csv, rows);
  EXPECT_EQ(csv.str().substr(0, 17), "variant,mean,sd,n");
  EXPECT_THROW(ace::run_reward_ablation(land, 2, {1}, {ace::RewardVariant::Simple}), ace::Error);
}

TEST(RunLogIo, JsonlRoundTripAndFieldOrder) {
  auto land = interaction_landscape();
  const auto r = ace::run_ace(land, opts(6, 3));
  const auto text = jsonl(r.log);
  EXPECT_EQ(text.rfind("{\"t\":1,\"theta_before\":", 0), 0u);
  std::istringstream in(text);
  const auto back = ace::read_run_jsonl(in);
  ASSERT_EQ(back.steps.size(), r.log.steps.size());
  for (std::size_t k = 0; k < back.steps.size(); ++k) {
    EXPECT_EQ(back.steps[k].theta_after, r.log.steps[k].theta_after);
    EXPECT_EQ(back.steps[k].reward, r.log.steps[k].reward);
    EXPECT_EQ(back.steps[k].mask, r.log.steps[k].mask);
  }
  std::istringstream err(text + "{\"error\":\"boom\"}\n");
  EXPECT_THROW(ace::read_run_jsonl(err), ace::Error);
}
