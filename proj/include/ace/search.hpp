#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "ace/controller.hpp"
#include "ace/error.hpp"
#include "ace/evaluators.hpp"
#include "ace/history.hpp"
#include "ace/mask.hpp"
#include "ace/rng.hpp"

namespace ace {

/// One search step as written to run.jsonl.
struct StepRecord {
  std::size_t t = 0;
  std::vector<double> theta_before;
  std::vector<double> probs;
  Mask mask;
  double score = 0.0;
  std::vector<double> reward;
  std::vector<double> theta_after;
  double best = 0.0;
};

struct RunHeader {
  std::string method;
  std::string evaluator;
  std::uint64_t seed = 0;
  std::string config_digest;
};

struct RunLog {
  RunHeader header;
  std::vector<StepRecord> steps;
};

struct SearchOptions {
  std::size_t max_steps = 30;  // T
  std::uint64_t seed = 0;
  ControllerConfig controller;
  RewardVariant reward = RewardVariant::Discounted;
  unsigned workers = 1;  // parallel evaluation for random / exhaustive
  std::function<void(const StepRecord&)> on_step;
};

struct SearchResult {
  Mask best_mask;
  double best_score = 0.0;
  std::optional<double> best_test_score;
  SearchHistory history;
  RunLog log;
};

namespace detail {

inline std::uint64_t step_seed(std::uint64_t seed, std::size_t t) { return derive_seed(seed, "evaluator", t); }

inline void check_loop_preconditions(const Evaluator& evaluator, const SearchOptions& options) {
  if (options.max_steps < 2) throw Error(ErrorCode::ConfigInvalid, "T must be at least 2");
  if (evaluator.num_candidates() < 2) throw Error(ErrorCode::ConfigInvalid, "search needs L >= 2");
  validate(options.controller);
}

/// Evaluates `masks[k]` with `seeds[k]`, fanning out across threads only if
/// the evaluator allows it. Results come back in input order.
inline std::vector<EvaluationResult> evaluate_all(Evaluator& evaluator, const std::vector<Mask>& masks,
                                                  const std::vector<std::uint64_t>& seeds, unsigned workers) {
  std::vector<EvaluationResult> out(masks.size());
  if (workers <= 1 || !evaluator.concurrency_safe() || masks.size() < 2) {
    for (std::size_t k = 0; k < masks.size(); ++k) out[k] = evaluator.evaluate(masks[k], seeds[k]);
    return out;
  }
  const std::size_t n = std::min<std::size_t>(workers, masks.size());
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (std::size_t w = 0; w < n; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = w; k < masks.size(); k += n) out[k] = evaluator.evaluate(masks[k], seeds[k]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

/// Shared bookkeeping for the sequential searchers.
class LoopState {
 public:
  LoopState(std::string method, const Evaluator& evaluator, const SearchOptions& options) : options_(options) {
    result_.log.header = {std::move(method), evaluator.id(), options.seed, {}};
  }

  void commit(StepRecord rec, const EvaluationResult& eval) {
    const bool improves = !result_.history.contains(rec.mask) || eval.dev_score > *result_.history.score_of(rec.mask);
    result_.history.record(rec.mask, eval.dev_score, rec.t);
    if (improves) test_scores_[rec.mask] = eval.test_score;
    best_ = std::max(best_, eval.dev_score);
    rec.best = best_;
    if (options_.on_step) options_.on_step(rec);
    result_.log.steps.push_back(std::move(rec));
  }

  const SearchHistory& history() const noexcept { return result_.history; }

  SearchResult finish() && {
    const auto& best = result_.history.best();
    result_.best_mask = best.mask;
    result_.best_score = best.score;
    result_.best_test_score = test_scores_[best.mask];
    return std::move(result_);
  }

 private:
  const SearchOptions& options_;
  SearchResult result_;
  std::unordered_map<Mask, std::optional<double>> test_scores_;
  double best_ = -1.0;
};

}  // namespace detail

/// The controller search loop. Step 1 evaluates the full concatenation;
/// every later step samples a mask (never all-zero, never the previous
/// mask), evaluates it, computes the per-candidate reward against every
/// distinct mask seen so far, takes one SGD step on theta, and stores the
/// mask in the history keeping the higher score on repeats.
inline SearchResult run_ace(Evaluator& evaluator, const SearchOptions& options) {
  detail::check_loop_preconditions(evaluator, options);
  const std::size_t n = evaluator.num_candidates();
  ControllerState state(n, options.controller);
  Rng rng(derive_seed(options.seed, "controller"));
  detail::LoopState loop("ace", evaluator, options);

  Mask previous;
  for (std::size_t t = 1; t <= options.max_steps; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.theta_before = state.theta();
    rec.probs = state.probabilities();
    rec.mask = (t == 1) ? Mask::all_ones(n) : sample(state, rng, std::span<const Mask>(&previous, 1));
    const auto eval = evaluator.evaluate(rec.mask, detail::step_seed(options.seed, t));
    rec.score = eval.dev_score;
    if (t == 1) {
      rec.reward.assign(n, 0.0);
    } else {
      // Reward uses this step's score; the history keeps the maximum.
      const auto reward = compute_reward(options.reward, loop.history(), rec.mask, rec.score, state);
      state = update(std::move(state), rec.mask, reward);
      rec.reward = reward.values;
    }
    state.record_score(rec.score);
    rec.theta_after = state.theta();
    previous = rec.mask;
    loop.commit(std::move(rec), eval);
  }
  return std::move(loop).finish();
}

/// Same loop with theta frozen at zero: masks are uniform over the non-zero
/// masks other than the previous one, and no updates happen.
inline SearchResult run_random(Evaluator& evaluator, const SearchOptions& options) {
  detail::check_loop_preconditions(evaluator, options);
  const std::size_t n = evaluator.num_candidates();
  const ControllerState state(n, options.controller);
  Rng rng(derive_seed(options.seed, "controller"));

  std::vector<Mask> masks;
  std::vector<std::uint64_t> seeds;
  masks.reserve(options.max_steps);
  for (std::size_t t = 1; t <= options.max_steps; ++t) {
    masks.push_back(t == 1 ? Mask::all_ones(n) : sample(state, rng, std::span<const Mask>(&masks.back(), 1)));
    seeds.push_back(detail::step_seed(options.seed, t));
  }

  detail::LoopState loop("random", evaluator, options);
  auto commit_one = [&](std::size_t k, const EvaluationResult& eval) {
    StepRecord rec;
    rec.t = k + 1;
    rec.theta_before = state.theta();
    rec.probs = state.probabilities();
    rec.mask = masks[k];
    rec.score = eval.dev_score;
    rec.reward.assign(n, 0.0);
    rec.theta_after = state.theta();
    loop.commit(std::move(rec), eval);
  };
  if (options.workers > 1 && evaluator.concurrency_safe()) {
    const auto evals = detail::evaluate_all(evaluator, masks, seeds, options.workers);
    for (std::size_t k = 0; k < masks.size(); ++k) commit_one(k, evals[k]);
  } else {
    for (std::size_t k = 0; k < masks.size(); ++k) commit_one(k, evaluator.evaluate(masks[k], seeds[k]));
  }
  return std::move(loop).finish();
}

/// Evaluates a fixed set of masks once each, in order, logging them as steps
/// with empty controller fields.
inline SearchResult run_fixed(Evaluator& evaluator, const std::vector<Mask>& masks, std::string method,
                              const SearchOptions& options, std::uint64_t eval_seed) {
  std::vector<std::uint64_t> seeds(masks.size(), eval_seed);
  const auto evals = detail::evaluate_all(evaluator, masks, seeds, options.workers);
  detail::LoopState loop(std::move(method), evaluator, options);
  for (std::size_t k = 0; k < masks.size(); ++k) {
    StepRecord rec;
    rec.t = k + 1;
    rec.mask = masks[k];
    rec.score = evals[k].dev_score;
    loop.commit(std::move(rec), evals[k]);
  }
  return std::move(loop).finish();
}

struct ExhaustiveResult {
  Mask best_mask;
  double best_score = 0.0;
  std::vector<std::pair<Mask, double>> table;  // enumeration order
  SearchResult search;
};

/// Scores every non-zero mask once with a fixed evaluation seed.
inline ExhaustiveResult run_exhaustive(Evaluator& evaluator, const SearchOptions& options = {},
                                       std::uint64_t eval_seed = 0) {
  const std::size_t n = evaluator.num_candidates();
  std::vector<Mask> masks;
  for (auto m : enumerate_nonzero(n)) masks.push_back(std::move(m));
  ExhaustiveResult out;
  out.search = run_fixed(evaluator, masks, "exhaustive", options, eval_seed);
  out.best_mask = out.search.best_mask;
  out.best_score = out.search.best_score;
  out.table.reserve(masks.size());
  for (const auto& rec : out.search.log.steps) out.table.emplace_back(rec.mask, rec.score);
  return out;
}

/// Single evaluation of the full concatenation.
inline SearchResult run_all(Evaluator& evaluator, const SearchOptions& options) {
  return run_fixed(evaluator, {Mask::all_ones(evaluator.num_candidates())}, "all", options,
                   detail::step_seed(options.seed, 1));
}

// ---------------------------------------------------------------------------
// Ensemble voting

enum class SelectOn { Dev, Test };

namespace detail {
inline void check_predictions(const CachedPredictions& preds) {
  if (preds.candidates.empty()) throw Error(ErrorCode::MissingPredictions, "no candidate predictions");
  for (std::size_t l = 0; l < preds.candidates.size(); ++l) {
    const auto& c = preds.candidates[l];
    if (c.dev.size() != preds.dev_gold.size() || c.test.size() != preds.test_gold.size()) {
      throw Error(ErrorCode::MissingPredictions, "candidate " + std::to_string(l) + " does not cover every instance");
    }
  }
  if (preds.dev_gold.empty() || preds.test_gold.empty()) {
    throw Error(ErrorCode::MissingPredictions, "dev and test predictions are both required");
  }
}
}  // namespace detail

/// Majority vote of the models in `subset` on instance `i`; ties between
/// labels with equal vote counts go to the larger summed confidence, then to
/// the smaller label.
inline int vote(const CachedPredictions& preds, const Mask& subset, SelectOn split, std::size_t i) {
  std::map<int, std::pair<int, double>> tally;
  for (std::size_t l = 0; l < subset.size(); ++l) {
    if (!subset[l]) continue;
    const auto& p = (split == SelectOn::Dev ? preds.candidates[l].dev : preds.candidates[l].test)[i];
    auto& [count, conf] = tally[p.label];
    ++count;
    conf += p.confidence;
  }
  int best_label = -1;
  std::pair<int, double> best{-1, 0.0};
  for (const auto& [label, stats] : tally) {
    if (stats.first > best.first || (stats.first == best.first && stats.second > best.second)) {
      best = stats;
      best_label = label;
    }
  }
  return best_label;
}

inline double ensemble_accuracy(const CachedPredictions& preds, const Mask& subset, SelectOn split) {
  if (subset.size() != preds.candidates.size()) {
    throw Error(ErrorCode::LengthMismatch, "subset length differs from candidate count");
  }
  if (!subset.any()) throw Error(ErrorCode::AllZeroMask, "empty ensemble");
  const auto& gold = split == SelectOn::Dev ? preds.dev_gold : preds.test_gold;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += vote(preds, subset, split, i) == gold[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(gold.size());
}

struct EnsembleResult {
  Mask best_subset;
  double dev_score = 0.0;
  double test_score = 0.0;
  struct Row {
    Mask subset;
    double dev = 0.0;
    double test = 0.0;
  };
  std::vector<Row> table;  // every non-zero subset, enumeration order
};

/// Scores every non-empty voting ensemble on both splits and keeps the one
/// best on `select_on` (earliest in enumeration order on ties).
inline EnsembleResult run_ensemble_search(const CachedPredictions& preds, SelectOn select_on) {
  detail::check_predictions(preds);
  EnsembleResult out;
  std::optional<std::size_t> best;
  for (auto subset : enumerate_nonzero(preds.candidates.size())) {
    EnsembleResult::Row row{subset, ensemble_accuracy(preds, subset, SelectOn::Dev),
                            ensemble_accuracy(preds, subset, SelectOn::Test)};
    const double key = select_on == SelectOn::Dev ? row.dev : row.test;
    if (!best || key > (select_on == SelectOn::Dev ? out.table[*best].dev : out.table[*best].test)) {
      best = out.table.size();
    }
    out.table.push_back(std::move(row));
  }
  out.best_subset = out.table[*best].subset;
  out.dev_score = out.table[*best].dev;
  out.test_score = out.table[*best].test;
  return out;
}

// ---------------------------------------------------------------------------
// Curves and ablation

struct CurvePoint {
  std::size_t t = 0;
  double best = 0.0;
  double step_score = 0.0;
};

inline std::vector<CurvePoint> best_so_far_curve(const RunLog& log) {
  if (log.steps.empty()) throw Error(ErrorCode::EmptyLog, "run log has no steps");
  std::vector<CurvePoint> curve;
  curve.reserve(log.steps.size());
  double best = log.steps.front().score;
  for (const auto& s : log.steps) {
    best = std::max(best, s.score);
    curve.push_back({s.t, best, s.score});
  }
  return curve;
}

struct AblationRow {
  RewardVariant variant = RewardVariant::Discounted;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation across seeds
  std::size_t n = 0;
  std::vector<double> finals;  // per seed, in seed order
};

/// Runs the controller loop once per (variant, seed) with the reward swapped
/// and everything else held fixed; summarizes the final best dev score.
inline std::vector<AblationRow> run_reward_ablation(Evaluator& evaluator, std::size_t max_steps,
                                                    const std::vector<std::uint64_t>& seeds,
                                                    const std::vector<RewardVariant>& variants,
                                                    ControllerConfig controller = {}) {
  if (seeds.size() < 2) throw Error(ErrorCode::ConfigInvalid, "ablation needs at least two seeds");
  std::vector<AblationRow> rows;
  for (auto variant : variants) {
    AblationRow row;
    row.variant = variant;
    for (auto seed : seeds) {
      SearchOptions opts;
      opts.max_steps = max_steps;
      opts.seed = seed;
      opts.controller = controller;
      opts.reward = variant;
      row.finals.push_back(run_ace(evaluator, opts).best_score);
    }
    row.n = row.finals.size();
    double sum = 0.0;
    for (double v : row.finals) sum += v;
    row.mean = sum / static_cast<double>(row.n);
    double ss = 0.0;
    for (double v : row.finals) ss += (v - row.mean) * (v - row.mean);
    row.sd = std::sqrt(ss / static_cast<double>(row.n - 1));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ace
