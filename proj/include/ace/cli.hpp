#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ace/controller.hpp"
#include "ace/dataset.hpp"
#include "ace/evaluators.hpp"
#include "ace/io.hpp"
#include "ace/search.hpp"

namespace ace::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline const std::vector<std::string> kMethods = {"ace", "random", "exhaustive", "all", "all-weight", "ensemble"};

struct EvaluatorConfig {
  std::string kind;  // synthetic | classifier | replay
  LandscapeSpec landscape;
  std::string path;  // dataset or replay table
  ClassifierOptions classifier;
  bool has_seed = false;
};

struct RunConfig {
  EvaluatorConfig evaluator;
  std::string method = "ace";
  std::optional<std::size_t> num_candidates;
  std::size_t max_steps = 30;
  ControllerConfig controller;
  RewardVariant reward = RewardVariant::Discounted;
  std::uint64_t seed = 0;
  std::string out = "out";
  unsigned workers = 1;
  std::string digest;
};

namespace detail {

[[noreturn]] inline void invalid(const std::string& why) { throw Error(ErrorCode::ConfigInvalid, why); }

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) invalid(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) invalid("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    invalid(where + "." + key + " is missing or has the wrong type");
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& where) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

inline std::string resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path.string() : (base / path).lexically_normal().string();
}

inline std::string digest_of(const json& j) {
  std::uint64_t h = hash_name(j.dump());
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << mix64(h);
  return os.str();
}

inline EvaluatorConfig parse_evaluator(const json& j, const fs::path& base) {
  const std::string where = "evaluator";
  if (!j.is_object()) invalid("evaluator must be an object");
  EvaluatorConfig e;
  e.kind = get<std::string>(j, "kind", where);
  e.has_seed = j.contains("seed");
  if (e.kind == "synthetic") {
    check_keys(j, {"kind", "unary", "pairwise", "noise_sd", "base", "seed"}, where);
    e.landscape.unary = get<std::vector<double>>(j, "unary", where);
    if (j.contains("pairwise")) {
      for (const auto& term : j.at("pairwise")) {
        if (!term.is_array() || term.size() != 3) invalid("pairwise terms are [i, j, weight] triples");
        const auto i = term[0].get<long long>();
        const auto k = term[1].get<long long>();
        if (i < 0 || k < 0) throw Error(ErrorCode::IndexOutOfRange, "negative pairwise index");
        e.landscape.pairwise.push_back(
            {static_cast<std::size_t>(i), static_cast<std::size_t>(k), term[2].get<double>()});
      }
    }
    e.landscape.noise_sd = get_or<double>(j, "noise_sd", 0.0, where);
    if (j.contains("base")) e.landscape.base = get<double>(j, "base", where);
    e.landscape.seed = get_or<std::uint64_t>(j, "seed", 0, where);
  } else if (e.kind == "classifier") {
    check_keys(j, {"kind", "dataset", "epochs", "lr", "weight_sharing", "seed"}, where);
    e.path = resolve(base, get<std::string>(j, "dataset", where));
    e.classifier.epochs = get_or<int>(j, "epochs", 100, where);
    e.classifier.learning_rate = get_or<double>(j, "lr", 0.5, where);
    e.classifier.weight_sharing = get_or<bool>(j, "weight_sharing", false, where);
    e.classifier.seed = get_or<std::uint64_t>(j, "seed", 0, where);
    if (!fs::exists(e.path)) throw Error(ErrorCode::Io, "dataset '" + e.path + "' does not exist");
  } else if (e.kind == "replay") {
    check_keys(j, {"kind", "table", "seed"}, where);
    e.path = resolve(base, get<std::string>(j, "table", where));
    if (!fs::exists(e.path)) throw Error(ErrorCode::Io, "replay table '" + e.path + "' does not exist");
  } else {
    invalid("unknown evaluator kind '" + e.kind + "'");
  }
  return e;
}

}  // namespace detail

/// Parses and validates a JSON run configuration. Relative paths are taken
/// relative to the directory holding the config file.
inline RunConfig parse_config(const json& j, const fs::path& base) {
  using detail::get_or;
  const std::string where = "config";
  detail::check_keys(j, {"evaluator", "method", "L", "T", "learning_rate", "gamma", "reward", "seed", "out", "workers"},
                     where);
  if (!j.contains("evaluator")) detail::invalid("config.evaluator is required");
  RunConfig c;
  c.evaluator = detail::parse_evaluator(j.at("evaluator"), base);
  c.method = get_or<std::string>(j, "method", "ace", where);
  if (std::find(kMethods.begin(), kMethods.end(), c.method) == kMethods.end()) {
    detail::invalid("unknown method '" + c.method + "'");
  }
  if (j.contains("L")) c.num_candidates = detail::get<std::size_t>(j, "L", where);
  c.max_steps = get_or<std::size_t>(j, "T", 30, where);
  c.controller.learning_rate = get_or<double>(j, "learning_rate", kDefaultLearningRate, where);
  c.controller.gamma = get_or<double>(j, "gamma", kDefaultGamma, where);
  validate(c.controller);
  c.reward = parse_reward_variant(get_or<std::string>(j, "reward", "discounted", where));
  c.seed = get_or<std::uint64_t>(j, "seed", 0, where);
  c.out = detail::resolve(base, get_or<std::string>(j, "out", "out", where));
  c.workers = get_or<unsigned>(j, "workers", 1, where);
  if (c.max_steps < 2 && (c.method == "ace" || c.method == "random")) detail::invalid("T must be at least 2");
  c.digest = detail::digest_of(j);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::Io, "cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j, fs::path(path).parent_path());
}

/// Builds the evaluator for `config`. Unless the evaluator section pins its
/// own seed, it is derived from the run seed.
inline std::unique_ptr<Evaluator> make_evaluator(const RunConfig& config) {
  const auto& e = config.evaluator;
  std::unique_ptr<Evaluator> out;
  if (e.kind == "synthetic") {
    auto spec = e.landscape;
    if (!e.has_seed) spec.seed = derive_seed(config.seed, "evaluator.landscape");
    out = std::make_unique<SyntheticLandscape>(std::move(spec));
  } else if (e.kind == "classifier") {
    auto opts = e.classifier;
    if (!e.has_seed) opts.seed = derive_seed(config.seed, "evaluator.classifier");
    out = std::make_unique<FeatureBlockClassifier>(load_dataset(e.path), opts);
  } else {
    out = std::make_unique<ReplayTable>(load_replay_table(e.path));
  }
  if (config.num_candidates && *config.num_candidates != out->num_candidates()) {
    throw Error(ErrorCode::ConfigInvalid, "config L = " + std::to_string(*config.num_candidates) +
                                              " but evaluator has " + std::to_string(out->num_candidates()));
  }
  return out;
}

inline SearchOptions search_options(const RunConfig& config) {
  SearchOptions o;
  o.max_steps = config.max_steps;
  o.seed = config.seed;
  o.controller = config.controller;
  o.reward = config.reward;
  o.workers = config.workers;
  return o;
}

struct MethodOutcome {
  SearchResult search;
  json extra = json::object();
};

/// Runs `config.method`, streaming each step to `on_step` where the method
/// produces steps incrementally.
inline MethodOutcome run_method(const RunConfig& config, const std::function<void(const StepRecord&)>& on_step) {
  auto evaluator = make_evaluator(config);
  auto opts = search_options(config);
  opts.on_step = on_step;
  MethodOutcome out;
  const auto& m = config.method;
  if (m == "ace") {
    out.search = run_ace(*evaluator, opts);
  } else if (m == "random") {
    out.search = run_random(*evaluator, opts);
  } else if (m == "exhaustive") {
    out.search = run_exhaustive(*evaluator, opts).search;
  } else if (m == "all") {
    out.search = run_all(*evaluator, opts);
  } else {
    auto* clf = dynamic_cast<FeatureBlockClassifier*>(evaluator.get());
    if (!clf) detail::invalid("method '" + m + "' requires a classifier evaluator");
    const auto& ds = clf->dataset();
    const auto& co = clf->options();
    if (m == "all-weight") {
      const auto aw = train_all_weight(ds, co.epochs, co.learning_rate, co.seed);
      ace::detail::LoopState loop("all-weight", *evaluator, opts);
      StepRecord rec;
      rec.t = 1;
      rec.mask = Mask::all_ones(ds.num_blocks());
      rec.score = aw.result.dev_score;
      loop.commit(std::move(rec), aw.result);
      out.search = std::move(loop).finish();
      out.extra["gates"] = aw.gates;
    } else {
      const auto preds = predictions_per_candidate(ds, co.epochs, co.learning_rate, co.seed);
      const auto by_dev = run_ensemble_search(preds, SelectOn::Dev);
      const auto by_test = run_ensemble_search(preds, SelectOn::Test);
      ace::detail::LoopState loop("ensemble", *evaluator, opts);
      for (std::size_t k = 0; k < by_dev.table.size(); ++k) {
        const auto& row = by_dev.table[k];
        StepRecord rec;
        rec.t = k + 1;
        rec.mask = row.subset;
        rec.score = row.dev;
        EvaluationResult eval{row.dev, row.test, std::nullopt, std::nullopt, 0.0};
        loop.commit(std::move(rec), eval);
      }
      out.search = std::move(loop).finish();
      out.extra["ensemble_dev"] = {{"mask", by_dev.best_subset.str()}, {"dev", by_dev.dev_score}, {"test", by_dev.test_score}};
      out.extra["ensemble_test"] = {
          {"mask", by_test.best_subset.str()}, {"dev", by_test.dev_score}, {"test", by_test.test_score}};
    }
  }
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  f << text;
}

/// `search`: runs one method and writes run.jsonl, curve.csv, summary.json
/// into the output directory. Returns the process exit code.
inline int cmd_search(const std::string& config_path, std::optional<std::string> out_dir = std::nullopt,
                      std::optional<std::uint64_t> seed = std::nullopt, std::ostream& err = std::cerr) {
  RunConfig config;
  try {
    config = load_config(config_path);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  if (out_dir) config.out = *out_dir;
  if (seed) config.seed = *seed;

  const fs::path dir(config.out);
  std::ofstream log_file;
  try {
    fs::create_directories(dir);
    log_file.open(dir / "run.jsonl", std::ios::binary | std::ios::trunc);
    if (!log_file) throw Error(ErrorCode::Io, "cannot write '" + (dir / "run.jsonl").string() + "'");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    bool streamed = false;
    auto outcome = run_method(config, [&](const StepRecord& rec) {
      streamed = true;
      write_step_jsonl(log_file, rec);
      log_file.flush();
    });
    if (!streamed) write_run_jsonl(log_file, outcome.search.log);
    log_file.close();

    std::ostringstream curve;
    write_curve_csv(curve, best_so_far_curve(outcome.search.log));
    write_text(dir / "curve.csv", curve.str());

    json summary;
    summary["method"] = config.method;
    summary["evaluator"] = outcome.search.log.header.evaluator;
    summary["seed"] = config.seed;
    summary["config_digest"] = config.digest;
    summary["steps"] = outcome.search.log.steps.size();
    summary["best_mask"] = outcome.search.best_mask.str();
    summary["dev_score"] = outcome.search.best_score;
    summary["test_score"] = outcome.search.best_test_score ? json(*outcome.search.best_test_score) : json(nullptr);
    for (const auto& [k, v] : outcome.extra.items()) summary[k] = v;
    write_text(dir / "summary.json", summary.dump(2) + "\n");
  } catch (const std::exception& e) {
    if (log_file.is_open()) {
      log_file << json{{"error", e.what()}}.dump() << '\n';
      log_file.close();
    }
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

/// `compare`: every (method, seed) pair on one config; writes compare.csv
/// (method,seed,t,best,step_score) and compare_summary.csv
/// (method,mean_best,n).
inline int cmd_compare(const std::string& config_path, const std::vector<std::string>& methods,
                       const std::vector<std::uint64_t>& seeds, std::optional<std::string> out_dir = std::nullopt,
                       std::ostream& err = std::cerr) {
  try {
    if (methods.empty()) detail::invalid("at least one method is required");
    if (seeds.empty()) detail::invalid("at least one seed is required");
    auto base = load_config(config_path);
    if (out_dir) base.out = *out_dir;
    for (const auto& m : methods) {
      if (std::find(kMethods.begin(), kMethods.end(), m) == kMethods.end()) detail::invalid("unknown method '" + m + "'");
    }
    std::ostringstream long_csv;
    std::ostringstream summary_csv;
    long_csv << "method,seed,t,best,step_score\n";
    summary_csv << "method,mean_best,n\n";
    for (const auto& m : methods) {
      double total = 0.0;
      for (auto s : seeds) {
        auto config = base;
        config.method = m;
        config.seed = s;
        const auto outcome = run_method(config, {});
        const auto curve = best_so_far_curve(outcome.search.log);
        for (const auto& p : curve) {
          long_csv << m << ',' << s << ',' << p.t << ',' << ace::detail::format_double(p.best) << ','
                   << ace::detail::format_double(p.step_score) << '\n';
        }
        total += curve.back().best;
      }
      summary_csv << m << ',' << ace::detail::format_double(total / static_cast<double>(seeds.size())) << ','
                  << seeds.size() << '\n';
    }
    const fs::path dir(base.out);
    fs::create_directories(dir);
    write_text(dir / "compare.csv", long_csv.str());
    write_text(dir / "compare_summary.csv", summary_csv.str());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

inline DatasetRecipe parse_recipe(const json& j) {
  const std::string where = "spec";
  detail::check_keys(j, {"blocks", "classes", "train", "dev", "test", "seed"}, where);
  DatasetRecipe r;
  if (!j.contains("blocks") || !j.at("blocks").is_array()) detail::invalid("spec.blocks must be a list");
  for (const auto& b : j.at("blocks")) {
    detail::check_keys(b, {"name", "dim", "signal"}, "spec.blocks[]");
    r.blocks.push_back({detail::get<std::string>(b, "name", "block"), detail::get<std::size_t>(b, "dim", "block"),
                        detail::get_or<double>(b, "signal", 1.0, "block")});
  }
  r.num_classes = detail::get_or<int>(j, "classes", 2, where);
  r.train = detail::get_or<std::size_t>(j, "train", 0, where);
  r.dev = detail::get<std::size_t>(j, "dev", where);
  r.test = detail::get<std::size_t>(j, "test", where);
  r.seed = detail::get_or<std::uint64_t>(j, "seed", 0, where);
  return r;
}

/// `gen-dataset`: writes a feature-block dataset generated from a recipe.
inline int cmd_gen_dataset(const std::string& spec_path, const std::string& out_path, std::ostream& err = std::cerr) {
  try {
    std::ifstream f(spec_path);
    if (!f) throw Error(ErrorCode::Io, "cannot open spec '" + spec_path + "'");
    json j;
    try {
      j = json::parse(f);
    } catch (const json::parse_error& e) {
      detail::invalid(std::string("malformed JSON: ") + e.what());
    }
    const auto ds = generate_dataset(parse_recipe(j));
    std::ostringstream os;
    write_dataset(os, ds);
    const fs::path out(out_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_text(out, os.str());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace ace::cli
