#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ace/controller.hpp"
#include "ace/dataset.hpp"
#include "ace/error.hpp"
#include "ace/mask.hpp"
#include "ace/rng.hpp"

namespace ace {

struct Prediction {
  int label = 0;
  double confidence = 0.0;
};

struct EvaluationResult {
  double dev_score = 0.0;
  std::optional<double> test_score;
  std::optional<std::vector<Prediction>> dev_predictions;
  std::optional<std::vector<Prediction>> test_predictions;
  double cost = 0.0;  // wall seconds; informational only
};

/// Scoring oracle standing in for "train the task model on this
/// concatenation and report development accuracy".
class Evaluator {
 public:
  virtual ~Evaluator() = default;

  virtual std::size_t num_candidates() const = 0;

  /// Scores `mask`. The result must depend only on (mask, seed) and the
  /// evaluator's configuration, plus prior calls for stateful evaluators.
  EvaluationResult evaluate(const Mask& mask, std::uint64_t seed) {
    if (mask.size() != num_candidates()) {
      throw Error(ErrorCode::LengthMismatch, "mask length " + std::to_string(mask.size()) + " vs evaluator " +
                                                 std::to_string(num_candidates()));
    }
    if (!mask.any()) throw Error(ErrorCode::AllZeroMask, "cannot evaluate the empty selection");
    const auto start = std::chrono::steady_clock::now();
    auto result = do_evaluate(mask, seed);
    result.cost = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
  }

  /// True if evaluate() may be called from several threads at once.
  virtual bool concurrency_safe() const { return true; }

  virtual std::string id() const = 0;

 protected:
  virtual EvaluationResult do_evaluate(const Mask& mask, std::uint64_t seed) = 0;
};

// ---------------------------------------------------------------------------
// Synthetic landscape

struct PairwiseTerm {
  std::size_t i = 0;
  std::size_t j = 0;
  double weight = 0.0;
};

struct LandscapeSpec {
  std::vector<double> unary;
  std::vector<PairwiseTerm> pairwise;
  double noise_sd = 0.0;
  std::optional<double> base;  // centred automatically when absent
  std::uint64_t seed = 0;
};

/// score(a) = clamp01(base + sum_l w_l a_l + sum_(i,j) w_ij a_i a_j + noise).
class SyntheticLandscape final : public Evaluator {
 public:
  explicit SyntheticLandscape(LandscapeSpec spec) : spec_(std::move(spec)) {
    const std::size_t n = spec_.unary.size();
    if (n < 2) throw Error(ErrorCode::ConfigInvalid, "landscape needs L >= 2");
    if (spec_.noise_sd < 0.0 || !std::isfinite(spec_.noise_sd)) {
      throw Error(ErrorCode::NegativeNoise, "noise_sd must be non-negative");
    }
    for (const auto& p : spec_.pairwise) {
      if (p.i >= n || p.j >= n) {
        throw Error(ErrorCode::IndexOutOfRange, "pairwise term (" + std::to_string(p.i) + ", " +
                                                    std::to_string(p.j) + ") outside L = " + std::to_string(n));
      }
    }
    if (spec_.base) {
      base_ = *spec_.base;
    } else {
      // Centre the range [lo, hi] spanned by the weights on 0.5.
      double lo = 0.0;
      double hi = 0.0;
      for (double w : spec_.unary) (w < 0 ? lo : hi) += w;
      for (const auto& p : spec_.pairwise) (p.weight < 0 ? lo : hi) += p.weight;
      base_ = 0.5 - 0.5 * (lo + hi);
    }
  }

  std::size_t num_candidates() const override { return spec_.unary.size(); }
  std::string id() const override { return "synthetic"; }
  double base() const noexcept { return base_; }
  const LandscapeSpec& spec() const noexcept { return spec_; }

  /// Score before noise and clamping.
  double raw_score(const Mask& mask) const {
    double s = base_;
    for (std::size_t l = 0; l < mask.size(); ++l) {
      if (mask[l]) s += spec_.unary[l];
    }
    for (const auto& p : spec_.pairwise) {
      if (mask[p.i] && mask[p.j]) s += p.weight;
    }
    return s;
  }

  double noiseless_score(const Mask& mask) const { return std::clamp(raw_score(mask), 0.0, 1.0); }

 protected:
  EvaluationResult do_evaluate(const Mask& mask, std::uint64_t seed) override {
    double s = raw_score(mask);
    if (spec_.noise_sd > 0.0) {
      Rng rng(mix64(derive_seed(spec_.seed, "landscape.noise", seed) ^ std::hash<Mask>{}(mask)));
      s += spec_.noise_sd * rng.normal();
    }
    return {std::clamp(s, 0.0, 1.0), std::nullopt, std::nullopt, std::nullopt, 0.0};
  }

 private:
  LandscapeSpec spec_;
  double base_ = 0.5;
};

// ---------------------------------------------------------------------------
// Replay table

/// Looks scores up in a fixed mask -> score table.
class ReplayTable final : public Evaluator {
 public:
  explicit ReplayTable(std::map<Mask, double> table) : table_(std::move(table)) {
    if (table_.empty()) throw Error(ErrorCode::ConfigInvalid, "replay table is empty");
    length_ = table_.begin()->first.size();
    for (const auto& [mask, score] : table_) {
      if (mask.size() != length_) throw Error(ErrorCode::LengthMismatch, "replay table mixes mask lengths");
      if (!(score >= 0.0 && score <= 1.0)) {
        throw Error(ErrorCode::ConfigInvalid, "replay score for " + mask.str() + " outside [0, 1]");
      }
    }
  }

  std::size_t num_candidates() const override { return length_; }
  std::string id() const override { return "replay"; }
  const std::map<Mask, double>& table() const noexcept { return table_; }

 protected:
  EvaluationResult do_evaluate(const Mask& mask, std::uint64_t) override {
    auto it = table_.find(mask);
    if (it == table_.end()) throw Error(ErrorCode::UnknownMask, "no replay entry for " + mask.str());
    return {it->second, std::nullopt, std::nullopt, std::nullopt, 0.0};
  }

 private:
  std::map<Mask, double> table_;
  std::size_t length_ = 0;
};

/// One `maskstring,score` pair per line; blank lines and '#' comments skipped.
inline std::map<Mask, double> read_replay_table(std::istream& is) {
  std::map<Mask, double> table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    auto fields = detail::split_view(body, ',');
    if (fields.size() != 2) {
      throw Error(ErrorCode::ConfigInvalid, "replay line " + std::to_string(lineno) + ": expected mask,score");
    }
    auto mask = Mask::parse(detail::trim(fields[0]));
    table[mask] = detail::parse_double(detail::trim(fields[1]), "replay line " + std::to_string(lineno));
  }
  return table;
}

inline std::map<Mask, double> load_replay_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::Io, "cannot open replay table '" + path + "'");
  return read_replay_table(f);
}

// ---------------------------------------------------------------------------
// Softmax-linear classifier over feature blocks

/// Multinomial logistic regression, logits = W^T (x * s) + c, where s is a
/// per-column multiplier (a 0/1 expanded mask, or sigmoid gates). W is stored
/// row-major with one row per input column.
class SoftmaxLinear {
 public:
  SoftmaxLinear(std::size_t input_dim, std::size_t num_classes)
      : dim_(input_dim), classes_(num_classes), weights_(input_dim * num_classes, 0.0), bias_(num_classes, 0.0) {}

  /// Uniform [-0.1, 0.1] weights, zero bias.
  void initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "classifier.init"));
    for (auto& w : weights_) w = rng.uniform(-0.1, 0.1);
    std::fill(bias_.begin(), bias_.end(), 0.0);
  }

  std::size_t input_dim() const noexcept { return dim_; }
  std::size_t num_classes() const noexcept { return classes_; }
  std::vector<double>& weights() noexcept { return weights_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  std::vector<double>& bias() noexcept { return bias_; }
  const std::vector<double>& bias() const noexcept { return bias_; }
  double weight(std::size_t row, std::size_t cls) const { return weights_[row * classes_ + cls]; }

  /// W^T (x * scale), without bias.
  std::vector<double> project(std::span<const double> x, std::span<const double> scale) const {
    std::vector<double> out(classes_, 0.0);
    for (std::size_t j = 0; j < dim_; ++j) {
      const double xj = x[j] * scale[j];
      const double* row = &weights_[j * classes_];
      for (std::size_t c = 0; c < classes_; ++c) out[c] += row[c] * xj;
    }
    return out;
  }

  std::vector<double> probabilities(std::span<const double> x, std::span<const double> scale) const {
    auto z = project(x, scale);
    for (std::size_t c = 0; c < classes_; ++c) z[c] += bias_[c];
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (auto& v : z) v /= sum;
    return z;
  }

  Prediction predict(std::span<const double> x, std::span<const double> scale) const {
    const auto p = probabilities(x, scale);
    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    return {static_cast<int>(best), p[best]};
  }

  /// Mean cross-entropy over `rows`.
  double loss(const std::vector<const Instance*>& rows, std::span<const double> scale) const {
    double total = 0.0;
    for (const auto* in : rows) {
      const auto p = probabilities(in->features, scale);
      total -= std::log(std::max(p[static_cast<std::size_t>(in->label)], 1e-300));
    }
    return rows.empty() ? 0.0 : total / static_cast<double>(rows.size());
  }

  /// One full-batch gradient-descent step on mean cross-entropy. When
  /// `scale_grad` is non-null it receives dLoss/dscale_j per column.
  void step(const std::vector<const Instance*>& rows, std::span<const double> scale, double lr,
            std::vector<double>* scale_grad = nullptr) {
    std::vector<double> grad_w(weights_.size(), 0.0);
    std::vector<double> grad_b(classes_, 0.0);
    if (scale_grad) scale_grad->assign(dim_, 0.0);
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    for (const auto* in : rows) {
      auto g = probabilities(in->features, scale);
      g[static_cast<std::size_t>(in->label)] -= 1.0;
      for (std::size_t j = 0; j < dim_; ++j) {
        const double xj = in->features[j] * scale[j];
        double* row = &grad_w[j * classes_];
        const double* wrow = &weights_[j * classes_];
        double wg = 0.0;
        for (std::size_t c = 0; c < classes_; ++c) {
          row[c] += xj * g[c] * inv_n;
          wg += wrow[c] * g[c];
        }
        if (scale_grad) (*scale_grad)[j] += in->features[j] * wg * inv_n;
      }
      for (std::size_t c = 0; c < classes_; ++c) grad_b[c] += g[c] * inv_n;
    }
    for (std::size_t k = 0; k < weights_.size(); ++k) weights_[k] -= lr * grad_w[k];
    for (std::size_t c = 0; c < classes_; ++c) bias_[c] -= lr * grad_b[c];
  }

 private:
  std::size_t dim_;
  std::size_t classes_;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

struct ClassifierOptions {
  int epochs = 100;
  double learning_rate = 0.5;
  bool weight_sharing = false;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<const Instance*> rows_of(const FeatureBlockDataset& ds, Split split) {
  std::vector<const Instance*> out;
  for (const auto& in : ds.instances) {
    if (in.split == split) out.push_back(&in);
  }
  return out;
}

/// Rows the classifier fits on: train when present, dev otherwise.
inline std::vector<const Instance*> fit_rows(const FeatureBlockDataset& ds) {
  auto rows = rows_of(ds, Split::Train);
  return rows.empty() ? rows_of(ds, Split::Dev) : rows;
}

inline std::pair<double, std::vector<Prediction>> score_rows(const SoftmaxLinear& model,
                                                             const std::vector<const Instance*>& rows,
                                                             std::span<const double> scale) {
  std::vector<Prediction> preds;
  preds.reserve(rows.size());
  std::size_t correct = 0;
  for (const auto* in : rows) {
    preds.push_back(model.predict(in->features, scale));
    if (preds.back().label == in->label) ++correct;
  }
  return {static_cast<double>(correct) / static_cast<double>(rows.size()), std::move(preds)};
}

inline void validate_options(const ClassifierOptions& o) {
  if (o.epochs < 0) throw Error(ErrorCode::ConfigInvalid, "epochs must be non-negative");
  if (!(o.learning_rate > 0.0)) throw Error(ErrorCode::ConfigInvalid, "classifier learning rate must be positive");
}

}  // namespace detail

/// Trains a softmax-linear model on the masked concatenation of feature
/// blocks and reports dev accuracy. With weight sharing the weight matrix
/// persists between calls and training resumes from it; columns of
/// unselected blocks receive zero gradient and are left as they were.
/// Without weight sharing every call starts from the seeded initialization.
class FeatureBlockClassifier final : public Evaluator {
 public:
  FeatureBlockClassifier(FeatureBlockDataset dataset, ClassifierOptions options)
      : dataset_(std::move(dataset)), options_(options) {
    dataset_.validate();
    detail::validate_options(options_);
    classes_ = static_cast<std::size_t>(dataset_.num_classes());
    shared_ = std::make_unique<SoftmaxLinear>(dataset_.total_dim(), classes_);
    shared_->initialize(options_.seed);
  }

  std::size_t num_candidates() const override { return dataset_.num_blocks(); }
  std::string id() const override { return options_.weight_sharing ? "classifier-shared" : "classifier"; }
  bool concurrency_safe() const override { return !options_.weight_sharing; }

  const FeatureBlockDataset& dataset() const noexcept { return dataset_; }
  const ClassifierOptions& options() const noexcept { return options_; }
  const SoftmaxLinear& shared_model() const noexcept { return *shared_; }

  /// Fresh model as used by a non-sharing evaluation.
  SoftmaxLinear initial_model() const {
    SoftmaxLinear m(dataset_.total_dim(), classes_);
    m.initialize(options_.seed);
    return m;
  }

  /// Trains `model` in place on the masked input; returns dev loss after
  /// each epoch.
  std::vector<double> train(SoftmaxLinear& model, const Mask& mask) const {
    const auto scale = dataset_.expand(mask);
    const auto fit = detail::fit_rows(dataset_);
    const auto dev = detail::rows_of(dataset_, Split::Dev);
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(options_.epochs));
    for (int e = 0; e < options_.epochs; ++e) {
      model.step(fit, scale, options_.learning_rate);
      trace.push_back(model.loss(dev, scale));
    }
    return trace;
  }

  EvaluationResult score(const SoftmaxLinear& model, const Mask& mask) const {
    const auto scale = dataset_.expand(mask);
    auto [dev_acc, dev_preds] = detail::score_rows(model, detail::rows_of(dataset_, Split::Dev), scale);
    auto [test_acc, test_preds] = detail::score_rows(model, detail::rows_of(dataset_, Split::Test), scale);
    return {dev_acc, test_acc, std::move(dev_preds), std::move(test_preds), 0.0};
  }

 protected:
  EvaluationResult do_evaluate(const Mask& mask, std::uint64_t) override {
    if (options_.weight_sharing) {
      train(*shared_, mask);
      return score(*shared_, mask);
    }
    auto model = initial_model();
    train(model, mask);
    return score(model, mask);
  }

 private:
  FeatureBlockDataset dataset_;
  ClassifierOptions options_;
  std::size_t classes_ = 0;
  std::unique_ptr<SoftmaxLinear> shared_;
};

struct AllWeightResult {
  EvaluationResult result;
  std::vector<double> gate_logits;  // b_l
  std::vector<double> gates;        // sigma(b_l)
};

/// All candidates concatenated, each block scaled by a trainable gate
/// sigma(b_l) (b initialized to 0) learned jointly with the classifier.
inline AllWeightResult train_all_weight(const FeatureBlockDataset& dataset, int epochs, double lr,
                                        std::uint64_t seed) {
  dataset.validate();
  detail::validate_options({epochs, lr, false, seed});
  const std::size_t blocks = dataset.num_blocks();
  SoftmaxLinear model(dataset.total_dim(), static_cast<std::size_t>(dataset.num_classes()));
  model.initialize(seed);
  std::vector<double> logits(blocks, 0.0);
  auto column_scale = [&] {
    std::vector<double> s;
    s.reserve(dataset.total_dim());
    for (std::size_t l = 0; l < blocks; ++l) s.insert(s.end(), dataset.blocks[l].dim, sigmoid(logits[l]));
    return s;
  };

  const auto fit = detail::fit_rows(dataset);
  std::vector<double> scale_grad;
  for (int e = 0; e < epochs; ++e) {
    const auto scale = column_scale();
    model.step(fit, scale, lr, &scale_grad);
    std::size_t j = 0;
    for (std::size_t l = 0; l < blocks; ++l) {
      double g = 0.0;
      for (std::size_t k = 0; k < dataset.blocks[l].dim; ++k, ++j) g += scale_grad[j];
      const double s = sigmoid(logits[l]);
      logits[l] -= lr * g * s * (1.0 - s);
    }
  }

  const auto scale = column_scale();
  auto [dev_acc, dev_preds] = detail::score_rows(model, detail::rows_of(dataset, Split::Dev), scale);
  auto [test_acc, test_preds] = detail::score_rows(model, detail::rows_of(dataset, Split::Test), scale);
  AllWeightResult out;
  out.result = {dev_acc, test_acc, std::move(dev_preds), std::move(test_preds), 0.0};
  out.gate_logits = logits;
  for (double b : logits) out.gates.push_back(sigmoid(b));
  return out;
}

/// Cached outputs of one single-candidate model per block, plus gold labels,
/// ready for ensemble search.
struct CachedPredictions {
  struct Candidate {
    std::vector<Prediction> dev;
    std::vector<Prediction> test;
  };
  std::vector<Candidate> candidates;
  std::vector<int> dev_gold;
  std::vector<int> test_gold;
};

inline CachedPredictions predictions_per_candidate(const FeatureBlockDataset& dataset, int epochs, double lr,
                                                   std::uint64_t seed) {
  FeatureBlockClassifier clf(dataset, {epochs, lr, false, seed});
  CachedPredictions out;
  const std::size_t n = dataset.num_blocks();
  for (std::size_t l = 0; l < n; ++l) {
    auto r = clf.evaluate(Mask::zeros(n).flipped(l), seed);
    out.candidates.push_back({std::move(*r.dev_predictions), std::move(*r.test_predictions)});
  }
  for (const auto* in : detail::rows_of(dataset, Split::Dev)) out.dev_gold.push_back(in->label);
  for (const auto* in : detail::rows_of(dataset, Split::Test)) out.test_gold.push_back(in->label);
  return out;
}

}  // namespace ace
