#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ace/error.hpp"
#include "ace/mask.hpp"
#include "ace/rng.hpp"

namespace ace {

struct CandidateDescriptor {
  std::string name;
  std::size_t dim = 0;
};

enum class Split { Train, Dev, Test };

constexpr std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "unknown";
}

struct Instance {
  Split split = Split::Dev;
  int label = 0;
  std::vector<double> features;  // all blocks concatenated in candidate order
};

/// Instances whose feature vector is the concatenation of L blocks. The
/// optional train split is what classifiers fit on; without it they fit on dev.
struct FeatureBlockDataset {
  std::vector<CandidateDescriptor> blocks;
  std::vector<Instance> instances;

  std::size_t num_blocks() const noexcept { return blocks.size(); }

  std::size_t total_dim() const noexcept {
    std::size_t d = 0;
    for (const auto& b : blocks) d += b.dim;
    return d;
  }

  /// Offset of block l's first column in the concatenated vector.
  std::size_t block_offset(std::size_t l) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < l; ++i) off += blocks.at(i).dim;
    return off;
  }

  int num_classes() const noexcept {
    int mx = -1;
    for (const auto& in : instances) mx = std::max(mx, in.label);
    return mx + 1;
  }

  std::size_t count(Split s) const noexcept {
    return static_cast<std::size_t>(
        std::count_if(instances.begin(), instances.end(), [s](const Instance& in) { return in.split == s; }));
  }

  /// Per-column 0/1 multiplier that repeats bit l across block l.
  std::vector<double> expand(const Mask& mask) const {
    if (mask.size() != blocks.size()) {
      throw Error(ErrorCode::LengthMismatch, "mask length " + std::to_string(mask.size()) + " vs " +
                                                 std::to_string(blocks.size()) + " blocks");
    }
    std::vector<double> out;
    out.reserve(total_dim());
    for (std::size_t l = 0; l < blocks.size(); ++l) out.insert(out.end(), blocks[l].dim, mask[l] ? 1.0 : 0.0);
    return out;
  }

  /// Copy restricted to the selected blocks, columns physically removed.
  FeatureBlockDataset select_blocks(const Mask& mask) const {
    const auto keep = expand(mask);
    FeatureBlockDataset out;
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      if (mask[l]) out.blocks.push_back(blocks[l]);
    }
    out.instances.reserve(instances.size());
    for (const auto& in : instances) {
      Instance r{in.split, in.label, {}};
      for (std::size_t j = 0; j < keep.size(); ++j) {
        if (keep[j] != 0.0) r.features.push_back(in.features[j]);
      }
      out.instances.push_back(std::move(r));
    }
    return out;
  }

  void validate() const {
    auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidDataset, why); };
    if (blocks.empty()) fail("no blocks declared");
    std::set<std::string> names;
    for (const auto& b : blocks) {
      if (b.name.empty()) fail("block with empty name");
      if (b.dim == 0) fail("block '" + b.name + "' has zero width");
      if (!names.insert(b.name).second) fail("duplicate block name '" + b.name + "'");
    }
    const std::size_t d = total_dim();
    std::set<int> labels;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      if (instances[i].features.size() != d) {
        fail("instance " + std::to_string(i) + " has " + std::to_string(instances[i].features.size()) +
             " features, expected " + std::to_string(d));
      }
      if (instances[i].label < 0) fail("instance " + std::to_string(i) + " has a negative label");
      labels.insert(instances[i].label);
    }
    if (labels.size() < 2) fail("at least two classes required");
    if (count(Split::Dev) == 0) fail("dev split is empty");
    if (count(Split::Test) == 0) fail("test split is empty");
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::InvalidDataset, where + ": cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split_view(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Text form: a `blocks: name:dim,...` header, then `split,label,f1,...,fd`.
inline void write_dataset(std::ostream& os, const FeatureBlockDataset& ds) {
  os << "blocks: ";
  for (std::size_t l = 0; l < ds.blocks.size(); ++l) {
    if (l) os << ',';
    os << ds.blocks[l].name << ':' << ds.blocks[l].dim;
  }
  os << '\n';
  for (const auto& in : ds.instances) {
    os << to_string(in.split) << ',' << in.label;
    for (double f : in.features) os << ',' << detail::format_double(f);
    os << '\n';
  }
}

inline FeatureBlockDataset read_dataset(std::istream& is) {
  FeatureBlockDataset ds;
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::InvalidDataset, "missing header line");
  std::string_view header = detail::trim(line);
  constexpr std::string_view kPrefix = "blocks:";
  if (!header.starts_with(kPrefix)) throw Error(ErrorCode::InvalidDataset, "header must start with 'blocks:'");
  header.remove_prefix(kPrefix.size());
  for (auto item : detail::split_view(detail::trim(header), ',')) {
    item = detail::trim(item);
    auto colon = item.rfind(':');
    if (colon == std::string_view::npos) {
      throw Error(ErrorCode::InvalidDataset, "block entry '" + std::string(item) + "' lacks ':dim'");
    }
    const double dim = detail::parse_double(item.substr(colon + 1), "header");
    if (dim < 1 || dim != static_cast<double>(static_cast<std::size_t>(dim))) {
      throw Error(ErrorCode::InvalidDataset, "block width must be a positive integer");
    }
    ds.blocks.push_back({std::string(item.substr(0, colon)), static_cast<std::size_t>(dim)});
  }
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    auto body = detail::trim(line);
    if (body.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    auto fields = detail::split_view(body, ',');
    if (fields.size() < 3) throw Error(ErrorCode::InvalidDataset, where + ": too few fields");
    Instance in;
    auto split = detail::trim(fields[0]);
    if (split == "train") in.split = Split::Train;
    else if (split == "dev") in.split = Split::Dev;
    else if (split == "test") in.split = Split::Test;
    else throw Error(ErrorCode::InvalidDataset, where + ": unknown split '" + std::string(split) + "'");
    const double label = detail::parse_double(detail::trim(fields[1]), where);
    if (label < 0 || label != static_cast<double>(static_cast<int>(label))) {
      throw Error(ErrorCode::InvalidDataset, where + ": label must be a non-negative integer");
    }
    in.label = static_cast<int>(label);
    in.features.reserve(fields.size() - 2);
    for (std::size_t k = 2; k < fields.size(); ++k) {
      in.features.push_back(detail::parse_double(detail::trim(fields[k]), where));
    }
    ds.instances.push_back(std::move(in));
  }
  ds.validate();
  return ds;
}

inline FeatureBlockDataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::Io, "cannot open dataset '" + path + "'");
  return read_dataset(f);
}

/// Recipe for a synthetic dataset with Gaussian class-conditional blocks.
/// Block l's class means are drawn as signal * N(0, 1) per coordinate and
/// instances add unit-variance noise, so signal 0 makes a block carry no
/// information about the label.
struct DatasetRecipe {
  struct Block {
    std::string name;
    std::size_t dim = 1;
    double signal = 1.0;
  };
  std::vector<Block> blocks;
  int num_classes = 2;
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
  std::uint64_t seed = 0;
};

inline FeatureBlockDataset generate_dataset(const DatasetRecipe& recipe) {
  if (recipe.blocks.empty()) throw Error(ErrorCode::InvalidDataset, "recipe declares no blocks");
  if (recipe.num_classes < 2) throw Error(ErrorCode::InvalidDataset, "recipe needs at least 2 classes");
  for (const auto& b : recipe.blocks) {
    if (b.signal < 0.0) throw Error(ErrorCode::InvalidDataset, "block '" + b.name + "' has negative signal");
  }
  FeatureBlockDataset ds;
  for (const auto& b : recipe.blocks) ds.blocks.push_back({b.name, b.dim});
  const std::size_t d = ds.total_dim();

  Rng mean_rng(derive_seed(recipe.seed, "dataset.means"));
  std::vector<std::vector<double>> means(static_cast<std::size_t>(recipe.num_classes), std::vector<double>(d));
  for (auto& mu : means) {
    std::size_t j = 0;
    for (const auto& b : recipe.blocks) {
      for (std::size_t k = 0; k < b.dim; ++k, ++j) mu[j] = b.signal * mean_rng.normal();
    }
  }

  Rng rng(derive_seed(recipe.seed, "dataset.instances"));
  auto emit = [&](Split split, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      // Round-robin labels keep classes balanced.
      const int label = static_cast<int>(i % static_cast<std::size_t>(recipe.num_classes));
      Instance in{split, label, std::vector<double>(d)};
      for (std::size_t j = 0; j < d; ++j) in.features[j] = means[static_cast<std::size_t>(label)][j] + rng.normal();
      ds.instances.push_back(std::move(in));
    }
  };
  emit(Split::Train, recipe.train);
  emit(Split::Dev, recipe.dev);
  emit(Split::Test, recipe.test);
  ds.validate();
  return ds;
}

}  // namespace ace
