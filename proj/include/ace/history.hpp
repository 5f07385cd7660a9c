#pragma once

#include <cstddef>
#include <optional>
#include <unordered_map>
#include <vector>

#include "ace/mask.hpp"

namespace ace {

/// Deduplicated record of evaluated masks. Each mask keeps the highest score
/// it ever received and the timestep at which it was first seen; iteration
/// follows first-seen order.
class SearchHistory {
 public:
  struct Entry {
    Mask mask;
    double score;
    std::size_t first_timestep;
  };

  /// Inserts or upgrades. Returns true if the mask was not present before.
  bool record(const Mask& mask, double score, std::size_t timestep) {
    if (!entries_.empty() && mask.size() != entries_.front().mask.size()) {
      throw Error(ErrorCode::LengthMismatch, "history holds masks of length " +
                                                 std::to_string(entries_.front().mask.size()));
    }
    if (auto it = index_.find(mask); it != index_.end()) {
      auto& e = entries_[it->second];
      if (score > e.score) e.score = score;
      return false;
    }
    index_.emplace(mask, entries_.size());
    entries_.push_back({mask, score, timestep});
    return true;
  }

  std::optional<double> score_of(const Mask& mask) const {
    auto it = index_.find(mask);
    if (it == index_.end()) return std::nullopt;
    return entries_[it->second].score;
  }

  bool contains(const Mask& mask) const { return index_.contains(mask); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t size() const noexcept { return entries_.size(); }

  /// Entries in first-seen order.
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  /// Highest-scoring entry; ties go to the earliest first-seen timestep.
  const Entry& best() const {
    if (entries_.empty()) throw Error(ErrorCode::EmptyLog, "history is empty");
    const Entry* best = &entries_.front();
    for (const auto& e : entries_) {
      if (e.score > best->score) best = &e;
    }
    return *best;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<Mask, std::size_t> index_;
};

}  // namespace ace
