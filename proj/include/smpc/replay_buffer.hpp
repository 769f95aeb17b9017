#pragma once

// Transition store with sample-with-removal and reinsertion, so that the
// warm-start plan of a transition can be refined and put back.
//
// Stored items live in a dense vector (uniform sampling is O(1)); the age
// order used for eviction is kept in a min-heap of insertion ids with lazy
// deletion. Outstanding (sampled, not yet reinserted) transitions occupy no
// slot and can never be evicted.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <queue>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "smpc/errors.hpp"
#include "smpc/planner.hpp"
#include "smpc/random.hpp"

namespace smpc {

struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  double cost = 0.0;
  Eigen::VectorXd next_state;
  bool done = false;  // absorbing: bootstrap with zero beyond next_state
  Plan plan;          // warm start anchored at next_state
  std::uint64_t id = 0;           // assigned by the buffer on push
  std::uint32_t refinements = 0;  // planner passes applied to `plan`
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw BufferError("capacity must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::size_t outstanding() const { return outstanding_.size(); }
  std::uint64_t push_count() const { return pushes_; }
  std::uint64_t eviction_count() const { return evictions_; }
  const std::vector<Transition>& items() const { return items_; }

  void push(Transition t) {
    t.id = next_id_++;
    ++pushes_;
    store(std::move(t));
  }

  // B distinct transitions chosen uniformly and removed from the buffer.
  std::vector<Transition> sample_remove(std::size_t batch, Rng& rng) {
    check_batch(batch);
    std::vector<Transition> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
      const std::size_t k = pick(rng);
      outstanding_.insert(items_[k].id);
      out.push_back(take(k));
    }
    return out;
  }

  // B distinct transitions copied out; the buffer is left untouched.
  std::vector<Transition> sample_copy(std::size_t batch, Rng& rng) const {
    check_batch(batch);
    std::vector<std::size_t> idx(items_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<Transition> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
      out.push_back(items_[idx[i]]);
    }
    return out;
  }

  // Returns previously sampled transitions, typically with refined plans.
  // When the buffer has filled up in the meantime the oldest items make room.
  void reinsert(std::vector<Transition> batch) {
    for (const auto& t : batch) {
      if (!outstanding_.contains(t.id)) {
        throw BufferError("transition " + std::to_string(t.id) +
                          " was not sampled from this buffer");
      }
    }
    for (auto& t : batch) {
      outstanding_.erase(t.id);
      store(std::move(t));
    }
  }

  double mean_refinements() const {
    if (items_.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& t : items_) sum += t.refinements;
    return sum / static_cast<double>(items_.size());
  }

  void clear() {
    items_.clear();
    slot_of_.clear();
    outstanding_.clear();
    age_ = decltype(age_){};
  }

 private:
  void check_batch(std::size_t batch) const {
    if (batch == 0 || batch > items_.size()) {
      throw BufferError("cannot sample " + std::to_string(batch) +
                        " transitions from a buffer of size " +
                        std::to_string(items_.size()));
    }
  }

  void store(Transition t) {
    while (items_.size() >= capacity_) evict_oldest();
    if (age_.size() > 2 * capacity_ + 1024) compact_age();
    age_.push(t.id);
    slot_of_[t.id] = items_.size();
    items_.push_back(std::move(t));
  }

  void evict_oldest() {
    while (!age_.empty()) {
      const std::uint64_t id = age_.top();
      age_.pop();
      auto it = slot_of_.find(id);
      if (it == slot_of_.end()) continue;  // stale: sampled out earlier
      take(it->second);
      ++evictions_;
      return;
    }
    throw BufferError("buffer full but nothing to evict");
  }

  // Drops heap entries of ids that are no longer stored. Outstanding ids are
  // pushed again when reinserted.
  void compact_age() {
    std::vector<std::uint64_t> live;
    live.reserve(items_.size());
    for (const auto& t : items_) live.push_back(t.id);
    age_ = decltype(age_)(std::greater<>{}, std::move(live));
  }

  // Swap-removes slot k.
  Transition take(std::size_t k) {
    Transition t = std::move(items_[k]);
    slot_of_.erase(t.id);
    if (k + 1 != items_.size()) {
      items_[k] = std::move(items_.back());
      slot_of_[items_[k].id] = k;
    }
    items_.pop_back();
    return t;
  }

  std::size_t capacity_;
  std::vector<Transition> items_;
  std::unordered_map<std::uint64_t, std::size_t> slot_of_;
  std::unordered_set<std::uint64_t> outstanding_;
  std::priority_queue<std::uint64_t, std::vector<std::uint64_t>,
                      std::greater<>>
      age_;
  std::uint64_t next_id_ = 0;
  std::uint64_t pushes_ = 0;
  std::uint64_t evictions_ = 0;
};

}  // namespace smpc
