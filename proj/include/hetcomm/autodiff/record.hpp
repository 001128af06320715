#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "hetcomm/autodiff/tensor.hpp"

namespace hetcomm::ad {

// Ordered log of primitive operations for reverse-mode differentiation.
//
// Operations are recorded only while the record is active on the calling
// thread (see ActiveRecord) and at least one input requires a gradient.
// Recording order is a topological order, so backward() walks it in reverse
// and visits each node exactly once.
class ComputationRecord {
 public:
  ComputationRecord();
  ComputationRecord(const ComputationRecord&) = delete;
  ComputationRecord& operator=(const ComputationRecord&) = delete;
  ~ComputationRecord();

  // Populates grad on every recorded node and on reachable leaves.
  // Leaf gradients accumulate; call ParameterStore::zero_grad() first.
  void backward(const Tensor& loss);

  // Drops recorded nodes and allows another backward().
  void reset();

  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }
  std::uint64_t id() const noexcept { return id_; }

  // Used by primitive ops.
  void append(const std::shared_ptr<detail::Node>& node);
  static ComputationRecord* active() noexcept;

 private:
  friend class ActiveRecord;

  std::vector<std::shared_ptr<detail::Node>> nodes_;
  std::uint64_t id_;
  std::uint64_t next_trace_ = 1;
  bool consumed_ = false;
};

// Makes a record active for the current thread for the guard's lifetime.
class ActiveRecord {
 public:
  explicit ActiveRecord(ComputationRecord& record);
  ActiveRecord(const ActiveRecord&) = delete;
  ActiveRecord& operator=(const ActiveRecord&) = delete;
  ~ActiveRecord();

 private:
  ComputationRecord* previous_;
};

// Suspends recording for the current thread.
class NoRecord {
 public:
  NoRecord();
  NoRecord(const NoRecord&) = delete;
  NoRecord& operator=(const NoRecord&) = delete;
  ~NoRecord();

 private:
  ComputationRecord* previous_;
};

}  // namespace hetcomm::ad
