#include "hetcomm/autodiff/record.hpp"

#include <atomic>

#include "hetcomm/error.hpp"

namespace hetcomm::ad {

namespace {

thread_local ComputationRecord* g_active = nullptr;
std::atomic<std::uint64_t> g_next_record_id{1};

}  // namespace

ComputationRecord::ComputationRecord() : id_(g_next_record_id.fetch_add(1)) {}

ComputationRecord::~ComputationRecord() {
  if (g_active == this) g_active = nullptr;
}

ComputationRecord* ComputationRecord::active() noexcept { return g_active; }

void ComputationRecord::append(const std::shared_ptr<detail::Node>& node) {
  node->trace_id = (id_ << 32) | next_trace_++;
  nodes_.push_back(node);
}

void ComputationRecord::backward(const Tensor& loss) {
  if (consumed_) throw Error("backward called twice on the same computation record without reset");
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward", "loss must be a scalar, got " +
                                     (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
  }
  const auto& root = loss.node();
  if (root->trace_id == 0 || (root->trace_id >> 32) != id_) {
    throw Error("backward: loss was not produced under this computation record");
  }
  consumed_ = true;

  for (auto& node : nodes_) node->grad.assign(node->value.size(), 0.0);
  root->grad[0] = 1.0;

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node& node = **it;
    if (node.backward) node.backward(node);
  }
}

void ComputationRecord::reset() {
  for (auto& node : nodes_) {
    node->backward = nullptr;
    node->parents.clear();
  }
  nodes_.clear();
  consumed_ = false;
}

ActiveRecord::ActiveRecord(ComputationRecord& record) : previous_(g_active) { g_active = &record; }
ActiveRecord::~ActiveRecord() { g_active = previous_; }

NoRecord::NoRecord() : previous_(g_active) { g_active = nullptr; }
NoRecord::~NoRecord() { g_active = previous_; }

}  // namespace hetcomm::ad
