#include "hetcomm/autodiff/tensor.hpp"

#include <sstream>

#include "hetcomm/error.hpp"

namespace hetcomm::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape, std::size_t n_values, const char* where) {
  if (shape.empty() || shape.size() > 2) {
    throw ShapeError(where, "rank must be 1 or 2, got " + to_string(shape));
  }
  for (auto d : shape) {
    if (d == 0) throw ShapeError(where, "extents must be positive, got " + to_string(shape));
  }
  if (numel(shape) != n_values) {
    throw ShapeError(where, to_string(shape) + " vs " + std::to_string(n_values) + " values");
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const auto n = numel(shape);
  return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  check_shape(shape, values.size(), "tensor");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return node_->shape.size() == 1 ? 1 : node_->shape[0]; }
std::size_t Tensor::cols() const { return node_->shape.back(); }

std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item", "expected one element, got " + to_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) return {};
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

std::optional<std::uint64_t> Tensor::trace_id() const {
  if (node_->trace_id == 0) return std::nullopt;
  return node_->trace_id;
}

Tensor Tensor::detach() const { return from(node_->shape, node_->value); }

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

}  // namespace hetcomm::ad
