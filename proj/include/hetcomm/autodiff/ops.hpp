#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hetcomm/autodiff/tensor.hpp"

// Differentiable primitives. All ops accept rank-1 or rank-2 tensors; a
// rank-1 tensor of extent n is viewed as a 1 x n row. Shape violations raise
// hetcomm::ShapeError naming the op and the offending shapes.
namespace hetcomm::ad {

// [m,k] x [k,n] -> [m,n]. A rank-1 right operand of extent k is a column.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise with 2-D broadcasting: each dimension must match or be 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor square(const Tensor& a);

// axis 0 stacks rows, axis 1 stacks columns.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
// Half-open [begin, end) along axis of the 2-D view.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);

// Full reduction to a scalar (shape {1}).
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Reduction along one axis of the 2-D view; the reduced axis keeps extent 1.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double negative_slope);

// While alive, fingerprints the sign pattern of every leaky_relu input
// evaluated on this thread. Two evaluations with equal signatures took the
// same linear piece everywhere, so a finite difference between them does
// not straddle a kink.
class KinkProbe {
 public:
  KinkProbe();
  KinkProbe(const KinkProbe&) = delete;
  KinkProbe& operator=(const KinkProbe&) = delete;
  ~KinkProbe();

  std::uint64_t signature() const noexcept { return signature_; }
  std::size_t inputs_seen() const noexcept { return count_; }
  void observe(std::span<const double> inputs);

 private:
  KinkProbe* previous_;
  std::uint64_t signature_ = 0xcbf29ce484222325ULL;
  std::size_t count_ = 0;
};
// Row-wise softmax.
Tensor softmax(const Tensor& a);

// out[e] = a[index[e]] (rows).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
// out[index[e]] += a[e]; output has `rows` rows.
Tensor scatter_add_rows(const Tensor& a, std::span<const std::size_t> index, std::size_t rows);
// Softmax of a column vector [E,1] within each segment; segment[e] < segments.
Tensor segment_softmax(const Tensor& a, std::span<const std::size_t> segment, std::size_t segments);
// out[r] = a[r, column[r]] as an [m,1] column.
Tensor pick(const Tensor& a, std::span<const std::size_t> column);

}  // namespace hetcomm::ad
