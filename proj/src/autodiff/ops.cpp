#include "hetcomm/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "hetcomm/autodiff/record.hpp"
#include "hetcomm/error.hpp"

namespace hetcomm::ad {

namespace {

using detail::Node;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

using Backward = std::function<void(Node&)>;

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(op, "undefined tensor");
}

Tensor emit(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
            Backward backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  auto* record = ComputationRecord::active();
  if (record != nullptr) {
    bool needs_grad = false;
    for (const Tensor* in : inputs) needs_grad = needs_grad || in->requires_grad();
    if (needs_grad) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (const Tensor* in : inputs) node->parents.push_back(in->node());
      node->backward = std::move(backward);
      record->append(node);
    }
  }
  return Tensor(std::move(node));
}

Tensor emit_many(Shape shape, std::vector<double> value, std::span<const Tensor> inputs, Backward backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  auto* record = ComputationRecord::active();
  if (record != nullptr) {
    const bool needs_grad =
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (needs_grad) {
      node->requires_grad = true;
      for (const Tensor& in : inputs) node->parents.push_back(in.node());
      node->backward = std::move(backward);
      record->append(node);
    }
  }
  return Tensor(std::move(node));
}

// Gradient buffer of a parent, or nullptr when it does not participate.
double* grad_of(Node& node, std::size_t i) {
  Node& parent = *node.parents[i];
  if (!parent.requires_grad) return nullptr;
  return parent.ensure_grad().data();
}

struct Dims {
  std::size_t rows;
  std::size_t cols;
};

Dims dims(const Tensor& t) { return {t.rows(), t.cols()}; }

std::string shapes_of(const Tensor& a, const Tensor& b) {
  return to_string(a.shape()) + " and " + to_string(b.shape());
}

Shape shape2(std::size_t rows, std::size_t cols, bool as_row) {
  if (as_row && rows == 1) return {cols};
  return {rows, cols};
}

enum class Elementwise { add, sub, mul };

// Row/column strides of a 2-D view under broadcasting (0 on a broadcast axis).
struct Strides {
  std::size_t row;
  std::size_t col;
};

Strides broadcast_strides(Dims d) { return {d.rows == 1 ? 0 : d.cols, d.cols == 1 ? std::size_t{0} : 1}; }

template <Elementwise Kind>
Tensor broadcast_op(const Tensor& a, const Tensor& b, const char* name) {
  require_defined(a, name);
  require_defined(b, name);
  const Dims da = dims(a);
  const Dims db = dims(b);
  auto compatible = [](std::size_t x, std::size_t y) { return x == y || x == 1 || y == 1; };
  if (!compatible(da.rows, db.rows) || !compatible(da.cols, db.cols)) {
    throw ShapeError(name, shapes_of(a, b));
  }
  const std::size_t rows = std::max(da.rows, db.rows);
  const std::size_t cols = std::max(da.cols, db.cols);
  const bool as_row = a.rank() == 1 && b.rank() == 1;
  const Strides sa = broadcast_strides(da);
  const Strides sb = broadcast_strides(db);

  const double* av = a.values().data();
  const double* bv = b.values().data();
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* ar = av + r * sa.row;
    const double* br = bv + r * sb.row;
    double* o = out.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = ar[c * sa.col];
      const double y = br[c * sb.col];
      if constexpr (Kind == Elementwise::add) o[c] = x + y;
      if constexpr (Kind == Elementwise::sub) o[c] = x - y;
      if constexpr (Kind == Elementwise::mul) o[c] = x * y;
    }
  }

  return emit(shape2(rows, cols, as_row), std::move(out), {&a, &b}, [sa, sb, rows, cols](Node& self) {
    const double* g = self.grad.data();
    const double* av = self.parents[0]->value.data();
    const double* bv = self.parents[1]->value.data();
    double* ga = grad_of(self, 0);
    double* gb = grad_of(self, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gr = g + r * cols;
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t ia = r * sa.row + c * sa.col;
        const std::size_t ib = r * sb.row + c * sb.col;
        if constexpr (Kind == Elementwise::add) {
          if (ga) ga[ia] += gr[c];
          if (gb) gb[ib] += gr[c];
        }
        if constexpr (Kind == Elementwise::sub) {
          if (ga) ga[ia] += gr[c];
          if (gb) gb[ib] -= gr[c];
        }
        if constexpr (Kind == Elementwise::mul) {
          if (ga) ga[ia] += gr[c] * bv[ib];
          if (gb) gb[ib] += gr[c] * av[ia];
        }
      }
    }
  });
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
  require_defined(a, name);
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return emit(a.shape(), std::move(out), {&a}, [deriv](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += self.grad[i] * deriv(x[i], self.value[i]);
  });
}

void check_index(std::span<const std::size_t> index, std::size_t bound, const char* op, const char* what) {
  for (auto i : index) {
    if (i >= bound) {
      throw ShapeError(op, std::string(what) + " index " + std::to_string(i) + " out of range " +
                               std::to_string(bound));
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 && a.rank() != 1) throw ShapeError("matmul", shapes_of(a, b));
  const Dims da = dims(a);
  // A rank-1 right operand acts as a column vector.
  const Dims db = b.rank() == 1 ? Dims{b.size(), 1} : dims(b);
  if (da.cols != db.rows) throw ShapeError("matmul", shapes_of(a, b));
  const std::size_t m = da.rows, k = da.cols, n = db.cols;

  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);

  Shape shape = b.rank() == 1 ? Shape{m} : Shape{m, n};
  if (b.rank() == 1 && a.rank() == 1) shape = {1};
  return emit(std::move(shape), std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const ConstMap g(self.grad.data(), m, n);
    if (double* ga = grad_of(self, 0)) {
      MutMap(ga, m, k).noalias() += g * ConstMap(self.parents[1]->value.data(), k, n).transpose();
    }
    if (double* gb = grad_of(self, 1)) {
      MutMap(gb, k, n).noalias() += ConstMap(self.parents[0]->value.data(), m, k).transpose() * g;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return broadcast_op<Elementwise::add>(a, b, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return broadcast_op<Elementwise::sub>(a, b, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return broadcast_op<Elementwise::mul>(a, b, "mul"); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

namespace {
thread_local KinkProbe* g_kink_probe = nullptr;
}  // namespace

KinkProbe::KinkProbe() : previous_(g_kink_probe) { g_kink_probe = this; }
KinkProbe::~KinkProbe() { g_kink_probe = previous_; }

void KinkProbe::observe(std::span<const double> inputs) {
  for (double x : inputs) {
    // FNV-1a over the sign bits.
    signature_ = (signature_ ^ (x >= 0.0 ? 1u : 0u)) * 0x100000001b3ULL;
    ++count_;
  }
}

Tensor leaky_relu(const Tensor& a, double negative_slope) {
  if (g_kink_probe != nullptr && a.defined()) g_kink_probe->observe(a.values());
  return unary(
      a, "leaky_relu", [negative_slope](double x) { return x >= 0.0 ? x : negative_slope * x; },
      [negative_slope](double x, double) { return x >= 0.0 ? 1.0 : negative_slope; });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat", "no inputs");
  if (axis > 1) throw ShapeError("concat", "axis must be 0 or 1");
  for (const auto& p : parts) require_defined(p, "concat");
  std::string shapes;
  for (const auto& p : parts) shapes += to_string(p.shape()) + " ";

  std::vector<Dims> ds;
  for (const auto& p : parts) ds.push_back(dims(p));
  std::size_t rows = 0, cols = 0;
  if (axis == 0) {
    cols = ds[0].cols;
    for (const auto& d : ds) {
      if (d.cols != cols) throw ShapeError("concat", shapes);
      rows += d.rows;
    }
  } else {
    rows = ds[0].rows;
    for (const auto& d : ds) {
      if (d.rows != rows) throw ShapeError("concat", shapes);
      cols += d.cols;
    }
  }

  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto v = parts[p].values();
    const Dims d = ds[p];
    for (std::size_t r = 0; r < d.rows; ++r) {
      for (std::size_t c = 0; c < d.cols; ++c) {
        const std::size_t dst = axis == 0 ? (offset + r) * cols + c : r * cols + offset + c;
        out[dst] = v[r * d.cols + c];
      }
    }
    offset += axis == 0 ? d.rows : d.cols;
  }

  return emit_many({rows, cols}, std::move(out), parts, [ds, axis, cols](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < ds.size(); ++p) {
      const Dims d = ds[p];
      if (double* gp = grad_of(self, p)) {
        for (std::size_t r = 0; r < d.rows; ++r) {
          for (std::size_t c = 0; c < d.cols; ++c) {
            const std::size_t src = axis == 0 ? (offset + r) * cols + c : r * cols + offset + c;
            gp[r * d.cols + c] += self.grad[src];
          }
        }
      }
      offset += axis == 0 ? d.rows : d.cols;
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  require_defined(a, "slice");
  const Dims d = dims(a);
  const std::size_t extent = axis == 0 ? d.rows : d.cols;
  if (axis > 1 || begin >= end || end > extent) {
    throw ShapeError("slice", to_string(a.shape()) + " axis " + std::to_string(axis) + " range [" +
                                  std::to_string(begin) + "," + std::to_string(end) + ")");
  }
  const std::size_t rows = axis == 0 ? end - begin : d.rows;
  const std::size_t cols = axis == 1 ? end - begin : d.cols;
  const auto v = a.values();
  std::vector<double> out(rows * cols);
  const std::size_t r0 = axis == 0 ? begin : 0;
  const std::size_t c0 = axis == 1 ? begin : 0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = v[(r0 + r) * d.cols + c0 + c];
  }
  return emit(shape2(rows, cols, a.rank() == 1), std::move(out), {&a},
              [d, rows, cols, r0, c0](Node& self) {
                double* ga = grad_of(self, 0);
                if (!ga) return;
                for (std::size_t r = 0; r < rows; ++r) {
                  for (std::size_t c = 0; c < cols; ++c) ga[(r0 + r) * d.cols + c0 + c] += self.grad[r * cols + c];
                }
              });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double total = 0.0;
  for (double x : a.values()) total += x;
  return emit({1}, {total}, {&a}, [](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum(const Tensor& a, std::size_t axis) {
  require_defined(a, "sum");
  if (axis > 1) throw ShapeError("sum", "axis must be 0 or 1 for " + to_string(a.shape()));
  const Dims d = dims(a);
  const auto v = a.values();
  const std::size_t rows = axis == 0 ? 1 : d.rows;
  const std::size_t cols = axis == 1 ? 1 : d.cols;
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t r = 0; r < d.rows; ++r) {
    for (std::size_t c = 0; c < d.cols; ++c) {
      out[axis == 0 ? c : r] += v[r * d.cols + c];
    }
  }
  return emit({rows, cols}, std::move(out), {&a}, [d, axis](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t r = 0; r < d.rows; ++r) {
      for (std::size_t c = 0; c < d.cols; ++c) ga[r * d.cols + c] += self.grad[axis == 0 ? c : r];
    }
  });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  require_defined(a, "mean");
  const Dims d = dims(a);
  const double n = static_cast<double>(axis == 0 ? d.rows : d.cols);
  return scale(sum(a, axis), 1.0 / n);
}

Tensor softmax(const Tensor& a) {
  require_defined(a, "softmax");
  const Dims d = dims(a);
  const auto v = a.values();
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < d.rows; ++r) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < d.cols; ++c) peak = std::max(peak, v[r * d.cols + c]);
    double total = 0.0;
    for (std::size_t c = 0; c < d.cols; ++c) {
      out[r * d.cols + c] = std::exp(v[r * d.cols + c] - peak);
      total += out[r * d.cols + c];
    }
    for (std::size_t c = 0; c < d.cols; ++c) out[r * d.cols + c] /= total;
  }
  return emit(a.shape(), std::move(out), {&a}, [d](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t r = 0; r < d.rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d.cols; ++c) dot += self.grad[r * d.cols + c] * self.value[r * d.cols + c];
      for (std::size_t c = 0; c < d.cols; ++c) {
        const std::size_t i = r * d.cols + c;
        ga[i] += self.value[i] * (self.grad[i] - dot);
      }
    }
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  require_defined(a, "gather_rows");
  if (index.empty()) throw ShapeError("gather_rows", "empty index over " + to_string(a.shape()));
  const Dims d = dims(a);
  check_index(index, d.rows, "gather_rows", "row");
  std::vector<double> out(index.size() * d.cols);
  const auto v = a.values();
  for (std::size_t e = 0; e < index.size(); ++e) {
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(index[e] * d.cols), d.cols,
                out.begin() + static_cast<std::ptrdiff_t>(e * d.cols));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return emit({index.size(), d.cols}, std::move(out), {&a}, [idx = std::move(idx), d](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t e = 0; e < idx.size(); ++e) {
      for (std::size_t c = 0; c < d.cols; ++c) ga[idx[e] * d.cols + c] += self.grad[e * d.cols + c];
    }
  });
}

Tensor scatter_add_rows(const Tensor& a, std::span<const std::size_t> index, std::size_t rows) {
  require_defined(a, "scatter_add_rows");
  const Dims d = dims(a);
  if (index.size() != d.rows) {
    throw ShapeError("scatter_add_rows",
                     to_string(a.shape()) + " with " + std::to_string(index.size()) + " indices");
  }
  if (rows == 0) throw ShapeError("scatter_add_rows", "output must have at least one row");
  check_index(index, rows, "scatter_add_rows", "target");
  std::vector<double> out(rows * d.cols, 0.0);
  const auto v = a.values();
  for (std::size_t e = 0; e < d.rows; ++e) {
    for (std::size_t c = 0; c < d.cols; ++c) out[index[e] * d.cols + c] += v[e * d.cols + c];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return emit({rows, d.cols}, std::move(out), {&a}, [idx = std::move(idx), d](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t e = 0; e < idx.size(); ++e) {
      for (std::size_t c = 0; c < d.cols; ++c) ga[e * d.cols + c] += self.grad[idx[e] * d.cols + c];
    }
  });
}

Tensor segment_softmax(const Tensor& a, std::span<const std::size_t> segment, std::size_t segments) {
  require_defined(a, "segment_softmax");
  const Dims d = dims(a);
  if (d.cols != 1 || segment.size() != d.rows) {
    throw ShapeError("segment_softmax",
                     to_string(a.shape()) + " with " + std::to_string(segment.size()) + " segment ids");
  }
  check_index(segment, segments, "segment_softmax", "segment");
  const auto v = a.values();
  std::vector<double> peak(segments, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < d.rows; ++e) peak[segment[e]] = std::max(peak[segment[e]], v[e]);
  std::vector<double> total(segments, 0.0);
  std::vector<double> out(d.rows);
  for (std::size_t e = 0; e < d.rows; ++e) {
    out[e] = std::exp(v[e] - peak[segment[e]]);
    total[segment[e]] += out[e];
  }
  for (std::size_t e = 0; e < d.rows; ++e) out[e] /= total[segment[e]];

  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return emit(a.shape(), std::move(out), {&a}, [seg = std::move(seg), segments](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    std::vector<double> dot(segments, 0.0);
    for (std::size_t e = 0; e < seg.size(); ++e) dot[seg[e]] += self.grad[e] * self.value[e];
    for (std::size_t e = 0; e < seg.size(); ++e) ga[e] += self.value[e] * (self.grad[e] - dot[seg[e]]);
  });
}

Tensor pick(const Tensor& a, std::span<const std::size_t> column) {
  require_defined(a, "pick");
  const Dims d = dims(a);
  if (column.size() != d.rows) {
    throw ShapeError("pick", to_string(a.shape()) + " with " + std::to_string(column.size()) + " columns");
  }
  check_index(column, d.cols, "pick", "column");
  std::vector<double> out(d.rows);
  const auto v = a.values();
  for (std::size_t r = 0; r < d.rows; ++r) out[r] = v[r * d.cols + column[r]];
  std::vector<std::size_t> cols(column.begin(), column.end());
  return emit({d.rows, 1}, std::move(out), {&a}, [cols = std::move(cols), d](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t r = 0; r < d.rows; ++r) ga[r * d.cols + cols[r]] += self.grad[r];
  });
}

}  // namespace hetcomm::ad
