#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support/gradcheck.hpp"
#include "hetcomm/autodiff/ops.hpp"
#include "hetcomm/autodiff/parameter_store.hpp"
#include "hetcomm/autodiff/record.hpp"
#include "hetcomm/error.hpp"
#include "hetcomm/random.hpp"

namespace hetcomm {
namespace {

using ad::Tensor;
using testing::finite_difference_check;
using testing::kFdTolerance;

std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(rng, lo, hi);
  return v;
}

Tensor random_param(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = ad::numel(shape);
  return Tensor::parameter(std::move(shape), random_values(n, rng, lo, hi));
}

TEST(Tensor, RejectsInconsistentShape) {
  EXPECT_THROW(Tensor::from({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor::from({0, 3}, {}), ShapeError);
  EXPECT_NO_THROW(Tensor::from({2, 3}, std::vector<double>(6)));
}

TEST(Ops, MatmulIdentity) {
  const Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor x = Tensor::from({3}, {1, 2, 3});
  const Tensor y = ad::matmul(eye, x);
  ASSERT_EQ(y.size(), 3u);
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], 2.0);
  EXPECT_EQ(y[2], 3.0);
}

TEST(Ops, TanhAtOrigin) { EXPECT_EQ(ad::tanh(Tensor::from({1}, {0.0}))[0], 0.0); }

TEST(Ops, LeakyReluPiecewise) {
  const Tensor y = ad::leaky_relu(Tensor::from({2}, {-1.0, 2.0}), 0.01);
  EXPECT_DOUBLE_EQ(y[0], -0.01);
  EXPECT_DOUBLE_EQ(y[1], 2.0);
}

TEST(Ops, ShapeErrorNamesOpAndShapes) {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({2, 3});
  try {
    ad::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.op(), "matmul");
    EXPECT_NE(e.shapes().find("[2,3]"), std::string::npos) << e.shapes();
  }
  EXPECT_THROW(ad::add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
  EXPECT_THROW(ad::slice(a, 1, 2, 5), ShapeError);
  EXPECT_THROW(ad::concat(std::vector<Tensor>{Tensor::zeros({2, 3}), Tensor::zeros({3, 3})}, 1), ShapeError);
}

TEST(Ops, BroadcastRowAndColumn) {
  const Tensor m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor row = Tensor::from({3}, {10, 20, 30});
  const Tensor col = Tensor::from({2, 1}, {100, 200});
  const Tensor a = ad::add(m, row);
  const Tensor b = ad::mul(m, col);
  EXPECT_EQ(a.at(1, 2), 36.0);
  EXPECT_EQ(b.at(1, 0), 800.0);
  EXPECT_EQ(b.at(0, 2), 300.0);
}

TEST(Ops, ForwardIsDeterministic) {
  Rng rng(3);
  const Tensor a = Tensor::from({4, 5}, random_values(20, rng));
  const Tensor b = Tensor::from({5, 3}, random_values(15, rng));
  const Tensor y1 = ad::softmax(ad::tanh(ad::matmul(a, b)));
  const Tensor y2 = ad::softmax(ad::tanh(ad::matmul(a, b)));
  for (std::size_t i = 0; i < y1.size(); ++i) EXPECT_EQ(y1[i], y2[i]);
}

TEST(Backward, QuadraticGradient) {
  const Tensor w = Tensor::parameter({2}, {1.0, 2.0});
  ad::ComputationRecord record;
  Tensor loss;
  {
    ad::ActiveRecord active(record);
    loss = ad::sum(ad::mul(w, w));
  }
  record.backward(loss);
  EXPECT_EQ(w.grad()[0], 2.0);
  EXPECT_EQ(w.grad()[1], 4.0);
}

TEST(Backward, UnreachableParameterHasZeroGrad) {
  ad::ParameterStore store;
  const Tensor& w = store.add("w", {3}, {1, 2, 3});
  const Tensor& v = store.add("v", {2}, {1, 1});
  store.zero_grad();
  ad::ComputationRecord record;
  Tensor loss;
  {
    ad::ActiveRecord active(record);
    loss = ad::sum(ad::square(v));
  }
  record.backward(loss);
  for (double g : w.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, SecondCallWithoutResetThrows) {
  const Tensor w = Tensor::parameter({1}, {3.0});
  ad::ComputationRecord record;
  Tensor loss;
  {
    ad::ActiveRecord active(record);
    loss = ad::sum(ad::square(w));
  }
  record.backward(loss);
  EXPECT_THROW(record.backward(loss), Error);
  record.reset();
  {
    ad::ActiveRecord active(record);
    loss = ad::sum(ad::square(w));
  }
  EXPECT_NO_THROW(record.backward(loss));
}

TEST(Backward, RejectsNonScalarAndForeignLoss) {
  const Tensor w = Tensor::parameter({2}, {1.0, 2.0});
  ad::ComputationRecord record;
  ad::ComputationRecord other;
  Tensor vec, scalar;
  {
    ad::ActiveRecord active(record);
    vec = ad::square(w);
    scalar = ad::sum(vec);
  }
  EXPECT_THROW(record.backward(vec), ShapeError);
  EXPECT_THROW(other.backward(scalar), Error);
}

TEST(Backward, NoRecordLeavesNothingToDifferentiate) {
  const Tensor w = Tensor::parameter({2}, {1.0, 2.0});
  ad::ComputationRecord record;
  Tensor loss;
  {
    ad::ActiveRecord active(record);
    ad::NoRecord quiet;
    loss = ad::sum(ad::square(w));
  }
  EXPECT_EQ(record.size(), 0u);
  EXPECT_FALSE(loss.trace_id().has_value());
}

// Every primitive against central differences on randomized inputs.
class PrimitiveGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(PrimitiveGradient, MatchesFiniteDifferences) {
  Rng rng(GetParam());
  const Tensor a = random_param({3, 4}, rng);
  const Tensor b = random_param({4, 2}, rng);
  const Tensor c = random_param({3, 4}, rng);
  const Tensor row = random_param({4}, rng);
  const Tensor col = random_param({3, 1}, rng);
  const Tensor w = Tensor::from({3, 2}, random_values(6, rng));
  const std::vector<std::size_t> gather = {2, 0, 2, 1};
  const std::vector<std::size_t> scatter = {1, 1, 0};
  const std::vector<std::size_t> segments = {0, 1, 0, 1, 1, 2};
  const std::vector<std::size_t> picks = {3, 0, 1};

  const std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
      {"matmul", [&] { return ad::sum(ad::mul(ad::matmul(a, b), w)); }},
      {"add", [&] { return ad::sum(ad::square(ad::add(a, row))); }},
      {"sub", [&] { return ad::sum(ad::square(ad::sub(col, a))); }},
      {"mul", [&] { return ad::sum(ad::mul(ad::mul(a, c), col)); }},
      {"scale", [&] { return ad::sum(ad::square(ad::scale(a, -1.7))); }},
      {"concat", [&] {
         const std::vector<Tensor> parts{a, c};
         return ad::sum(ad::square(ad::concat(parts, 1)));
       }},
      {"concat0", [&] {
         const std::vector<Tensor> parts{a, c};
         return ad::sum(ad::tanh(ad::concat(parts, 0)));
       }},
      {"slice", [&] { return ad::sum(ad::square(ad::slice(a, 1, 1, 3))); }},
      {"sum_axis", [&] { return ad::sum(ad::square(ad::sum(a, 0))); }},
      {"mean_axis", [&] { return ad::sum(ad::square(ad::mean(a, 1))); }},
      {"mean", [&] { return ad::square(ad::mean(ad::mul(a, c))); }},
      {"tanh", [&] { return ad::sum(ad::mul(ad::tanh(a), c)); }},
      {"sigmoid", [&] { return ad::sum(ad::mul(ad::sigmoid(a), c)); }},
      {"leaky_relu", [&] { return ad::sum(ad::mul(ad::leaky_relu(a, 0.01), c)); }},
      {"softmax", [&] { return ad::sum(ad::mul(ad::softmax(a), c)); }},
      {"gather_rows", [&] { return ad::sum(ad::square(ad::gather_rows(a, gather))); }},
      {"scatter_add_rows", [&] { return ad::sum(ad::square(ad::scatter_add_rows(a, scatter, 2))); }},
      {"segment_softmax", [&] {
         Tensor logits = ad::slice(ad::matmul(ad::concat(std::vector<Tensor>{a, c}, 0), b), 0, 0, 6);
         return ad::sum(ad::mul(ad::segment_softmax(ad::slice(logits, 1, 0, 1), segments, 3),
                                ad::slice(logits, 1, 1, 2)));
       }},
      {"pick", [&] { return ad::sum(ad::square(ad::pick(a, picks))); }},
  };
  for (const auto& [name, loss] : cases) {
    const auto report =
        finite_difference_check({{"a", a}, {"b", b}, {"c", c}, {"row", row}, {"col", col}}, loss);
    EXPECT_LT(report.worst_relative, kFdTolerance) << name << " worst tensor " << report.worst_tensor;
  }
}

INSTANTIATE_TEST_SUITE_P(RandomInputs, PrimitiveGradient, ::testing::Range<std::uint64_t>(1, 9));

TEST(Adam, DescentDirectionOnSquare) {
  ad::ParameterStore store;
  const Tensor& w = store.add("w", {1}, {1.0});
  ad::ComputationRecord record;
  Tensor loss;
  {
    ad::ActiveRecord active(record);
    loss = ad::sum(ad::square(w));
  }
  store.zero_grad();
  record.backward(loss);
  ad::adam_step(store, {0.1, 0.0});
  EXPECT_LT(w[0], 1.0);
  EXPECT_EQ(store.step_counter(), 1u);
  EXPECT_EQ(w.grad()[0], 2.0) << "gradients stay until an explicit reset";
}

TEST(Adam, ZeroLearningRateKeepsParameters) {
  ad::ParameterStore store;
  const Tensor& w = store.add("w", {2}, {0.3, -0.7});
  store.zero_grad();
  w.node()->grad = {1.0, -2.0};
  ad::adam_step(store, {0.0, 1e-5});
  EXPECT_EQ(w[0], 0.3);
  EXPECT_EQ(w[1], -0.7);
}

TEST(Adam, MissingGradientNamesParameter) {
  ad::ParameterStore store;
  store.add("encoder.weight", {1}, {1.0});
  try {
    ad::adam_step(store, {});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.weight"), std::string::npos);
  }
}

// Scalar hand computation: loss = (w - 3)^2 from w = 1, with L2 added to
// the gradient before the moment update.
TEST(Adam, TwoStepsMatchHandReference) {
  const double lr = 0.05, l2 = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double w_ref = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = 2.0 * (w_ref - 3.0) + l2 * w_ref;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    w_ref -= lr * mhat / (std::sqrt(vhat) + eps);
  }

  ad::ParameterStore store;
  const Tensor& w = store.add("w", {1}, {1.0});
  const Tensor target = Tensor::from({1}, {3.0});
  for (int t = 0; t < 2; ++t) {
    store.zero_grad();
    ad::ComputationRecord record;
    Tensor loss;
    {
      ad::ActiveRecord active(record);
      loss = ad::sum(ad::square(ad::sub(w, target)));
    }
    record.backward(loss);
    ad::adam_step(store, {lr, l2, b1, b2, eps});
  }
  EXPECT_NEAR(w[0], w_ref, 1e-15);
}

TEST(ParameterStore, RejectsDuplicateNames) {
  ad::ParameterStore store;
  store.add("a", {1}, {1.0});
  EXPECT_THROW(store.add("a", {1}, {2.0}), Error);
}

TEST(ParameterStore, SerializationRoundTripsBitExactly) {
  Rng rng(9);
  ad::ParameterStore store;
  store.add("b", {3, 2}, random_values(6, rng));
  store.add("a", {4}, random_values(4, rng));
  store.zero_grad();
  for (const auto& name : store.names()) {
    Tensor t = store.get(name);
    auto g = t.mutable_grad();
    for (auto& x : g) x = uniform(rng, -1, 1);
  }
  ad::adam_step(store, {});

  std::stringstream buf;
  store.serialize(buf);
  const ad::ParameterStore back = ad::ParameterStore::deserialize(buf);
  EXPECT_TRUE(back.values_equal(store));
  EXPECT_EQ(back.step_counter(), store.step_counter());
  for (const auto& name : store.names()) {
    EXPECT_EQ(back.entry(name).first_moment, store.entry(name).first_moment);
    EXPECT_EQ(back.entry(name).second_moment, store.entry(name).second_moment);
  }
}

TEST(Checkpoint, CarriesVersionAndMetadata) {
  const auto path = std::filesystem::temp_directory_path() / "hetcomm_unit_ckpt.bin";
  ad::ParameterStore store;
  store.add("w", {2}, {0.1, 0.2});
  ad::save_checkpoint(path, store, "{\"k\":1}");
  const auto ckpt = ad::load_checkpoint(path);
  EXPECT_EQ(ckpt.metadata, "{\"k\":1}");
  EXPECT_TRUE(ckpt.parameters.values_equal(store));

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const std::uint32_t bogus = 99;
    f.write(reinterpret_cast<const char*>(&bogus), sizeof bogus);
  }
  EXPECT_THROW(ad::load_checkpoint(path), CheckpointError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace hetcomm
