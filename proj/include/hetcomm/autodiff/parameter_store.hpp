#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hetcomm/autodiff/tensor.hpp"

namespace hetcomm::ad {

struct AdamOptions {
  double learning_rate = 2.5e-4;
  double l2_coef = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Named trainable tensors plus adaptive-moment optimizer state.
class ParameterStore {
 public:
  struct Entry {
    Tensor value;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
  };

  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  // Registers a parameter; names must be unique.
  const Tensor& add(const std::string& name, Shape shape, std::vector<double> values);

  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  const Entry& entry(std::string_view name) const;
  std::vector<std::string> names() const;
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t num_values() const;

  std::uint64_t step_counter() const noexcept { return step_counter_; }

  void zero_grad();
  // Euclidean norm over all parameter gradients (missing grads count as 0).
  double grad_norm() const;
  // Rescales gradients so their joint norm is at most max_norm.
  void clip_grad_norm(double max_norm);

  // Deep copy of values, moments and step counter.
  ParameterStore clone() const;
  // Overwrites values from a store with identical names and shapes.
  void copy_values_from(const ParameterStore& other);
  // Bit-exact comparison of names, shapes and values.
  bool values_equal(const ParameterStore& other) const;

  void serialize(std::ostream& os) const;
  static ParameterStore deserialize(std::istream& is);

 private:
  friend void adam_step(ParameterStore&, const AdamOptions&);

  Entry& mutable_entry(std::string_view name);

  std::map<std::string, Entry, std::less<>> entries_;
  std::uint64_t step_counter_ = 0;
};

// One adaptive-moment update. The L2 term l2_coef * w is added to each
// gradient before the moment update. Gradients are left in place.
// Throws if any parameter has no gradient.
void adam_step(ParameterStore& store, const AdamOptions& options);

// Versioned checkpoint container: parameter values, optimizer moments,
// step counter, and a free-form metadata string (JSON in practice).
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::string metadata;
  ParameterStore parameters;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& parameters,
                     const std::string& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hetcomm::ad
