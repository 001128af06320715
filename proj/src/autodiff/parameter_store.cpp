#include "hetcomm/autodiff/parameter_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "hetcomm/error.hpp"

namespace hetcomm::ad {

const Tensor& ParameterStore::add(const std::string& name, Shape shape, std::vector<double> values) {
  if (entries_.contains(name)) throw Error("duplicate parameter name: " + name);
  Entry entry;
  entry.value = Tensor::parameter(std::move(shape), std::move(values));
  entry.first_moment.assign(entry.value.size(), 0.0);
  entry.second_moment.assign(entry.value.size(), 0.0);
  return entries_.emplace(name, std::move(entry)).first->second.value;
}

bool ParameterStore::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

const ParameterStore::Entry& ParameterStore::entry(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error("unknown parameter: " + std::string(name));
  return it->second;
}

ParameterStore::Entry& ParameterStore::mutable_entry(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error("unknown parameter: " + std::string(name));
  return it->second;
}

const Tensor& ParameterStore::get(std::string_view name) const { return entry(name).value; }

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::num_values() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, e] : entries_) e.value.zero_grad();
}

double ParameterStore::grad_norm() const {
  double total = 0.0;
  for (const auto& [_, e] : entries_) {
    for (double g : e.value.grad()) total += g * g;
  }
  return std::sqrt(total);
}

void ParameterStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm <= max_norm || norm == 0.0) return;
  const double factor = max_norm / norm;
  for (auto& [_, e] : entries_) {
    if (!e.value.has_grad()) continue;
    for (double& g : e.value.mutable_grad()) g *= factor;
  }
}

ParameterStore ParameterStore::clone() const {
  ParameterStore out;
  for (const auto& [name, e] : entries_) {
    Entry copy;
    copy.value = e.value.clone();
    copy.first_moment = e.first_moment;
    copy.second_moment = e.second_moment;
    out.entries_.emplace(name, std::move(copy));
  }
  out.step_counter_ = step_counter_;
  return out;
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  if (other.entries_.size() != entries_.size()) throw Error("copy_values_from: parameter sets differ");
  for (auto& [name, e] : entries_) {
    const Tensor& src = other.get(name);
    if (src.shape() != e.value.shape()) {
      throw ShapeError("copy_values_from", name + " " + to_string(e.value.shape()) + " vs " +
                                               to_string(src.shape()));
    }
    std::ranges::copy(src.values(), e.value.mutable_values().begin());
  }
}

bool ParameterStore::values_equal(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (const auto& [name, e] : entries_) {
    auto it = other.entries_.find(name);
    if (it == other.entries_.end()) return false;
    const Tensor& o = it->second.value;
    if (o.shape() != e.value.shape()) return false;
    if (std::memcmp(o.values().data(), e.value.values().data(), o.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

void adam_step(ParameterStore& store, const AdamOptions& options) {
  for (auto& [name, e] : store.entries_) {
    if (!e.value.has_grad()) throw Error("adam_step: parameter has no gradient: " + name);
  }
  store.step_counter_ += 1;
  const double t = static_cast<double>(store.step_counter_);
  const double bias1 = 1.0 - std::pow(options.beta1, t);
  const double bias2 = 1.0 - std::pow(options.beta2, t);
  for (auto& [name, e] : store.entries_) {
    auto w = e.value.mutable_values();
    const auto g = e.value.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + options.l2_coef * w[i];
      e.first_moment[i] = options.beta1 * e.first_moment[i] + (1.0 - options.beta1) * gi;
      e.second_moment[i] = options.beta2 * e.second_moment[i] + (1.0 - options.beta2) * gi * gi;
      const double m_hat = e.first_moment[i] / bias1;
      const double v_hat = e.second_moment[i] / bias2;
      w[i] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.epsilon);
    }
  }
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian hosts");

constexpr char kMagic[4] = {'H', 'C', 'K', 'P'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("truncated parameter stream");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const auto n = read_pod<std::uint64_t>(is);
  if (n > (1ull << 32)) throw CheckpointError("implausible string length in parameter stream");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw CheckpointError("truncated parameter stream");
  return s;
}

void write_doubles(std::ostream& os, std::span<const double> v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& is, std::size_t n) {
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw CheckpointError("truncated parameter stream");
  return v;
}

}  // namespace

void ParameterStore::serialize(std::ostream& os) const {
  write_pod<std::uint64_t>(os, step_counter_);
  write_pod<std::uint64_t>(os, entries_.size());
  for (const auto& [name, e] : entries_) {
    write_string(os, name);
    const Shape& shape = e.value.shape();
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) write_pod<std::uint64_t>(os, d);
    write_doubles(os, e.value.values());
    write_doubles(os, e.first_moment);
    write_doubles(os, e.second_moment);
  }
}

ParameterStore ParameterStore::deserialize(std::istream& is) {
  ParameterStore store;
  store.step_counter_ = read_pod<std::uint64_t>(is);
  const auto count = read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = read_string(is);
    const auto rank = read_pod<std::uint32_t>(is);
    if (rank == 0 || rank > 2) throw CheckpointError("bad rank for parameter " + name);
    Shape shape(rank);
    for (auto& d : shape) d = read_pod<std::uint64_t>(is);
    const std::size_t n = numel(shape);
    if (n == 0 || n > (1ull << 32)) throw CheckpointError("bad shape for parameter " + name);
    std::vector<double> values = read_doubles(is, n);
    store.add(name, shape, std::move(values));
    Entry& e = store.mutable_entry(name);
    e.first_moment = read_doubles(is, n);
    e.second_moment = read_doubles(is, n);
  }
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& parameters,
                     const std::string& metadata) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, Checkpoint::kFormatVersion);
  write_string(os, metadata);
  parameters.serialize(os);
  if (!os) throw CheckpointError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
  char magic[4];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint file: " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(is);
  if (version != Checkpoint::kFormatVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.metadata = read_string(is);
  ckpt.parameters = ParameterStore::deserialize(is);
  return ckpt;
}

}  // namespace hetcomm::ad
