#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hetcomm {

// Legal subset of the joint action set for one agent.
class ActionMask {
 public:
  ActionMask() = default;
  explicit ActionMask(std::size_t num_actions) : legal_(num_actions, 0) {}
  static ActionMask only(std::size_t num_actions, std::size_t action) {
    ActionMask m(num_actions);
    m.set(action);
    return m;
  }
  static ActionMask all(std::size_t num_actions) {
    ActionMask m;
    m.legal_.assign(num_actions, 1);
    return m;
  }

  std::size_t size() const noexcept { return legal_.size(); }
  bool legal(std::size_t action) const noexcept { return action < legal_.size() && legal_[action] != 0; }
  void set(std::size_t action, bool value = true) { legal_.at(action) = value ? 1 : 0; }
  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto b : legal_) n += b;
    return n;
  }
  bool any() const noexcept { return count() > 0; }
  std::vector<std::size_t> legal_actions() const {
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < legal_.size(); ++a) {
      if (legal_[a]) out.push_back(a);
    }
    return out;
  }
  std::span<const std::uint8_t> bits() const noexcept { return legal_; }

  bool operator==(const ActionMask&) const = default;

 private:
  std::vector<std::uint8_t> legal_;
};

}  // namespace hetcomm
