#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mtpsr {

inline constexpr std::uint64_t kDefaultEnumerationCap = 10'000'000;

// Finite observation/action spaces and horizon of one episodic task.
class ObsActionSpace {
 public:
  ObsActionSpace() = default;
  // Throws ParameterError on zero sizes and BudgetError when (|O||A|)^H
  // exceeds `enumeration_cap`.
  ObsActionSpace(int num_obs, int num_actions, int horizon,
                 std::uint64_t enumeration_cap = kDefaultEnumerationCap);

  int num_obs() const { return num_obs_; }
  int num_actions() const { return num_actions_; }
  int horizon() const { return horizon_; }
  int pairs() const { return num_obs_ * num_actions_; }

  // (|O||A|)^len
  std::size_t prefix_count(int len) const;
  std::size_t trajectory_count() const { return prefix_count(horizon_); }

  friend bool operator==(const ObsActionSpace&, const ObsActionSpace&) = default;

 private:
  int num_obs_ = 1;
  int num_actions_ = 1;
  int horizon_ = 1;
};

struct Step {
  int obs = 0;
  int action = 0;
  friend bool operator==(const Step&, const Step&) = default;
};

// Ordered (o_1,a_1,...,o_h,a_h). Index encoding puts step 1 in the most
// significant digit with digit value obs*|A| + action, so the prefix tree is
// laid out contiguously.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<Step> steps) : steps_(std::move(steps)) {}

  static Trajectory decode(const ObsActionSpace& space, std::size_t index, int length);
  std::size_t encode(const ObsActionSpace& space) const;

  std::size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }
  const Step& operator[](std::size_t i) const { return steps_[i]; }
  const std::vector<Step>& steps() const { return steps_; }
  std::span<const Step> prefix(std::size_t len) const { return {steps_.data(), len}; }

  std::vector<int> observations() const;
  std::vector<int> actions() const;

  void push_back(Step s) { steps_.push_back(s); }

  // Throws StructuralError when an index is out of range or too long.
  void check(const ObsActionSpace& space) const;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;

 private:
  std::vector<Step> steps_;
};

std::size_t encode_steps(const ObsActionSpace& space, std::span<const Step> steps);

// Integer power with overflow detection; returns false on overflow.
bool checked_pow(std::uint64_t base, int exp, std::uint64_t& out);

}  // namespace mtpsr
