#include "mtpsr/space.hpp"

#include <limits>
#include <string>

#include "mtpsr/error.hpp"

namespace mtpsr {

bool checked_pow(std::uint64_t base, int exp, std::uint64_t& out) {
  out = 1;
  for (int i = 0; i < exp; ++i) {
    if (base != 0 && out > std::numeric_limits<std::uint64_t>::max() / base) return false;
    out *= base;
  }
  return true;
}

ObsActionSpace::ObsActionSpace(int num_obs, int num_actions, int horizon,
                               std::uint64_t enumeration_cap)
    : num_obs_(num_obs), num_actions_(num_actions), horizon_(horizon) {
  if (num_obs < 1 || num_actions < 1 || horizon < 1) {
    throw ParameterError("observation, action and horizon sizes must all be >= 1");
  }
  std::uint64_t count = 0;
  if (!checked_pow(static_cast<std::uint64_t>(pairs()), horizon, count) || count > enumeration_cap) {
    throw BudgetError("trajectory space (|O||A|)^H exceeds the enumeration cap of " +
                      std::to_string(enumeration_cap));
  }
}

std::size_t ObsActionSpace::prefix_count(int len) const {
  std::size_t n = 1;
  for (int i = 0; i < len; ++i) n *= static_cast<std::size_t>(pairs());
  return n;
}

std::size_t encode_steps(const ObsActionSpace& space, std::span<const Step> steps) {
  std::size_t idx = 0;
  for (const Step& s : steps) {
    idx = idx * static_cast<std::size_t>(space.pairs()) +
          static_cast<std::size_t>(s.obs * space.num_actions() + s.action);
  }
  return idx;
}

Trajectory Trajectory::decode(const ObsActionSpace& space, std::size_t index, int length) {
  std::vector<Step> steps(static_cast<std::size_t>(length));
  const auto base = static_cast<std::size_t>(space.pairs());
  for (int i = length - 1; i >= 0; --i) {
    const auto digit = static_cast<int>(index % base);
    index /= base;
    steps[static_cast<std::size_t>(i)] = Step{digit / space.num_actions(), digit % space.num_actions()};
  }
  return Trajectory(std::move(steps));
}

std::size_t Trajectory::encode(const ObsActionSpace& space) const {
  return encode_steps(space, steps_);
}

std::vector<int> Trajectory::observations() const {
  std::vector<int> out;
  out.reserve(steps_.size());
  for (const Step& s : steps_) out.push_back(s.obs);
  return out;
}

std::vector<int> Trajectory::actions() const {
  std::vector<int> out;
  out.reserve(steps_.size());
  for (const Step& s : steps_) out.push_back(s.action);
  return out;
}

void Trajectory::check(const ObsActionSpace& space) const {
  if (steps_.size() > static_cast<std::size_t>(space.horizon())) {
    throw StructuralError("trajectory longer than the horizon");
  }
  for (const Step& s : steps_) {
    if (s.obs < 0 || s.obs >= space.num_obs() || s.action < 0 || s.action >= space.num_actions()) {
      throw StructuralError("trajectory index out of range");
    }
  }
}

}  // namespace mtpsr
