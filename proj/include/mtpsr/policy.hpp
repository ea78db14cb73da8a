#pragma once

#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mtpsr/psr_model.hpp"
#include "mtpsr/rng.hpp"
#include "mtpsr/space.hpp"

namespace mtpsr {

class Policy;

struct ReactiveTable {
  std::vector<std::vector<int>> action;  // [h-1][o]
  friend bool operator==(const ReactiveTable&, const ReactiveTable&) = default;
};

// Arbitrary history-dependent stochastic policy. probs[h-1] is laid out as
// [history index of tau_{h-1}][o][a].
struct HistoryTable {
  std::vector<std::vector<double>> probs;
  friend bool operator==(const HistoryTable&, const HistoryTable&) = default;
};

struct OpenLoop {
  ActionSeq actions;
  friend bool operator==(const OpenLoop&, const OpenLoop&) = default;
};

// nu_h(prefix, u_{A x Q_h^A}): prefix for steps < h, a uniform action at step
// h, then one uniformly drawn core action sequence played open-loop.
struct Composed {
  std::shared_ptr<const Policy> prefix;
  int switch_step = 1;
  std::vector<ActionSeq> core_action_seqs;
  friend bool operator==(const Composed& a, const Composed& b);
};

class Policy {
 public:
  enum class Kind { Reactive, HistoryTable, OpenLoop, Composed };

  static Policy reactive(const ObsActionSpace& space, std::vector<std::vector<int>> table);
  static Policy history_table(const ObsActionSpace& space, std::vector<std::vector<double>> probs);
  static Policy open_loop(const ObsActionSpace& space, ActionSeq actions);
  static Policy uniform(const ObsActionSpace& space);

  Kind kind() const { return static_cast<Kind>(rep_.index()); }
  const ObsActionSpace& space() const { return space_; }

  // pi_h(action | history, obs) for h = history.size() + 1.
  double action_prob(std::span<const Step> history, int obs, int action) const;

  // pi(tau_h) = prod_t pi_t(a_t | tau_{t-1}, o_t) over the given steps.
  double prob(std::span<const Step> traj) const;
  double prob(const Trajectory& traj) const { return prob(traj.steps()); }

  int sample_action(std::span<const Step> history, int obs, RngStream& rng) const;

  bool is_deterministic() const;

  const ReactiveTable* as_reactive() const { return std::get_if<ReactiveTable>(&rep_); }
  const Composed* as_composed() const { return std::get_if<Composed>(&rep_); }
  const OpenLoop* as_open_loop() const { return std::get_if<OpenLoop>(&rep_); }
  const HistoryTable* as_history_table() const { return std::get_if<HistoryTable>(&rep_); }

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  using Rep = std::variant<ReactiveTable, HistoryTable, OpenLoop, Composed>;
  Policy(ObsActionSpace space, Rep rep) : space_(space), rep_(std::move(rep)) {}
  friend Policy compose_nu(const std::shared_ptr<const Policy>& prefix, int h,
                           std::vector<ActionSeq> core_action_seqs);

  ObsActionSpace space_;
  Rep rep_;
};

// Throws ParameterError for h outside [1,H], an empty core set, or a core
// sequence whose length is not H-h.
Policy compose_nu(const std::shared_ptr<const Policy>& prefix, int h,
                  std::vector<ActionSeq> core_action_seqs);

class PolicyClass {
 public:
  // Removes duplicates (first occurrence kept) unless the caller vouches for
  // uniqueness; throws ParameterError if empty.
  PolicyClass(std::vector<Policy> policies, std::string descriptor, bool known_unique = false);

  std::size_t size() const { return policies_.size(); }
  const Policy& operator[](std::size_t i) const { return policies_[i]; }
  const std::vector<Policy>& policies() const { return policies_; }
  const std::string& descriptor() const { return descriptor_; }
  const ObsActionSpace& space() const { return policies_.front().space(); }

 private:
  std::vector<Policy> policies_;
  std::string descriptor_;
};

// All |A|^(H|O|) deterministic reactive policies. Index i encodes the table
// with entry (h=1, o=0) as the most significant base-|A| digit.
PolicyClass enumerate_reactive(const ObsActionSpace& space,
                               std::uint64_t budget = kDefaultEnumerationCap);

Policy reactive_from_index(const ObsActionSpace& space, std::uint64_t index);

}  // namespace mtpsr
