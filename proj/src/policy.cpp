#include "mtpsr/policy.hpp"

#include <algorithm>
#include <cmath>

#include "mtpsr/error.hpp"

namespace mtpsr {

bool operator==(const Composed& a, const Composed& b) {
  const bool same_prefix = (a.prefix == b.prefix) || (a.prefix && b.prefix && *a.prefix == *b.prefix);
  return same_prefix && a.switch_step == b.switch_step && a.core_action_seqs == b.core_action_seqs;
}

Policy Policy::reactive(const ObsActionSpace& space, std::vector<std::vector<int>> table) {
  if (table.size() != static_cast<std::size_t>(space.horizon())) {
    throw ParameterError("reactive table needs one row per step");
  }
  for (const auto& row : table) {
    if (row.size() != static_cast<std::size_t>(space.num_obs())) {
      throw ParameterError("reactive table row needs one action per observation");
    }
    for (int a : row) {
      if (a < 0 || a >= space.num_actions()) throw ParameterError("reactive action out of range");
    }
  }
  return Policy(space, ReactiveTable{std::move(table)});
}

Policy Policy::history_table(const ObsActionSpace& space, std::vector<std::vector<double>> probs) {
  const int H = space.horizon();
  const auto A = static_cast<std::size_t>(space.num_actions());
  if (probs.size() != static_cast<std::size_t>(H)) throw ParameterError("history table needs H steps");
  for (int h = 1; h <= H; ++h) {
    const auto& row = probs[static_cast<std::size_t>(h - 1)];
    const std::size_t contexts = space.prefix_count(h - 1) * static_cast<std::size_t>(space.num_obs());
    if (row.size() != contexts * A) throw ParameterError("history table has the wrong size");
    for (std::size_t c = 0; c < contexts; ++c) {
      double total = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        const double p = row[c * A + a];
        if (p < 0.0) throw ParameterError("negative action probability");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-12) throw ParameterError("action distribution does not sum to 1");
    }
  }
  return Policy(space, HistoryTable{std::move(probs)});
}

Policy Policy::open_loop(const ObsActionSpace& space, ActionSeq actions) {
  if (actions.size() != static_cast<std::size_t>(space.horizon())) {
    throw ParameterError("open-loop policy needs H actions");
  }
  for (int a : actions) {
    if (a < 0 || a >= space.num_actions()) throw ParameterError("open-loop action out of range");
  }
  return Policy(space, OpenLoop{std::move(actions)});
}

Policy Policy::uniform(const ObsActionSpace& space) {
  std::vector<std::vector<double>> probs;
  const double p = 1.0 / space.num_actions();
  for (int h = 1; h <= space.horizon(); ++h) {
    probs.emplace_back(space.prefix_count(h - 1) * static_cast<std::size_t>(space.pairs()), p);
  }
  return Policy(space, HistoryTable{std::move(probs)});
}

double Policy::action_prob(std::span<const Step> history, int obs, int action) const {
  const int h = static_cast<int>(history.size()) + 1;
  return std::visit(
      [&](const auto& rep) -> double {
        using T = std::decay_t<decltype(rep)>;
        if constexpr (std::is_same_v<T, ReactiveTable>) {
          return rep.action[static_cast<std::size_t>(h - 1)][static_cast<std::size_t>(obs)] == action ? 1.0 : 0.0;
        } else if constexpr (std::is_same_v<T, HistoryTable>) {
          const std::size_t hist = encode_steps(space_, history);
          const std::size_t ctx = hist * static_cast<std::size_t>(space_.num_obs()) + static_cast<std::size_t>(obs);
          return rep.probs[static_cast<std::size_t>(h - 1)]
                          [ctx * static_cast<std::size_t>(space_.num_actions()) + static_cast<std::size_t>(action)];
        } else if constexpr (std::is_same_v<T, OpenLoop>) {
          return rep.actions[static_cast<std::size_t>(h - 1)] == action ? 1.0 : 0.0;
        } else {
          if (h < rep.switch_step) return rep.prefix->action_prob(history, obs, action);
          if (h == rep.switch_step) return 1.0 / space_.num_actions();
          // conditional on the suffix played so far being a prefix of the drawn core sequence
          const auto done = static_cast<std::size_t>(h - rep.switch_step - 1);
          std::size_t consistent = 0;
          std::size_t matching = 0;
          for (const ActionSeq& seq : rep.core_action_seqs) {
            bool ok = true;
            for (std::size_t i = 0; i < done && ok; ++i) {
              ok = seq[i] == history[static_cast<std::size_t>(rep.switch_step) + i].action;
            }
            if (!ok) continue;
            ++consistent;
            if (seq[done] == action) ++matching;
          }
          return consistent == 0 ? 0.0 : static_cast<double>(matching) / static_cast<double>(consistent);
        }
      },
      rep_);
}

double Policy::prob(std::span<const Step> traj) const {
  double p = 1.0;
  for (std::size_t t = 0; t < traj.size() && p != 0.0; ++t) {
    p *= action_prob(traj.subspan(0, t), traj[t].obs, traj[t].action);
  }
  return p;
}

int Policy::sample_action(std::span<const Step> history, int obs, RngStream& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  int last_positive = 0;
  for (int a = 0; a < space_.num_actions(); ++a) {
    const double p = action_prob(history, obs, a);
    if (p > 0.0) last_positive = a;
    acc += p;
    if (u < acc) return a;
  }
  return last_positive;
}

bool Policy::is_deterministic() const {
  return std::visit(
      [&](const auto& rep) -> bool {
        using T = std::decay_t<decltype(rep)>;
        if constexpr (std::is_same_v<T, ReactiveTable> || std::is_same_v<T, OpenLoop>) {
          return true;
        } else if constexpr (std::is_same_v<T, HistoryTable>) {
          for (const auto& row : rep.probs) {
            for (double p : row) {
              if (p != 0.0 && p != 1.0) return false;
            }
          }
          return true;
        } else {
          return rep.prefix->is_deterministic() && space_.num_actions() == 1 &&
                 rep.core_action_seqs.size() == 1;
        }
      },
      rep_);
}

Policy compose_nu(const std::shared_ptr<const Policy>& prefix, int h,
                  std::vector<ActionSeq> core_action_seqs) {
  if (!prefix) throw ParameterError("composed policy needs a prefix policy");
  const ObsActionSpace& space = prefix->space();
  const int H = space.horizon();
  if (h < 1 || h > H) throw ParameterError("switch step must lie in [1, H]");
  if (core_action_seqs.empty()) throw ParameterError("core action sequence set is empty");
  for (const ActionSeq& seq : core_action_seqs) {
    if (seq.size() != static_cast<std::size_t>(H - h)) {
      throw ParameterError("core action sequence length must be H-h");
    }
    for (int a : seq) {
      if (a < 0 || a >= space.num_actions()) throw ParameterError("core action out of range");
    }
  }
  return Policy(space, Composed{prefix, h, std::move(core_action_seqs)});
}

PolicyClass::PolicyClass(std::vector<Policy> policies, std::string descriptor, bool known_unique)
    : descriptor_(std::move(descriptor)) {
  if (known_unique) {
    policies_ = std::move(policies);
  } else {
    for (Policy& p : policies) {
      if (std::find(policies_.begin(), policies_.end(), p) == policies_.end()) policies_.push_back(std::move(p));
    }
  }
  if (policies_.empty()) throw ParameterError("policy class must be non-empty");
}

Policy reactive_from_index(const ObsActionSpace& space, std::uint64_t index) {
  const int H = space.horizon();
  const int O = space.num_obs();
  const auto A = static_cast<std::uint64_t>(space.num_actions());
  std::vector<std::vector<int>> table(static_cast<std::size_t>(H), std::vector<int>(static_cast<std::size_t>(O)));
  for (int h = H - 1; h >= 0; --h) {
    for (int o = O - 1; o >= 0; --o) {
      table[static_cast<std::size_t>(h)][static_cast<std::size_t>(o)] = static_cast<int>(index % A);
      index /= A;
    }
  }
  return Policy::reactive(space, std::move(table));
}

PolicyClass enumerate_reactive(const ObsActionSpace& space, std::uint64_t budget) {
  std::uint64_t count = 0;
  if (!checked_pow(static_cast<std::uint64_t>(space.num_actions()), space.horizon() * space.num_obs(), count) ||
      count > budget) {
    throw BudgetError("reactive policy class |A|^(H|O|) exceeds the enumeration budget");
  }
  std::vector<Policy> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) out.push_back(reactive_from_index(space, i));
  return PolicyClass(std::move(out), "reactive-deterministic", true);
}

}  // namespace mtpsr
