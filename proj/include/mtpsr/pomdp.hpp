#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mtpsr/psr_model.hpp"
#include "mtpsr/rng.hpp"

namespace mtpsr {

// T_h(a) for h in [1, H-1]; entry (s', s) is T_h(s' | s, a). Columns sum to 1.
struct TransitionKernel {
  std::vector<std::vector<Matrix>> by_step;  // [h-1][a]
  const Matrix& at(int h, int a) const {
    return by_step[static_cast<std::size_t>(h - 1)][static_cast<std::size_t>(a)];
  }
};

// O_h for h in [1, H]; entry (o, s) is O_h(o | s). Columns sum to 1.
struct EmissionModel {
  std::vector<Matrix> by_step;  // [h-1]
  const Matrix& at(int h) const { return by_step[static_cast<std::size_t>(h - 1)]; }
};

// Tabular POMDP ground truth. Transition and emission tables are held by
// shared pointer so tasks of one family can share the identical object.
class TabularPomdp {
 public:
  // Throws ValidationError if any table is not column-stochastic or the
  // initial distribution is not a probability vector.
  TabularPomdp(ObsActionSpace space, int num_states,
               std::shared_ptr<const TransitionKernel> transitions,
               std::shared_ptr<const EmissionModel> emissions, Vector init,
               const Tolerances& tol = default_tolerances());

  const ObsActionSpace& space() const { return space_; }
  int num_states() const { return num_states_; }
  const TransitionKernel& transitions() const { return *transitions_; }
  const EmissionModel& emissions() const { return *emissions_; }
  const std::shared_ptr<const TransitionKernel>& transitions_ptr() const { return transitions_; }
  const std::shared_ptr<const EmissionModel>& emissions_ptr() const { return emissions_; }
  const Vector& init() const { return init_; }

 private:
  ObsActionSpace space_;
  int num_states_;
  std::shared_ptr<const TransitionKernel> transitions_;
  std::shared_ptr<const EmissionModel> emissions_;
  Vector init_;
};

// P(o_{1:H} | a_{1:H}) by normalized Bayes filtering over hidden states.
double forward_prob(const TabularPomdp& pomdp, const Trajectory& traj);

// PSR with d_h = |S|, M_h(o,a) = T_h(a) diag(O_h(o|.)) for h < H,
// M_H(o,a) = diag(O_H(o|.)), phi_H = 1, psi_0 = mu_0.
PsrModel pomdp_to_psr(const TabularPomdp& pomdp);

// Coordinate-wise uniform^sharpness, then column-normalized.
Matrix random_stochastic(int rows, int cols, RngStream& rng, double sharpness = 1.0);
std::shared_ptr<const TransitionKernel> random_transitions(const ObsActionSpace& space, int num_states,
                                                           RngStream& rng, double sharpness = 1.0);
std::shared_ptr<const EmissionModel> random_emissions(const ObsActionSpace& space, int num_states,
                                                      RngStream& rng, double sharpness = 1.0);
Vector random_distribution(int size, RngStream& rng, double sharpness = 1.0);

enum class SharingMode { AllIdentical, SharedTransition, Independent };

SharingMode parse_sharing_mode(const std::string& name);
std::string to_string(SharingMode mode);

struct FamilyDescriptor {
  int n_tasks = 1;
  int num_states = 2;
  int num_obs = 2;
  int num_actions = 2;
  int horizon = 2;
  SharingMode mode = SharingMode::Independent;
  double sharpness = 1.0;
  bool shared_init = true;
};

// N POMDPs honoring the sharing mode exactly: shared tables are the same
// object, not copies.
std::vector<TabularPomdp> make_family(const FamilyDescriptor& desc, RngStream& rng);

}  // namespace mtpsr
