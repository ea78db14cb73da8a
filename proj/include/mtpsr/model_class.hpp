#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtpsr/kernels.hpp"
#include "mtpsr/pomdp.hpp"
#include "mtpsr/psr_model.hpp"

namespace mtpsr {

enum class Family { Product, SharedTransition, Perturbed, LinearSpan, Explicit };

std::string to_string(Family family);
Family parse_family(const std::string& name);

// Finite joint class Theta_u. Distinct single-task models live in a pool and
// each member is an N-tuple of pool indices, so members that share a task
// model share the object (and its cached dynamics law).
class JointModelClass {
 public:
  // Throws EmptyClassError for no members, StructuralError for tuples of the
  // wrong length, out-of-range indices or mixed spaces.
  JointModelClass(Family family, int n_tasks, std::vector<std::shared_ptr<const PsrModel>> pool,
                  std::vector<std::vector<std::size_t>> members, nlohmann::json params = nlohmann::json::object(),
                  std::vector<std::shared_ptr<const TabularPomdp>> origins = {});

  Family family() const { return family_; }
  int n_tasks() const { return n_tasks_; }
  std::size_t size() const { return members_.size(); }
  const ObsActionSpace& space() const { return pool_.front()->space(); }

  const std::vector<std::size_t>& member(std::size_t i) const { return members_[i]; }
  const std::vector<std::vector<std::size_t>>& members() const { return members_; }
  const PsrModel& model(std::size_t i, int task) const {
    return *pool_[members_[i][static_cast<std::size_t>(task)]];
  }
  std::size_t pool_index(std::size_t i, int task) const { return members_[i][static_cast<std::size_t>(task)]; }

  std::size_t pool_size() const { return pool_.size(); }
  const PsrModel& pool_model(std::size_t j) const { return *pool_[j]; }
  const std::shared_ptr<const PsrModel>& pool_ptr(std::size_t j) const { return pool_[j]; }
  // P_theta(tau^o | tau^a) for pool model j over every tau_H.
  const TrajectoryLaw& pool_law(std::size_t j) const { return laws_[j]; }
  // Null unless the pool model was converted from a POMDP.
  const std::shared_ptr<const TabularPomdp>& origin(std::size_t j) const { return origins_[j]; }

  const nlohmann::json& params() const { return params_; }
  // Q_A = max_n max_h |Q_h^{n,A}| over every pool model.
  std::size_t q_a_max() const { return q_a_max_; }

  // Members dropped by validity filtering at build time, and the count before it.
  std::uint64_t filtered_count() const { return filtered_; }
  std::uint64_t unfiltered_count() const { return unfiltered_; }
  void set_filter_stats(std::uint64_t unfiltered, std::uint64_t filtered) {
    unfiltered_ = unfiltered;
    filtered_ = filtered;
  }

  // Position of the member whose tuple equals `tuple`, or size() if absent.
  std::size_t find(const std::vector<std::size_t>& tuple) const;

 private:
  Family family_;
  int n_tasks_;
  std::vector<std::shared_ptr<const PsrModel>> pool_;
  std::vector<std::vector<std::size_t>> members_;
  nlohmann::json params_;
  std::vector<std::shared_ptr<const TabularPomdp>> origins_;
  std::vector<TrajectoryLaw> laws_;
  std::size_t q_a_max_ = 0;
  std::uint64_t unfiltered_ = 0;
  std::uint64_t filtered_ = 0;
};

// Theta^N: every N-tuple over the single-task class, task 1 most significant.
JointModelClass build_product(const std::vector<PsrModel>& single, int n_tasks,
                              std::uint64_t budget = kDefaultEnumerationCap);

// Every task runs the same model: {(theta, ..., theta)}.
JointModelClass build_diagonal(const std::vector<PsrModel>& single, int n_tasks);

// Explicit list of tuples.
JointModelClass build_explicit(const std::vector<std::vector<PsrModel>>& tuples);

// {(convert(T, O^1), ..., convert(T, O^N))}: |T-set| * prod_n |O-set_n| members.
// All tasks of a member hold the identical transition object.
JointModelClass build_shared_transition(const ObsActionSpace& space, int num_states,
                                        const std::vector<std::shared_ptr<const TransitionKernel>>& transitions,
                                        const std::vector<std::vector<std::shared_ptr<const EmissionModel>>>& emissions,
                                        const std::vector<Vector>& inits,
                                        std::uint64_t budget = kDefaultEnumerationCap);

// Finite perturbation set. elements[e][h-1][o*|A|+a] is one candidate
// Delta_h(o,a) for every step h; a task picks one element per step.
struct PerturbationSet {
  std::vector<std::vector<std::vector<Matrix>>> elements;
  std::size_t size() const { return elements.size(); }
};

// The all-zero element shaped like `base`.
std::vector<std::vector<Matrix>> zero_perturbation(const PsrModel& base);

// Emission noise T_h(a) diag(eps_h(o,.)) with sum_o eps = 0 and a random
// magnitude up to |eps(o,s)| <= scale * O_h(o|s), so base + Delta stays a valid POMDP.
std::vector<std::vector<Matrix>> emission_perturbation(const TabularPomdp& base, double scale, RngStream& rng);

// base + Delta with one element chosen per step.
PsrModel apply_perturbation(const PsrModel& base, const PerturbationSet& deltas, const std::vector<std::size_t>& choice);

// M_h^n = M_h^b + Delta_h^n: |Delta|^{HN} members before validity filtering.
// Throws EmptyClassError when filtering removes everything.
JointModelClass build_perturbed(const PsrModel& base, const PerturbationSet& deltas, int n_tasks,
                                std::uint64_t budget = kDefaultEnumerationCap);

// sum_l alpha_l (M^l, phi_H^l, psi_0^l); core tasks must share dims.
PsrModel mix_models(const std::vector<const PsrModel*>& core, const Vector& alpha);

// One simplex vector per task from the grid: |grid|^N members before filtering.
JointModelClass build_linear_span(const std::vector<PsrModel>& core, const std::vector<Vector>& grid, int n_tasks,
                                  std::uint64_t budget = kDefaultEnumerationCap);

// All simplex points with coordinates in {0, 1/k, ..., 1} for m components.
std::vector<Vector> simplex_grid(int m, int k);

// ---- brackets ----

struct Bracket {
  std::vector<TrajectoryLaw> lower;  // one function per task
  std::vector<TrajectoryLaw> upper;
};

struct BracketSet {
  std::vector<Bracket> brackets;
  double eta = 0.0;
};

struct CoverCheck {
  bool covered = false;
  std::size_t witness = 0;  // first uncovered member when !covered
};

// Pointwise envelope of the listed members' law tuples.
Bracket envelope_bracket(const JointModelClass& cls, const std::vector<std::size_t>& members);

// max_n max_pi sum_tau (upper - lower) pi(tau)
double bracket_width(const Bracket& b, const PolicyWeightTable& weights);

// True iff every member's law tuple lies in some bracket whose width is < eta.
CoverCheck verify_bracket_cover(const JointModelClass& cls, const BracketSet& brackets,
                                const PolicyWeightTable& weights);

struct BracketCover {
  std::size_t count = 0;
  BracketSet brackets;
  bool exact = false;  // minimal over envelope covers
};

// Upper bound on N_eta for the finite class, verified before returning.
// Classes of at most `exact_limit` members get the exact minimum by subset
// dynamic programming; larger ones cut a complete-linkage merge tree at eta.
// Both are nonincreasing in eta.
BracketCover greedy_bracket_cover(const JointModelClass& cls, double eta, const PolicyWeightTable& weights,
                                  std::size_t exact_limit = 12);
std::size_t greedy_bracket_count(const JointModelClass& cls, double eta, const PolicyWeightTable& weights);

}  // namespace mtpsr
