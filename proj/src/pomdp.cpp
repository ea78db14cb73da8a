#include "mtpsr/pomdp.hpp"

#include <cmath>

#include "mtpsr/error.hpp"

namespace mtpsr {

namespace {

void check_stochastic(const Matrix& m, const std::string& what, double tol) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    if ((m.col(c).array() < 0.0).any()) throw ValidationError(what + " has a negative entry");
    if (std::abs(m.col(c).sum() - 1.0) > tol) throw ValidationError(what + " column does not sum to 1");
  }
}

}  // namespace

TabularPomdp::TabularPomdp(ObsActionSpace space, int num_states,
                           std::shared_ptr<const TransitionKernel> transitions,
                           std::shared_ptr<const EmissionModel> emissions, Vector init,
                           const Tolerances& tol)
    : space_(space),
      num_states_(num_states),
      transitions_(std::move(transitions)),
      emissions_(std::move(emissions)),
      init_(std::move(init)) {
  const int H = space_.horizon();
  const int S = num_states_;
  if (S < 1) throw ValidationError("POMDP needs at least one state");
  if (!transitions_ || !emissions_) throw ValidationError("POMDP tables missing");
  if (transitions_->by_step.size() != static_cast<std::size_t>(H - 1)) {
    throw ValidationError("transition kernel must cover steps 1..H-1");
  }
  for (int h = 1; h < H; ++h) {
    if (transitions_->by_step[static_cast<std::size_t>(h - 1)].size() !=
        static_cast<std::size_t>(space_.num_actions())) {
      throw ValidationError("transition kernel must cover every action");
    }
    for (int a = 0; a < space_.num_actions(); ++a) {
      const Matrix& t = transitions_->at(h, a);
      if (t.rows() != S || t.cols() != S) throw ValidationError("transition matrix must be |S|x|S|");
      check_stochastic(t, "transition T_" + std::to_string(h), tol.stochastic);
    }
  }
  if (emissions_->by_step.size() != static_cast<std::size_t>(H)) {
    throw ValidationError("emission model must cover steps 1..H");
  }
  for (int h = 1; h <= H; ++h) {
    const Matrix& o = emissions_->at(h);
    if (o.rows() != space_.num_obs() || o.cols() != S) throw ValidationError("emission matrix must be |O|x|S|");
    check_stochastic(o, "emission O_" + std::to_string(h), tol.stochastic);
  }
  if (init_.size() != S) throw ValidationError("initial distribution must have |S| entries");
  check_stochastic(init_, "initial distribution", tol.stochastic);
}

double forward_prob(const TabularPomdp& pomdp, const Trajectory& traj) {
  const ObsActionSpace& space = pomdp.space();
  if (traj.size() != static_cast<std::size_t>(space.horizon())) {
    throw StructuralError("forward_prob needs a full-length trajectory");
  }
  traj.check(space);
  const int S = pomdp.num_states();
  const int H = space.horizon();
  std::vector<double> belief(pomdp.init().data(), pomdp.init().data() + S);
  std::vector<double> next(static_cast<std::size_t>(S));
  double likelihood = 1.0;
  for (int h = 1; h <= H; ++h) {
    const Step& st = traj[static_cast<std::size_t>(h - 1)];
    const Matrix& em = pomdp.emissions().at(h);
    double norm = 0.0;
    for (int s = 0; s < S; ++s) {
      belief[static_cast<std::size_t>(s)] *= em(st.obs, s);
      norm += belief[static_cast<std::size_t>(s)];
    }
    likelihood *= norm;
    if (norm <= 0.0) return 0.0;
    for (double& b : belief) b /= norm;
    if (h == H) break;
    const Matrix& tr = pomdp.transitions().at(h, st.action);
    for (int s2 = 0; s2 < S; ++s2) {
      double acc = 0.0;
      for (int s = 0; s < S; ++s) acc += tr(s2, s) * belief[static_cast<std::size_t>(s)];
      next[static_cast<std::size_t>(s2)] = acc;
    }
    belief.swap(next);
  }
  return likelihood;
}

PsrModel pomdp_to_psr(const TabularPomdp& pomdp) {
  const ObsActionSpace& space = pomdp.space();
  const int H = space.horizon();
  const int S = pomdp.num_states();
  PsrParams p;
  p.space = space;
  p.dims.assign(static_cast<std::size_t>(H + 1), S);
  p.psi0 = pomdp.init();
  p.phi_end = Vector::Ones(S);
  p.ops.resize(static_cast<std::size_t>(H));
  for (int h = 1; h <= H; ++h) {
    auto& step = p.ops[static_cast<std::size_t>(h - 1)];
    for (int o = 0; o < space.num_obs(); ++o) {
      const Matrix diag = pomdp.emissions().at(h).row(o).transpose().asDiagonal();
      for (int a = 0; a < space.num_actions(); ++a) {
        step.push_back(h < H ? Matrix(pomdp.transitions().at(h, a) * diag) : diag);
      }
    }
  }
  p.declared_rank = S;
  return PsrModel(std::move(p));
}

Matrix random_stochastic(int rows, int cols, RngStream& rng, double sharpness) {
  Matrix m(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) {
      // keep entries strictly positive so every model has full support
      m(r, c) = std::pow(1e-3 + rng.uniform(), sharpness);
    }
    m.col(c) /= m.col(c).sum();
  }
  return m;
}

Vector random_distribution(int size, RngStream& rng, double sharpness) {
  return random_stochastic(size, 1, rng, sharpness).col(0);
}

std::shared_ptr<const TransitionKernel> random_transitions(const ObsActionSpace& space, int num_states,
                                                           RngStream& rng, double sharpness) {
  auto k = std::make_shared<TransitionKernel>();
  for (int h = 1; h < space.horizon(); ++h) {
    std::vector<Matrix> per_action;
    for (int a = 0; a < space.num_actions(); ++a) {
      per_action.push_back(random_stochastic(num_states, num_states, rng, sharpness));
    }
    k->by_step.push_back(std::move(per_action));
  }
  return k;
}

std::shared_ptr<const EmissionModel> random_emissions(const ObsActionSpace& space, int num_states,
                                                      RngStream& rng, double sharpness) {
  auto e = std::make_shared<EmissionModel>();
  for (int h = 1; h <= space.horizon(); ++h) {
    e->by_step.push_back(random_stochastic(space.num_obs(), num_states, rng, sharpness));
  }
  return e;
}

SharingMode parse_sharing_mode(const std::string& name) {
  if (name == "all-identical") return SharingMode::AllIdentical;
  if (name == "shared-transition") return SharingMode::SharedTransition;
  if (name == "independent") return SharingMode::Independent;
  throw ConfigError("unknown sharing mode '" + name + "'");
}

std::string to_string(SharingMode mode) {
  switch (mode) {
    case SharingMode::AllIdentical: return "all-identical";
    case SharingMode::SharedTransition: return "shared-transition";
    case SharingMode::Independent: return "independent";
  }
  return "independent";
}

std::vector<TabularPomdp> make_family(const FamilyDescriptor& desc, RngStream& rng) {
  if (desc.n_tasks < 1) throw ParameterError("family needs at least one task");
  const ObsActionSpace space(desc.num_obs, desc.num_actions, desc.horizon);
  const int S = desc.num_states;
  std::vector<TabularPomdp> out;
  out.reserve(static_cast<std::size_t>(desc.n_tasks));

  auto shared_t = random_transitions(space, S, rng, desc.sharpness);
  auto shared_e = random_emissions(space, S, rng, desc.sharpness);
  const Vector shared_init = random_distribution(S, rng, desc.sharpness);

  for (int n = 0; n < desc.n_tasks; ++n) {
    std::shared_ptr<const TransitionKernel> t = shared_t;
    std::shared_ptr<const EmissionModel> e = shared_e;
    Vector init = shared_init;
    if (desc.mode == SharingMode::Independent && n > 0) t = random_transitions(space, S, rng, desc.sharpness);
    if (desc.mode != SharingMode::AllIdentical && n > 0) e = random_emissions(space, S, rng, desc.sharpness);
    if (desc.mode != SharingMode::AllIdentical && !desc.shared_init && n > 0) {
      init = random_distribution(S, rng, desc.sharpness);
    }
    out.emplace_back(space, S, std::move(t), std::move(e), std::move(init));
  }
  return out;
}

}  // namespace mtpsr
