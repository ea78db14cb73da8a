#include "mtpsr/psr_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mtpsr/error.hpp"

namespace mtpsr {

namespace {

constexpr double kDegenerateMass = 1e-14;

void check_shapes(const PsrParams& p) {
  const int H = p.space.horizon();
  const auto pairs = static_cast<std::size_t>(p.space.pairs());
  if (p.dims.size() != static_cast<std::size_t>(H + 1)) {
    throw StructuralError("dims must have H+1 entries");
  }
  for (int d : p.dims) {
    if (d < 1) throw StructuralError("feature dimensions must be positive");
  }
  if (p.psi0.size() != p.dims[0]) throw StructuralError("psi0 length must equal d_0");
  if (p.phi_end.size() != p.dims[static_cast<std::size_t>(H)]) {
    throw StructuralError("phi_H length must equal d_H");
  }
  if (p.ops.size() != static_cast<std::size_t>(H)) throw StructuralError("ops must cover H steps");
  for (int h = 1; h <= H; ++h) {
    const auto& step = p.ops[static_cast<std::size_t>(h - 1)];
    if (step.size() != pairs) throw StructuralError("ops must cover every (o,a) at each step");
    for (const Matrix& m : step) {
      if (m.rows() != p.dims[static_cast<std::size_t>(h)] ||
          m.cols() != p.dims[static_cast<std::size_t>(h - 1)]) {
        throw StructuralError("operator at step " + std::to_string(h) + " has shape " +
                              std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                              ", expected d_h x d_{h-1}");
      }
    }
  }
  if (!(p.gamma > 0.0)) throw StructuralError("gamma must be positive");
}

}  // namespace

std::vector<std::vector<Trajectory>> default_core_tests(const ObsActionSpace& space,
                                                        const std::vector<int>& dims) {
  const int H = space.horizon();
  std::vector<std::vector<Trajectory>> out(static_cast<std::size_t>(H + 1));
  for (int h = 0; h <= H; ++h) {
    const std::size_t futures = space.prefix_count(H - h);
    const std::size_t count =
        std::min<std::size_t>(futures, static_cast<std::size_t>(dims[static_cast<std::size_t>(h)]));
    for (std::size_t i = 0; i < count; ++i) {
      out[static_cast<std::size_t>(h)].push_back(Trajectory::decode(space, i, H - h));
    }
  }
  return out;
}

std::vector<ActionSeq> dedup_action_seqs(const std::vector<Trajectory>& tests) {
  std::vector<ActionSeq> out;
  for (const Trajectory& t : tests) {
    ActionSeq seq = t.actions();
    if (std::find(out.begin(), out.end(), seq) == out.end()) out.push_back(std::move(seq));
  }
  return out;
}

PsrModel::PsrModel(PsrParams params) : params_(std::move(params)) {
  check_shapes(params_);
  const int H = horizon();
  const int A = space().num_actions();

  if (params_.core_tests.empty()) params_.core_tests = default_core_tests(space(), params_.dims);
  if (params_.core_tests.size() != static_cast<std::size_t>(H + 1)) {
    throw StructuralError("core tests must be given for every h in [0, H]");
  }
  for (int h = 0; h <= H; ++h) {
    for (const Trajectory& q : params_.core_tests[static_cast<std::size_t>(h)]) {
      if (q.size() != static_cast<std::size_t>(H - h)) {
        throw StructuralError("core test at step " + std::to_string(h) + " must have length H-h");
      }
      q.check(space());
    }
    core_action_seqs_.push_back(dedup_action_seqs(params_.core_tests[static_cast<std::size_t>(h)]));
  }

  phis_.assign(static_cast<std::size_t>(H + 1), Vector());
  phis_[static_cast<std::size_t>(H)] = params_.phi_end;
  for (int h = H; h >= 1; --h) {
    Vector acc = Vector::Zero(dim(h - 1));
    const Vector& next = phis_[static_cast<std::size_t>(h)];
    for (const Matrix& m : params_.ops[static_cast<std::size_t>(h - 1)]) acc.noalias() += m.transpose() * next;
    phis_[static_cast<std::size_t>(h - 1)] = acc / static_cast<double>(A);
  }

  if (params_.declared_rank <= 0) {
    params_.declared_rank = space().trajectory_count() <= 100'000
                                ? dynamics_rank(*this)
                                : *std::max_element(params_.dims.begin(), params_.dims.end());
  }
}

std::size_t PsrModel::max_core_action_count() const {
  std::size_t best = 0;
  for (int h = 1; h <= horizon(); ++h) best = std::max(best, core_action_seqs(h).size());
  return best;
}

Vector prediction_feature(const PsrModel& model, std::span<const Step> traj) {
  if (traj.size() > static_cast<std::size_t>(model.horizon())) {
    throw StructuralError("history longer than the horizon");
  }
  Vector psi = model.psi0();
  int h = 1;
  for (const Step& s : traj) {
    psi = model.op(h, s.obs, s.action) * psi;
    ++h;
  }
  return psi;
}

Vector future_vector(const PsrModel& model, int h, std::span<const Step> future) {
  const int H = model.horizon();
  if (h < 0 || h + static_cast<int>(future.size()) != H) {
    throw StructuralError("future must span steps h+1..H");
  }
  Vector m = model.phi_end();
  for (int t = H; t > h; --t) {
    const Step& s = future[static_cast<std::size_t>(t - h - 1)];
    m = model.op(t, s.obs, s.action).transpose() * m;
  }
  return m;
}

double raw_dynamics_prob(const PsrModel& model, std::span<const Step> traj) {
  if (traj.size() != static_cast<std::size_t>(model.horizon())) {
    throw StructuralError("trajectory length must equal the horizon");
  }
  return model.phi_end().dot(prediction_feature(model, traj));
}

double trajectory_dynamics_prob(const PsrModel& model, const Trajectory& traj,
                                const Tolerances& tol) {
  traj.check(model.space());
  const double p = raw_dynamics_prob(model, traj.steps());
  if (p < tol.clamp) {
    throw ModelIntegrityError("operator product is negative (" + std::to_string(p) + ")");
  }
  return std::clamp(p, 0.0, 1.0);
}

std::vector<double> core_test_predictions(const PsrModel& model, const Trajectory& traj) {
  traj.check(model.space());
  const int h = static_cast<int>(traj.size());
  const Vector psi = prediction_feature(model, traj);
  std::vector<double> out;
  for (const Trajectory& q : model.core_tests(h)) {
    out.push_back(future_vector(model, h, q.steps()).dot(psi));
  }
  return out;
}

Vector normalized_feature(const PsrModel& model, const Trajectory& traj) {
  traj.check(model.space());
  const Vector psi = prediction_feature(model, traj);
  const double mass = model.phi(static_cast<int>(traj.size())).dot(psi);
  if (!(mass > kDegenerateMass)) {
    throw DegenerateHistoryError("history has zero probability; normalized feature undefined");
  }
  return psi / mass;
}

double conditional_obs_prob(const PsrModel& model, const Trajectory& hist, int obs) {
  hist.check(model.space());
  const int h = static_cast<int>(hist.size()) + 1;
  if (h > model.horizon()) throw StructuralError("history must be shorter than the horizon");
  if (obs < 0 || obs >= model.space().num_obs()) throw StructuralError("observation out of range");
  const Vector psi = prediction_feature(model, hist);
  const double mass = model.phi(h - 1).dot(psi);
  if (!(mass > kDegenerateMass)) {
    throw DegenerateHistoryError("history has zero probability; conditional law undefined");
  }
  return model.phi(h).dot(model.op(h, obs, 0) * psi) / mass;
}

int dynamics_rank(const PsrModel& model, double tol) {
  const ObsActionSpace& space = model.space();
  const int H = model.horizon();
  int best = 1;
  for (int h = 1; h < H; ++h) {
    const std::size_t rows = space.prefix_count(h);
    const std::size_t cols = space.prefix_count(H - h);
    Matrix hist(static_cast<Eigen::Index>(rows), model.dim(h));
    for (std::size_t i = 0; i < rows; ++i) {
      hist.row(static_cast<Eigen::Index>(i)) =
          prediction_feature(model, Trajectory::decode(space, i, h)).transpose();
    }
    Matrix fut(model.dim(h), static_cast<Eigen::Index>(cols));
    for (std::size_t j = 0; j < cols; ++j) {
      fut.col(static_cast<Eigen::Index>(j)) =
          future_vector(model, h, Trajectory::decode(space, j, H - h).steps());
    }
    const Matrix dyn = hist * fut;
    Eigen::JacobiSVD<Matrix> svd(dyn);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) <= 0.0) continue;
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) rank += sv(i) > tol * sv(0) ? 1 : 0;
    best = std::max(best, rank);
  }
  return best;
}

ModelValidation validate_model(const PsrModel& model) {
  ModelValidation v;
  const ObsActionSpace& space = model.space();
  const int H = model.horizon();
  const int O = space.num_obs();
  const int A = space.num_actions();

  for (int h = 1; h <= H; ++h) {
    for (int a = 0; a < A; ++a) {
      Vector acc = Vector::Zero(model.dim(h - 1));
      for (int o = 0; o < O; ++o) acc.noalias() += model.op(h, o, a).transpose() * model.phi(h);
      v.self_consistency_error =
          std::max(v.self_consistency_error, (acc - model.phi(h - 1)).cwiseAbs().maxCoeff());
    }
  }
  v.total_mass_error = std::abs(model.phi(0).dot(model.psi0()) - 1.0);

  // Depth-first walk over the prefix tree; every leaf is one trajectory.
  const std::size_t n_seq = static_cast<std::size_t>(std::pow(A, H));
  std::vector<double> mass(n_seq, 0.0);
  double min_p = 0.0;
  std::vector<Vector> stack(static_cast<std::size_t>(H + 1));
  stack[0] = model.psi0();
  const std::size_t total = space.trajectory_count();
  Trajectory prev;
  for (std::size_t idx = 0; idx < total; ++idx) {
    const Trajectory t = Trajectory::decode(space, idx, H);
    // only the suffix that differs from the previous leaf is recomputed
    int first_changed = 0;
    if (idx > 0) {
      while (first_changed < H && t[static_cast<std::size_t>(first_changed)] == prev[static_cast<std::size_t>(first_changed)]) {
        ++first_changed;
      }
    }
    for (int h = first_changed; h < H; ++h) {
      const Step& s = t[static_cast<std::size_t>(h)];
      stack[static_cast<std::size_t>(h + 1)] = model.op(h + 1, s.obs, s.action) * stack[static_cast<std::size_t>(h)];
    }
    const double p = model.phi_end().dot(stack[static_cast<std::size_t>(H)]);
    min_p = std::min(min_p, p);
    std::size_t seq = 0;
    for (const Step& s : t.steps()) seq = seq * static_cast<std::size_t>(A) + static_cast<std::size_t>(s.action);
    mass[seq] += p;
    prev = t;
  }
  for (double m : mass) v.normalization_error = std::max(v.normalization_error, std::abs(m - 1.0));
  v.min_probability = min_p;
  return v;
}

}  // namespace mtpsr
