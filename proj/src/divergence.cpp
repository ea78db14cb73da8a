#include "mtpsr/divergence.hpp"

#include <cmath>
#include <limits>

#include "mtpsr/error.hpp"
#include "mtpsr/evaluation.hpp"
#include "mtpsr/rng.hpp"

namespace mtpsr {

namespace {

void same_size(const TrajectoryLaw& p, const TrajectoryLaw& q) {
  if (p.size() != q.size()) throw StructuralError("laws have different index spaces");
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

double tv(const TrajectoryLaw& p, const TrajectoryLaw& q) {
  same_size(p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return s;
}

double hellinger_sq(const TrajectoryLaw& p, const TrajectoryLaw& q) {
  same_size(p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = std::sqrt(p[i]) - std::sqrt(q[i]);
    s += d * d;
  }
  return 0.5 * s;
}

double kl(const TrajectoryLaw& p, const TrajectoryLaw& q) {
  same_size(p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return kInf;
    s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

double renyi(double alpha, const TrajectoryLaw& p, const TrajectoryLaw& q) {
  if (!(alpha > 1.0)) throw ParameterError("Renyi order must exceed 1");
  same_size(p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return kInf;
    s += p[i] * std::pow(p[i] / q[i], alpha - 1.0);
  }
  return std::log(s) / (alpha - 1.0);
}

double pairwise_additive(const std::vector<const PsrModel*>& models, const std::vector<const PsrModel*>& others,
                         const std::vector<const Policy*>& policies) {
  if (models.size() != others.size() || models.size() != policies.size()) {
    throw StructuralError("pairwise distance needs equal-length tuples");
  }
  double s = 0.0;
  for (std::size_t n = 0; n < models.size(); ++n) {
    s += tv(trajectory_law(*models[n], *policies[n]), trajectory_law(*others[n], *policies[n]));
  }
  return s;
}

double policy_weighted_linf(const std::vector<TrajectoryLaw>& l, const std::vector<TrajectoryLaw>& g,
                            const PolicyWeightTable& weights) {
  if (l.size() != g.size()) throw StructuralError("bracket ends have different task counts");
  double best = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) best = std::max(best, max_weighted_abs_diff(l[i], g[i], weights.rows()));
  return best;
}

double policy_weighted_linf(const std::vector<TrajectoryLaw>& l, const std::vector<TrajectoryLaw>& g,
                            const PolicyClass& policies, std::uint64_t budget) {
  if (static_cast<std::uint64_t>(policies.size()) * policies.space().trajectory_count() > budget) {
    throw BudgetError("policy-weighted norm enumeration exceeds the budget");
  }
  return policy_weighted_linf(l, g, PolicyWeightTable(policies));
}

EllipticalPotentialResult elliptical_potential(const std::vector<Vector>& xs, int rank, double lambda, double cap) {
  if (!(lambda > 0.0)) throw ParameterError("lambda must be positive");
  if (!(cap > 0.0)) throw ParameterError("cap must be positive");
  if (rank < 1) throw ParameterError("rank must be positive");
  EllipticalPotentialResult r;
  if (xs.empty()) return r;
  const Eigen::Index d = xs.front().size();
  Matrix u = lambda * Matrix::Identity(d, d);
  for (const Vector& x : xs) {
    const double q = x.dot(u.ldlt().solve(x));
    r.lhs += std::min(q, cap);
    u.noalias() += x * x.transpose();
  }
  r.rhs = (1.0 + cap) * rank * std::log(1.0 + static_cast<double>(xs.size()) / lambda);
  return r;
}

std::vector<Vector> random_low_rank_sequence(int dim, int rank, int count, std::uint64_t seed) {
  if (rank < 1 || rank > dim) throw ParameterError("rank must lie in [1, dim]");
  RngStream rng(seed);
  Matrix g(dim, rank);
  for (int j = 0; j < rank; ++j) {
    for (int i = 0; i < dim; ++i) g(i, j) = 2.0 * rng.uniform() - 1.0;
  }
  const Matrix basis = Eigen::HouseholderQR<Matrix>(g).householderQ() * Matrix::Identity(dim, rank);
  std::vector<Vector> xs;
  xs.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    Vector c(rank);
    for (int j = 0; j < rank; ++j) c(j) = 2.0 * rng.uniform() - 1.0;
    const double scale = rng.uniform() / std::max(1.0, c.norm());
    xs.push_back(basis * (c * scale));
  }
  return xs;
}

}  // namespace mtpsr
