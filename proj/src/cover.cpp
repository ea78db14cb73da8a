#include "mtpsr/cover.hpp"

#include <cmath>

#include "mtpsr/error.hpp"

namespace mtpsr {

namespace {

void positive(double v, const char* what) {
  if (!(v > 0.0)) throw ParameterError(std::string(what) + " must be positive");
}

double single_task(const CoverParams& p) {
  positive(p.eta, "eta");
  positive(p.c, "c");
  positive(p.rank, "rank");
  positive(p.horizon, "horizon");
  positive(p.num_obs, "|O|");
  positive(p.num_actions, "|A|");
  const double r = p.rank;
  const double oa = static_cast<double>(p.num_obs) * p.num_actions;
  const double exponent = r + r * r * p.horizon * oa;
  return exponent * (std::log(3.0 * std::sqrt(r)) + p.c * p.horizon * std::log(oa) - std::log(p.eta));
}

}  // namespace

CoverFamily parse_cover_family(const std::string& name) {
  if (name == "euclidean-ball") return CoverFamily::EuclideanBall;
  if (name == "simplex") return CoverFamily::Simplex;
  if (name == "single-task") return CoverFamily::SingleTask;
  if (name == "product") return CoverFamily::Product;
  if (name == "shared-transition") return CoverFamily::SharedTransition;
  if (name == "perturbed") return CoverFamily::Perturbed;
  if (name == "linear-span") return CoverFamily::LinearSpan;
  throw ConfigError("unknown cover family '" + name + "'");
}

std::string to_string(CoverFamily family) {
  switch (family) {
    case CoverFamily::EuclideanBall: return "euclidean-ball";
    case CoverFamily::Simplex: return "simplex";
    case CoverFamily::SingleTask: return "single-task";
    case CoverFamily::Product: return "product";
    case CoverFamily::SharedTransition: return "shared-transition";
    case CoverFamily::Perturbed: return "perturbed";
    case CoverFamily::LinearSpan: return "linear-span";
  }
  return "single-task";
}

double closed_form_log_cover(CoverFamily family, const CoverParams& p) {
  switch (family) {
    case CoverFamily::EuclideanBall:
      positive(p.radius, "R");
      positive(p.epsilon, "epsilon");
      positive(p.dim, "d");
      return p.dim * std::log(1.0 + 2.0 * p.radius / p.epsilon);
    case CoverFamily::Simplex:
      positive(p.delta, "delta");
      positive(p.m, "m");
      return p.m * std::log(3.0 / p.delta);
    case CoverFamily::SingleTask:
      return single_task(p);
    case CoverFamily::Product:
      positive(p.n_tasks, "N");
      return p.n_tasks * single_task(p);
    case CoverFamily::SharedTransition: {
      positive(p.eta, "eta");
      positive(p.horizon, "horizon");
      positive(p.num_states, "|S|");
      positive(p.num_obs, "|O|");
      positive(p.num_actions, "|A|");
      positive(p.n_tasks, "N");
      const double s = p.num_states;
      const double count = p.horizon * (s * s * p.num_actions + static_cast<double>(p.n_tasks) * p.num_obs * s);
      return count * std::log(p.horizon * s * p.num_obs * p.num_actions / p.eta);
    }
    case CoverFamily::Perturbed:
      positive(p.n_tasks, "N");
      positive(p.delta_count, "|Delta|");
      return single_task(p) + static_cast<double>(p.horizon) * p.n_tasks * std::log(static_cast<double>(p.delta_count));
    case CoverFamily::LinearSpan: {
      positive(p.eta, "eta");
      positive(p.c, "c");
      positive(p.rank, "rank");
      positive(p.horizon, "horizon");
      positive(p.num_obs, "|O|");
      positive(p.num_actions, "|A|");
      positive(p.m, "m");
      positive(p.n_tasks, "N");
      const double r = p.rank;
      const double oa = static_cast<double>(p.num_obs) * p.num_actions;
      const double H = p.horizon;
      // log delta kept in log space so large (|O||A|)^{cH} cannot overflow
      const double log_delta = std::log(p.eta) - std::log(2.0 * std::sqrt(r)) - p.c * H * std::log(oa);
      return r * r * H * H * oa * p.m * (std::log(3.0 * std::sqrt(r)) - log_delta) +
             static_cast<double>(p.m) * p.n_tasks * (std::log(3.0) - log_delta);
    }
  }
  throw ParameterError("unknown cover family");
}

}  // namespace mtpsr
