#pragma once

namespace mtpsr {

struct Tolerances {
  double structural = 1e-10;     // self-consistency, filtering identity
  double normalization = 1e-9;   // probability mass sums
  double clamp = -1e-9;          // most negative raw probability accepted
  double sampling = 1e-6;        // conditional law normalization while sampling
  double p_floor = 1e-12;        // log-likelihood guard
  double stochastic = 1e-12;     // POMDP column sums
};

inline const Tolerances& default_tolerances() {
  static const Tolerances tol{};
  return tol;
}

}  // namespace mtpsr
