#pragma once

#include <string>

namespace mtpsr {

enum class CoverFamily { EuclideanBall, Simplex, SingleTask, Product, SharedTransition, Perturbed, LinearSpan };

CoverFamily parse_cover_family(const std::string& name);
std::string to_string(CoverFamily family);

// Inputs of the cover-cardinality expressions. Unused fields are ignored by a
// given family.
struct CoverParams {
  double eta = 0.1;
  double c = 1.0;          // exponent constant in (|O||A|)^{cH}
  int rank = 1;            // r
  int horizon = 1;         // H
  int num_obs = 1;         // |O|
  int num_actions = 1;     // |A|
  int num_states = 1;      // |S|
  int n_tasks = 1;         // N
  int m = 1;               // core tasks / simplex dimension
  int delta_count = 1;     // |Delta|
  double radius = 1.0;     // R
  double epsilon = 1.0;    // Euclidean-ball resolution
  int dim = 1;             // Euclidean-ball dimension d
  double delta = 0.5;      // simplex resolution
};

// Natural log of the cover cardinality:
//   EuclideanBall     d log(1 + 2R/eps)
//   Simplex           m log(3/delta)
//   SingleTask        (r + r^2 H|O||A|) log(3 sqrt(r) (|O||A|)^{cH} / eta)
//   Product           N * SingleTask
//   SharedTransition  H (|S|^2|A| + N|O||S|) log(H|S||O||A| / eta)
//   Perturbed         SingleTask + H N log|Delta|
//   LinearSpan        r^2 H^2|O||A| m log(3 sqrt(r)/d) + m N log(3/d),
//                     d = eta / (2 sqrt(r) (|O||A|)^{cH})
// Throws ParameterError for non-positive sizes or resolutions.
double closed_form_log_cover(CoverFamily family, const CoverParams& p);

}  // namespace mtpsr
