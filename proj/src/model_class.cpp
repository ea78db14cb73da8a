#include "mtpsr/model_class.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "mtpsr/error.hpp"

namespace mtpsr {

namespace {

// Calls f on every tuple of the mixed radix, first position most significant.
void for_each_tuple(const std::vector<std::size_t>& radix, const std::function<void(const std::vector<std::size_t>&)>& f) {
  for (std::size_t r : radix) {
    if (r == 0) return;
  }
  std::vector<std::size_t> t(radix.size(), 0);
  while (true) {
    f(t);
    std::size_t pos = radix.size();
    while (pos > 0) {
      --pos;
      if (++t[pos] < radix[pos]) break;
      t[pos] = 0;
      if (pos == 0) return;
    }
    if (radix.empty()) return;
  }
}

std::uint64_t checked_count(std::uint64_t base, int exp, std::uint64_t budget, const char* what) {
  std::uint64_t count = 0;
  if (!checked_pow(base, exp, count) || count > budget) {
    throw BudgetError(std::string(what) + " exceeds the enumeration budget");
  }
  return count;
}

std::vector<std::vector<std::size_t>> power_members(std::size_t pool, int n_tasks) {
  std::vector<std::vector<std::size_t>> members;
  for_each_tuple(std::vector<std::size_t>(static_cast<std::size_t>(n_tasks), pool),
                 [&](const std::vector<std::size_t>& t) { members.push_back(t); });
  return members;
}

std::vector<std::shared_ptr<const PsrModel>> share(const std::vector<PsrModel>& models) {
  std::vector<std::shared_ptr<const PsrModel>> out;
  out.reserve(models.size());
  for (const PsrModel& m : models) out.push_back(std::make_shared<const PsrModel>(m));
  return out;
}

}  // namespace

std::string to_string(Family family) {
  switch (family) {
    case Family::Product: return "product";
    case Family::SharedTransition: return "shared-transition-pomdp";
    case Family::Perturbed: return "perturbed-psr";
    case Family::LinearSpan: return "linear-span-psr";
    case Family::Explicit: return "explicit";
  }
  return "explicit";
}

Family parse_family(const std::string& name) {
  if (name == "product") return Family::Product;
  if (name == "shared-transition-pomdp" || name == "shared-transition") return Family::SharedTransition;
  if (name == "perturbed-psr" || name == "perturbed") return Family::Perturbed;
  if (name == "linear-span-psr" || name == "linear-span") return Family::LinearSpan;
  if (name == "explicit") return Family::Explicit;
  throw ConfigError("unknown model family '" + name + "'");
}

JointModelClass::JointModelClass(Family family, int n_tasks, std::vector<std::shared_ptr<const PsrModel>> pool,
                                 std::vector<std::vector<std::size_t>> members, nlohmann::json params,
                                 std::vector<std::shared_ptr<const TabularPomdp>> origins)
    : family_(family),
      n_tasks_(n_tasks),
      pool_(std::move(pool)),
      members_(std::move(members)),
      params_(std::move(params)),
      origins_(std::move(origins)) {
  if (n_tasks_ < 1) throw StructuralError("joint class needs at least one task");
  if (members_.empty() || pool_.empty()) throw EmptyClassError("joint model class is empty");
  for (const auto& m : pool_) {
    if (!m) throw StructuralError("null model in class pool");
    if (!(m->space() == pool_.front()->space())) throw StructuralError("class members must share one space");
  }
  for (const auto& t : members_) {
    if (t.size() != static_cast<std::size_t>(n_tasks_)) throw StructuralError("member tuple has the wrong length");
    for (std::size_t j : t) {
      if (j >= pool_.size()) throw StructuralError("member references a missing pool model");
    }
  }
  if (origins_.empty()) origins_.resize(pool_.size());
  if (origins_.size() != pool_.size()) throw StructuralError("origin list must match the pool");
  laws_.reserve(pool_.size());
  for (const auto& m : pool_) {
    laws_.push_back(dynamics_law(*m));
    q_a_max_ = std::max(q_a_max_, m->max_core_action_count());
  }
  unfiltered_ = members_.size();
}

std::size_t JointModelClass::find(const std::vector<std::size_t>& tuple) const {
  const auto it = std::find(members_.begin(), members_.end(), tuple);
  return static_cast<std::size_t>(it - members_.begin());
}

JointModelClass build_product(const std::vector<PsrModel>& single, int n_tasks, std::uint64_t budget) {
  if (single.empty()) throw EmptyClassError("single-task class is empty");
  if (n_tasks < 1) throw ParameterError("product class needs N >= 1");
  checked_count(single.size(), n_tasks, budget, "product class |Theta|^N");
  nlohmann::json params = {{"single_size", single.size()}};
  return JointModelClass(Family::Product, n_tasks, share(single), power_members(single.size(), n_tasks), params);
}

JointModelClass build_diagonal(const std::vector<PsrModel>& single, int n_tasks) {
  if (single.empty()) throw EmptyClassError("single-task class is empty");
  if (n_tasks < 1) throw ParameterError("diagonal class needs N >= 1");
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t j = 0; j < single.size(); ++j) members.emplace_back(static_cast<std::size_t>(n_tasks), j);
  nlohmann::json params = {{"sharing", "all-identical"}, {"single_size", single.size()}};
  return JointModelClass(Family::Explicit, n_tasks, share(single), std::move(members), params);
}

JointModelClass build_explicit(const std::vector<std::vector<PsrModel>>& tuples) {
  if (tuples.empty()) throw EmptyClassError("explicit class is empty");
  const auto n = static_cast<int>(tuples.front().size());
  std::vector<std::shared_ptr<const PsrModel>> pool;
  std::vector<std::vector<std::size_t>> members;
  for (const auto& t : tuples) {
    if (static_cast<int>(t.size()) != n) throw StructuralError("explicit tuples must have equal length");
    std::vector<std::size_t> idx;
    for (const PsrModel& m : t) {
      idx.push_back(pool.size());
      pool.push_back(std::make_shared<const PsrModel>(m));
    }
    members.push_back(std::move(idx));
  }
  return JointModelClass(Family::Explicit, n, std::move(pool), std::move(members));
}

JointModelClass build_shared_transition(const ObsActionSpace& space, int num_states,
                                        const std::vector<std::shared_ptr<const TransitionKernel>>& transitions,
                                        const std::vector<std::vector<std::shared_ptr<const EmissionModel>>>& emissions,
                                        const std::vector<Vector>& inits, std::uint64_t budget) {
  const auto n_tasks = static_cast<int>(emissions.size());
  if (transitions.empty() || n_tasks == 0) throw EmptyClassError("shared-transition class is empty");
  if (inits.size() != emissions.size()) throw ParameterError("need one initial distribution per task");
  std::uint64_t count = transitions.size();
  for (const auto& e : emissions) {
    if (e.empty()) throw EmptyClassError("a task has no emission candidates");
    if (count > budget / e.size()) throw BudgetError("shared-transition class exceeds the enumeration budget");
    count *= e.size();
  }

  // pool layout: [transition][task][emission]
  std::vector<std::shared_ptr<const PsrModel>> pool;
  std::vector<std::shared_ptr<const TabularPomdp>> origins;
  std::vector<std::vector<std::size_t>> offset(transitions.size(), std::vector<std::size_t>(emissions.size()));
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    for (std::size_t n = 0; n < emissions.size(); ++n) {
      offset[i][n] = pool.size();
      for (const auto& e : emissions[n]) {
        auto pomdp = std::make_shared<const TabularPomdp>(space, num_states, transitions[i], e, inits[n]);
        pool.push_back(std::make_shared<const PsrModel>(pomdp_to_psr(*pomdp)));
        origins.push_back(std::move(pomdp));
      }
    }
  }

  std::vector<std::vector<std::size_t>> members;
  std::vector<std::size_t> radix;
  for (const auto& e : emissions) radix.push_back(e.size());
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    for_each_tuple(radix, [&](const std::vector<std::size_t>& t) {
      std::vector<std::size_t> m(t.size());
      for (std::size_t n = 0; n < t.size(); ++n) m[n] = offset[i][n] + t[n];
      members.push_back(std::move(m));
    });
  }
  std::vector<std::size_t> emission_counts;
  for (const auto& e : emissions) emission_counts.push_back(e.size());
  nlohmann::json params = {{"num_states", num_states},
                           {"transition_candidates", transitions.size()},
                           {"emission_candidates", emission_counts}};
  return JointModelClass(Family::SharedTransition, n_tasks, std::move(pool), std::move(members), params,
                         std::move(origins));
}

std::vector<std::vector<Matrix>> zero_perturbation(const PsrModel& base) {
  std::vector<std::vector<Matrix>> out;
  for (const auto& step : base.ops()) {
    std::vector<Matrix> row;
    for (const Matrix& m : step) row.push_back(Matrix::Zero(m.rows(), m.cols()));
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<std::vector<Matrix>> emission_perturbation(const TabularPomdp& base, double scale, RngStream& rng) {
  if (!(scale >= 0.0 && scale < 1.0)) throw ParameterError("perturbation scale must lie in [0,1)");
  const ObsActionSpace& space = base.space();
  const int H = space.horizon();
  const int S = base.num_states();
  const int O = space.num_obs();
  std::vector<std::vector<Matrix>> out;
  for (int h = 1; h <= H; ++h) {
    const Matrix& em = base.emissions().at(h);
    Matrix eps(O, S);
    for (int s = 0; s < S; ++s) {
      for (int o = 0; o < O; ++o) eps(o, s) = 2.0 * rng.uniform() - 1.0;
      eps.col(s).array() -= eps.col(s).mean();
      double ratio = 0.0;
      for (int o = 0; o < O; ++o) ratio = std::max(ratio, std::abs(eps(o, s)) / em(o, s));
      if (ratio > 0.0) eps.col(s) *= scale * (0.25 + 0.75 * rng.uniform()) / ratio;
    }
    std::vector<Matrix> row;
    for (int o = 0; o < O; ++o) {
      const Matrix diag = eps.row(o).transpose().asDiagonal();
      for (int a = 0; a < space.num_actions(); ++a) {
        row.push_back(h < H ? Matrix(base.transitions().at(h, a) * diag) : diag);
      }
    }
    out.push_back(std::move(row));
  }
  return out;
}

PsrModel apply_perturbation(const PsrModel& base, const PerturbationSet& deltas, const std::vector<std::size_t>& choice) {
  const int H = base.horizon();
  if (choice.size() != static_cast<std::size_t>(H)) throw ParameterError("need one perturbation choice per step");
  PsrParams p = base.params();
  p.declared_rank = 0;
  for (int h = 1; h <= H; ++h) {
    const std::size_t e = choice[static_cast<std::size_t>(h - 1)];
    if (e >= deltas.size()) throw ParameterError("perturbation choice out of range");
    const auto& step = deltas.elements[e].at(static_cast<std::size_t>(h - 1));
    auto& ops = p.ops[static_cast<std::size_t>(h - 1)];
    if (step.size() != ops.size()) throw StructuralError("perturbation must cover every (o,a)");
    for (std::size_t i = 0; i < ops.size(); ++i) {
      if (step[i].rows() != ops[i].rows() || step[i].cols() != ops[i].cols()) {
        throw StructuralError("perturbation shape differs from the base operator");
      }
      ops[i] += step[i];
    }
  }
  return PsrModel(std::move(p));
}

JointModelClass build_perturbed(const PsrModel& base, const PerturbationSet& deltas, int n_tasks, std::uint64_t budget) {
  if (deltas.size() == 0) throw EmptyClassError("perturbation set is empty");
  if (n_tasks < 1) throw ParameterError("perturbed class needs N >= 1");
  const int H = base.horizon();
  const std::uint64_t unfiltered = checked_count(deltas.size(), H * n_tasks, budget, "perturbed class |Delta|^{HN}");

  std::vector<std::shared_ptr<const PsrModel>> pool;
  nlohmann::json choices = nlohmann::json::array();
  for_each_tuple(std::vector<std::size_t>(static_cast<std::size_t>(H), deltas.size()),
                 [&](const std::vector<std::size_t>& choice) {
                   PsrModel m = apply_perturbation(base, deltas, choice);
                   if (!validate_model(m).ok()) return;
                   pool.push_back(std::make_shared<const PsrModel>(std::move(m)));
                   choices.push_back(choice);
                 });
  if (pool.empty()) throw EmptyClassError("every perturbed model failed validation");
  nlohmann::json params = {{"delta_count", deltas.size()}, {"pool_choices", choices}};
  const std::size_t pool_size = pool.size();
  JointModelClass cls(Family::Perturbed, n_tasks, std::move(pool), power_members(pool_size, n_tasks), params);
  cls.set_filter_stats(unfiltered, unfiltered - cls.size());
  return cls;
}

PsrModel mix_models(const std::vector<const PsrModel*>& core, const Vector& alpha) {
  if (core.empty()) throw ParameterError("mixture needs core tasks");
  if (alpha.size() != static_cast<Eigen::Index>(core.size())) throw ParameterError("one coefficient per core task");
  if ((alpha.array() < 0.0).any() || std::abs(alpha.sum() - 1.0) > 1e-12) {
    throw ParameterError("mixture coefficients must lie on the simplex");
  }
  const PsrModel& first = *core.front();
  for (const PsrModel* m : core) {
    if (m->dims() != first.dims() || !(m->space() == first.space())) {
      throw StructuralError("core tasks must share space and dims");
    }
  }
  PsrParams p = first.params();
  p.declared_rank = 0;
  p.psi0.setZero();
  p.phi_end.setZero();
  for (auto& step : p.ops) {
    for (Matrix& m : step) m.setZero();
  }
  for (std::size_t l = 0; l < core.size(); ++l) {
    const double w = alpha(static_cast<Eigen::Index>(l));
    if (w == 0.0) continue;
    p.psi0 += w * core[l]->psi0();
    p.phi_end += w * core[l]->phi_end();
    for (std::size_t h = 0; h < p.ops.size(); ++h) {
      for (std::size_t i = 0; i < p.ops[h].size(); ++i) p.ops[h][i] += w * core[l]->ops()[h][i];
    }
  }
  return PsrModel(std::move(p));
}

JointModelClass build_linear_span(const std::vector<PsrModel>& core, const std::vector<Vector>& grid, int n_tasks,
                                  std::uint64_t budget) {
  if (core.empty() || grid.empty()) throw EmptyClassError("linear-span class needs core tasks and a grid");
  if (n_tasks < 1) throw ParameterError("linear-span class needs N >= 1");
  const std::uint64_t unfiltered = checked_count(grid.size(), n_tasks, budget, "linear-span class |grid|^N");
  std::vector<const PsrModel*> ptrs;
  for (const PsrModel& m : core) ptrs.push_back(&m);
  std::vector<std::shared_ptr<const PsrModel>> pool;
  nlohmann::json kept = nlohmann::json::array();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    PsrModel m = mix_models(ptrs, grid[g]);
    if (!validate_model(m).ok()) continue;
    pool.push_back(std::make_shared<const PsrModel>(std::move(m)));
    kept.push_back(std::vector<double>(grid[g].data(), grid[g].data() + grid[g].size()));
  }
  if (pool.empty()) throw EmptyClassError("every mixture failed validation");
  nlohmann::json params = {{"m", core.size()}, {"grid_size", grid.size()}, {"pool_alphas", kept}};
  const std::size_t pool_size = pool.size();
  JointModelClass cls(Family::LinearSpan, n_tasks, std::move(pool), power_members(pool_size, n_tasks), params);
  cls.set_filter_stats(unfiltered, unfiltered - cls.size());
  return cls;
}

std::vector<Vector> simplex_grid(int m, int k) {
  if (m < 1 || k < 1) throw ParameterError("simplex grid needs m >= 1 and k >= 1");
  std::vector<Vector> out;
  std::vector<int> c(static_cast<std::size_t>(m), 0);
  std::function<void(int, int)> rec = [&](int pos, int left) {
    if (pos == m - 1) {
      c[static_cast<std::size_t>(pos)] = left;
      Vector v(m);
      for (int i = 0; i < m; ++i) v(i) = static_cast<double>(c[static_cast<std::size_t>(i)]) / k;
      out.push_back(v);
      return;
    }
    for (int x = left; x >= 0; --x) {
      c[static_cast<std::size_t>(pos)] = x;
      rec(pos + 1, left - x);
    }
  };
  rec(0, k);
  return out;
}

// ---- brackets ----

Bracket envelope_bracket(const JointModelClass& cls, const std::vector<std::size_t>& members) {
  if (members.empty()) throw ParameterError("envelope of an empty member set");
  Bracket b;
  for (int n = 0; n < cls.n_tasks(); ++n) {
    TrajectoryLaw lo = cls.pool_law(cls.pool_index(members.front(), n));
    TrajectoryLaw hi = lo;
    for (std::size_t i : members) {
      const TrajectoryLaw& f = cls.pool_law(cls.pool_index(i, n));
      for (std::size_t t = 0; t < f.size(); ++t) {
        lo[t] = std::min(lo[t], f[t]);
        hi[t] = std::max(hi[t], f[t]);
      }
    }
    b.lower.push_back(std::move(lo));
    b.upper.push_back(std::move(hi));
  }
  return b;
}

double bracket_width(const Bracket& b, const PolicyWeightTable& weights) {
  if (b.lower.size() != b.upper.size()) throw StructuralError("bracket ends have different task counts");
  double w = 0.0;
  for (std::size_t n = 0; n < b.lower.size(); ++n) {
    w = std::max(w, max_weighted_abs_diff(b.lower[n], b.upper[n], weights.rows()));
  }
  return w;
}

CoverCheck verify_bracket_cover(const JointModelClass& cls, const BracketSet& brackets, const PolicyWeightTable& weights) {
  std::vector<bool> usable;
  for (const Bracket& b : brackets.brackets) {
    bool ok = b.lower.size() == static_cast<std::size_t>(cls.n_tasks()) && b.upper.size() == b.lower.size();
    if (ok) {
      for (std::size_t n = 0; n < b.lower.size() && ok; ++n) {
        ok = b.lower[n].size() == b.upper[n].size() && b.lower[n].size() == cls.space().trajectory_count();
        for (std::size_t t = 0; ok && t < b.lower[n].size(); ++t) ok = b.lower[n][t] <= b.upper[n][t];
      }
    }
    usable.push_back(ok && bracket_width(b, weights) < brackets.eta);
  }
  for (std::size_t i = 0; i < cls.size(); ++i) {
    bool inside_any = false;
    for (std::size_t k = 0; k < brackets.brackets.size() && !inside_any; ++k) {
      if (!usable[k]) continue;
      const Bracket& b = brackets.brackets[k];
      bool inside = true;
      for (int n = 0; n < cls.n_tasks() && inside; ++n) {
        const TrajectoryLaw& f = cls.pool_law(cls.pool_index(i, n));
        const auto& lo = b.lower[static_cast<std::size_t>(n)];
        const auto& hi = b.upper[static_cast<std::size_t>(n)];
        for (std::size_t t = 0; t < f.size() && inside; ++t) inside = lo[t] <= f[t] && f[t] <= hi[t];
      }
      inside_any = inside;
    }
    if (!inside_any) return {false, i};
  }
  return {true, 0};
}

namespace {

std::vector<std::vector<std::size_t>> exact_groups(const JointModelClass& cls, double eta,
                                                   const PolicyWeightTable& weights) {
  const std::size_t n = cls.size();
  const std::size_t full = (std::size_t{1} << n) - 1;
  std::vector<char> valid(full + 1, 0);
  valid[0] = 1;
  for (std::size_t mask = 1; mask <= full; ++mask) {
    const std::size_t low = mask & (~mask + 1);
    // a superset of an invalid group is invalid
    if (mask != low && !valid[mask ^ low]) continue;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) members.push_back(i);
    }
    valid[mask] = bracket_width(envelope_bracket(cls, members), weights) < eta ? 1 : 0;
  }
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> best(full + 1, kNone);
  std::vector<std::size_t> pick(full + 1, 0);
  best[0] = 0;
  for (std::size_t mask = 1; mask <= full; ++mask) {
    const std::size_t low = mask & (~mask + 1);
    const std::size_t rest = mask ^ low;
    // submasks of `rest`, each joined with the lowest member
    for (std::size_t sub = rest;; sub = (sub - 1) & rest) {
      const std::size_t group = sub | low;
      if (valid[group] && best[mask ^ group] != kNone && best[mask ^ group] + 1 < best[mask]) {
        best[mask] = best[mask ^ group] + 1;
        pick[mask] = group;
      }
      if (sub == 0) break;
    }
  }
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t mask = full; mask != 0; mask ^= pick[mask]) {
    std::vector<std::size_t> g;
    for (std::size_t i = 0; i < n; ++i) {
      if (pick[mask] & (std::size_t{1} << i)) g.push_back(i);
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

// Complete-linkage merging by envelope width; merge heights never decrease, so
// stopping at eta is a cut of one fixed tree.
std::vector<std::vector<std::size_t>> linkage_groups(const JointModelClass& cls, double eta,
                                                     const PolicyWeightTable& weights) {
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cls.size(); ++i) groups.push_back({i});
  std::vector<Bracket> env;
  for (const auto& g : groups) env.push_back(envelope_bracket(cls, g));
  const auto merged = [&](std::size_t a, std::size_t b) {
    Bracket m = env[a];
    for (std::size_t n = 0; n < m.lower.size(); ++n) {
      for (std::size_t t = 0; t < m.lower[n].size(); ++t) {
        m.lower[n][t] = std::min(m.lower[n][t], env[b].lower[n][t]);
        m.upper[n][t] = std::max(m.upper[n][t], env[b].upper[n][t]);
      }
    }
    return m;
  };
  std::vector<std::vector<double>> dist(groups.size(), std::vector<double>(groups.size(), 0.0));
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) dist[a][b] = bracket_width(merged(a, b), weights);
  }
  std::vector<bool> alive(groups.size(), true);
  while (true) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0;
    std::size_t bb = 0;
    for (std::size_t a = 0; a < groups.size(); ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < groups.size(); ++b) {
        if (alive[b] && dist[a][b] < best) {
          best = dist[a][b];
          ba = a;
          bb = b;
        }
      }
    }
    if (!(best < eta)) break;
    env[ba] = merged(ba, bb);
    groups[ba].insert(groups[ba].end(), groups[bb].begin(), groups[bb].end());
    std::sort(groups[ba].begin(), groups[ba].end());
    alive[bb] = false;
    for (std::size_t c = 0; c < groups.size(); ++c) {
      if (!alive[c] || c == ba) continue;
      const double w = bracket_width(merged(std::min(ba, c), std::max(ba, c)), weights);
      dist[std::min(ba, c)][std::max(ba, c)] = w;
    }
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t a = 0; a < groups.size(); ++a) {
    if (alive[a]) out.push_back(groups[a]);
  }
  return out;
}

}  // namespace

BracketCover greedy_bracket_cover(const JointModelClass& cls, double eta, const PolicyWeightTable& weights,
                                  std::size_t exact_limit) {
  if (!(eta > 0.0)) throw ParameterError("eta must be positive");
  BracketCover cover;
  cover.exact = cls.size() <= std::min<std::size_t>(exact_limit, 20);
  const auto groups = cover.exact ? exact_groups(cls, eta, weights) : linkage_groups(cls, eta, weights);
  cover.brackets.eta = eta;
  for (const auto& g : groups) cover.brackets.brackets.push_back(envelope_bracket(cls, g));
  cover.count = groups.size();
  if (!verify_bracket_cover(cls, cover.brackets, weights).covered) {
    throw InvariantViolation("constructed bracket cover failed verification");
  }
  return cover;
}

std::size_t greedy_bracket_count(const JointModelClass& cls, double eta, const PolicyWeightTable& weights) {
  return greedy_bracket_cover(cls, eta, weights).count;
}

}  // namespace mtpsr
