#include "mtpsr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "mtpsr/cover.hpp"
#include "mtpsr/divergence.hpp"
#include "mtpsr/error.hpp"
#include "mtpsr/pomdp.hpp"

namespace mtpsr {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Reads one config object and rejects keys it never asked for.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  void get(const char* key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) throw ConfigError(where(key) + " must be an integer");
      out = v->get<int>();
    }
  }
  void get(const char* key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (v->is_number_unsigned()) {
        out = v->get<std::uint64_t>();
      } else if (v->is_number_float() && v->get<double>() >= 0.0 && v->get<double>() < 1.8e19 &&
                 std::floor(v->get<double>()) == v->get<double>()) {
        out = static_cast<std::uint64_t>(v->get<double>());
      } else {
        throw ConfigError(where(key) + " must be a nonnegative integer");
      }
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) throw ConfigError(where(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, std::optional<double>& out) {
    if (const json* v = take(key)) {
      if (v->is_null()) {
        out.reset();
      } else if (v->is_number()) {
        out = v->get<double>();
      } else {
        throw ConfigError(where(key) + " must be a number or null");
      }
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) throw ConfigError(where(key) + " must be a boolean");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<double>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) throw ConfigError(where(key) + " must be an array of numbers");
      out.clear();
      for (const json& x : *v) {
        if (!x.is_number()) throw ConfigError(where(key) + " must be an array of numbers");
        out.push_back(x.get<double>());
      }
    }
  }
  const json* object(const char* key) { return take(key); }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown config key '" + where(item.key().c_str()) + "'");
    }
  }

  std::string where(const char* key) const { return path_.empty() ? std::string(key) : path_ + "." + key; }

 private:
  const json* take(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

std::vector<std::uint64_t> seeds_from(const json& v) {
  if (v.is_string()) return parse_seed_list(v.get<std::string>());
  if (!v.is_array()) throw ConfigError("seeds must be an array of integers or a list string");
  std::vector<std::uint64_t> out;
  for (const json& s : v) {
    if (!s.is_number_unsigned()) throw ConfigError("seeds must be nonnegative integers");
    out.push_back(s.get<std::uint64_t>());
  }
  return out;
}

std::uint64_t scenario_id(Scenario s) { return static_cast<std::uint64_t>(s) + 1; }

// Saturating operation counts.
std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) return std::numeric_limits<std::uint64_t>::max();
  return a * b;
}
std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) {
  return a > std::numeric_limits<std::uint64_t>::max() - b ? std::numeric_limits<std::uint64_t>::max() : a + b;
}
std::uint64_t sat_pow(std::uint64_t b, int e) {
  std::uint64_t r = 1;
  for (int i = 0; i < e; ++i) r = sat_mul(r, b);
  return r;
}
std::uint64_t binomial(int n, int k) {
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

std::uint64_t pool_size_for(const FamilySpec& f, const std::string& truth) {
  const auto N = static_cast<std::uint64_t>(f.n_tasks);
  if (truth == "all-identical") return static_cast<std::uint64_t>(f.single_candidates);
  if (truth == "shared-transition") {
    return sat_mul(sat_mul(static_cast<std::uint64_t>(f.transition_candidates), N),
                   static_cast<std::uint64_t>(f.emission_candidates));
  }
  if (truth == "independent") return sat_mul(N, static_cast<std::uint64_t>(f.single_candidates));
  if (truth == "perturbed") return sat_pow(static_cast<std::uint64_t>(f.delta_count), f.horizon);
  return binomial(f.grid_resolution + f.core_tasks - 1, f.core_tasks - 1);
}

std::uint64_t member_count_for(const FamilySpec& f) {
  const std::uint64_t pool = pool_size_for(f, f.truth);
  if (f.cls == "diagonal") return pool;
  if (f.cls == "shared-transition") {
    return sat_mul(static_cast<std::uint64_t>(f.transition_candidates),
                   sat_pow(static_cast<std::uint64_t>(f.emission_candidates), f.n_tasks));
  }
  return sat_pow(pool, f.n_tasks);
}

// Inserts `truth` at a random position among `count` candidates.
template <class T, class Gen>
std::vector<T> with_truth(const T& truth, int count, RngStream& rng, Gen make_other) {
  const auto pos = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(count)));
  std::vector<T> out;
  for (int i = 0; i < count; ++i) out.push_back(static_cast<std::size_t>(i) == pos ? truth : make_other());
  return out;
}

RewardFunction random_reward(const ObsActionSpace& space, RngStream& rng) {
  std::vector<std::vector<double>> per_step;
  for (int h = 1; h <= space.horizon(); ++h) {
    std::vector<double> row(static_cast<std::size_t>(space.pairs()));
    for (double& r : row) r = rng.uniform() / space.horizon();
    per_step.push_back(std::move(row));
  }
  return RewardFunction::additive(space, std::move(per_step));
}

std::shared_ptr<const TabularPomdp> random_pomdp(const ObsActionSpace& space, int S, const Vector& init,
                                                 RngStream& rng, double sharpness) {
  auto t = random_transitions(space, S, rng, sharpness);
  auto e = random_emissions(space, S, rng, sharpness);
  return std::make_shared<const TabularPomdp>(space, S, std::move(t), std::move(e), init);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json trace_json(const TraceRecord& r, const std::string& phase) {
  json j = {{"type", "iteration"},
            {"phase", phase},
            {"k", r.k},
            {"set_size", r.set_size},
            {"next_set_size", r.next_set_size},
            {"policy_ids", r.policy_ids},
            {"trajectory_ids", r.trajectory_ids},
            {"trajectories", r.trajectory_ids.size()},
            {"plan_objective", r.plan_objective},
            {"max_loglik", r.max_loglik},
            {"margin", r.margin},
            {"tv_metric", optional_json(r.tv_metric)}};
  j["true_in_set"] = r.true_in_set ? json(*r.true_in_set) : json(nullptr);
  return j;
}

void append(std::string& out, const json& j) {
  out += j.dump();
  out += '\n';
}

std::vector<const PsrModel*> raw(const std::vector<std::shared_ptr<const PsrModel>>& v) {
  std::vector<const PsrModel*> out;
  for (const auto& p : v) out.push_back(p.get());
  return out;
}

double member_tv(const JointModelClass& cls, std::size_t member, const std::vector<TrajectoryLaw>& truth_laws,
                 const PolicyWeightTable& weights) {
  double s = 0.0;
  for (int n = 0; n < cls.n_tasks(); ++n) {
    s += max_weighted_abs_diff(cls.pool_law(cls.pool_index(member, n)), truth_laws[static_cast<std::size_t>(n)],
                               weights.rows());
  }
  return s;
}

struct UpstreamSummary {
  LearnerOutput out;
  MetricReport report;
  int iterations_to_threshold = 0;
  double initial_tv = 0.0;
};

UpstreamSummary run_upstream_phase(const ExperimentConfig& cfg, const Instance& inst, std::uint64_t learner_seed,
                                   std::string& records) {
  UpstreamConfig uc;
  uc.cls = inst.cls.get();
  uc.truth = raw(inst.truth);
  uc.true_member = inst.true_member;
  uc.rewards = inst.rewards;
  uc.policies = inst.policies.get();
  uc.iterations = cfg.learner.iterations;
  uc.c1 = cfg.learner.c1;
  uc.delta = cfg.learner.delta;
  uc.beta = cfg.learner.beta;
  uc.seed = learner_seed;
  uc.tol.p_floor = cfg.learner.p_floor;
  UpstreamSummary s;
  s.out = run_umt_psr(uc);
  for (const TraceRecord& r : s.out.trace) append(records, trace_json(r, "upstream"));

  const PolicyWeightTable weights(*inst.policies);
  std::vector<TrajectoryLaw> truth_laws;
  for (const auto& m : inst.truth) truth_laws.push_back(dynamics_law(*m));
  s.initial_tv = member_tv(*inst.cls, 0, truth_laws, weights);
  s.iterations_to_threshold = iterations_to_threshold(s.out, s.initial_tv, cfg.learner.tv_target);
  std::vector<const PsrModel*> est;
  for (int n = 0; n < inst.cls->n_tasks(); ++n) est.push_back(&inst.cls->model(s.out.estimate, n));
  s.report = metrics(est, s.out.greedy_policies, uc.truth, inst.rewards, weights);
  return s;
}

json upstream_final(const ExperimentConfig& cfg, const Instance& inst, const UpstreamSummary& s, std::uint64_t seed) {
  const bool true_in_final =
      inst.true_member && std::binary_search(s.out.final_set.members.begin(), s.out.final_set.members.end(),
                                             *inst.true_member);
  return {{"type", "final"},
          {"scenario", to_string(cfg.scenario)},
          {"name", cfg.name},
          {"seed", seed},
          {"class", cfg.family.cls},
          {"class_size", inst.cls->size()},
          {"true_member", inst.true_member ? json(*inst.true_member) : json(nullptr)},
          {"beta", s.out.beta},
          {"iterations", cfg.learner.iterations},
          {"initial_tv", s.initial_tv},
          {"tv_error", s.report.tv_error},
          {"average_gap", s.report.average_gap},
          {"task_tv", s.report.task_tv},
          {"task_gap", s.report.task_gap},
          {"iterations_to_threshold", s.iterations_to_threshold},
          {"final_set_size", s.out.final_set.members.size()},
          {"true_in_final", true_in_final},
          {"estimate", s.out.estimate},
          {"greedy_policies", s.out.greedy_policies},
          {"trajectories", s.out.data.size()}};
}

// ---- divergence suite ----

TrajectoryLaw random_law(int size, RngStream& rng, double mass, bool allow_zeros) {
  TrajectoryLaw p(static_cast<std::size_t>(size));
  double total = 0.0;
  for (double& x : p) {
    x = (allow_zeros && rng.uniform() < 0.2) ? 0.0 : rng.uniform();
    total += x;
  }
  if (total == 0.0) {
    p[0] = 1.0;
    total = 1.0;
  }
  for (double& x : p) x *= mass / total;
  return p;
}

json run_divergence_suite(const SuiteSpec& spec, std::uint64_t stream) {
  RngStream rng(stream);
  std::map<std::string, std::pair<int, int>> counts;  // name -> (passed, total)
  auto check = [&](const std::string& name, bool ok) {
    auto& c = counts[name];
    c.second += 1;
    if (ok) c.first += 1;
  };
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12; };

  check("example.tv", close(tv({0.5, 0.5}, {0.8, 0.2}), 0.6));
  check("example.tv_disjoint", close(tv({1.0, 0.0}, {0.0, 1.0}), 2.0));
  check("example.hellinger", close(hellinger_sq({0.5, 0.5}, {0.8, 0.2}), 1.0 - (std::sqrt(0.4) + std::sqrt(0.1))));
  check("example.hellinger_disjoint", close(hellinger_sq({1.0, 0.0}, {0.0, 1.0}), 1.0));
  check("example.kl", close(kl({1.0, 0.0}, {0.5, 0.5}), std::log(2.0)));
  check("example.renyi", close(renyi(2.0, {0.5, 0.5}, {0.25, 0.75}), std::log(4.0 / 3.0)));
  check("example.renyi_support", std::isinf(renyi(2.0, {0.5, 0.5}, {1.0, 0.0})));

  const double alphas[] = {1.5, 2.0, 4.0};
  for (int i = 0; i < spec.pairs; ++i) {
    const double mp = 2.0 * (1.0 - rng.uniform());
    const double mq = 2.0 * (1.0 - rng.uniform());
    const TrajectoryLaw bp = random_law(spec.support, rng, mp, true);
    const TrajectoryLaw bq = random_law(spec.support, rng, mq, true);
    const double t = tv(bp, bq);
    check("bounded_measure", t * t <= 4.0 * (mp + mq) * hellinger_sq(bp, bq) + 1e-12);

    const TrajectoryLaw p = random_law(spec.support, rng, 1.0, false);
    const TrajectoryLaw q = random_law(spec.support, rng, 1.0, false);
    const TrajectoryLaw r = random_law(spec.support, rng, 1.0, true);
    const double k = kl(p, q);
    for (double a : alphas) check("kl_le_renyi", k <= renyi(a, p, q) + 1e-12);
    const double tpq = tv(p, q);
    check("pinsker_halved", (tpq / 2.0) * (tpq / 2.0) <= k / 2.0 + 1e-12);
    check("tv_triangle", tv(p, r) <= tpq + tv(q, r) + 1e-12);
    const double hs = hellinger_sq(p, r);
    check("hellinger_range", hs >= -1e-12 && hs <= 1.0 + 1e-12);
  }
  for (int i = 0; i < spec.triples; ++i) {
    const TrajectoryLaw p = random_law(spec.support, rng, 1.0, true);
    const TrajectoryLaw q = random_law(spec.support, rng, 1.0, false);
    double a1 = 1.0 + 4.0 * rng.uniform() + 1e-6;
    double a2 = 1.0 + 4.0 * rng.uniform() + 1e-6;
    double a3 = 1.0 + 4.0 * rng.uniform() + 1e-6;
    if (a1 > a2) std::swap(a1, a2);
    if (a2 > a3) std::swap(a2, a3);
    if (a1 > a2) std::swap(a1, a2);
    const double r1 = renyi(a1, p, q);
    const double r2 = renyi(a2, p, q);
    const double r3 = renyi(a3, p, q);
    check("renyi_monotone", r1 <= r2 + 1e-12 && r2 <= r3 + 1e-12);
  }
  for (int i = 0; i < spec.sequences; ++i) {
    const int rank = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_rank)));
    const int count = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_length)));
    const int dim = rank + static_cast<int>(rng.below(3));
    const auto xs = random_low_rank_sequence(dim, rank, count, rng.next_u64());
    check("elliptical_potential", elliptical_potential(xs, rank, 1.0, 1.0).holds());
  }

  json out = json::object();
  int failures = 0;
  int total = 0;
  for (const auto& [name, c] : counts) {
    out["checks"][name] = {{"passed", c.first}, {"total", c.second}};
    failures += c.second - c.first;
    total += c.second;
  }
  out["failures"] = failures;
  out["checks_total"] = total;
  return out;
}

CoverFamily cover_family_for(const std::string& cls) {
  if (cls == "product") return CoverFamily::Product;
  if (cls == "shared-transition") return CoverFamily::SharedTransition;
  if (cls == "perturbed") return CoverFamily::Perturbed;
  if (cls == "linear-span") return CoverFamily::LinearSpan;
  return CoverFamily::SingleTask;
}

}  // namespace

Scenario parse_scenario(const std::string& name) {
  if (name == "upstream") return Scenario::Upstream;
  if (name == "downstream") return Scenario::Downstream;
  if (name == "baseline-single-task") return Scenario::BaselineSingleTask;
  if (name == "divergence-suite") return Scenario::DivergenceSuite;
  if (name == "bracket-count") return Scenario::BracketCount;
  throw ConfigError("unknown scenario '" + name + "'");
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::Upstream: return "upstream";
    case Scenario::Downstream: return "downstream";
    case Scenario::BaselineSingleTask: return "baseline-single-task";
    case Scenario::DivergenceSuite: return "divergence-suite";
    case Scenario::BracketCount: return "bracket-count";
  }
  return "upstream";
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  auto number = [&](const std::string& s) -> std::uint64_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("bad seed '" + s + "' in list '" + text + "'");
    }
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw ConfigError("seed '" + s + "' is out of range");
    }
  };
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }), item.end());
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(number(item));
      continue;
    }
    const std::uint64_t lo = number(item.substr(0, dash));
    const std::uint64_t hi = number(item.substr(dash + 1));
    if (hi < lo || hi - lo > 1'000'000) throw ConfigError("bad seed range '" + item + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
  }
  if (out.empty()) throw ConfigError("seed list is empty");
  return out;
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  Reader top(j, "");
  require(top.has("schema_version"), "config needs schema_version");
  top.get("schema_version", c.schema_version);
  require(c.schema_version == kSchemaVersion,
          "unsupported schema_version " + std::to_string(c.schema_version) + " (expected " +
              std::to_string(kSchemaVersion) + ")");
  top.get("name", c.name);
  std::string scenario = "upstream";
  require(top.has("scenario"), "config needs a scenario");
  top.get("scenario", scenario);
  c.scenario = parse_scenario(scenario);
  if (const json* seeds = top.object("seeds")) c.seeds = seeds_from(*seeds);
  top.get("output_dir", c.output_dir);
  top.get("budget", c.budget);
  top.get("jobs", c.jobs);

  if (const json* f = top.object("family")) {
    Reader r(*f, "family");
    FamilySpec& s = c.family;
    r.get("truth", s.truth);
    r.get("class", s.cls);
    r.get("n_tasks", s.n_tasks);
    r.get("num_states", s.num_states);
    r.get("num_obs", s.num_obs);
    r.get("num_actions", s.num_actions);
    r.get("horizon", s.horizon);
    r.get("sharpness", s.sharpness);
    r.get("transition_candidates", s.transition_candidates);
    r.get("emission_candidates", s.emission_candidates);
    r.get("single_candidates", s.single_candidates);
    r.get("delta_count", s.delta_count);
    r.get("perturbation_scale", s.perturbation_scale);
    r.get("core_tasks", s.core_tasks);
    r.get("grid_resolution", s.grid_resolution);
    r.finish();
  }
  if (const json* l = top.object("learner")) {
    Reader r(*l, "learner");
    LearnerSpec& s = c.learner;
    r.get("iterations", s.iterations);
    r.get("c1", s.c1);
    r.get("c0", s.c0);
    r.get("delta", s.delta);
    r.get("alpha", s.alpha);
    r.get("p_floor", s.p_floor);
    r.get("beta", s.beta);
    r.get("tv_target", s.tv_target);
    r.finish();
  }
  if (const json* d = top.object("downstream")) {
    Reader r(*d, "downstream");
    r.get("constraint", c.downstream.constraint);
    r.get("realizable", c.downstream.realizable);
    r.get("candidates", c.downstream.candidates);
    r.get("perturbation_scale", c.downstream.perturbation_scale);
    r.finish();
  }
  if (const json* s = top.object("suite")) {
    Reader r(*s, "suite");
    r.get("pairs", c.suite.pairs);
    r.get("triples", c.suite.triples);
    r.get("support", c.suite.support);
    r.get("sequences", c.suite.sequences);
    r.get("max_rank", c.suite.max_rank);
    r.get("max_length", c.suite.max_length);
    r.finish();
  }
  if (const json* s = top.object("cover")) {
    Reader r(*s, "cover");
    r.get("etas", c.cover.etas);
    r.get("c", c.cover.c);
    r.finish();
  }
  top.finish();

  const FamilySpec& f = c.family;
  require(f.n_tasks >= 1 && f.num_states >= 1 && f.num_obs >= 1 && f.num_actions >= 1 && f.horizon >= 1,
          "family sizes must be positive");
  require(f.sharpness > 0.0, "family.sharpness must be positive");
  require(f.transition_candidates >= 1 && f.emission_candidates >= 1 && f.single_candidates >= 1 &&
              f.delta_count >= 1 && f.core_tasks >= 1 && f.grid_resolution >= 1,
          "candidate counts must be positive");
  require(f.perturbation_scale >= 0.0 && f.perturbation_scale < 1.0, "family.perturbation_scale must lie in [0,1)");
  static const std::map<std::string, std::set<std::string>> allowed = {
      {"all-identical", {"diagonal", "product"}},
      {"shared-transition", {"shared-transition", "product"}},
      {"independent", {"product"}},
      {"perturbed", {"perturbed", "product"}},
      {"linear-span", {"linear-span", "product"}}};
  const auto it = allowed.find(f.truth);
  require(it != allowed.end(), "unknown family.truth '" + f.truth + "'");
  require(it->second.count(f.cls) > 0, "family.class '" + f.cls + "' does not fit family.truth '" + f.truth + "'");

  const LearnerSpec& l = c.learner;
  require(l.iterations >= 0, "learner.iterations must be nonnegative");
  require(l.c1 > 0.0 && l.c0 > 0.0, "learner constants must be positive");
  require(l.delta > 0.0 && l.delta < 1.0, "learner.delta must lie in (0,1)");
  require(l.alpha > 1.0, "learner.alpha must exceed 1");
  require(l.p_floor > 0.0 && l.p_floor < 1.0, "learner.p_floor must lie in (0,1)");
  require(!l.beta || *l.beta >= 0.0, "learner.beta must be nonnegative");
  require(l.tv_target > 0.0, "learner.tv_target must be positive");

  const DownstreamSpec& d = c.downstream;
  static const std::map<std::string, std::set<std::string>> constraint_truth = {
      {"shared-transition", {"shared-transition", "all-identical"}},
      {"perturbed-of-base", {"perturbed"}},
      {"linear-span", {"linear-span"}},
      {"zero", {"all-identical", "shared-transition", "independent", "perturbed", "linear-span"}}};
  const auto ct = constraint_truth.find(d.constraint);
  require(ct != constraint_truth.end(), "unknown downstream.constraint '" + d.constraint + "'");
  if (c.scenario == Scenario::Downstream) {
    require(ct->second.count(f.truth) > 0,
            "downstream.constraint '" + d.constraint + "' does not fit family.truth '" + f.truth + "'");
  }
  require(d.candidates >= 1, "downstream.candidates must be positive");
  require(d.perturbation_scale >= 0.0 && d.perturbation_scale < 1.0,
          "downstream.perturbation_scale must lie in [0,1)");

  const SuiteSpec& s = c.suite;
  require(s.pairs >= 0 && s.triples >= 0 && s.sequences >= 0, "suite counts must be nonnegative");
  require(s.support >= 1 && s.max_rank >= 1 && s.max_length >= 1, "suite sizes must be positive");
  require(!c.cover.etas.empty(), "cover.etas must not be empty");
  for (double e : c.cover.etas) require(e > 0.0, "cover.etas must be positive");
  require(c.cover.c > 0.0, "cover.c must be positive");
  require(!c.seeds.empty(), "seeds must not be empty");
  require(c.jobs >= 1, "jobs must be positive");
  require(c.budget >= 1, "budget must be positive");
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  const FamilySpec& f = c.family;
  const LearnerSpec& l = c.learner;
  return {{"schema_version", c.schema_version},
          {"name", c.name},
          {"scenario", to_string(c.scenario)},
          {"seeds", c.seeds},
          {"output_dir", c.output_dir},
          {"budget", c.budget},
          {"jobs", c.jobs},
          {"family",
           {{"truth", f.truth},
            {"class", f.cls},
            {"n_tasks", f.n_tasks},
            {"num_states", f.num_states},
            {"num_obs", f.num_obs},
            {"num_actions", f.num_actions},
            {"horizon", f.horizon},
            {"sharpness", f.sharpness},
            {"transition_candidates", f.transition_candidates},
            {"emission_candidates", f.emission_candidates},
            {"single_candidates", f.single_candidates},
            {"delta_count", f.delta_count},
            {"perturbation_scale", f.perturbation_scale},
            {"core_tasks", f.core_tasks},
            {"grid_resolution", f.grid_resolution}}},
          {"learner",
           {{"iterations", l.iterations},
            {"c1", l.c1},
            {"c0", l.c0},
            {"delta", l.delta},
            {"alpha", l.alpha},
            {"p_floor", l.p_floor},
            {"beta", optional_json(l.beta)},
            {"tv_target", l.tv_target}}},
          {"downstream",
           {{"constraint", c.downstream.constraint},
            {"realizable", c.downstream.realizable},
            {"candidates", c.downstream.candidates},
            {"perturbation_scale", c.downstream.perturbation_scale}}},
          {"suite",
           {{"pairs", c.suite.pairs},
            {"triples", c.suite.triples},
            {"support", c.suite.support},
            {"sequences", c.suite.sequences},
            {"max_rank", c.suite.max_rank},
            {"max_length", c.suite.max_length}}},
          {"cover", {{"etas", c.cover.etas}, {"c", c.cover.c}}}};
}

std::uint64_t estimate_cost(const ExperimentConfig& cfg) {
  const FamilySpec& f = cfg.family;
  if (cfg.scenario == Scenario::DivergenceSuite) {
    const auto s = static_cast<std::uint64_t>(cfg.suite.support);
    std::uint64_t cost = sat_mul(static_cast<std::uint64_t>(cfg.suite.pairs + cfg.suite.triples), sat_mul(s, 16));
    const auto r = static_cast<std::uint64_t>(cfg.suite.max_rank + 2);
    return sat_add(cost, sat_mul(static_cast<std::uint64_t>(cfg.suite.sequences),
                                 sat_mul(static_cast<std::uint64_t>(cfg.suite.max_length), r * r * r)));
  }
  const std::uint64_t traj =
      sat_pow(static_cast<std::uint64_t>(f.num_obs) * static_cast<std::uint64_t>(f.num_actions), f.horizon);
  const std::uint64_t policies = sat_pow(static_cast<std::uint64_t>(f.num_actions), f.horizon * f.num_obs);
  const std::uint64_t pool = pool_size_for(f, f.truth);
  const std::uint64_t members = member_count_for(f);
  const auto S = static_cast<std::uint64_t>(f.num_states);
  const auto N = static_cast<std::uint64_t>(f.n_tasks);
  const auto K = static_cast<std::uint64_t>(cfg.learner.iterations);

  std::uint64_t cost = sat_mul(policies, traj);                                   // weight table
  cost = sat_add(cost, sat_mul(pool, sat_mul(traj, S * S * static_cast<std::uint64_t>(f.horizon))));  // laws
  cost = sat_add(cost, sat_mul(sat_mul(pool, pool), sat_mul(policies, traj)));   // plan cache, worst case
  const std::uint64_t per_iter =
      sat_add(sat_mul(sat_mul(members, members), N), sat_mul(N * static_cast<std::uint64_t>(f.horizon), pool));
  cost = sat_add(cost, sat_mul(K, sat_add(per_iter, members)));
  if (cfg.scenario == Scenario::BracketCount) {
    cost = sat_add(cost, sat_mul(static_cast<std::uint64_t>(cfg.cover.etas.size()),
                                 sat_mul(sat_mul(members, members), sat_mul(policies, traj))));
  }
  if (cfg.scenario == Scenario::Downstream) {
    const std::uint64_t dpool =
        sat_add(sat_mul(static_cast<std::uint64_t>(f.transition_candidates + f.delta_count),
                        static_cast<std::uint64_t>(cfg.downstream.candidates)),
                sat_pow(static_cast<std::uint64_t>(f.delta_count), f.horizon));
    cost = sat_add(cost, sat_mul(sat_mul(dpool, dpool), sat_mul(policies, traj)));
  }
  return cost;
}

void check_budget(const ExperimentConfig& cfg) {
  const std::uint64_t cost = estimate_cost(cfg);
  if (cost > cfg.budget) {
    throw BudgetError("estimated " + std::to_string(cost) + " operations per seed exceed the budget of " +
                      std::to_string(cfg.budget));
  }
}

std::uint64_t stream_seed(std::uint64_t seed, Scenario scenario, std::uint64_t run_index) {
  return derive_seed(seed, {run_index == 0 ? 0 : scenario_id(scenario), run_index});
}

std::optional<std::size_t> locate_member(const JointModelClass& cls, const std::vector<const PsrModel*>& truth) {
  if (truth.size() != static_cast<std::size_t>(cls.n_tasks())) return std::nullopt;
  std::vector<TrajectoryLaw> laws;
  for (const PsrModel* m : truth) laws.push_back(dynamics_law(*m));
  std::vector<char> same(cls.pool_size() * truth.size(), 0);
  for (std::size_t n = 0; n < truth.size(); ++n) {
    for (std::size_t j = 0; j < cls.pool_size(); ++j) {
      const TrajectoryLaw& a = cls.pool_law(j);
      bool eq = a.size() == laws[n].size();
      for (std::size_t t = 0; eq && t < a.size(); ++t) eq = std::abs(a[t] - laws[n][t]) <= 1e-12;
      same[n * cls.pool_size() + j] = eq ? 1 : 0;
    }
  }
  for (std::size_t i = 0; i < cls.size(); ++i) {
    bool all = true;
    for (int n = 0; all && n < cls.n_tasks(); ++n) {
      all = same[static_cast<std::size_t>(n) * cls.pool_size() + cls.pool_index(i, n)] != 0;
    }
    if (all) return i;
  }
  return std::nullopt;
}

Instance build_instance(const FamilySpec& spec, std::uint64_t seed, std::uint64_t budget) {
  RngStream rng(stream_seed(seed, Scenario::Upstream, 0));
  Instance inst;
  inst.space = ObsActionSpace(spec.num_obs, spec.num_actions, spec.horizon);
  const ObsActionSpace& space = inst.space;
  const int N = spec.n_tasks;
  const int S = spec.num_states;
  const double sharp = spec.sharpness;

  if (spec.truth == "all-identical" || spec.truth == "shared-transition" || spec.truth == "independent") {
    FamilyDescriptor desc;
    desc.n_tasks = N;
    desc.num_states = S;
    desc.num_obs = spec.num_obs;
    desc.num_actions = spec.num_actions;
    desc.horizon = spec.horizon;
    desc.mode = parse_sharing_mode(spec.truth);
    desc.sharpness = sharp;
    desc.shared_init = true;
    const auto family = make_family(desc, rng);
    for (const TabularPomdp& p : family) {
      inst.truth_pomdps.push_back(std::make_shared<const TabularPomdp>(p));
      inst.truth.push_back(std::make_shared<const PsrModel>(pomdp_to_psr(p)));
    }
    const Vector& init = family.front().init();

    if (spec.truth == "shared-transition") {
      inst.transitions = with_truth(family.front().transitions_ptr(), spec.transition_candidates, rng,
                                    [&] { return random_transitions(space, S, rng, sharp); });
      std::vector<std::vector<std::shared_ptr<const EmissionModel>>> emissions;
      std::vector<Vector> inits;
      for (int n = 0; n < N; ++n) {
        emissions.push_back(with_truth(family[static_cast<std::size_t>(n)].emissions_ptr(), spec.emission_candidates,
                                       rng, [&] { return random_emissions(space, S, rng, sharp); }));
        inits.push_back(init);
      }
      if (spec.cls == "shared-transition") {
        inst.cls = std::make_shared<const JointModelClass>(
            build_shared_transition(space, S, inst.transitions, emissions, inits, budget));
      } else {
        std::vector<PsrModel> single;
        for (const auto& t : inst.transitions) {
          for (int n = 0; n < N; ++n) {
            for (const auto& e : emissions[static_cast<std::size_t>(n)]) {
              single.push_back(pomdp_to_psr(TabularPomdp(space, S, t, e, init)));
            }
          }
        }
        inst.cls = std::make_shared<const JointModelClass>(build_product(single, N, budget));
      }
    } else {
      std::vector<std::shared_ptr<const TabularPomdp>> singles;
      const int tasks_with_truth = spec.truth == "independent" ? N : 1;
      for (int n = 0; n < tasks_with_truth; ++n) {
        const auto row = with_truth(inst.truth_pomdps[static_cast<std::size_t>(n)], spec.single_candidates, rng,
                                    [&] { return random_pomdp(space, S, init, rng, sharp); });
        singles.insert(singles.end(), row.begin(), row.end());
      }
      std::vector<PsrModel> single;
      for (const auto& p : singles) single.push_back(pomdp_to_psr(*p));
      inst.cls = std::make_shared<const JointModelClass>(spec.cls == "diagonal" ? build_diagonal(single, N)
                                                                                 : build_product(single, N, budget));
    }
  } else if (spec.truth == "perturbed") {
    const auto base_pomdp = random_pomdp(space, S, random_distribution(S, rng, sharp), rng, sharp);
    inst.truth_pomdps.push_back(base_pomdp);
    inst.base = std::make_shared<const PsrModel>(pomdp_to_psr(*base_pomdp));
    inst.deltas.elements.push_back(zero_perturbation(*inst.base));
    for (int e = 1; e < spec.delta_count; ++e) {
      inst.deltas.elements.push_back(emission_perturbation(*base_pomdp, spec.perturbation_scale, rng));
    }
    for (int n = 0; n < N; ++n) {
      std::vector<std::size_t> choice;
      for (int h = 0; h < spec.horizon; ++h) choice.push_back(rng.below(inst.deltas.size()));
      inst.truth.push_back(std::make_shared<const PsrModel>(apply_perturbation(*inst.base, inst.deltas, choice)));
    }
    JointModelClass cls = build_perturbed(*inst.base, inst.deltas, spec.cls == "product" ? 1 : N, budget);
    if (spec.cls == "product") {
      std::vector<PsrModel> single;
      for (std::size_t j = 0; j < cls.pool_size(); ++j) single.push_back(cls.pool_model(j));
      inst.cls = std::make_shared<const JointModelClass>(build_product(single, N, budget));
    } else {
      inst.cls = std::make_shared<const JointModelClass>(std::move(cls));
    }
    inst.truth_pomdps.clear();
    inst.truth_pomdps.push_back(base_pomdp);
  } else {
    for (int l = 0; l < spec.core_tasks; ++l) {
      const auto p = random_pomdp(space, S, random_distribution(S, rng, sharp), rng, sharp);
      inst.core.push_back(pomdp_to_psr(*p));
    }
    std::vector<const PsrModel*> core;
    for (const PsrModel& m : inst.core) core.push_back(&m);
    const auto grid = simplex_grid(spec.core_tasks, spec.grid_resolution);
    for (int n = 0; n < N; ++n) {
      inst.truth.push_back(std::make_shared<const PsrModel>(mix_models(core, grid[rng.below(grid.size())])));
    }
    JointModelClass cls = build_linear_span(inst.core, grid, spec.cls == "product" ? 1 : N, budget);
    if (spec.cls == "product") {
      std::vector<PsrModel> single;
      for (std::size_t j = 0; j < cls.pool_size(); ++j) single.push_back(cls.pool_model(j));
      inst.cls = std::make_shared<const JointModelClass>(build_product(single, N, budget));
    } else {
      inst.cls = std::make_shared<const JointModelClass>(std::move(cls));
    }
  }

  for (int n = 0; n < N; ++n) inst.rewards.push_back(random_reward(space, rng));
  inst.policies = std::make_shared<const PolicyClass>(enumerate_reactive(space, budget));
  inst.true_member = locate_member(*inst.cls, raw(inst.truth));
  return inst;
}

DownstreamInstance build_downstream_instance(const ExperimentConfig& cfg, const Instance& inst, std::uint64_t seed) {
  RngStream rng(stream_seed(seed, Scenario::Downstream, 100));
  const FamilySpec& f = cfg.family;
  const DownstreamSpec& d = cfg.downstream;
  const ObsActionSpace& space = inst.space;
  const int S = f.num_states;
  const double sharp = f.sharpness;
  DownstreamInstance out;
  const bool real = d.realizable;

  if (d.constraint == "shared-transition") {
    const TabularPomdp& ref = *inst.truth_pomdps.front();
    const auto e0 = random_emissions(space, S, rng, sharp);
    out.truth = std::make_shared<const PsrModel>(
        pomdp_to_psr(TabularPomdp(space, S, ref.transitions_ptr(), e0, ref.init())));
    std::vector<std::shared_ptr<const EmissionModel>> emissions;
    if (real) {
      emissions = with_truth(e0, d.candidates, rng, [&] { return random_emissions(space, S, rng, sharp); });
    } else {
      for (int i = 0; i < d.candidates; ++i) emissions.push_back(random_emissions(space, S, rng, sharp));
    }
    std::vector<std::shared_ptr<const TransitionKernel>> transitions = inst.transitions;
    if (transitions.empty()) transitions.push_back(ref.transitions_ptr());
    for (const auto& t : transitions) {
      for (const auto& e : emissions) out.pool.push_back(pomdp_to_psr(TabularPomdp(space, S, t, e, ref.init())));
    }
    out.constraint = shared_transition_constraint();
  } else if (d.constraint == "perturbed-of-base") {
    const TabularPomdp& base = *inst.truth_pomdps.front();
    if (real) {
      std::vector<std::size_t> choice;
      for (int h = 0; h < f.horizon; ++h) choice.push_back(rng.below(inst.deltas.size()));
      out.truth = std::make_shared<const PsrModel>(apply_perturbation(*inst.base, inst.deltas, choice));
    } else {
      PerturbationSet fresh;
      fresh.elements.push_back(emission_perturbation(base, d.perturbation_scale, rng));
      out.truth = std::make_shared<const PsrModel>(
          apply_perturbation(*inst.base, fresh, std::vector<std::size_t>(static_cast<std::size_t>(f.horizon), 0)));
    }
    const JointModelClass all = build_perturbed(*inst.base, inst.deltas, 1);
    for (std::size_t j = 0; j < all.pool_size(); ++j) out.pool.push_back(all.pool_model(j));
    for (int i = 0; i < d.candidates; ++i) {
      out.pool.push_back(pomdp_to_psr(*random_pomdp(space, S, base.init(), rng, sharp)));
    }
    out.constraint = perturbed_of_base_constraint(inst.base, inst.deltas);
  } else if (d.constraint == "linear-span") {
    std::vector<const PsrModel*> upstream = raw(inst.truth);
    const auto grid = simplex_grid(f.n_tasks, f.grid_resolution);
    if (real) {
      out.truth = std::make_shared<const PsrModel>(mix_models(upstream, grid[rng.below(grid.size())]));
    } else {
      Vector alpha(f.n_tasks);
      for (int i = 0; i < f.n_tasks; ++i) alpha(i) = 0.05 + rng.uniform();
      alpha /= alpha.sum();
      alpha(f.n_tasks - 1) = 1.0 - (alpha.sum() - alpha(f.n_tasks - 1));
      out.truth = std::make_shared<const PsrModel>(mix_models(upstream, alpha));
    }
    for (const Vector& a : grid) out.pool.push_back(mix_models(upstream, a));
    for (int i = 0; i < d.candidates; ++i) {
      out.pool.push_back(pomdp_to_psr(*random_pomdp(space, S, random_distribution(S, rng, sharp), rng, sharp)));
    }
    out.constraint = linear_span_constraint(grid);
  } else {
    const Vector init = random_distribution(S, rng, sharp);
    const auto truth = random_pomdp(space, S, init, rng, sharp);
    out.truth = std::make_shared<const PsrModel>(pomdp_to_psr(*truth));
    if (real) {
      const auto row = with_truth(truth, d.candidates, rng, [&] { return random_pomdp(space, S, init, rng, sharp); });
      for (const auto& p : row) out.pool.push_back(pomdp_to_psr(*p));
    } else {
      for (int i = 0; i < d.candidates; ++i) out.pool.push_back(pomdp_to_psr(*random_pomdp(space, S, init, rng, sharp)));
    }
    out.constraint = zero_constraint();
  }
  out.reward = random_reward(space, rng);
  return out;
}

int iterations_to_threshold(const LearnerOutput& out, double initial_tv, double target) {
  if (initial_tv <= target) return 0;
  for (const TraceRecord& r : out.trace) {
    if (r.tv_metric && *r.tv_metric <= target) return r.k;
  }
  return static_cast<int>(out.trace.size()) + 1;
}

SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  SeedResult res;
  res.seed = seed;
  std::string& records = res.records;

  switch (cfg.scenario) {
    case Scenario::Upstream: {
      const Instance inst = build_instance(cfg.family, seed, cfg.budget);
      const UpstreamSummary s = run_upstream_phase(cfg, inst, stream_seed(seed, cfg.scenario, 1), records);
      res.final_record = upstream_final(cfg, inst, s, seed);
      break;
    }
    case Scenario::Downstream: {
      const Instance inst = build_instance(cfg.family, seed, cfg.budget);
      const UpstreamSummary s = run_upstream_phase(cfg, inst, stream_seed(seed, cfg.scenario, 1), records);
      json fin = upstream_final(cfg, inst, s, seed);

      const DownstreamInstance dinst = build_downstream_instance(cfg, inst, seed);
      std::vector<const PsrModel*> estimate;
      for (int n = 0; n < inst.cls->n_tasks(); ++n) estimate.push_back(&inst.cls->model(s.out.estimate, n));
      const std::vector<PsrModel> cls = build_downstream_class(dinst.pool, estimate, dinst.constraint);
      const PolicyWeightTable weights(*inst.policies);
      const ApproxError eps = approx_error(cls, *dinst.truth, cfg.learner.alpha, weights);

      const TrajectoryLaw star = dynamics_law(*dinst.truth);
      double best_in_class = kInf;
      for (const PsrModel& m : cls) {
        best_in_class = std::min(best_in_class, max_weighted_abs_diff(dynamics_law(m), star, weights.rows()));
      }

      DownstreamConfig dc;
      dc.candidates = cls;
      dc.truth = dinst.truth.get();
      for (std::size_t i = 0; i < cls.size(); ++i) {
        if (max_weighted_abs_diff(dynamics_law(cls[i]), star, weights.rows()) == 0.0) {
          dc.true_member = i;
          break;
        }
      }
      dc.reward = dinst.reward;
      dc.policies = inst.policies.get();
      dc.iterations = cfg.learner.iterations;
      dc.alpha = cfg.learner.alpha;
      dc.c0 = cfg.learner.c0;
      dc.delta = cfg.learner.delta;
      dc.seed = stream_seed(seed, cfg.scenario, 101);
      dc.tol.p_floor = cfg.learner.p_floor;
      if (!cfg.downstream.realizable) {
        if (eps.all_infinite) {
          dc.beta = kInf;
        } else {
          dc.epsilon0 = eps.value;
        }
      }
      const LearnerOutput down = run_omle(dc);
      for (const TraceRecord& r : down.trace) append(records, trace_json(r, "downstream"));
      const MetricReport rep = metrics({&cls[down.estimate]}, down.greedy_policies, {dinst.truth.get()},
                                       {dinst.reward}, weights);
      fin["downstream"] = {{"class_size", cls.size()},
                           {"pool_size", dinst.pool.size()},
                           {"constraint", dinst.constraint.name},
                           {"realizable_flag", cfg.downstream.realizable},
                           {"epsilon0", eps.all_infinite ? json(nullptr) : json(eps.value)},
                           {"beta", down.beta},
                           {"best_in_class_tv", best_in_class},
                           {"tv_error", rep.tv_error},
                           {"gap", rep.average_gap},
                           {"estimate", down.estimate},
                           {"true_member", dc.true_member ? json(*dc.true_member) : json(nullptr)},
                           {"final_set_size", down.final_set.members.size()}};
      res.final_record = std::move(fin);
      break;
    }
    case Scenario::BaselineSingleTask: {
      const Instance inst = build_instance(cfg.family, seed, cfg.budget);
      const PolicyWeightTable weights(*inst.policies);
      const int N = inst.cls->n_tasks();
      const int K = cfg.learner.iterations;
      std::vector<double> task_tv;
      std::vector<double> task_gap;
      std::vector<double> summed(static_cast<std::size_t>(K), 0.0);
      double initial = 0.0;
      std::vector<std::size_t> estimates;
      for (int n = 0; n < N; ++n) {
        std::vector<std::size_t> used;
        for (std::size_t i = 0; i < inst.cls->size(); ++i) used.push_back(inst.cls->pool_index(i, n));
        std::sort(used.begin(), used.end());
        used.erase(std::unique(used.begin(), used.end()), used.end());
        DownstreamConfig dc;
        for (std::size_t j : used) dc.candidates.push_back(inst.cls->pool_model(j));
        dc.truth = inst.truth[static_cast<std::size_t>(n)].get();
        const TrajectoryLaw star = dynamics_law(*dc.truth);
        for (std::size_t i = 0; i < used.size(); ++i) {
          if (max_weighted_abs_diff(inst.cls->pool_law(used[i]), star, weights.rows()) == 0.0) {
            dc.true_member = i;
            break;
          }
        }
        dc.reward = inst.rewards[static_cast<std::size_t>(n)];
        dc.policies = inst.policies.get();
        dc.iterations = K;
        dc.alpha = cfg.learner.alpha;
        dc.c0 = cfg.learner.c0;
        dc.delta = cfg.learner.delta;
        dc.beta = cfg.learner.beta;
        dc.seed = stream_seed(seed, cfg.scenario, 1 + static_cast<std::uint64_t>(n));
        dc.tol.p_floor = cfg.learner.p_floor;
        const LearnerOutput out = run_omle(dc);
        const std::string phase = "task-" + std::to_string(n);
        for (const TraceRecord& r : out.trace) {
          append(records, trace_json(r, phase));
          summed[static_cast<std::size_t>(r.k - 1)] += r.tv_metric.value_or(0.0);
        }
        initial += max_weighted_abs_diff(inst.cls->pool_law(used.front()), star, weights.rows());
        const MetricReport rep = metrics({&dc.candidates[out.estimate]}, out.greedy_policies, {dc.truth},
                                         {dc.reward}, weights);
        task_tv.push_back(rep.tv_error);
        task_gap.push_back(rep.average_gap);
        estimates.push_back(used[out.estimate]);
      }
      int iters = K + 1;
      if (initial <= cfg.learner.tv_target) {
        iters = 0;
      } else {
        for (int k = 1; k <= K; ++k) {
          if (summed[static_cast<std::size_t>(k - 1)] <= cfg.learner.tv_target) {
            iters = k;
            break;
          }
        }
      }
      double tv_sum = 0.0;
      double gap_sum = 0.0;
      for (int n = 0; n < N; ++n) {
        tv_sum += task_tv[static_cast<std::size_t>(n)];
        gap_sum += task_gap[static_cast<std::size_t>(n)];
      }
      res.final_record = {{"type", "final"},
                          {"scenario", to_string(cfg.scenario)},
                          {"name", cfg.name},
                          {"seed", seed},
                          {"iterations", K},
                          {"initial_tv", initial},
                          {"tv_error", tv_sum},
                          {"average_gap", gap_sum / N},
                          {"task_tv", task_tv},
                          {"task_gap", task_gap},
                          {"iterations_to_threshold", iters},
                          {"estimate_pool_indices", estimates}};
      break;
    }
    case Scenario::DivergenceSuite: {
      json suite = run_divergence_suite(cfg.suite, stream_seed(seed, cfg.scenario, 1));
      suite["type"] = "final";
      suite["scenario"] = to_string(cfg.scenario);
      suite["name"] = cfg.name;
      suite["seed"] = seed;
      res.final_record = std::move(suite);
      break;
    }
    case Scenario::BracketCount: {
      const Instance inst = build_instance(cfg.family, seed, cfg.budget);
      const PolicyWeightTable weights(*inst.policies);
      const FamilySpec& f = cfg.family;
      CoverParams p;
      p.c = cfg.cover.c;
      p.rank = f.num_states;
      p.horizon = f.horizon;
      p.num_obs = f.num_obs;
      p.num_actions = f.num_actions;
      p.num_states = f.num_states;
      p.n_tasks = f.n_tasks;
      p.m = f.core_tasks;
      p.delta_count = f.delta_count;
      const CoverFamily family = cover_family_for(f.cls);
      std::vector<double> etas = cfg.cover.etas;
      std::sort(etas.begin(), etas.end());
      json counts = json::array();
      for (double eta : etas) {
        const BracketCover cover = greedy_bracket_cover(*inst.cls, eta, weights);
        p.eta = eta;
        const double closed = closed_form_log_cover(family, p);
        append(records, {{"type", "bracket"},
                         {"phase", "bracket"},
                         {"eta", eta},
                         {"count", cover.count},
                         {"exact", cover.exact},
                         {"log_count", std::log(static_cast<double>(cover.count))},
                         {"closed_form_log_cover", closed}});
        counts.push_back(cover.count);
      }
      res.final_record = {{"type", "final"},
                          {"scenario", to_string(cfg.scenario)},
                          {"name", cfg.name},
                          {"seed", seed},
                          {"class", f.cls},
                          {"class_size", inst.cls->size()},
                          {"etas", etas},
                          {"counts", counts},
                          {"log_class_size", std::log(static_cast<double>(inst.cls->size()))}};
      break;
    }
  }
  append(records, res.final_record);
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw ParameterError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("quantile level must lie in [0,1]");
  std::sort(xs.begin(), xs.end());
  const double h = (static_cast<double>(xs.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

json aggregate(const std::vector<json>& finals, const std::vector<std::string>& records) {
  std::map<std::string, std::vector<double>> metric_values;
  std::function<void(const json&, const std::string&)> collect = [&](const json& j, const std::string& prefix) {
    for (const auto& item : j.items()) {
      const std::string key = prefix.empty() ? item.key() : prefix + "." + item.key();
      if (key == "seed" || key == "true_member" || key == "estimate" || key.ends_with(".estimate") ||
          key.ends_with(".true_member")) {
        continue;
      }
      const json& v = item.value();
      if (v.is_boolean()) {
        metric_values[key].push_back(v.get<bool>() ? 1.0 : 0.0);
      } else if (v.is_number()) {
        metric_values[key].push_back(v.get<double>());
      } else if (v.is_object()) {
        collect(v, key);
      }
    }
  };
  std::vector<std::uint64_t> seeds;
  for (const json& f : finals) {
    collect(f, "");
    if (f.contains("seed")) seeds.push_back(f.at("seed").get<std::uint64_t>());
  }
  std::sort(seeds.begin(), seeds.end());

  json metrics_out = json::object();
  for (const auto& [name, xs] : metric_values) {
    const double q1 = quantile(xs, 0.25);
    const double q3 = quantile(xs, 0.75);
    metrics_out[name] = {{"median", quantile(xs, 0.5)}, {"q1", q1}, {"q3", q3}, {"iqr", q3 - q1}, {"count", xs.size()}};
  }

  // series[phase/metric][x] -> values across seeds
  std::map<std::string, std::map<double, std::vector<double>>> series;
  for (const std::string& text : records) {
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
      if (line.empty()) continue;
      const json r = json::parse(line);
      const std::string type = r.value("type", "");
      if (type == "iteration") {
        const std::string phase = r.at("phase").get<std::string>();
        const auto k = static_cast<double>(r.at("k").get<int>());
        if (r.at("tv_metric").is_number()) series[phase + "/tv_metric"][k].push_back(r.at("tv_metric").get<double>());
        series[phase + "/set_size"][k].push_back(r.at("next_set_size").get<double>());
        series[phase + "/max_loglik"][k].push_back(r.at("max_loglik").get<double>());
      } else if (type == "bracket") {
        const double eta = r.at("eta").get<double>();
        series["bracket/count"][eta].push_back(r.at("count").get<double>());
        series["bracket/closed_form_log_cover"][eta].push_back(r.at("closed_form_log_cover").get<double>());
      }
    }
  }
  json series_out = json::object();
  for (const auto& [name, points] : series) {
    json rows = json::array();
    for (const auto& [x, ys] : points) rows.push_back({x, quantile(ys, 0.5)});
    series_out[name] = std::move(rows);
  }
  return {{"seeds", seeds}, {"metrics", std::move(metrics_out)}, {"series", std::move(series_out)}};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += ',';
    out += csv_field(fields[i]);
  }
  out += "\r\n";
  return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

std::string num(const json& v) { return v.is_null() ? std::string() : v.dump(); }

}  // namespace

json run_scenario(const ExperimentConfig& cfg, const fs::path& out, int jobs) {
  check_budget(cfg);
  fs::create_directories(out);
  const std::size_t n = cfg.seeds.size();
  std::vector<SeedResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = run_seed(cfg, cfg.seeds[i]);
        write_text(out / ("seed-" + std::to_string(cfg.seeds[i]) + ".jsonl"), results[i].records);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<json> finals;
  std::vector<std::string> records;
  std::string timing;
  for (const SeedResult& r : results) {
    finals.push_back(r.final_record);
    records.push_back(r.records);
    timing += json({{"seed", r.seed}, {"wall_seconds", r.wall_seconds}}).dump() + "\n";
  }
  json summary = aggregate(finals, records);
  summary["scenario"] = to_string(cfg.scenario);
  summary["name"] = cfg.name;
  write_text(out / "summary.json", summary.dump(2) + "\n");
  write_text(out / "timing.jsonl", timing);
  write_text(out / "config.json", to_json(cfg).dump(2) + "\n");

  std::string csv = csv_row({"metric", "median", "q1", "q3", "iqr", "count"});
  for (const auto& item : summary.at("metrics").items()) {
    const json& m = item.value();
    csv += csv_row({item.key(), num(m.at("median")), num(m.at("q1")), num(m.at("q3")), num(m.at("iqr")),
                    num(m.at("count"))});
  }
  write_text(out / "summary.csv", csv);

  if (cfg.scenario == Scenario::DivergenceSuite) {
    for (const json& f : finals) {
      if (f.at("failures").get<int>() > 0) {
        throw InvariantViolation("divergence suite recorded " + std::to_string(f.at("failures").get<int>()) +
                                 " failed checks for seed " + std::to_string(f.at("seed").get<std::uint64_t>()));
      }
    }
  }
  return summary;
}

json compare_runs(const ExperimentConfig& joint, const ExperimentConfig& baseline, const fs::path& out, int jobs) {
  if (joint.scenario != Scenario::Upstream && joint.scenario != Scenario::BaselineSingleTask) {
    throw ConfigError("compare needs upstream or baseline-single-task configs");
  }
  if (baseline.scenario != Scenario::Upstream && baseline.scenario != Scenario::BaselineSingleTask) {
    throw ConfigError("compare needs upstream or baseline-single-task configs");
  }
  std::vector<std::uint64_t> a = joint.seeds;
  std::vector<std::uint64_t> b = baseline.seeds;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) throw ConfigError("paired configs must list the same seeds");
  FamilySpec fa = joint.family;
  FamilySpec fb = baseline.family;
  fa.cls.clear();
  fb.cls.clear();
  if (!(fa == fb)) throw ConfigError("paired configs must generate the same true tasks");
  if (joint.learner.iterations != baseline.learner.iterations ||
      joint.learner.tv_target != baseline.learner.tv_target) {
    throw ConfigError("paired configs must share iterations and tv_target");
  }

  const json sj = run_scenario(joint, out / "joint", jobs);
  const json sb = run_scenario(baseline, out / "baseline", jobs);
  (void)sj;
  (void)sb;

  auto finals_of = [&](const fs::path& dir, const ExperimentConfig& cfg) {
    std::map<std::uint64_t, json> m;
    for (std::uint64_t s : cfg.seeds) {
      std::ifstream in(dir / ("seed-" + std::to_string(s) + ".jsonl"));
      std::string line;
      std::string last;
      while (std::getline(in, line)) {
        if (!line.empty()) last = line;
      }
      m[s] = json::parse(last);
    }
    return m;
  };
  const auto fj = finals_of(out / "joint", joint);
  const auto fbm = finals_of(out / "baseline", baseline);

  std::string csv = csv_row({"seed", "joint_iterations", "baseline_iterations", "joint_le_baseline", "joint_tv",
                             "baseline_tv"});
  std::string tsv_joint;
  std::string tsv_base;
  json rows = json::array();
  int le = 0;
  std::vector<double> ij;
  std::vector<double> ib;
  for (std::uint64_t s : a) {
    const int x = fj.at(s).at("iterations_to_threshold").get<int>();
    const int y = fbm.at(s).at("iterations_to_threshold").get<int>();
    const bool ok = x <= y;
    le += ok ? 1 : 0;
    ij.push_back(x);
    ib.push_back(y);
    rows.push_back({{"seed", s}, {"joint", x}, {"baseline", y}, {"joint_le_baseline", ok}});
    csv += csv_row({std::to_string(s), std::to_string(x), std::to_string(y), ok ? "true" : "false",
                    fj.at(s).at("tv_error").dump(), fbm.at(s).at("tv_error").dump()});
    tsv_joint += std::to_string(s) + "\t" + std::to_string(x) + "\n";
    tsv_base += std::to_string(s) + "\t" + std::to_string(y) + "\n";
  }
  json result = {{"joint", joint.name},
                 {"baseline", baseline.name},
                 {"tv_target", joint.learner.tv_target},
                 {"rows", rows},
                 {"pairs", a.size()},
                 {"joint_le_baseline", le},
                 {"fraction_joint_le_baseline", static_cast<double>(le) / static_cast<double>(a.size())},
                 {"median_joint_iterations", quantile(ij, 0.5)},
                 {"median_baseline_iterations", quantile(ib, 0.5)}};
  write_text(out / "comparison.csv", csv);
  write_text(out / "comparison.json", result.dump(2) + "\n");
  fs::create_directories(out / "plots");
  write_text(out / "plots" / "iterations_joint.tsv", tsv_joint);
  write_text(out / "plots" / "iterations_baseline.tsv", tsv_base);
  emit_plots(out / "joint");
  emit_plots(out / "baseline");
  return result;
}

std::vector<fs::path> emit_plots(const fs::path& dir) {
  const fs::path summary_path = dir / "summary.json";
  if (!fs::exists(summary_path)) throw ConfigError("no summary.json in '" + dir.string() + "'");
  std::ifstream in(summary_path);
  const json summary = json::parse(in);
  if (!summary.contains("series")) throw ConfigError("summary in '" + dir.string() + "' has no series");
  fs::create_directories(dir / "plots");
  std::vector<fs::path> written;
  for (const auto& item : summary.at("series").items()) {
    std::string name = item.key();
    std::replace(name.begin(), name.end(), '/', '_');
    std::string text;
    for (const json& row : item.value()) text += row.at(0).dump() + "\t" + row.at(1).dump() + "\n";
    const fs::path p = dir / "plots" / (name + ".tsv");
    write_text(p, text);
    written.push_back(p);
  }
  return written;
}

}  // namespace mtpsr
