#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtpsr/learner.hpp"
#include "mtpsr/model_class.hpp"

namespace mtpsr {

inline constexpr int kSchemaVersion = 1;

enum class Scenario { Upstream, Downstream, BaselineSingleTask, DivergenceSuite, BracketCount };

Scenario parse_scenario(const std::string& name);
std::string to_string(Scenario s);

// How the true tasks are generated and which joint class the learner gets.
//   truth: all-identical | shared-transition | independent | perturbed | linear-span
//   class: diagonal | product | shared-transition | perturbed | linear-span
struct FamilySpec {
  std::string truth = "shared-transition";
  std::string cls = "shared-transition";
  int n_tasks = 2;
  int num_states = 2;
  int num_obs = 2;
  int num_actions = 2;
  int horizon = 2;
  double sharpness = 1.0;
  int transition_candidates = 2;
  int emission_candidates = 2;
  int single_candidates = 4;
  int delta_count = 2;
  double perturbation_scale = 0.5;
  int core_tasks = 2;
  int grid_resolution = 2;
  friend bool operator==(const FamilySpec&, const FamilySpec&) = default;
};

struct LearnerSpec {
  int iterations = 50;
  double c1 = 1.0;
  double c0 = 1.0;
  double delta = 0.1;
  double alpha = 2.0;
  double p_floor = 1e-12;
  std::optional<double> beta;
  double tv_target = 0.2;
};

// constraint: shared-transition | perturbed-of-base | linear-span | zero
struct DownstreamSpec {
  std::string constraint = "shared-transition";
  bool realizable = true;
  int candidates = 3;
  double perturbation_scale = 0.5;
};

struct SuiteSpec {
  int pairs = 1000;
  int triples = 200;
  int support = 16;
  int sequences = 100;
  int max_rank = 4;
  int max_length = 500;
};

struct CoverSpec {
  std::vector<double> etas{0.05, 0.1, 0.2, 0.4, 0.8};
  double c = 1.0;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string name = "experiment";
  Scenario scenario = Scenario::Upstream;
  FamilySpec family;
  LearnerSpec learner;
  DownstreamSpec downstream;
  SuiteSpec suite;
  CoverSpec cover;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "results";
  std::uint64_t budget = 2'000'000'000ULL;
  int jobs = 1;
};

// Throws ConfigError on malformed documents, unknown keys, a missing or
// unsupported schema_version, or inconsistent sizes.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

// "0,3,5-9" -> {0,3,5,6,7,8,9}; throws ConfigError.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

// Rough operation count of one seed's run; throws BudgetError when it exceeds
// cfg.budget.
std::uint64_t estimate_cost(const ExperimentConfig& cfg);
void check_budget(const ExperimentConfig& cfg);

// Substream for (seed, scenario id, run index). Run index 0 generates the
// true tasks and candidates and is shared by every scenario, so paired runs
// see identical instances; learners use index 1 (baseline task n uses 1 + n)
// and downstream generation and learning use 100 and 101.
std::uint64_t stream_seed(std::uint64_t seed, Scenario scenario, std::uint64_t run_index);

struct Instance {
  ObsActionSpace space;
  std::vector<std::shared_ptr<const PsrModel>> truth;       // one per task
  std::vector<std::shared_ptr<const TabularPomdp>> truth_pomdps;  // empty for PSR-only truths
  std::shared_ptr<const JointModelClass> cls;
  std::optional<std::size_t> true_member;
  std::vector<RewardFunction> rewards;
  std::shared_ptr<const PolicyClass> policies;
  // generation leftovers reused downstream
  std::vector<std::shared_ptr<const TransitionKernel>> transitions;
  std::shared_ptr<const PsrModel> base;
  PerturbationSet deltas;
  std::vector<PsrModel> core;
};

Instance build_instance(const FamilySpec& spec, std::uint64_t seed, std::uint64_t budget = kDefaultEnumerationCap);

// Member whose per-task laws equal the given truths to 1e-12, if any.
std::optional<std::size_t> locate_member(const JointModelClass& cls, const std::vector<const PsrModel*>& truth);

struct DownstreamInstance {
  std::shared_ptr<const PsrModel> truth;
  std::vector<PsrModel> pool;
  SimilarityConstraint constraint;
  RewardFunction reward = RewardFunction::constant(ObsActionSpace(1, 1, 1), 0.0);
};

DownstreamInstance build_downstream_instance(const ExperimentConfig& cfg, const Instance& inst, std::uint64_t seed);

// First k whose TV metric is <= target; 0 when the initial estimate already
// qualifies with K = 0; K + 1 when never reached.
int iterations_to_threshold(const LearnerOutput& out, double initial_tv, double target);

// Result of one seed: the JSONL record text (deterministic) and the final
// record as a document.
struct SeedResult {
  std::uint64_t seed = 0;
  std::string records;
  nlohmann::json final_record;
  double wall_seconds = 0.0;
};

SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

// Type-7 quantile of unsorted data.
double quantile(std::vector<double> xs, double q);

// Median and IQR of every numeric final metric plus per-iteration median
// series; independent of seed order.
nlohmann::json aggregate(const std::vector<nlohmann::json>& finals, const std::vector<std::string>& records);

// Runs every seed with up to `jobs` workers and writes
//   <out>/seed-<s>.jsonl, summary.json, summary.csv, timing.jsonl
// Returns the summary document.
nlohmann::json run_scenario(const ExperimentConfig& cfg, const std::filesystem::path& out, int jobs);

// Paired comparison of iterations-to-threshold. Throws ConfigError when the
// two configs do not share seeds, true tasks and learner settings.
nlohmann::json compare_runs(const ExperimentConfig& joint, const ExperimentConfig& baseline,
                            const std::filesystem::path& out, int jobs);

// Writes <dir>/plots/<metric>.tsv two-column series from summary.json.
// Throws ConfigError when the directory holds no summary.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& dir);

// RFC-4180 field quoting.
std::string csv_field(const std::string& s);
std::string csv_row(const std::vector<std::string>& fields);

}  // namespace mtpsr
