#pragma once

#include <json.hpp>

#include "mtpsr/model_class.hpp"
#include "mtpsr/policy.hpp"
#include "mtpsr/pomdp.hpp"
#include "mtpsr/psr_model.hpp"

namespace mtpsr {

// Doubles are written as the shortest decimal that parses back to the same
// bits, so every document round-trips exactly.

nlohmann::json to_json(const ObsActionSpace& space);
ObsActionSpace space_from_json(const nlohmann::json& j);

// {space, dims, psi0, phi_end, ops{"h/o/a": row-major rows}, core_tests, gamma, declared_rank}
nlohmann::json to_json(const PsrModel& model);
PsrModel psr_from_json(const nlohmann::json& j);

// {space, num_states, init, T{"h/a"}, O{"h"}}
nlohmann::json to_json(const TabularPomdp& pomdp);
TabularPomdp pomdp_from_json(const nlohmann::json& j);

// Reactive tables as nested arrays. A composed policy refers to its prefix by
// index in `cls`, which must then be supplied for both directions.
nlohmann::json to_json(const Policy& policy, const PolicyClass* cls = nullptr);
Policy policy_from_json(const nlohmann::json& j, const ObsActionSpace& space, const PolicyClass* cls = nullptr);

// Family tag, parameters and member tuples; the pool is included unless
// `descriptor_only`.
nlohmann::json to_json(const JointModelClass& cls, bool descriptor_only = false);
JointModelClass class_from_json(const nlohmann::json& j);

}  // namespace mtpsr
