#include "mtpsr/serialization.hpp"

#include <string>

#include "mtpsr/error.hpp"

namespace mtpsr {

using nlohmann::json;

namespace {

json vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vec_from(const json& j) {
  const auto xs = j.get<std::vector<double>>();
  Vector v(static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) v(static_cast<Eigen::Index>(i)) = xs[i];
  return v;
}

json mat(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix mat_from(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& key) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw ValidationError("matrix '" + key + "' has the wrong number of rows");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ValidationError("matrix '" + key + "' has a row of the wrong length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
  return j.at(key);
}

json steps_json(const Trajectory& t) {
  json out = json::array();
  for (const Step& s : t.steps()) out.push_back({s.obs, s.action});
  return out;
}

Trajectory steps_from(const json& j) {
  std::vector<Step> steps;
  for (const json& s : j) steps.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
  return Trajectory(std::move(steps));
}

}  // namespace

json to_json(const ObsActionSpace& space) {
  return {{"num_obs", space.num_obs()}, {"num_actions", space.num_actions()}, {"horizon", space.horizon()}};
}

ObsActionSpace space_from_json(const json& j) {
  return ObsActionSpace(field(j, "num_obs").get<int>(), field(j, "num_actions").get<int>(),
                        field(j, "horizon").get<int>());
}

json to_json(const PsrModel& model) {
  const ObsActionSpace& space = model.space();
  json ops = json::object();
  for (int h = 1; h <= model.horizon(); ++h) {
    for (int o = 0; o < space.num_obs(); ++o) {
      for (int a = 0; a < space.num_actions(); ++a) {
        ops[std::to_string(h) + "/" + std::to_string(o) + "/" + std::to_string(a)] = mat(model.op(h, o, a));
      }
    }
  }
  json tests = json::array();
  for (int h = 0; h <= model.horizon(); ++h) {
    json row = json::array();
    for (const Trajectory& t : model.core_tests(h)) row.push_back(steps_json(t));
    tests.push_back(std::move(row));
  }
  return {{"space", to_json(space)},
          {"dims", model.dims()},
          {"psi0", vec(model.psi0())},
          {"phi_end", vec(model.phi_end())},
          {"ops", std::move(ops)},
          {"core_tests", std::move(tests)},
          {"gamma", model.gamma()},
          {"declared_rank", model.declared_rank()}};
}

PsrModel psr_from_json(const json& j) {
  PsrParams p;
  p.space = space_from_json(field(j, "space"));
  p.dims = field(j, "dims").get<std::vector<int>>();
  const int H = p.space.horizon();
  if (p.dims.size() != static_cast<std::size_t>(H + 1)) throw ValidationError("dims must have H+1 entries");
  p.psi0 = vec_from(field(j, "psi0"));
  p.phi_end = vec_from(field(j, "phi_end"));
  const json& ops = field(j, "ops");
  for (int h = 1; h <= H; ++h) {
    std::vector<Matrix> step;
    for (int o = 0; o < p.space.num_obs(); ++o) {
      for (int a = 0; a < p.space.num_actions(); ++a) {
        const std::string key = std::to_string(h) + "/" + std::to_string(o) + "/" + std::to_string(a);
        step.push_back(mat_from(field(ops, key.c_str()), p.dims[static_cast<std::size_t>(h)],
                                p.dims[static_cast<std::size_t>(h - 1)], key));
      }
    }
    p.ops.push_back(std::move(step));
  }
  if (j.contains("core_tests")) {
    for (const json& row : j.at("core_tests")) {
      std::vector<Trajectory> tests;
      for (const json& t : row) tests.push_back(steps_from(t));
      p.core_tests.push_back(std::move(tests));
    }
  }
  if (j.contains("gamma")) p.gamma = j.at("gamma").get<double>();
  if (j.contains("declared_rank")) p.declared_rank = j.at("declared_rank").get<int>();
  return PsrModel(std::move(p));
}

json to_json(const TabularPomdp& pomdp) {
  const ObsActionSpace& space = pomdp.space();
  json t = json::object();
  for (int h = 1; h < space.horizon(); ++h) {
    for (int a = 0; a < space.num_actions(); ++a) {
      t[std::to_string(h) + "/" + std::to_string(a)] = mat(pomdp.transitions().at(h, a));
    }
  }
  json o = json::object();
  for (int h = 1; h <= space.horizon(); ++h) o[std::to_string(h)] = mat(pomdp.emissions().at(h));
  return {{"space", to_json(space)},
          {"num_states", pomdp.num_states()},
          {"init", vec(pomdp.init())},
          {"T", std::move(t)},
          {"O", std::move(o)}};
}

TabularPomdp pomdp_from_json(const json& j) {
  const ObsActionSpace space = space_from_json(field(j, "space"));
  const int S = field(j, "num_states").get<int>();
  if (S < 1) throw ValidationError("num_states must be positive");
  auto t = std::make_shared<TransitionKernel>();
  const json& tj = field(j, "T");
  for (int h = 1; h < space.horizon(); ++h) {
    std::vector<Matrix> per_action;
    for (int a = 0; a < space.num_actions(); ++a) {
      const std::string key = std::to_string(h) + "/" + std::to_string(a);
      per_action.push_back(mat_from(field(tj, key.c_str()), S, S, key));
    }
    t->by_step.push_back(std::move(per_action));
  }
  auto e = std::make_shared<EmissionModel>();
  const json& oj = field(j, "O");
  for (int h = 1; h <= space.horizon(); ++h) {
    const std::string key = std::to_string(h);
    e->by_step.push_back(mat_from(field(oj, key.c_str()), space.num_obs(), S, key));
  }
  return TabularPomdp(space, S, std::move(t), std::move(e), vec_from(field(j, "init")));
}

json to_json(const Policy& policy, const PolicyClass* cls) {
  if (const auto* r = policy.as_reactive()) return {{"kind", "reactive"}, {"table", r->action}};
  if (const auto* h = policy.as_history_table()) return {{"kind", "history-table"}, {"probs", h->probs}};
  if (const auto* o = policy.as_open_loop()) return {{"kind", "open-loop"}, {"actions", o->actions}};
  const Composed& c = *policy.as_composed();
  if (!cls) throw ParameterError("a composed policy serializes by reference and needs its policy class");
  std::size_t id = cls->size();
  for (std::size_t i = 0; i < cls->size(); ++i) {
    if ((*cls)[i] == *c.prefix) {
      id = i;
      break;
    }
  }
  if (id == cls->size()) throw ParameterError("composed prefix is not a member of the policy class");
  return {{"kind", "composed"}, {"prefix_id", id}, {"h", c.switch_step}, {"core_action_seqs", c.core_action_seqs}};
}

Policy policy_from_json(const json& j, const ObsActionSpace& space, const PolicyClass* cls) {
  const std::string kind = field(j, "kind").get<std::string>();
  if (kind == "reactive") return Policy::reactive(space, field(j, "table").get<std::vector<std::vector<int>>>());
  if (kind == "history-table") {
    return Policy::history_table(space, field(j, "probs").get<std::vector<std::vector<double>>>());
  }
  if (kind == "open-loop") return Policy::open_loop(space, field(j, "actions").get<ActionSeq>());
  if (kind == "composed") {
    if (!cls) throw ParameterError("a composed policy needs its policy class to resolve the prefix");
    const auto id = field(j, "prefix_id").get<std::size_t>();
    if (id >= cls->size()) throw ValidationError("composed prefix id out of range");
    return compose_nu(std::make_shared<const Policy>((*cls)[id]), field(j, "h").get<int>(),
                      field(j, "core_action_seqs").get<std::vector<ActionSeq>>());
  }
  throw ValidationError("unknown policy kind '" + kind + "'");
}

json to_json(const JointModelClass& cls, bool descriptor_only) {
  json out = {{"family", to_string(cls.family())},
              {"n_tasks", cls.n_tasks()},
              {"size", cls.size()},
              {"params", cls.params()},
              {"members", cls.members()}};
  if (!descriptor_only) {
    json pool = json::array();
    for (std::size_t j = 0; j < cls.pool_size(); ++j) pool.push_back(to_json(cls.pool_model(j)));
    out["pool"] = std::move(pool);
  }
  return out;
}

JointModelClass class_from_json(const json& j) {
  if (!j.contains("pool")) throw ValidationError("descriptor-only class documents must be rebuilt from their config");
  std::vector<std::shared_ptr<const PsrModel>> pool;
  for (const json& m : j.at("pool")) pool.push_back(std::make_shared<const PsrModel>(psr_from_json(m)));
  return JointModelClass(parse_family(field(j, "family").get<std::string>()), field(j, "n_tasks").get<int>(),
                         std::move(pool), field(j, "members").get<std::vector<std::vector<std::size_t>>>(),
                         j.value("params", json::object()));
}

}  // namespace mtpsr
