#include "readout/json_io.hpp"

#include <cstdio>
#include <fstream>

#include "readout/errors.hpp"

namespace readout {

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open " + path);
  json j;
  in >> j;
  return j;
}

void save_json(const std::string& path, const json& value) {
  std::ofstream out(path);
  if (!out) throw ModelError("cannot open " + path + " for writing");
  out << value.dump(2) << '\n';
  if (!out) throw ModelError("failed writing " + path);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows; ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols; ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ModelError(std::string(what) + " must be a nested array");
  Matrix m(static_cast<int>(j.size()), static_cast<int>(j[0].size()));
  for (int r = 0; r < m.rows; ++r) {
    if (static_cast<int>(j[r].size()) != m.cols)
      throw ModelError(std::string(what) + " has ragged rows");
    for (int c = 0; c < m.cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

json model_to_json(const ExpandedHmm& model) {
  json j;
  j["states"] = model.hmm.state_labels;
  j["outputs"] = model.hmm.output_labels;
  j["trans"] = matrix_to_json(model.hmm.trans);
  j["out"] = matrix_to_json(model.hmm.out);
  j["prior"] = model.hmm.prior;
  j["num_physical"] = model.num_physical;
  j["alpha"] = model.alpha;
  if (!model.rho.empty()) j["rho"] = model.rho;
  j["initial_emission"] = model.initial_emission;
  if (!model.count_values.empty()) j["count_values"] = model.count_values;
  return j;
}

ExpandedHmm model_from_json(const json& j) {
  ExpandedHmm model;
  model.hmm.trans = matrix_from_json(j.at("trans"), "trans");
  model.hmm.out = matrix_from_json(j.at("out"), "out");
  model.hmm.prior = j.at("prior").get<std::vector<double>>();
  model.hmm.num_states = model.hmm.trans.rows;
  model.hmm.num_outputs = model.hmm.out.rows;
  if (j.contains("states"))
    model.hmm.state_labels = j["states"].get<std::vector<std::string>>();
  if (j.contains("outputs"))
    model.hmm.output_labels = j["outputs"].get<std::vector<std::string>>();

  if (j.contains("alpha")) {
    model.alpha = j["alpha"].get<std::vector<int>>();
    model.num_physical =
        j.contains("num_physical")
            ? j["num_physical"].get<int>()
            : 1 + *std::max_element(model.alpha.begin(), model.alpha.end());
    if (j.contains("rho")) model.rho = j["rho"].get<std::vector<int>>();
    model.initial_emission = j.value("initial_emission", model.rho.empty());
    if (j.contains("count_values"))
      model.count_values = j["count_values"].get<std::vector<int>>();
    return validate_expanded(std::move(model));
  }
  return trivially_expanded(std::move(model.hmm));
}

json rates_to_json(const RateModel& model) {
  json j;
  j["Q"] = matrix_to_json(model.rate_matrix);
  j["emission_rates"] = model.emission_rates;
  j["dt_us"] = model.dt * 1e6;
  j["n_max"] = model.n_max;
  j["prior"] = model.prior;
  j["quad_points"] = model.quad_points;
  if (!model.level_labels.empty()) j["labels"] = model.level_labels;
  return j;
}

RateModel rates_from_json(const json& j) {
  RateModel model;
  model.rate_matrix = matrix_from_json(j.at("Q"), "Q");
  model.emission_rates = j.at("emission_rates").get<std::vector<double>>();
  model.dt = j.at("dt_us").get<double>() * 1e-6;
  model.n_max = j.value("n_max", 15);
  model.prior = j.at("prior").get<std::vector<double>>();
  model.quad_points = j.value("quad_points", 32);
  if (j.contains("labels"))
    model.level_labels = j["labels"].get<std::vector<std::string>>();
  return validate_rates(std::move(model));
}

json partition_to_json(const Partition& partition) {
  json j;
  j["boundaries"] = partition.boundaries;
  j["num_outputs"] = partition.num_outputs;
  return j;
}

Partition partition_from_json(const json& j) {
  Partition p;
  p.boundaries = j.at("boundaries").get<std::vector<int>>();
  p.num_outputs = j.at("num_outputs").get<int>();
  return validate_partition(std::move(p));
}

json actions_to_json(const ActionSet& set) {
  json list = json::array();
  for (const Permutation& p : set.actions) {
    json entry;
    entry["name"] = p.name;
    entry["map"] = p.map;
    list.push_back(std::move(entry));
  }
  return list;
}

ActionSet actions_from_json(const json& j) {
  ActionSet set;
  const json& list = j.is_array() ? j : j.at("actions");
  for (const json& entry : list) {
    Permutation p;
    p.map = entry.at("map").get<std::vector<int>>();
    p.name = entry.value("name", "");
    set.actions.push_back(std::move(p));
  }
  return set;
}

ActionSet actions_from_spec(const std::string& spec, int num_states) {
  if (spec == "none") return ActionSet::identity_only(num_states);
  if (spec == "swaps") return ActionSet::transpositions(num_states);
  if (spec == "swaps3cycles")
    return ActionSet::transpositions_and_cycles(num_states);
  return validate_actions(actions_from_json(load_json(spec)), num_states);
}

json lookup_policy_to_json(const LookupPolicy& policy) {
  json j;
  j["type"] = "lookup";
  j["n"] = policy.n;
  j["actions"] = actions_to_json(policy.set);
  j["table"] = policy.table;
  j["fidelity"] = policy.fidelity;
  return j;
}

json policy_to_json(const Policy& policy) {
  if (const auto* lookup = dynamic_cast<const LookupPolicy*>(&policy))
    return lookup_policy_to_json(*lookup);
  if (const auto* fixed = dynamic_cast<const StaticPolicy*>(&policy)) {
    json j;
    j["type"] = "static";
    j["name"] = fixed->name();
    j["actions"] = actions_to_json(fixed->actions());
    j["sequence"] = fixed->sequence();
    return j;
  }
  if (const auto* heur = dynamic_cast<const MinEntropyPolicy*>(&policy)) {
    json j;
    j["type"] = "min-entropy";
    j["actions"] = actions_to_json(heur->actions());
    j["lookahead"] = heur->lookahead();
    return j;
  }
  throw ModelError("cannot serialize this policy type");
}

std::unique_ptr<Policy> policy_from_json(const json& j, const RunCaps& caps) {
  const std::string type = j.at("type").get<std::string>();
  ActionSet set = actions_from_json(j.at("actions"));
  if (type == "static") {
    std::vector<int> seq;
    if (j.contains("sequence")) seq = j["sequence"].get<std::vector<int>>();
    return std::make_unique<StaticPolicy>(std::move(set), std::move(seq),
                                          j.value("name", "static"));
  }
  if (type == "lookup") {
    auto policy = std::make_unique<LookupPolicy>();
    policy->n = j.at("n").get<int>();
    policy->set = std::move(set);
    policy->fidelity = j.value("fidelity", 0.0);
    for (const auto& [key, value] : j.at("table").items())
      policy->table[key] = value.get<int>();
    return policy;
  }
  if (type == "min-entropy")
    return std::make_unique<MinEntropyPolicy>(std::move(set),
                                              j.at("lookahead").get<int>(),
                                              caps);
  throw ModelError("unknown policy type \"" + type + "\"");
}

json report_to_json(const EvalReport& report) {
  json j;
  j["method"] = report.method;
  j["infidelity"] = report.infidelity;
  j["fidelity"] = report.fidelity;
  j["per_initial_state_error"] = report.per_initial_error;
  j["sequences"] = report.sequences;
  if (report.std_error) {
    j["stderr"] = *report.std_error;
    j["seed"] = report.seed;
    j["rng"] = report.rng;
  }
  return j;
}

void write_sweep_csv(
    const std::string& path, const std::vector<SweepRow>& rows,
    const std::vector<std::pair<std::string, std::string>>& config_echo) {
  std::ofstream out(path);
  if (!out) throw ModelError("cannot open " + path + " for writing");
  for (const auto& [key, value] : config_echo)
    out << "# " << key << "=" << value << '\n';
  out << "grid_param_name,grid_value,method,n,n_b,infidelity,stderr,seed\n";
  for (const SweepRow& row : rows) {
    out << row.param_name << ',' << row.value << ',' << row.method << ','
        << row.n << ',' << row.n_b << ',' << format_double(row.infidelity)
        << ',' << (row.std_error ? format_double(*row.std_error) : "") << ','
        << row.seed << '\n';
  }
  if (!out) throw ModelError("failed writing " + path);
}

}  // namespace readout
