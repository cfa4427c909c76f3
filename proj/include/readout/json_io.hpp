#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "readout/evaluate.hpp"
#include "readout/hmm.hpp"
#include "readout/model_builders.hpp"
#include "readout/policy.hpp"

namespace readout {

using nlohmann::json;

json load_json(const std::string& path);
void save_json(const std::string& path, const json& value);

/// Model files carry `states`, `outputs`, `trans` (destination-major nested
/// arrays, column-stochastic in the A(s'|s) orientation), `out` (|Y| x |S|),
/// and `prior`; expanded models add `alpha`, `rho`, `num_physical`,
/// `initial_emission`, and `count_values` where applicable.
json model_to_json(const ExpandedHmm& model);
ExpandedHmm model_from_json(const json& j);

/// Rate model files: `Q` (1/s), `emission_rates` (photons/s), `dt_us`,
/// `n_max`, `prior`, `quad_points`, optional `labels`.
json rates_to_json(const RateModel& model);
RateModel rates_from_json(const json& j);

json partition_to_json(const Partition& partition);
Partition partition_from_json(const json& j);

json actions_to_json(const ActionSet& set);
ActionSet actions_from_json(const json& j);

/// Builds one of the named sets ("none", "swaps", "swaps3cycles") or loads a
/// permutation list from a JSON file.
ActionSet actions_from_spec(const std::string& spec, int num_states);

/// Policy files are tagged by `type`: "static" (with `sequence`), "lookup"
/// (with `n`, `table`, `fidelity`), or "min-entropy" (with `lookahead`); all
/// carry their action set.
json policy_to_json(const Policy& policy);
json lookup_policy_to_json(const LookupPolicy& policy);
std::unique_ptr<Policy> policy_from_json(const json& j,
                                         const RunCaps& caps = RunCaps{});

json report_to_json(const EvalReport& report);

/// Sweep CSV: `# key=value` config echo lines, one header row, then
/// full-precision data rows.
void write_sweep_csv(const std::string& path,
                     const std::vector<SweepRow>& rows,
                     const std::vector<std::pair<std::string, std::string>>&
                         config_echo);

std::string format_double(double v);  // %.17g

}  // namespace readout
