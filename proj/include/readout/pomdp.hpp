#pragma once

#include <string>
#include <vector>

#include "readout/caps.hpp"
#include "readout/hmm.hpp"
#include "readout/matrix.hpp"
#include "readout/policy.hpp"

namespace readout {

/// Finite-horizon POMDP encoding of the adaptive measurement problem.
///
/// States are triples (chain state t, remembered initial state l, step
/// counter k in 1..n), indexed k-major then l then t. Actions are the
/// permutations of the source action set followed by one decision action per
/// initial state; a decision taken at k = n earns reward 1 exactly when it
/// names the remembered initial state, so the expected total reward of a
/// policy equals its measurement fidelity. Decisions act as the identity
/// elsewhere and permutations taken before the first observation do not move
/// the chain, which keeps the action space uniform across steps.
struct PomdpModel {
  int num_chain = 0;    // |T|
  int num_initial = 0;  // |L|
  int horizon = 0;      // n
  int num_perm_actions = 0;

  std::vector<std::string> state_names;   // s<t>_l<phys>_k<step>
  std::vector<std::string> action_names;  // permutations then decide_<phys>
  std::vector<std::string> obs_names;

  std::vector<Matrix> trans;  // per action, (dest, src), column-stochastic
  Matrix obs;                 // (observation, dest state), action-independent
  Matrix reward;              // (action, state acted from)
  std::vector<double> initial;

  int num_states() const { return num_chain * num_initial * horizon; }
  int num_actions() const { return static_cast<int>(action_names.size()); }
  int num_obs() const { return static_cast<int>(obs_names.size()); }
  int state_index(int t, int l, int k) const {
    return (k - 1) * num_chain * num_initial + l * num_chain + t;
  }
};

/// Builds the product-space POMDP for the given model, action set, and
/// horizon. Guarded by caps.max_nodes on the state-space size.
PomdpModel to_pomdp(const ExpandedHmm& model, const ActionSet& actions, int n,
                    const RunCaps& caps = RunCaps{});

/// Writes the classic Cassandra .pomdp text format: discount, values,
/// states, actions, observations, the start distribution, then T/O/R
/// entries. Numbers carry full double precision so the file round-trips
/// exactly through read_cassandra.
void write_cassandra(const PomdpModel& model, const std::string& path);

/// Reads a file produced by write_cassandra.
PomdpModel read_cassandra(const std::string& path);

/// Exact expected total reward of the lookup policy (its permutation indices
/// must match the model's) followed by the reward-maximizing decision after
/// the last observation. Pure tensor evaluation by enumeration over
/// observation sequences; equals the native fidelity of the same policy.
double evaluate_policy_on_pomdp(const PomdpModel& model,
                                const LookupPolicy& policy,
                                const RunCaps& caps = RunCaps{});

}  // namespace readout
