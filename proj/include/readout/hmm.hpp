#pragma once

#include <string>
#include <utility>
#include <vector>

#include "readout/matrix.hpp"

namespace readout {

/// Finite-state, finite-output hidden Markov model.
///
/// trans(i, j) = A(i|j): probability of moving to state i from state j.
/// out(y, j)   = B(y|j): probability of emitting output y from state j.
/// Both matrices are column-stochastic; prior is a distribution over states.
struct Hmm {
  int num_states = 0;
  int num_outputs = 0;
  Matrix trans;
  Matrix out;
  std::vector<double> prior;
  std::vector<std::string> state_labels;
  std::vector<std::string> output_labels;
};

/// Checks the stochasticity invariants and returns the model. Column sums
/// within 1e-6 of 1 are renormalized; deviations beyond that, negative
/// entries, or dimension mismatches raise ModelError naming the offender.
Hmm validate(Hmm model);

/// HMM whose states project onto a physical state space through alpha.
///
/// Two constructions are used:
///  * a plain HMM wrapped as-is (alpha = identity, outputs drawn from B,
///    first output emitted by the initial state itself);
///  * the product form built by expand(), whose states are (physical level,
///    output of the step that produced it). There B is deterministic
///    (rho gives the remembered output), the prior puts physical mass on
///    output slot 0, and the first observable output is produced by the
///    first measurement step rather than by the prior slot.
struct ExpandedHmm {
  Hmm hmm;
  int num_physical = 0;
  std::vector<int> alpha;            // expanded state -> physical state
  std::vector<int> rho;              // expanded state -> output; empty if B stochastic
  std::vector<int> initial_support;  // physical states with nonzero prior mass
  bool initial_emission = true;      // first output emitted by the prior slot?
  std::vector<int> count_values;     // photon count per output; empty unless raw counts

  int num_expanded() const { return hmm.num_states; }
  int num_outputs() const { return hmm.num_outputs; }
  int num_initial() const { return static_cast<int>(initial_support.size()); }
  bool deterministic_output() const { return !rho.empty(); }

  /// Total prior mass on the fiber of physical state s.
  double physical_prior(int s) const;
  /// Expanded index of the prior slot of physical state s (product form:
  /// (s, output 0); trivial form: s itself).
  int prior_slot(int s) const;
};

/// Wraps a validated plain HMM for use with the inference machinery:
/// expanded space = state space, alpha = identity.
ExpandedHmm trivially_expanded(Hmm base);

/// Checks alpha/rho consistency, support, and the product-form invariants
/// when rho is present. Returns the model; throws ModelError.
ExpandedHmm validate_expanded(ExpandedHmm model);

/// Joint likelihoods P(y^k, t_k | s1) for every initial physical state s1 in
/// the support and every expanded state t_k, kept as one slice per s1.
/// Slices are rescaled to avoid underflow; log_scale accumulates the
/// logarithm of the factor taken out of each slice.
struct LikelihoodTable {
  int num_initial = 0;
  int num_expanded = 0;
  std::vector<double> values;     // [s1 slice][t], slice-major
  std::vector<double> log_scale;  // per s1 slice

  double& at(int l, int t) {
    return values[static_cast<std::size_t>(l) * num_expanded + t];
  }
  double at(int l, int t) const {
    return values[static_cast<std::size_t>(l) * num_expanded + t];
  }
  double* slice(int l) {
    return values.data() + static_cast<std::size_t>(l) * num_expanded;
  }
  const double* slice(int l) const {
    return values.data() + static_cast<std::size_t>(l) * num_expanded;
  }

  /// P(y^k | s1) for slice l, before undoing the rescaling.
  double slice_sum(int l) const;
  /// True if every entry is zero (the observed sequence is impossible).
  bool all_zero() const;
};

/// Slice l is rescaled to unit maximum once its largest entry drops below
/// this threshold; the factor moves into log_scale.
inline constexpr double kRescaleThreshold = 1e-30;

/// Conditional prior table before any observation:
/// table[s1][t] = I[alpha(t) = s1] * prior(t) / (fiber mass of s1).
LikelihoodTable prior_table(const ExpandedHmm& model);

/// First-observation table,
/// table[s1][t] = B(y1|t) * I[alpha(t) = s1] * prior(t) / (fiber mass of s1).
/// For product-form models (initial_emission = false) the first observable
/// output follows one action-free transition from the prior slot, which this
/// folds in before applying the output mask.
LikelihoodTable forward_init(const ExpandedHmm& model, int y1);

/// One recursion step:
/// new[s1][t] = B(y|t) * sum_t' old[s1][t'] * effective_trans(t, t').
/// effective_trans is the transition matrix composed with the applied action
/// (the plain matrix when no action was taken); it must be column-stochastic.
LikelihoodTable forward_step(const ExpandedHmm& model,
                             const LikelihoodTable& table, int y,
                             const Matrix& effective_trans);

/// Unchecked in-place kernel behind forward_step, for enumeration loops that
/// have validated their transition matrices once up front. Writes the updated
/// table into `out` (which must not alias `table`).
void forward_step_into(const ExpandedHmm& model, const LikelihoodTable& table,
                       int y, const Matrix& effective_trans,
                       LikelihoodTable& out);

struct MapEstimate {
  int state = -1;                  // physical initial-state estimate
  std::vector<double> posterior;   // over initial_support, normalized
};

/// Most likely initial state by slice totals, ties to the lowest state index.
/// Throws ImpossibleObservation if the table is entirely zero.
MapEstimate map_estimate(const LikelihoodTable& table,
                         const ExpandedHmm& model);

/// MAP estimate weighted by the physical prior (coincides with map_estimate
/// for the uniform priors used throughout). Returns the index into
/// initial_support; used by the evaluators so that enumeration, simulation
/// and the belief machinery share one decision rule.
int map_decision_index(const LikelihoodTable& table, const ExpandedHmm& model);

}  // namespace readout
