#pragma once

#include <string>
#include <utility>
#include <vector>

#include "readout/caps.hpp"
#include "readout/hmm.hpp"
#include "readout/matrix.hpp"

namespace readout {

class Policy;

/// Continuous-time description of a fluorescence measurement: transition-rate
/// matrix Q (1/s, columns sum to zero), per-level detected-photon rates
/// (photons/s), step duration, photon-count cap, and a prior over levels.
struct RateModel {
  Matrix rate_matrix;                  // Q(i, j): rate from level j to level i
  std::vector<double> emission_rates;  // photons per second, per level
  double dt = 0.0;                     // seconds per step
  int n_max = 15;                      // counts >= n_max fold into outcome n_max
  std::vector<double> prior;
  int quad_points = 32;                // nodes for the transition-time mixture
  std::vector<std::string> level_labels;
};

/// Throws ModelError if Q has negative off-diagonal entries or nonzero column
/// sums, or if rates/dt/n_max are out of range.
RateModel validate_rates(RateModel model);

/// exp(Q * dt) by scaling-and-squaring with a truncated series (relative
/// tolerance 1e-13). Entries in [-1e-12, 0) are clamped to zero; columns must
/// sum to 1 within 1e-10 or NumericError is thrown.
Matrix matrix_exp(const Matrix& rate_matrix, double dt);

/// Distribution of detected photons in one step that starts at rate
/// `rate_from` and ends at rate `rate_to`, with the transition time uniform
/// over the step (midpoint rule, `quad_points` nodes). Equal rates give a
/// plain Poisson. Counts of n_max or more fold into outcome n_max, so the
/// result sums to 1 exactly.
std::vector<double> photon_distribution(double rate_from, double rate_to,
                                        double dt, int n_max, int quad_points);

/// Joint one-step kernel U(s, o | s') = J(o | s, s') R(s | s'): ending level,
/// observed photon count, conditioned on the starting level.
struct StepKernel {
  int num_levels = 0;
  int num_outputs = 0;  // n_max + 1
  std::vector<double> u;

  double& at(int s_to, int o, int s_from) {
    return u[(static_cast<std::size_t>(s_to) * num_outputs + o) * num_levels +
             s_from];
  }
  double at(int s_to, int o, int s_from) const {
    return u[(static_cast<std::size_t>(s_to) * num_outputs + o) * num_levels +
             s_from];
  }
};

StepKernel step_kernel(const RateModel& model);

/// Product-form expanded HMM over pairs (level, output of the producing
/// step): A((s,o)|(s',o')) = U(s,o|s'), deterministic output matrix, prior
/// mass on the output-0 slots.
ExpandedHmm expand(const StepKernel& kernel, const std::vector<double>& prior,
                   std::vector<std::string> level_labels = {});

/// Builds the expanded fluorescence model straight from a rate model.
ExpandedHmm build_fluorescence_model(const RateModel& model);

/// Symmetric three-state model: states and outputs {0,1,2}, transition
/// parameter a, output parameter b, uniform prior. Output 0 excludes state 2
/// and output 2 excludes state 0; everything is invariant under swapping the
/// 0 and 2 labels of both states and outputs.
Hmm three_state_model(double a, double b);

/// Consecutive-integer partition of the output space {0..num_outputs-1}.
/// boundaries holds the first output of every bin except the first, strictly
/// increasing; bin i is the run [start_i, start_{i+1}).
struct Partition {
  int num_outputs = 0;
  std::vector<int> boundaries;

  int num_bins() const { return static_cast<int>(boundaries.size()) + 1; }
  int bin_of(int y) const;
  /// Inclusive [first, last] output range of each bin.
  std::vector<std::pair<int, int>> bins() const;
  static Partition singletons(int num_outputs);
  std::string to_string() const;  // e.g. "[0-2][3-5][6-15]"
};

Partition validate_partition(Partition partition);

/// All consecutive partitions of {0..num_outputs-1} into n_bins bins, in
/// lexicographic boundary order; there are C(num_outputs-1, n_bins-1).
std::vector<Partition> consecutive_partitions(int num_outputs, int n_bins);

/// Model with the outputs merged by the partition. Product-form models have
/// their expanded space shrunk to |S| * n_bins; plain-output models keep
/// their state space and get summed output rows.
ExpandedHmm bin_model(const ExpandedHmm& model, const Partition& partition);

struct BinningResult {
  Partition best;
  double best_infidelity = 0.0;
  /// Every candidate with its exact infidelity, in enumeration order.
  std::vector<std::pair<Partition, double>> evaluated;
};

/// Exhaustive search over consecutive partitions with n_bins bins, scoring
/// each candidate by the exact infidelity of the binned model under `policy`
/// at horizon n. Ties resolve to the lexicographically smallest boundary
/// list. The per-candidate evaluations are independent and run in parallel.
BinningResult optimize_binning(const ExpandedHmm& model, int n_bins, int n,
                               const Policy& policy,
                               const RunCaps& caps = RunCaps{},
                               Exec exec = Exec::parallel);

}  // namespace readout
