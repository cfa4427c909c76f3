#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "readout/caps.hpp"
#include "readout/hmm.hpp"
#include "readout/model_builders.hpp"
#include "readout/policy.hpp"

namespace readout {

/// Result of one infidelity evaluation.
struct EvalReport {
  double infidelity = 0.0;
  double fidelity = 0.0;
  /// P(estimate != s1 | s1), indexed like the model's initial support.
  std::vector<double> per_initial_error;
  /// Output sequences enumerated, totals scanned, or trials run.
  std::int64_t sequences = 0;
  std::string method;  // "exact" | "monte-carlo" | "histogram"
  std::optional<double> std_error;  // Monte Carlo only
  std::uint64_t seed = 0;           // Monte Carlo only
  std::string rng;                  // generator name, Monte Carlo only
};

/// Exact measurement infidelity of `policy` at horizon n by depth-first
/// enumeration of all |Y|^n output sequences. Policy queries are interleaved
/// with the forward updates, so adaptive policies see exactly the prefix they
/// would observe online. Summation follows the fixed depth-first order with
/// compensated accumulation; the parallel mode partitions the enumeration by
/// leading outputs and merges in fixed order, giving results identical to the
/// serial reference.
EvalReport exact_infidelity(const ExpandedHmm& model, const Policy& policy,
                            int n, const RunCaps& caps = RunCaps{},
                            Exec exec = Exec::parallel);

/// Baseline that classifies on the total photon count over n steps, ignoring
/// timing. Requires a model whose per-step outputs are raw photon counts
/// (unbinned product form). Total-count distributions are computed by dynamic
/// programming over (expanded state, cumulative count).
EvalReport histogram_infidelity(const ExpandedHmm& model, int n);

/// Monte Carlo estimate: samples trajectories with the policy applied online,
/// runs MAP inference on each, and reports the empirical infidelity with its
/// binomial standard error. Each trial draws from its own counter-based
/// stream keyed by (seed, trial), so identical seeds give bit-identical
/// reports regardless of scheduling.
EvalReport simulate(const ExpandedHmm& model, const Policy& policy, int n,
                    std::int64_t trials, std::uint64_t seed,
                    Exec exec = Exec::parallel);

// ---------------------------------------------------------------------------
// Sweeps

enum class Method { histogram, no_perms, min_entropy, exhaustive };

std::string method_name(Method m);  // "Histogram", "NoPerms", ...

struct SweepRow {
  std::string param_name;
  std::string value;
  std::string method;
  int n = 0;
  int n_b = 0;
  double infidelity = 0.0;
  std::optional<double> std_error;
  std::uint64_t seed = 0;
};

struct SweepOptions {
  std::vector<Method> methods;
  int n = 6;
  int n_b = 0;  // 0 = no binning
  ActionSet actions;
  int lookahead = 2;
  std::uint64_t seed = 0;
  RunCaps caps;
  Exec exec = Exec::parallel;
};

/// Called once per grid point of a collection-time sweep with the rebuilt
/// models, for callers that want to keep the per-point artifacts.
using DtPointSink = std::function<void(
    int index, double dt_seconds, const ExpandedHmm& unbinned,
    const ExpandedHmm& binned, const Partition& partition)>;

/// Sweep over step durations: for each dt the fluorescence model is rebuilt
/// from the rate model, the binning is re-optimized under the no-permutation
/// policy, and every requested method is evaluated exactly.
std::vector<SweepRow> sweep_dt(const RateModel& base,
                               const std::vector<double>& dts_seconds,
                               const SweepOptions& options,
                               const DtPointSink& sink = nullptr);

/// Sweep over three-state parameters. `points` holds (a, b) pairs. When both
/// NoPerms and Exhaustive are requested, an extra Log10Ratio row per point
/// reports log10(infidelity(NoPerms) / infidelity(Exhaustive)).
std::vector<SweepRow> sweep_ab(const std::vector<std::pair<double, double>>& points,
                               const SweepOptions& options);

}  // namespace readout
