#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "readout/errors.hpp"
#include "readout/evaluate.hpp"
#include "readout/model_builders.hpp"

namespace readout {

BinningResult optimize_binning(const ExpandedHmm& model, int n_bins, int n,
                               const Policy& policy, const RunCaps& caps,
                               Exec exec) {
  if (n_bins < 1 || n_bins > model.num_outputs())
    throw ModelError("bin count must lie in [1, number of outputs]");
  const double seq_count = std::pow(static_cast<double>(n_bins), n);
  if (seq_count > caps.max_sequences)
    throw WorkCapExceeded("binned evaluation needs " +
                          std::to_string(seq_count) +
                          " sequences per candidate, cap is " +
                          std::to_string(caps.max_sequences));

  const std::vector<Partition> candidates =
      consecutive_partitions(model.num_outputs(), n_bins);
  std::vector<double> scores(candidates.size());

  const int count = static_cast<int>(candidates.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) if (exec == Exec::parallel)
#endif
  for (int i = 0; i < count; ++i) {
    const ExpandedHmm binned = bin_model(model, candidates[i]);
    // Candidates run serially inside; the parallelism lives out here.
    scores[i] =
        exact_infidelity(binned, policy, n, caps, Exec::serial).infidelity;
  }

  // Index-ordered reduction: ties resolve to the lexicographically smallest
  // boundary list, which is the enumeration order.
  int best = 0;
  for (int i = 1; i < count; ++i)
    if (scores[i] < scores[best]) best = i;

  BinningResult result;
  result.best = candidates[best];
  result.best_infidelity = scores[best];
  result.evaluated.reserve(candidates.size());
  for (int i = 0; i < count; ++i)
    result.evaluated.emplace_back(candidates[i], scores[i]);
  return result;
}

}  // namespace readout
