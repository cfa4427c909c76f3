#include "readout/model_builders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "readout/errors.hpp"

namespace readout {

RateModel validate_rates(RateModel model) {
  const int n = model.rate_matrix.rows;
  if (n <= 0 || model.rate_matrix.cols != n)
    throw ModelError("rate matrix must be square");
  for (int j = 0; j < n; ++j) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double q = model.rate_matrix(i, j);
      if (i != j && q < 0.0)
        throw ModelError("rate matrix entry (" + std::to_string(i) + "," +
                         std::to_string(j) + ") is negative");
      sum += q;
    }
    if (std::abs(sum) > 1e-9 * std::max(1.0, std::abs(model.rate_matrix(j, j))))
      throw ModelError("rate matrix column " + std::to_string(j) +
                       " does not sum to zero");
  }
  if (static_cast<int>(model.emission_rates.size()) != n)
    throw ModelError("emission rate list has wrong length");
  for (int s = 0; s < n; ++s)
    if (model.emission_rates[s] < 0.0)
      throw ModelError("emission rate for level " + std::to_string(s) +
                       " is negative");
  if (model.dt <= 0.0) throw ModelError("step duration must be positive");
  if (model.n_max < 1) throw ModelError("n_max must be at least 1");
  if (model.quad_points < 1) throw ModelError("quad_points must be at least 1");
  if (static_cast<int>(model.prior.size()) != n)
    throw ModelError("prior has wrong length");
  double psum = 0.0;
  for (double p : model.prior) {
    if (p < 0.0) throw ModelError("prior entry is negative");
    psum += p;
  }
  if (std::abs(psum - 1.0) > 1e-6) throw ModelError("prior does not sum to 1");
  return model;
}

Matrix matrix_exp(const Matrix& rate_matrix, double dt) {
  const int n = rate_matrix.rows;
  if (n <= 0 || rate_matrix.cols != n)
    throw ModelError("rate matrix must be square");

  Matrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = rate_matrix(i, j) * dt;

  // Scale so the 1-norm is at most 1/2, exponentiate by series, square back.
  double norm1 = 0.0;
  for (int j = 0; j < n; ++j) {
    double c = 0.0;
    for (int i = 0; i < n; ++i) c += std::abs(m(i, j));
    norm1 = std::max(norm1, c);
  }
  int squarings = 0;
  while (norm1 > 0.5) {
    norm1 *= 0.5;
    ++squarings;
  }
  const double scale = std::ldexp(1.0, -squarings);
  for (double& v : m.a) v *= scale;

  Matrix result = Matrix::identity(n);
  Matrix term = Matrix::identity(n);
  constexpr double kTol = 1e-13;
  constexpr int kMaxTerms = 64;
  bool converged = false;
  for (int k = 1; k <= kMaxTerms; ++k) {
    term = term * m;
    for (double& v : term.a) v /= k;
    double term_norm = 0.0;
    double result_norm = 0.0;
    for (std::size_t i = 0; i < term.a.size(); ++i) {
      term_norm = std::max(term_norm, std::abs(term.a[i]));
      result_norm = std::max(result_norm, std::abs(result.a[i]));
    }
    for (std::size_t i = 0; i < term.a.size(); ++i) result.a[i] += term.a[i];
    if (term_norm <= kTol * std::max(result_norm, 1.0)) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw NumericError("matrix exponential series did not converge");

  for (int s = 0; s < squarings; ++s) result = result * result;

  for (double& v : result.a) {
    if (v < 0.0) {
      if (v < -1e-12)
        throw NumericError("matrix exponential produced entry " +
                           std::to_string(v));
      v = 0.0;
    }
  }
  for (int j = 0; j < n; ++j) {
    const double s = result.col_sum(j);
    if (std::abs(s - 1.0) > 1e-10)
      throw NumericError("integrated transition column " + std::to_string(j) +
                         " sums to " + std::to_string(s));
  }
  return result;
}

namespace {

/// Truncated Poisson pmf over {0..n_max} with the tail folded into n_max.
std::vector<double> truncated_poisson(double mean, int n_max) {
  std::vector<double> p(n_max + 1, 0.0);
  double term = std::exp(-mean);
  double below = 0.0;
  for (int k = 0; k < n_max; ++k) {
    p[k] = term;
    below += term;
    term *= mean / (k + 1);
  }
  p[n_max] = std::max(0.0, 1.0 - below);
  return p;
}

}  // namespace

std::vector<double> photon_distribution(double rate_from, double rate_to,
                                        double dt, int n_max,
                                        int quad_points) {
  if (rate_from < 0.0 || rate_to < 0.0)
    throw ModelError("photon rates must be nonnegative");
  if (dt <= 0.0) throw ModelError("step duration must be positive");
  if (n_max < 1) throw ModelError("n_max must be at least 1");
  if (quad_points < 1) throw ModelError("quad_points must be at least 1");

  if (rate_from == rate_to) return truncated_poisson(rate_from * dt, n_max);

  std::vector<double> mix(n_max + 1, 0.0);
  const double w = 1.0 / quad_points;
  for (int q = 0; q < quad_points; ++q) {
    const double t = (q + 0.5) * dt / quad_points;
    const double mean = rate_from * t + rate_to * (dt - t);
    const std::vector<double> p = truncated_poisson(mean, n_max);
    for (int k = 0; k <= n_max; ++k) mix[k] += w * p[k];
  }
  // Fold rounding residue into the tail class so the result sums to 1 exactly.
  double below = 0.0;
  for (int k = 0; k < n_max; ++k) below += mix[k];
  mix[n_max] = std::max(0.0, 1.0 - below);
  return mix;
}

StepKernel step_kernel(const RateModel& model) {
  const RateModel m = validate_rates(model);
  const int n = m.rate_matrix.rows;
  const Matrix r = matrix_exp(m.rate_matrix, m.dt);

  StepKernel kernel;
  kernel.num_levels = n;
  kernel.num_outputs = m.n_max + 1;
  kernel.u.assign(static_cast<std::size_t>(n) * kernel.num_outputs * n, 0.0);
  for (int s_from = 0; s_from < n; ++s_from) {
    for (int s_to = 0; s_to < n; ++s_to) {
      const double rr = r(s_to, s_from);
      if (rr == 0.0) continue;
      const std::vector<double> j =
          photon_distribution(m.emission_rates[s_from],
                              m.emission_rates[s_to], m.dt, m.n_max,
                              m.quad_points);
      for (int o = 0; o <= m.n_max; ++o)
        kernel.at(s_to, o, s_from) = j[o] * rr;
    }
  }
  // For each starting level the kernel is a joint distribution.
  for (int s_from = 0; s_from < n; ++s_from) {
    double sum = 0.0;
    for (int s_to = 0; s_to < n; ++s_to)
      for (int o = 0; o <= m.n_max; ++o) sum += kernel.at(s_to, o, s_from);
    if (std::abs(sum - 1.0) > 1e-9)
      throw NumericError("step kernel column " + std::to_string(s_from) +
                         " sums to " + std::to_string(sum));
  }
  return kernel;
}

ExpandedHmm expand(const StepKernel& kernel, const std::vector<double>& prior,
                   std::vector<std::string> level_labels) {
  const int ns = kernel.num_levels;
  const int ny = kernel.num_outputs;
  const int nt = ns * ny;
  if (static_cast<int>(prior.size()) != ns)
    throw ModelError("prior has wrong length");

  ExpandedHmm model;
  model.num_physical = ns;
  model.hmm.num_states = nt;
  model.hmm.num_outputs = ny;
  model.hmm.trans = Matrix(nt, nt);
  model.hmm.out = Matrix(ny, nt);
  model.hmm.prior.assign(nt, 0.0);
  model.alpha.resize(nt);
  model.rho.resize(nt);
  model.initial_emission = false;
  model.count_values.resize(ny);
  for (int o = 0; o < ny; ++o) model.count_values[o] = o;

  for (int s = 0; s < ns; ++s) {
    for (int o = 0; o < ny; ++o) {
      const int t = s * ny + o;
      model.alpha[t] = s;
      model.rho[t] = o;
      model.hmm.out(o, t) = 1.0;
    }
    model.hmm.prior[s * ny + 0] = prior[s];
  }
  for (int s_from = 0; s_from < ns; ++s_from)
    for (int o_from = 0; o_from < ny; ++o_from) {
      const int t_from = s_from * ny + o_from;
      for (int s_to = 0; s_to < ns; ++s_to)
        for (int o_to = 0; o_to < ny; ++o_to)
          model.hmm.trans(s_to * ny + o_to, t_from) =
              kernel.at(s_to, o_to, s_from);
    }

  if (!level_labels.empty()) {
    if (static_cast<int>(level_labels.size()) != ns)
      throw ModelError("level label list has wrong length");
    for (int s = 0; s < ns; ++s)
      for (int o = 0; o < ny; ++o)
        model.hmm.state_labels.push_back(level_labels[s] + ":" +
                                         std::to_string(o));
  }
  for (int o = 0; o < ny; ++o)
    model.hmm.output_labels.push_back(std::to_string(o));

  return validate_expanded(std::move(model));
}

ExpandedHmm build_fluorescence_model(const RateModel& model) {
  const RateModel m = validate_rates(model);
  return expand(step_kernel(m), m.prior, m.level_labels);
}

Hmm three_state_model(double a, double b) {
  if (a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0)
    throw ModelError("three-state parameters must lie in [0, 1]");
  Hmm m;
  m.num_states = 3;
  m.num_outputs = 3;
  m.trans = Matrix(3, 3);
  m.out = Matrix(3, 3);
  // Columns are source states.
  const double h = (1.0 - a) / 2.0;
  m.trans(0, 0) = 1.0 - a; m.trans(1, 0) = a;  m.trans(2, 0) = 0.0;
  m.trans(0, 1) = h;       m.trans(1, 1) = a;  m.trans(2, 1) = h;
  m.trans(0, 2) = 0.0;     m.trans(1, 2) = a;  m.trans(2, 2) = 1.0 - a;
  const double g = (1.0 - b) / 2.0;
  m.out(0, 0) = 1.0 - b;   m.out(1, 0) = b;    m.out(2, 0) = 0.0;
  m.out(0, 1) = g;         m.out(1, 1) = b;    m.out(2, 1) = g;
  m.out(0, 2) = 0.0;       m.out(1, 2) = b;    m.out(2, 2) = 1.0 - b;
  m.prior = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  m.state_labels = {"0", "1", "2"};
  m.output_labels = {"0", "1", "2"};
  return validate(std::move(m));
}

int Partition::bin_of(int y) const {
  int b = 0;
  for (int cut : boundaries) {
    if (y < cut) break;
    ++b;
  }
  return b;
}

std::vector<std::pair<int, int>> Partition::bins() const {
  std::vector<std::pair<int, int>> out;
  int start = 0;
  for (int cut : boundaries) {
    out.emplace_back(start, cut - 1);
    start = cut;
  }
  out.emplace_back(start, num_outputs - 1);
  return out;
}

Partition Partition::singletons(int num_outputs) {
  Partition p;
  p.num_outputs = num_outputs;
  for (int y = 1; y < num_outputs; ++y) p.boundaries.push_back(y);
  return p;
}

std::string Partition::to_string() const {
  std::ostringstream os;
  for (const auto& [lo, hi] : bins()) {
    os << '[' << lo;
    if (hi != lo) os << '-' << hi;
    os << ']';
  }
  return os.str();
}

Partition validate_partition(Partition partition) {
  if (partition.num_outputs < 1)
    throw ModelError("partition needs a positive output count");
  int prev = 0;
  for (int cut : partition.boundaries) {
    if (cut <= prev || cut >= partition.num_outputs)
      throw ModelError("partition boundaries must increase strictly within "
                       "the output range");
    prev = cut;
  }
  return partition;
}

std::vector<Partition> consecutive_partitions(int num_outputs, int n_bins) {
  if (n_bins < 1 || n_bins > num_outputs)
    throw ModelError("bin count must lie in [1, number of outputs]");
  std::vector<Partition> all;
  std::vector<int> cuts(n_bins - 1);
  std::iota(cuts.begin(), cuts.end(), 1);
  while (true) {
    Partition p;
    p.num_outputs = num_outputs;
    p.boundaries = cuts;
    all.push_back(std::move(p));
    // next combination of cut points out of {1..num_outputs-1}
    int i = n_bins - 2;
    while (i >= 0 && cuts[i] == num_outputs - (n_bins - 1 - i)) --i;
    if (i < 0) break;
    ++cuts[i];
    for (int k = i + 1; k < n_bins - 1; ++k) cuts[k] = cuts[k - 1] + 1;
  }
  return all;
}

ExpandedHmm bin_model(const ExpandedHmm& model, const Partition& partition) {
  const Partition p = validate_partition(partition);
  if (p.num_outputs != model.num_outputs())
    throw ModelError("partition does not cover the model output space");
  const int nb = p.num_bins();

  if (!model.deterministic_output()) {
    // Plain-output model: merge rows of B.
    ExpandedHmm binned = model;
    binned.hmm.num_outputs = nb;
    binned.hmm.out = Matrix(nb, model.num_expanded());
    for (int t = 0; t < model.num_expanded(); ++t)
      for (int y = 0; y < model.num_outputs(); ++y)
        binned.hmm.out(p.bin_of(y), t) += model.hmm.out(y, t);
    binned.hmm.output_labels.clear();
    for (const auto& [lo, hi] : p.bins())
      binned.hmm.output_labels.push_back(std::to_string(lo) + "-" +
                                         std::to_string(hi));
    binned.count_values.clear();
    return validate_expanded(std::move(binned));
  }

  // Product form: collapse (s, y) fibers to (s, bin).
  const int ns = model.num_physical;
  const int ny = model.num_outputs();
  const int nt = ns * nb;
  ExpandedHmm binned;
  binned.num_physical = ns;
  binned.hmm.num_states = nt;
  binned.hmm.num_outputs = nb;
  binned.hmm.trans = Matrix(nt, nt);
  binned.hmm.out = Matrix(nb, nt);
  binned.hmm.prior.assign(nt, 0.0);
  binned.alpha.resize(nt);
  binned.rho.resize(nt);
  binned.initial_emission = false;

  auto old_index = [&](int s, int y) { return s * ny + y; };
  auto new_index = [&](int s, int b) { return s * nb + b; };

  for (int s = 0; s < ns; ++s)
    for (int b = 0; b < nb; ++b) {
      const int t = new_index(s, b);
      binned.alpha[t] = s;
      binned.rho[t] = b;
      binned.hmm.out(b, t) = 1.0;
    }
  for (int s = 0; s < ns; ++s) {
    double mass = 0.0;
    for (int y = 0; y < ny; ++y) mass += model.hmm.prior[old_index(s, y)];
    binned.hmm.prior[new_index(s, p.bin_of(0))] = mass;
  }
  // New transition columns do not depend on the remembered bin; use the
  // representative with the lowest old output in each source bin.
  for (int s_from = 0; s_from < ns; ++s_from)
    for (int b_from = 0; b_from < nb; ++b_from) {
      const int rep = old_index(s_from, p.bins()[b_from].first);
      const int col = new_index(s_from, b_from);
      for (int s_to = 0; s_to < ns; ++s_to)
        for (int y = 0; y < ny; ++y)
          binned.hmm.trans(new_index(s_to, p.bin_of(y)), col) +=
              model.hmm.trans(old_index(s_to, y), rep);
    }

  for (const auto& [lo, hi] : p.bins())
    binned.hmm.output_labels.push_back(std::to_string(lo) + "-" +
                                       std::to_string(hi));
  return validate_expanded(std::move(binned));
}

}  // namespace readout
