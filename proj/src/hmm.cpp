#include "readout/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "readout/errors.hpp"

namespace readout {

namespace {

constexpr double kSumTolerance = 1e-9;
constexpr double kRenormTolerance = 1e-6;

void check_column_stochastic(Matrix& m, const char* name) {
  for (int c = 0; c < m.cols; ++c) {
    double sum = 0.0;
    for (int r = 0; r < m.rows; ++r) {
      const double v = m(r, c);
      if (v < 0.0)
        throw ModelError(std::string(name) + " entry (" + std::to_string(r) +
                         "," + std::to_string(c) + ") is negative");
      if (v > 1.0 + kRenormTolerance)
        throw ModelError(std::string(name) + " entry (" + std::to_string(r) +
                         "," + std::to_string(c) + ") exceeds 1");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRenormTolerance)
      throw ModelError(std::string(name) + " column " + std::to_string(c) +
                       " sums to " + std::to_string(sum));
    if (std::abs(sum - 1.0) > kSumTolerance) {
      for (int r = 0; r < m.rows; ++r) m(r, c) /= sum;
    }
  }
}

}  // namespace

Hmm validate(Hmm model) {
  if (model.num_states <= 0 || model.num_outputs <= 0)
    throw ModelError("model must have positive state and output counts");
  if (model.trans.rows != model.num_states ||
      model.trans.cols != model.num_states)
    throw ModelError("transition matrix is " +
                     std::to_string(model.trans.rows) + "x" +
                     std::to_string(model.trans.cols) + ", expected " +
                     std::to_string(model.num_states) + "x" +
                     std::to_string(model.num_states));
  if (model.out.rows != model.num_outputs ||
      model.out.cols != model.num_states)
    throw ModelError("output matrix is " + std::to_string(model.out.rows) +
                     "x" + std::to_string(model.out.cols) + ", expected " +
                     std::to_string(model.num_outputs) + "x" +
                     std::to_string(model.num_states));
  if (static_cast<int>(model.prior.size()) != model.num_states)
    throw ModelError("prior has length " + std::to_string(model.prior.size()) +
                     ", expected " + std::to_string(model.num_states));

  check_column_stochastic(model.trans, "transition");
  check_column_stochastic(model.out, "output");

  double psum = 0.0;
  for (int s = 0; s < model.num_states; ++s) {
    if (model.prior[s] < 0.0)
      throw ModelError("prior entry " + std::to_string(s) + " is negative");
    psum += model.prior[s];
  }
  if (std::abs(psum - 1.0) > kRenormTolerance)
    throw ModelError("prior sums to " + std::to_string(psum));
  if (std::abs(psum - 1.0) > kSumTolerance)
    for (double& p : model.prior) p /= psum;

  return model;
}

double ExpandedHmm::physical_prior(int s) const {
  double m = 0.0;
  for (int t = 0; t < num_expanded(); ++t)
    if (alpha[t] == s) m += hmm.prior[t];
  return m;
}

int ExpandedHmm::prior_slot(int s) const {
  if (rho.empty()) return s;
  for (int t = 0; t < num_expanded(); ++t)
    if (alpha[t] == s && rho[t] == 0) return t;
  return -1;
}

ExpandedHmm trivially_expanded(Hmm base) {
  ExpandedHmm model;
  model.hmm = validate(std::move(base));
  model.num_physical = model.hmm.num_states;
  model.alpha.resize(model.num_physical);
  for (int s = 0; s < model.num_physical; ++s) model.alpha[s] = s;
  model.initial_emission = true;
  for (int s = 0; s < model.num_physical; ++s)
    if (model.hmm.prior[s] > 0.0) model.initial_support.push_back(s);
  if (model.initial_support.empty())
    throw ModelError("prior carries no mass");
  return model;
}

ExpandedHmm validate_expanded(ExpandedHmm model) {
  model.hmm = validate(std::move(model.hmm));
  const int nt = model.num_expanded();
  if (model.num_physical <= 0 || model.num_physical > nt)
    throw ModelError("invalid physical state count");
  if (static_cast<int>(model.alpha.size()) != nt)
    throw ModelError("alpha map does not cover the expanded space");
  for (int t = 0; t < nt; ++t)
    if (model.alpha[t] < 0 || model.alpha[t] >= model.num_physical)
      throw ModelError("alpha(" + std::to_string(t) + ") out of range");

  if (!model.rho.empty()) {
    if (static_cast<int>(model.rho.size()) != nt)
      throw ModelError("rho map does not cover the expanded space");
    if (nt != model.num_physical * model.num_outputs())
      throw ModelError("product form requires |T| = |S|*|Y|");
    for (int t = 0; t < nt; ++t) {
      if (model.rho[t] < 0 || model.rho[t] >= model.num_outputs())
        throw ModelError("rho(" + std::to_string(t) + ") out of range");
      for (int y = 0; y < model.num_outputs(); ++y) {
        const double expect = (y == model.rho[t]) ? 1.0 : 0.0;
        if (std::abs(model.hmm.out(y, t) - expect) > kSumTolerance)
          throw ModelError("output matrix is not deterministic at state " +
                           std::to_string(t));
      }
      if (model.rho[t] != 0 && model.hmm.prior[t] != 0.0)
        throw ModelError("prior mass off the output-0 slot at state " +
                         std::to_string(t));
    }
    // (alpha, rho) jointly injective
    std::vector<char> seen(static_cast<std::size_t>(model.num_physical) *
                               model.num_outputs(),
                           0);
    for (int t = 0; t < nt; ++t) {
      auto& flag = seen[static_cast<std::size_t>(model.alpha[t]) *
                            model.num_outputs() +
                        model.rho[t]];
      if (flag) throw ModelError("(alpha, rho) is not injective");
      flag = 1;
    }
  }

  std::vector<int> support;
  for (int s = 0; s < model.num_physical; ++s)
    if (model.physical_prior(s) > 0.0) support.push_back(s);
  if (support.empty()) throw ModelError("prior carries no mass");
  if (model.initial_support.empty()) {
    model.initial_support = support;
  } else if (model.initial_support != support) {
    throw ModelError("initial support does not match the prior");
  }
  return model;
}

double LikelihoodTable::slice_sum(int l) const {
  double s = 0.0;
  const double* v = slice(l);
  for (int t = 0; t < num_expanded; ++t) s += v[t];
  return s;
}

bool LikelihoodTable::all_zero() const {
  for (double v : values)
    if (v != 0.0) return false;
  return true;
}

LikelihoodTable prior_table(const ExpandedHmm& model) {
  LikelihoodTable table;
  table.num_initial = model.num_initial();
  table.num_expanded = model.num_expanded();
  table.values.assign(
      static_cast<std::size_t>(table.num_initial) * table.num_expanded, 0.0);
  table.log_scale.assign(table.num_initial, 0.0);
  for (int l = 0; l < table.num_initial; ++l) {
    const int s1 = model.initial_support[l];
    const double mass = model.physical_prior(s1);
    if (mass <= 0.0)
      throw ModelError("initial state " + std::to_string(s1) +
                       " has zero prior mass");
    for (int t = 0; t < table.num_expanded; ++t)
      if (model.alpha[t] == s1) table.at(l, t) = model.hmm.prior[t] / mass;
  }
  return table;
}

namespace {

void apply_output_mask(const ExpandedHmm& model, int y, LikelihoodTable& table) {
  for (int l = 0; l < table.num_initial; ++l) {
    double* v = table.slice(l);
    for (int t = 0; t < table.num_expanded; ++t) v[t] *= model.hmm.out(y, t);
  }
}

void rescale_slices(LikelihoodTable& table) {
  for (int l = 0; l < table.num_initial; ++l) {
    double* v = table.slice(l);
    double mx = 0.0;
    for (int t = 0; t < table.num_expanded; ++t) mx = std::max(mx, v[t]);
    if (mx > 0.0 && mx < kRescaleThreshold) {
      const double inv = 1.0 / mx;
      for (int t = 0; t < table.num_expanded; ++t) v[t] *= inv;
      table.log_scale[l] += std::log(mx);
    }
  }
}

}  // namespace

LikelihoodTable forward_init(const ExpandedHmm& model, int y1) {
  if (y1 < 0 || y1 >= model.num_outputs())
    throw ModelError("output " + std::to_string(y1) + " out of range");
  LikelihoodTable table = prior_table(model);
  if (model.initial_emission) {
    apply_output_mask(model, y1, table);
    return table;
  }
  // Product form: the prior slot emits nothing observable; the first output
  // belongs to the first measurement step.
  LikelihoodTable next;
  forward_step_into(model, table, y1, model.hmm.trans, next);
  return next;
}

void forward_step_into(const ExpandedHmm& model, const LikelihoodTable& table,
                       int y, const Matrix& effective_trans,
                       LikelihoodTable& out) {
  const int nt = table.num_expanded;
  out.num_initial = table.num_initial;
  out.num_expanded = nt;
  out.values.assign(table.values.size(), 0.0);
  out.log_scale = table.log_scale;

  if (model.deterministic_output()) {
    // Only destination states that remember output y can receive mass.
    for (int l = 0; l < table.num_initial; ++l) {
      const double* src = table.slice(l);
      double* dst = out.slice(l);
      for (int t2 = 0; t2 < nt; ++t2) {
        if (model.rho[t2] != y) continue;
        const double* arow = effective_trans.row(t2);
        double acc = 0.0;
        for (int t1 = 0; t1 < nt; ++t1) acc += arow[t1] * src[t1];
        dst[t2] = acc;
      }
    }
  } else {
    for (int l = 0; l < table.num_initial; ++l) {
      const double* src = table.slice(l);
      double* dst = out.slice(l);
      for (int t2 = 0; t2 < nt; ++t2) {
        const double b = model.hmm.out(y, t2);
        if (b == 0.0) continue;
        const double* arow = effective_trans.row(t2);
        double acc = 0.0;
        for (int t1 = 0; t1 < nt; ++t1) acc += arow[t1] * src[t1];
        dst[t2] = b * acc;
      }
    }
  }
  rescale_slices(out);
}

LikelihoodTable forward_step(const ExpandedHmm& model,
                             const LikelihoodTable& table, int y,
                             const Matrix& effective_trans) {
  if (y < 0 || y >= model.num_outputs())
    throw ModelError("output " + std::to_string(y) + " out of range");
  if (effective_trans.rows != table.num_expanded ||
      effective_trans.cols != table.num_expanded)
    throw ModelError("effective transition matrix has wrong shape");
  for (int c = 0; c < effective_trans.cols; ++c) {
    const double s = effective_trans.col_sum(c);
    if (std::abs(s - 1.0) > 1e-6)
      throw ModelError("effective transition column " + std::to_string(c) +
                       " sums to " + std::to_string(s));
  }
  LikelihoodTable out;
  forward_step_into(model, table, y, effective_trans, out);
  return out;
}

namespace {

/// log of (slice total, honoring the accumulated rescaling); -inf for zero.
double log_slice_total(const LikelihoodTable& table, int l) {
  const double s = table.slice_sum(l);
  if (s <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(s) + table.log_scale[l];
}

}  // namespace

MapEstimate map_estimate(const LikelihoodTable& table,
                         const ExpandedHmm& model) {
  if (table.all_zero())
    throw ImpossibleObservation(
        "observation sequence has zero probability under the model");
  const int nl = table.num_initial;
  std::vector<double> logv(nl);
  int best = 0;
  for (int l = 0; l < nl; ++l) {
    logv[l] = log_slice_total(table, l);
    if (logv[l] > logv[best]) best = l;
  }
  MapEstimate est;
  est.state = model.initial_support[best];
  est.posterior.assign(nl, 0.0);
  double norm = 0.0;
  for (int l = 0; l < nl; ++l) {
    est.posterior[l] =
        std::isinf(logv[l]) ? 0.0 : std::exp(logv[l] - logv[best]);
    norm += est.posterior[l];
  }
  for (double& p : est.posterior) p /= norm;
  return est;
}

int map_decision_index(const LikelihoodTable& table, const ExpandedHmm& model) {
  int best = -1;
  double best_log = -std::numeric_limits<double>::infinity();
  for (int l = 0; l < table.num_initial; ++l) {
    const double mass = model.physical_prior(model.initial_support[l]);
    double lg = log_slice_total(table, l);
    if (!std::isinf(lg)) lg += std::log(mass);
    if (best < 0 || lg > best_log) {
      best = l;
      best_log = lg;
    }
  }
  if (best < 0 || std::isinf(best_log))
    throw ImpossibleObservation(
        "observation sequence has zero probability under the model");
  return best;
}

}  // namespace readout
