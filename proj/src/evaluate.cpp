#include "readout/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "readout/errors.hpp"
#include "readout/rng.hpp"

namespace readout {

namespace {

bool table_has_mass(const LikelihoodTable& t) {
  for (double v : t.values)
    if (v > 0.0) return true;
  return false;
}

struct Accum {
  KahanSum correct;
  std::vector<KahanSum> error;  // per initial state
  std::int64_t leaves = 0;
};

struct EvalCtx {
  const ExpandedHmm* model = nullptr;
  const ActionMatrices* mats = nullptr;
  int n = 0;
  int ny = 0;
  std::vector<double> prior_mass;  // physical prior per support entry
  std::vector<LikelihoodTable> stack;
  Accum acc;
};

void contribute_leaf(EvalCtx& ctx, const LikelihoodTable& table) {
  const int nl = table.num_initial;
  int best = -1;
  double best_w = -1.0;
  double likelihood[64];
  for (int l = 0; l < nl; ++l) {
    const double p = table.slice_sum(l) * std::exp(table.log_scale[l]);
    likelihood[l] = p;
    const double w = ctx.prior_mass[l] * p;
    if (w > best_w) {
      best_w = w;
      best = l;
    }
  }
  ctx.acc.correct.add(best_w);
  for (int l = 0; l < nl; ++l)
    if (l != best) ctx.acc.error[l].add(likelihood[l]);
  ++ctx.acc.leaves;
}

/// Depth-first enumeration below a prefix. `table` holds the likelihoods of
/// the prefix (k observations consumed), `run` has seen the same prefix.
void eval_rec(EvalCtx& ctx, const LikelihoodTable& table, PolicyRun& run,
              int k) {
  if (k == ctx.n) {
    contribute_leaf(ctx, table);
    return;
  }
  const int a = run.act();
  LikelihoodTable& next = ctx.stack[k + 1];
  for (int y = 0; y < ctx.ny; ++y) {
    forward_step_into(*ctx.model, table, y, (*ctx.mats)[a], next);
    if (!table_has_mass(next)) continue;
    if (k + 1 == ctx.n) {
      contribute_leaf(ctx, next);
    } else {
      std::unique_ptr<PolicyRun> branch = run.clone();
      branch->observe(y);
      // `next` is stable while deeper levels use higher stack slots, but the
      // recursive call overwrites it on the next y iteration, so recurse on a
      // copy held in the stack slot itself.
      eval_rec(ctx, next, *branch, k + 1);
    }
  }
}

std::vector<double> support_prior(const ExpandedHmm& model) {
  std::vector<double> mass;
  for (int s : model.initial_support) mass.push_back(model.physical_prior(s));
  return mass;
}

/// Builds the table for the first observation, honoring the model's timing
/// convention. Returns false if the observation is impossible.
bool first_table(const ExpandedHmm& model, int y1, LikelihoodTable& out) {
  out = forward_init(model, y1);
  return table_has_mass(out);
}

}  // namespace

EvalReport exact_infidelity(const ExpandedHmm& model, const Policy& policy,
                            int n, const RunCaps& caps, Exec exec) {
  if (n < 1) throw ModelError("horizon must be at least 1");
  const int ny = model.num_outputs();
  const int nl = model.num_initial();
  if (nl > 64) throw ModelError("initial support too large");
  const double seq_count = std::pow(static_cast<double>(ny), n);
  if (seq_count > caps.max_sequences)
    throw WorkCapExceeded("exact enumeration needs " +
                          std::to_string(seq_count) + " sequences, cap is " +
                          std::to_string(caps.max_sequences));

  const ActionSet& set = validate_actions(policy.actions(), model.num_physical);
  const ActionMatrices mats = precompute_action_matrices(model, set);
  const std::vector<double> prior_mass = support_prior(model);

  // Tasks are the depth-d prefixes in lexicographic order; d grows until
  // there is enough slack for dynamic scheduling.
  int d = 1;
  while (d < n && std::pow(static_cast<double>(ny), d) < 16) ++d;
  std::int64_t num_tasks = 1;
  for (int i = 0; i < d; ++i) num_tasks *= ny;

  std::vector<Accum> task_acc(num_tasks);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) if (exec == Exec::parallel)
#endif
  for (std::int64_t task = 0; task < num_tasks; ++task) {
    // Decode the prefix (most significant output first).
    std::vector<int> prefix(d);
    std::int64_t rest = task;
    for (int i = d - 1; i >= 0; --i) {
      prefix[i] = static_cast<int>(rest % ny);
      rest /= ny;
    }
    EvalCtx ctx;
    ctx.model = &model;
    ctx.mats = &mats;
    ctx.n = n;
    ctx.ny = ny;
    ctx.prior_mass = prior_mass;
    ctx.stack.resize(n + 1);
    ctx.acc.error.assign(nl, KahanSum{});

    // Walk the prefix, interleaving policy queries as the online run would.
    std::unique_ptr<PolicyRun> run = policy.start(model, n);
    bool alive = first_table(model, prefix[0], ctx.stack[1]);
    if (alive && n > 1) run->observe(prefix[0]);
    int k = 1;
    while (alive && k < d) {
      const int a = run->act();
      forward_step_into(model, ctx.stack[k], prefix[k], mats[a],
                        ctx.stack[k + 1]);
      ++k;
      alive = table_has_mass(ctx.stack[k]);
      if (alive && k < n) run->observe(prefix[k - 1]);
    }
    if (alive) {
      eval_rec(ctx, ctx.stack[d], *run, d);
      task_acc[task] = std::move(ctx.acc);
    }
  }

  // Fixed-order merge.
  KahanSum correct;
  std::vector<KahanSum> error(nl);
  std::int64_t leaves = 0;
  for (const Accum& acc : task_acc) {
    if (acc.error.empty()) continue;  // prefix was pruned as impossible
    correct.add(acc.correct.value());
    for (int l = 0; l < nl; ++l) error[l].add(acc.error[l].value());
    leaves += acc.leaves;
  }

  EvalReport report;
  report.fidelity = correct.value();
  report.infidelity = 1.0 - report.fidelity;
  report.per_initial_error.resize(nl);
  for (int l = 0; l < nl; ++l) report.per_initial_error[l] = error[l].value();
  report.sequences = leaves;
  report.method = "exact";
  return report;
}

EvalReport histogram_infidelity(const ExpandedHmm& model, int n) {
  if (n < 1) throw ModelError("horizon must be at least 1");
  if (!model.deterministic_output() || model.count_values.empty())
    throw ModelError(
        "histogram method needs per-step outputs that are raw photon counts");
  const int nt = model.num_expanded();
  const int nl = model.num_initial();
  int max_count = 0;
  for (int c : model.count_values) {
    if (c < 0) throw ModelError("negative photon count value");
    max_count = std::max(max_count, c);
  }
  const int num_totals = n * max_count + 1;

  // P(total = m | s1) for each initial state, by DP over (state, total).
  std::vector<std::vector<double>> totals(nl);
  for (int l = 0; l < nl; ++l) {
    const int s1 = model.initial_support[l];
    std::vector<double> cur(static_cast<std::size_t>(nt) * num_totals, 0.0);
    std::vector<double> nxt(cur.size(), 0.0);
    // Conditional start inside the fiber of s1.
    const double mass = model.physical_prior(s1);
    for (int t = 0; t < nt; ++t)
      if (model.alpha[t] == s1)
        cur[static_cast<std::size_t>(t) * num_totals + 0] =
            model.hmm.prior[t] / mass;
    for (int step = 0; step < n; ++step) {
      std::fill(nxt.begin(), nxt.end(), 0.0);
      const int reach = step * max_count;  // largest total so far
      for (int t = 0; t < nt; ++t) {
        const double* row = &cur[static_cast<std::size_t>(t) * num_totals];
        for (int m = 0; m <= reach; ++m) {
          const double v = row[m];
          if (v == 0.0) continue;
          for (int t2 = 0; t2 < nt; ++t2) {
            const double p = model.hmm.trans(t2, t);
            if (p == 0.0) continue;
            nxt[static_cast<std::size_t>(t2) * num_totals + m +
                model.count_values[model.rho[t2]]] += v * p;
          }
        }
      }
      std::swap(cur, nxt);
    }
    totals[l].assign(num_totals, 0.0);
    for (int t = 0; t < nt; ++t)
      for (int m = 0; m < num_totals; ++m)
        totals[l][m] += cur[static_cast<std::size_t>(t) * num_totals + m];
  }

  const std::vector<double> prior_mass = support_prior(model);
  KahanSum correct;
  std::vector<KahanSum> error(nl);
  for (int m = 0; m < num_totals; ++m) {
    int best = -1;
    double best_w = 0.0;
    for (int l = 0; l < nl; ++l) {
      const double w = prior_mass[l] * totals[l][m];
      if (best < 0 || w > best_w) {
        best = l;
        best_w = w;
      }
    }
    if (best_w <= 0.0) continue;
    correct.add(best_w);
    for (int l = 0; l < nl; ++l)
      if (l != best) error[l].add(totals[l][m]);
  }

  EvalReport report;
  report.fidelity = correct.value();
  report.infidelity = 1.0 - report.fidelity;
  report.per_initial_error.resize(nl);
  for (int l = 0; l < nl; ++l) report.per_initial_error[l] = error[l].value();
  report.sequences = num_totals;
  report.method = "histogram";
  return report;
}

namespace {

int sample_index(CounterRng& rng, const double* weights, int count) {
  double total = 0.0;
  for (int i = 0; i < count; ++i) total += weights[i];
  double u = rng.uniform() * total;
  for (int i = 0; i + 1 < count; ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  return count - 1;
}

}  // namespace

EvalReport simulate(const ExpandedHmm& model, const Policy& policy, int n,
                    std::int64_t trials, std::uint64_t seed, Exec exec) {
  if (n < 1) throw ModelError("horizon must be at least 1");
  if (trials < 1) throw ModelError("trial count must be at least 1");
  const int ny = model.num_outputs();
  const int nt = model.num_expanded();
  const int nl = model.num_initial();

  const ActionSet& set = validate_actions(policy.actions(), model.num_physical);
  const ActionMatrices mats = precompute_action_matrices(model, set);
  const int identity = set.identity_index();
  const std::vector<double> prior_mass = support_prior(model);

  // Columns of the transition matrices, contiguous for sampling.
  auto column = [&](const Matrix& m, int c, std::vector<double>& buf) {
    buf.resize(m.rows);
    for (int r = 0; r < m.rows; ++r) buf[r] = m(r, c);
  };

  std::vector<std::int64_t> wrong(nl, 0), count(nl, 0);

#ifdef _OPENMP
#pragma omp parallel if (exec == Exec::parallel)
#endif
  {
    std::vector<std::int64_t> local_wrong(nl, 0), local_count(nl, 0);
    std::vector<double> buf, fiber(nt), emit(ny);
    std::vector<int> ys(n), as(std::max(n - 1, 0));
    LikelihoodTable table, scratch;

#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
    for (std::int64_t trial = 0; trial < trials; ++trial) {
      CounterRng rng(seed, static_cast<std::uint64_t>(trial));

      // Sample the true initial state and its fiber slot.
      const int l_true = sample_index(rng, prior_mass.data(), nl);
      const int s1 = model.initial_support[l_true];
      for (int u = 0; u < nt; ++u)
        fiber[u] = (model.alpha[u] == s1) ? model.hmm.prior[u] : 0.0;
      int t = sample_index(rng, fiber.data(), nt);

      std::unique_ptr<PolicyRun> run = policy.start(model, n);
      for (int k = 1; k <= n; ++k) {
        int a = identity;
        if (k > 1) {
          a = run->act();
          as[k - 2] = a;
        }
        if (k > 1 || !model.initial_emission) {
          const Matrix& step_m = (k == 1) ? model.hmm.trans : mats[a];
          column(step_m, t, buf);
          t = sample_index(rng, buf.data(), nt);
        }
        int y;
        if (model.deterministic_output()) {
          y = model.rho[t];
        } else {
          for (int o = 0; o < ny; ++o) emit[o] = model.hmm.out(o, t);
          y = sample_index(rng, emit.data(), ny);
        }
        ys[k - 1] = y;
        if (k < n) run->observe(y);
      }

      // MAP inference along the realized actions.
      table = forward_init(model, ys[0]);
      for (int k = 2; k <= n; ++k) {
        forward_step_into(model, table, ys[k - 1], mats[as[k - 2]], scratch);
        std::swap(table, scratch);
      }
      const int decided = map_decision_index(table, model);
      ++local_count[l_true];
      if (decided != l_true) ++local_wrong[l_true];
    }

#ifdef _OPENMP
#pragma omp critical
#endif
    {
      for (int l = 0; l < nl; ++l) {
        wrong[l] += local_wrong[l];
        count[l] += local_count[l];
      }
    }
  }

  std::int64_t total_wrong = 0;
  for (int l = 0; l < nl; ++l) total_wrong += wrong[l];
  const double p = static_cast<double>(total_wrong) / trials;

  EvalReport report;
  report.infidelity = p;
  report.fidelity = 1.0 - p;
  report.per_initial_error.resize(nl);
  for (int l = 0; l < nl; ++l)
    report.per_initial_error[l] =
        count[l] ? static_cast<double>(wrong[l]) / count[l] : 0.0;
  report.sequences = trials;
  report.method = "monte-carlo";
  report.std_error = std::sqrt(std::max(p * (1.0 - p), 0.0) / trials);
  report.seed = seed;
  report.rng = CounterRng::kName;
  return report;
}

// ---------------------------------------------------------------------------
// Sweeps

std::string method_name(Method m) {
  switch (m) {
    case Method::histogram: return "Histogram";
    case Method::no_perms: return "NoPerms";
    case Method::min_entropy: return "MinEntropy";
    case Method::exhaustive: return "Exhaustive";
  }
  return "?";
}

namespace {

std::string format_full(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void eval_methods_on(const ExpandedHmm& binned, const ExpandedHmm* unbinned,
                     const SweepOptions& opt, const std::string& param,
                     const std::string& value, std::vector<SweepRow>& rows) {
  double np_infid = std::numeric_limits<double>::quiet_NaN();
  double ex_infid = std::numeric_limits<double>::quiet_NaN();
  for (Method m : opt.methods) {
    SweepRow row;
    row.param_name = param;
    row.value = value;
    row.method = method_name(m);
    row.n = opt.n;
    row.seed = opt.seed;
    switch (m) {
      case Method::histogram: {
        if (!unbinned)
          throw ModelError("histogram method needs an unbinned count model");
        const EvalReport r = histogram_infidelity(*unbinned, opt.n);
        row.infidelity = r.infidelity;
        row.n_b = unbinned->num_outputs();
        break;
      }
      case Method::no_perms: {
        const StaticPolicy policy = StaticPolicy::no_perms(binned.num_physical);
        const EvalReport r =
            exact_infidelity(binned, policy, opt.n, opt.caps, opt.exec);
        row.infidelity = np_infid = r.infidelity;
        row.n_b = binned.num_outputs();
        break;
      }
      case Method::min_entropy: {
        const MinEntropyPolicy policy(opt.actions, opt.lookahead, opt.caps);
        const EvalReport r =
            exact_infidelity(binned, policy, opt.n, opt.caps, opt.exec);
        row.infidelity = r.infidelity;
        row.n_b = binned.num_outputs();
        break;
      }
      case Method::exhaustive: {
        const SolveResult s =
            solve_optimal(binned, opt.actions, opt.n, opt.caps, opt.exec);
        row.infidelity = ex_infid = 1.0 - s.fidelity;
        row.n_b = binned.num_outputs();
        break;
      }
    }
    rows.push_back(std::move(row));
  }
  if (!std::isnan(np_infid) && !std::isnan(ex_infid) && ex_infid > 0.0) {
    SweepRow row;
    row.param_name = param;
    row.value = value;
    row.method = "Log10Ratio";
    row.n = opt.n;
    row.n_b = binned.num_outputs();
    row.infidelity = std::log10(np_infid / ex_infid);
    row.seed = opt.seed;
    rows.push_back(std::move(row));
  }
}

}  // namespace

std::vector<SweepRow> sweep_dt(const RateModel& base,
                               const std::vector<double>& dts_seconds,
                               const SweepOptions& options,
                               const DtPointSink& sink) {
  if (dts_seconds.empty()) throw ModelError("collection-time grid is empty");
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < dts_seconds.size(); ++i) {
    RateModel point = base;
    point.dt = dts_seconds[i];
    const ExpandedHmm unbinned = build_fluorescence_model(point);

    ExpandedHmm binned = unbinned;
    Partition partition = Partition::singletons(unbinned.num_outputs());
    if (options.n_b > 0 && options.n_b < unbinned.num_outputs()) {
      const StaticPolicy no_perms =
          StaticPolicy::no_perms(unbinned.num_physical);
      const BinningResult search =
          optimize_binning(unbinned, options.n_b, options.n, no_perms,
                           options.caps, options.exec);
      partition = search.best;
      binned = bin_model(unbinned, partition);
    }
    if (sink) sink(static_cast<int>(i), point.dt, unbinned, binned, partition);

    SweepOptions local = options;
    local.n_b = binned.num_outputs();
    eval_methods_on(binned, &unbinned, local, "dt_us",
                    format_full(point.dt * 1e6), rows);
  }
  return rows;
}

std::vector<SweepRow> sweep_ab(
    const std::vector<std::pair<double, double>>& points,
    const SweepOptions& options) {
  if (points.empty()) throw ModelError("parameter grid is empty");
  std::vector<SweepRow> rows;
  for (const auto& [a, b] : points) {
    const ExpandedHmm model = trivially_expanded(three_state_model(a, b));
    SweepOptions local = options;
    local.n_b = model.num_outputs();
    const std::string value =
        (a == b) ? format_full(a)
                 : format_full(a) + ":" + format_full(b);
    eval_methods_on(model, nullptr, local, a == b ? "a=b" : "a:b", value,
                    rows);
  }
  return rows;
}

}  // namespace readout
