#include "readout/pomdp.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "readout/errors.hpp"

namespace readout {

PomdpModel to_pomdp(const ExpandedHmm& model, const ActionSet& actions, int n,
                    const RunCaps& caps) {
  if (n < 1) throw ModelError("horizon must be at least 1");
  const ActionSet set = validate_actions(actions, model.num_physical);
  const int nt = model.num_expanded();
  const int nl = model.num_initial();
  const int ny = model.num_outputs();
  const double size = static_cast<double>(nt) * nl * n;
  if (size > caps.max_nodes || size > 2e5)
    throw WorkCapExceeded("POMDP would have " + std::to_string(size) +
                          " states");

  PomdpModel p;
  p.num_chain = nt;
  p.num_initial = nl;
  p.horizon = n;
  p.num_perm_actions = set.size();

  // Push order matches state_index: k-major, then l, then t.
  for (int k = 1; k <= n; ++k)
    for (int l = 0; l < nl; ++l)
      for (int t = 0; t < nt; ++t)
        p.state_names.push_back("s" + std::to_string(t) + "_l" +
                                std::to_string(model.initial_support[l]) +
                                "_k" + std::to_string(k));

  for (const Permutation& sigma : set.actions)
    p.action_names.push_back(sigma.name.empty() ? "perm" : sigma.name);
  for (int l = 0; l < nl; ++l)
    p.action_names.push_back("decide_" +
                             std::to_string(model.initial_support[l]));
  for (int y = 0; y < ny; ++y) p.obs_names.push_back("y" + std::to_string(y));

  const int ns = p.num_states();
  const int na = p.num_actions();

  // Transitions. Permutations: the first action only elicits the first
  // observation (the chain stays put; the initial distribution is already
  // one measurement step in for product-form models). From k >= 2 the chain
  // advances under A composed with the permutation; the counter saturates
  // at n. Decisions: identity.
  p.trans.assign(na, Matrix(ns, ns));
  for (int a = 0; a < na; ++a) {
    Matrix& m = p.trans[a];
    if (a >= set.size()) {
      m = Matrix::identity(ns);
      continue;
    }
    const std::vector<int> tilde = induced_expanded_map(set.actions[a], model);
    for (int k = 1; k <= n; ++k) {
      const int k_next = std::min(k + 1, n);
      for (int l = 0; l < nl; ++l)
        for (int t = 0; t < nt; ++t) {
          const int src = p.state_index(t, l, k);
          if (k == 1 && n > 1) {
            m(p.state_index(t, l, 2), src) = 1.0;
          } else if (k == 1) {  // n == 1: elicitation self-loop
            m(src, src) = 1.0;
          } else {
            for (int t2 = 0; t2 < nt; ++t2) {
              const double v = model.hmm.trans(t2, tilde[t]);
              if (v != 0.0) m(p.state_index(t2, l, k_next), src) += v;
            }
          }
        }
    }
  }

  // Observations depend only on the destination's chain state.
  p.obs = Matrix(ny, ns);
  for (int k = 1; k <= n; ++k)
    for (int l = 0; l < nl; ++l)
      for (int t = 0; t < nt; ++t)
        for (int y = 0; y < ny; ++y)
          p.obs(y, p.state_index(t, l, k)) = model.hmm.out(y, t);

  // Reward 1 exactly for the matching decision at the final step.
  p.reward = Matrix(na, ns);
  for (int l = 0; l < nl; ++l)
    for (int t = 0; t < nt; ++t)
      p.reward(set.size() + l, p.state_index(t, l, n)) = 1.0;

  // Initial distribution: the belief that is ready to emit the first
  // observation, at step counter 1.
  const BeliefState eta0 = initial_belief(model);
  p.initial.assign(ns, 0.0);
  for (int l = 0; l < nl; ++l)
    for (int t = 0; t < nt; ++t)
      p.initial[p.state_index(t, l, 1)] = eta0.at(l, t);

  return p;
}

namespace {

std::string full_precision(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_cassandra(const PomdpModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ModelError("cannot open " + path + " for writing");

  out << "discount: 1.0\n";
  out << "values: reward\n";
  out << "states:";
  for (const auto& s : model.state_names) out << ' ' << s;
  out << "\nactions:";
  for (const auto& a : model.action_names) out << ' ' << a;
  out << "\nobservations:";
  for (const auto& o : model.obs_names) out << ' ' << o;
  out << "\nstart:";
  for (double v : model.initial) out << ' ' << full_precision(v);
  out << "\n\n";

  for (int a = 0; a < model.num_actions(); ++a)
    for (int src = 0; src < model.num_states(); ++src)
      for (int dst = 0; dst < model.num_states(); ++dst) {
        const double v = model.trans[a](dst, src);
        if (v == 0.0) continue;
        out << "T: " << model.action_names[a] << " : "
            << model.state_names[src] << " : " << model.state_names[dst]
            << ' ' << full_precision(v) << '\n';
      }
  out << '\n';
  for (int dst = 0; dst < model.num_states(); ++dst)
    for (int y = 0; y < model.num_obs(); ++y) {
      const double v = model.obs(y, dst);
      if (v == 0.0) continue;
      out << "O: * : " << model.state_names[dst] << " : "
          << model.obs_names[y] << ' ' << full_precision(v) << '\n';
    }
  out << '\n';
  for (int a = 0; a < model.num_actions(); ++a)
    for (int src = 0; src < model.num_states(); ++src) {
      const double v = model.reward(a, src);
      if (v == 0.0) continue;
      out << "R: " << model.action_names[a] << " : "
          << model.state_names[src] << " : * : * " << full_precision(v)
          << '\n';
    }
  if (!out) throw ModelError("failed writing " + path);
}

namespace {

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream is(line);
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

int name_index(const std::vector<std::string>& names, const std::string& n) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == n) return static_cast<int>(i);
  throw ModelError("unknown name in .pomdp file: " + n);
}

}  // namespace

PomdpModel read_cassandra(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open " + path);

  PomdpModel model;
  std::string line;
  std::vector<std::string> pending;  // T/O/R lines parsed after headers

  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> toks = split_tokens(line);
    if (toks.empty()) continue;
    const std::string& head = toks[0];
    if (head == "discount:" || head == "values:") continue;
    if (head == "states:") {
      model.state_names.assign(toks.begin() + 1, toks.end());
    } else if (head == "actions:") {
      model.action_names.assign(toks.begin() + 1, toks.end());
    } else if (head == "observations:") {
      model.obs_names.assign(toks.begin() + 1, toks.end());
    } else if (head == "start:") {
      model.initial.clear();
      for (std::size_t i = 1; i < toks.size(); ++i)
        model.initial.push_back(std::stod(toks[i]));
    } else {
      pending.push_back(line);
    }
  }
  if (model.state_names.empty() || model.action_names.empty() ||
      model.obs_names.empty())
    throw ModelError("incomplete .pomdp header in " + path);

  // Recover the index layout from the generated state names s<t>_l<s1>_k<k>.
  int max_t = -1, max_k = 0;
  for (const auto& name : model.state_names) {
    int t = -1, l = -1, k = -1;
    if (std::sscanf(name.c_str(), "s%d_l%d_k%d", &t, &l, &k) != 3)
      throw ModelError("state name " + name + " is not in s*_l*_k* form");
    max_t = std::max(max_t, t);
    max_k = std::max(max_k, k);
  }
  model.num_chain = max_t + 1;
  model.horizon = max_k;
  model.num_initial =
      static_cast<int>(model.state_names.size()) / (model.num_chain * max_k);
  model.num_perm_actions = 0;
  for (const auto& name : model.action_names)
    if (name.rfind("decide_", 0) != 0) ++model.num_perm_actions;

  const int ns = model.num_states();
  if (ns != static_cast<int>(model.state_names.size()))
    throw ModelError("state count does not factor as |T|*|L|*n");

  model.trans.assign(model.num_actions(), Matrix(ns, ns));
  model.obs = Matrix(model.num_obs(), ns);
  model.reward = Matrix(model.num_actions(), ns);

  for (const std::string& entry : pending) {
    std::vector<std::string> toks = split_tokens(entry);
    if (toks[0] == "T:") {
      // T: <action> : <src> : <dst> <prob>
      if (toks.size() != 7) throw ModelError("bad T line: " + entry);
      const int a = name_index(model.action_names, toks[1]);
      const int src = name_index(model.state_names, toks[3]);
      const int dst = name_index(model.state_names, toks[5]);
      model.trans[a](dst, src) = std::stod(toks[6]);
    } else if (toks[0] == "O:") {
      // O: <action or *> : <dst> : <obs> <prob>
      if (toks.size() != 7) throw ModelError("bad O line: " + entry);
      const int dst = name_index(model.state_names, toks[3]);
      const int y = name_index(model.obs_names, toks[5]);
      const double v = std::stod(toks[6]);
      model.obs(y, dst) = v;
    } else if (toks[0] == "R:") {
      // R: <action> : <src> : * : * <value>
      if (toks.size() != 9) throw ModelError("bad R line: " + entry);
      const int a = name_index(model.action_names, toks[1]);
      const int src = name_index(model.state_names, toks[3]);
      model.reward(a, src) = std::stod(toks[8]);
    } else {
      throw ModelError("unrecognized line in .pomdp file: " + entry);
    }
  }
  return model;
}

namespace {

double pomdp_eval_rec(const PomdpModel& model, const LookupPolicy& policy,
                      const std::vector<double>& dist, std::vector<int>& prefix,
                      int k) {
  const int ns = model.num_states();
  const int ny = model.num_obs();
  // Choose the action: the first elicitation uses the identity permutation,
  // later steps ask the lookup table, and after the last observation the
  // reward-maximizing decision is taken.
  if (k == model.horizon) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = model.num_perm_actions; a < model.num_actions(); ++a) {
      double r = 0.0;
      for (int s = 0; s < ns; ++s) r += dist[s] * model.reward(a, s);
      if (r > best) best = r;
    }
    return best;
  }
  int action;
  if (k == 0) {
    action = policy.set.identity_index();
  } else {
    auto it = policy.table.find(LookupPolicy::key(prefix));
    if (it == policy.table.end())
      throw ModelError("lookup policy has no entry for prefix \"" +
                       LookupPolicy::key(prefix) + "\"");
    action = it->second;
  }
  if (action < 0 || action >= model.num_perm_actions)
    throw ModelError("policy action index does not name a permutation");

  std::vector<double> after(ns, 0.0);
  const Matrix& tm = model.trans[action];
  for (int src = 0; src < ns; ++src) {
    const double v = dist[src];
    if (v == 0.0) continue;
    for (int dst = 0; dst < ns; ++dst) {
      const double p = tm(dst, src);
      if (p != 0.0) after[dst] += v * p;
    }
  }

  double total = 0.0;
  std::vector<double> branch(ns);
  for (int y = 0; y < ny; ++y) {
    double mass = 0.0;
    for (int s = 0; s < ns; ++s) {
      branch[s] = after[s] * model.obs(y, s);
      mass += branch[s];
    }
    if (mass <= 0.0) continue;
    prefix.push_back(y);
    total += pomdp_eval_rec(model, policy, branch, prefix, k + 1);
    prefix.pop_back();
  }
  return total;
}

}  // namespace

double evaluate_policy_on_pomdp(const PomdpModel& model,
                                const LookupPolicy& policy,
                                const RunCaps& caps) {
  if (policy.n != model.horizon)
    throw ModelError("policy horizon " + std::to_string(policy.n) +
                     " does not match POMDP horizon " +
                     std::to_string(model.horizon));
  if (policy.set.size() != model.num_perm_actions)
    throw ModelError("policy action set does not match the POMDP actions");
  const double work =
      std::pow(static_cast<double>(model.num_obs()), model.horizon);
  if (work > caps.max_sequences)
    throw WorkCapExceeded("POMDP evaluation needs " + std::to_string(work) +
                          " observation sequences");
  std::vector<int> prefix;
  return pomdp_eval_rec(model, policy, model.initial, prefix, 0);
}

}  // namespace readout
