#include "readout/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "readout/errors.hpp"

namespace readout {

// ---------------------------------------------------------------------------
// Permutations and action sets

bool Permutation::is_identity() const {
  for (std::size_t s = 0; s < map.size(); ++s)
    if (map[s] != static_cast<int>(s)) return false;
  return true;
}

Permutation Permutation::inverse() const {
  Permutation inv;
  inv.map.resize(map.size());
  for (std::size_t s = 0; s < map.size(); ++s) inv.map[map[s]] = static_cast<int>(s);
  inv.name = name.empty() ? "" : name + "_inv";
  return inv;
}

Permutation Permutation::identity(int n) {
  Permutation p;
  p.map.resize(n);
  for (int s = 0; s < n; ++s) p.map[s] = s;
  p.name = "identity";
  return p;
}

Permutation Permutation::transposition(int n, int i, int j) {
  Permutation p = identity(n);
  std::swap(p.map[i], p.map[j]);
  p.name = "swap_" + std::to_string(i) + "_" + std::to_string(j);
  return p;
}

int ActionSet::num_states() const {
  return actions.empty() ? 0 : static_cast<int>(actions.front().map.size());
}

int ActionSet::identity_index() const {
  for (int a = 0; a < size(); ++a)
    if (actions[a].is_identity()) return a;
  return -1;
}

ActionSet ActionSet::identity_only(int num_states) {
  ActionSet set;
  set.actions.push_back(Permutation::identity(num_states));
  return set;
}

ActionSet ActionSet::transpositions(int num_states) {
  ActionSet set = identity_only(num_states);
  for (int i = 0; i < num_states; ++i)
    for (int j = i + 1; j < num_states; ++j)
      set.actions.push_back(Permutation::transposition(num_states, i, j));
  return set;
}

ActionSet ActionSet::transpositions_and_cycles(int num_states) {
  ActionSet set = transpositions(num_states);
  for (int i = 0; i < num_states; ++i)
    for (int j = i + 1; j < num_states; ++j)
      for (int k = j + 1; k < num_states; ++k) {
        for (auto [x, y, z] : {std::array<int, 3>{i, j, k},
                               std::array<int, 3>{i, k, j}}) {
          Permutation p = Permutation::identity(num_states);
          p.map[x] = y;
          p.map[y] = z;
          p.map[z] = x;
          p.name = "cycle_" + std::to_string(x) + "_" + std::to_string(y) +
                   "_" + std::to_string(z);
          set.actions.push_back(std::move(p));
        }
      }
  return set;
}

ActionSet validate_actions(ActionSet set, int num_states) {
  if (set.actions.empty()) throw ModelError("action set is empty");
  for (const Permutation& p : set.actions) {
    if (static_cast<int>(p.map.size()) != num_states)
      throw ModelError("permutation acts on the wrong number of states");
    std::vector<char> seen(num_states, 0);
    for (int s : p.map) {
      if (s < 0 || s >= num_states || seen[s])
        throw ModelError("action is not a bijection on the state space");
      seen[s] = 1;
    }
  }
  if (set.identity_index() < 0)
    throw ModelError("action set must contain the identity");
  return set;
}

std::vector<int> induced_expanded_map(const Permutation& sigma,
                                      const ExpandedHmm& model) {
  if (static_cast<int>(sigma.map.size()) != model.num_physical)
    throw ModelError("permutation does not act on the physical state space");
  const int nt = model.num_expanded();
  std::vector<int> tilde(nt, -1);
  if (!model.deterministic_output()) {
    // alpha is a bijection for plain-output models.
    std::vector<int> state_of(model.num_physical, -1);
    for (int t = 0; t < nt; ++t) state_of[model.alpha[t]] = t;
    for (int t = 0; t < nt; ++t) tilde[t] = state_of[sigma.map[model.alpha[t]]];
    return tilde;
  }
  // Product form: (s, o) -> (sigma(s), o).
  std::vector<int> index(static_cast<std::size_t>(model.num_physical) *
                             model.num_outputs(),
                         -1);
  for (int t = 0; t < nt; ++t)
    index[static_cast<std::size_t>(model.alpha[t]) * model.num_outputs() +
          model.rho[t]] = t;
  for (int t = 0; t < nt; ++t)
    tilde[t] = index[static_cast<std::size_t>(sigma.map[model.alpha[t]]) *
                         model.num_outputs() +
                     model.rho[t]];
  return tilde;
}

ActionMatrices precompute_action_matrices(const ExpandedHmm& model,
                                          const ActionSet& actions) {
  ActionMatrices out;
  const int nt = model.num_expanded();
  for (const Permutation& sigma : actions.actions) {
    const std::vector<int> tilde = induced_expanded_map(sigma, model);
    Matrix m(nt, nt);
    for (int t = 0; t < nt; ++t)
      for (int t2 = 0; t2 < nt; ++t2) m(t2, t) = model.hmm.trans(t2, tilde[t]);
    out.trans.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Belief states

double BeliefState::total() const {
  double s = 0.0;
  for (double v : joint) s += v;
  return s;
}

std::vector<double> BeliefState::initial_marginal() const {
  std::vector<double> m(num_initial, 0.0);
  for (int l = 0; l < num_initial; ++l)
    for (int t = 0; t < num_expanded; ++t) m[l] += at(l, t);
  return m;
}

BeliefState initial_belief(const ExpandedHmm& model) {
  BeliefState eta;
  eta.num_initial = model.num_initial();
  eta.num_expanded = model.num_expanded();
  eta.joint.assign(
      static_cast<std::size_t>(eta.num_initial) * eta.num_expanded, 0.0);
  eta.phase = BeliefPhase::post_transition;
  eta.step = 0;
  for (int l = 0; l < eta.num_initial; ++l) {
    const int s1 = model.initial_support[l];
    for (int t = 0; t < eta.num_expanded; ++t)
      if (model.alpha[t] == s1) eta.at(l, t) = model.hmm.prior[t];
  }
  if (model.initial_emission) return eta;
  // Product form: advance through the first measurement step so the belief
  // is ready for the first observation.
  BeliefState ready = eta;
  std::fill(ready.joint.begin(), ready.joint.end(), 0.0);
  for (int l = 0; l < eta.num_initial; ++l)
    for (int t = 0; t < eta.num_expanded; ++t) {
      const double v = eta.at(l, t);
      if (v == 0.0) continue;
      for (int t2 = 0; t2 < eta.num_expanded; ++t2)
        ready.at(l, t2) += v * model.hmm.trans(t2, t);
    }
  return ready;
}

BeliefState bayes_update(const BeliefState& eta, int y,
                         const ExpandedHmm& model) {
  if (eta.phase != BeliefPhase::post_transition)
    throw ModelError("Bayes update expects a post-transition belief");
  if (y < 0 || y >= model.num_outputs())
    throw ModelError("output " + std::to_string(y) + " out of range");
  BeliefState beta = eta;
  double denom = 0.0;
  for (int l = 0; l < beta.num_initial; ++l)
    for (int t = 0; t < beta.num_expanded; ++t) {
      beta.at(l, t) *= model.hmm.out(y, t);
      denom += beta.at(l, t);
    }
  if (denom <= 0.0)
    throw ImpossibleObservation("observation " + std::to_string(y) +
                                " has zero probability under the belief");
  for (double& v : beta.joint) v /= denom;
  beta.phase = BeliefPhase::post_observation;
  beta.step = eta.step + 1;
  return beta;
}

BeliefState transition_update(const BeliefState& beta,
                              const Permutation& action,
                              const ExpandedHmm& model) {
  if (beta.phase != BeliefPhase::post_observation)
    throw ModelError("transition update expects a post-observation belief");
  const std::vector<int> tilde = induced_expanded_map(action, model);
  BeliefState eta;
  eta.num_initial = beta.num_initial;
  eta.num_expanded = beta.num_expanded;
  eta.joint.assign(beta.joint.size(), 0.0);
  eta.phase = BeliefPhase::post_transition;
  eta.step = beta.step;
  for (int l = 0; l < beta.num_initial; ++l)
    for (int t = 0; t < beta.num_expanded; ++t) {
      const double v = beta.at(l, t);
      if (v == 0.0) continue;
      const int src = tilde[t];
      for (int t2 = 0; t2 < beta.num_expanded; ++t2)
        eta.at(l, t2) += v * model.hmm.trans(t2, src);
    }
  return eta;
}

double leaf_value(const BeliefState& beta) {
  double best = 0.0;
  for (int l = 0; l < beta.num_initial; ++l) {
    double s = 0.0;
    for (int t = 0; t < beta.num_expanded; ++t) s += beta.at(l, t);
    best = std::max(best, s);
  }
  return best;
}

double branch_weight(const BeliefState& eta, int y, const ExpandedHmm& model) {
  double w = 0.0;
  for (int t = 0; t < eta.num_expanded; ++t) {
    const double b = model.hmm.out(y, t);
    if (b == 0.0) continue;
    double col = 0.0;
    for (int l = 0; l < eta.num_initial; ++l) col += eta.at(l, t);
    w += b * col;
  }
  return w;
}

double posterior_entropy(const BeliefState& beta) {
  double h = 0.0;
  for (double p : beta.initial_marginal())
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

// ---------------------------------------------------------------------------
// Static and lookup policies

namespace {

class StaticRun : public PolicyRun {
 public:
  StaticRun(const std::vector<int>* seq, int identity)
      : seq_(seq), identity_(identity) {}
  void observe(int) override { ++k_; }
  int act() override {
    if (k_ - 1 < static_cast<int>(seq_->size())) return (*seq_)[k_ - 1];
    return identity_;
  }
  std::unique_ptr<PolicyRun> clone() const override {
    return std::make_unique<StaticRun>(*this);
  }

 private:
  const std::vector<int>* seq_;
  int identity_;
  int k_ = 0;
};

class LookupRun : public PolicyRun {
 public:
  explicit LookupRun(const std::map<std::string, int>* table)
      : table_(table) {}
  void observe(int y) override { prefix_.push_back(y); }
  int act() override {
    const std::string key = LookupPolicy::key(prefix_);
    auto it = table_->find(key);
    if (it == table_->end())
      throw ModelError("lookup policy has no entry for prefix \"" + key +
                       "\"");
    return it->second;
  }
  std::unique_ptr<PolicyRun> clone() const override {
    return std::make_unique<LookupRun>(*this);
  }

 private:
  const std::map<std::string, int>* table_;
  std::vector<int> prefix_;
};

}  // namespace

StaticPolicy::StaticPolicy(ActionSet set, std::vector<int> sequence,
                           std::string name)
    : set_(std::move(set)), sequence_(std::move(sequence)),
      name_(std::move(name)) {
  for (int a : sequence_)
    if (a < 0 || a >= set_.size())
      throw ModelError("static policy references an action outside its set");
  if (set_.identity_index() < 0)
    throw ModelError("action set must contain the identity");
}

StaticPolicy StaticPolicy::no_perms(int num_states) {
  return StaticPolicy(ActionSet::identity_only(num_states), {}, "no-perms");
}

std::unique_ptr<PolicyRun> StaticPolicy::start(const ExpandedHmm&, int) const {
  return std::make_unique<StaticRun>(&sequence_, set_.identity_index());
}

std::unique_ptr<PolicyRun> LookupPolicy::start(const ExpandedHmm&, int) const {
  return std::make_unique<LookupRun>(&table);
}

std::string LookupPolicy::key(const std::vector<int>& prefix) {
  std::ostringstream os;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (i) os << ',';
    os << prefix[i];
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Exhaustive Bellman search
//
// The recursion carries the prior-weighted joint P(s1, t, y^k) instead of a
// normalized belief: expectations become plain sums, the leaf value is the
// mass of the best initial state, and the root value is the fidelity.

namespace {

struct SolveCtx {
  const ExpandedHmm* model;
  const ActionMatrices* mats;
  int n = 0;
  int ny = 0;
  int na = 0;
  int nl = 0;
  int nt = 0;
  // one scratch joint per recursion level
  std::vector<std::vector<double>> beta_buf;
  std::vector<std::vector<double>> eta_buf;
};

double mask_joint(const SolveCtx& ctx, const std::vector<double>& eta, int y,
                  std::vector<double>& beta) {
  const Matrix& out = ctx.model->hmm.out;
  double mass = 0.0;
  for (int l = 0; l < ctx.nl; ++l)
    for (int t = 0; t < ctx.nt; ++t) {
      const double v = eta[l * ctx.nt + t] * out(y, t);
      beta[l * ctx.nt + t] = v;
      mass += v;
    }
  return mass;
}

void advance_joint(const SolveCtx& ctx, const std::vector<double>& beta, int a,
                   std::vector<double>& eta) {
  const Matrix& m = (*ctx.mats)[a];
  std::fill(eta.begin(), eta.end(), 0.0);
  for (int l = 0; l < ctx.nl; ++l)
    for (int t = 0; t < ctx.nt; ++t) {
      const double v = beta[l * ctx.nt + t];
      if (v == 0.0) continue;
      for (int t2 = 0; t2 < ctx.nt; ++t2)
        eta[l * ctx.nt + t2] += v * m(t2, t);
    }
}

double leaf_correct_mass(const SolveCtx& ctx, const std::vector<double>& beta) {
  double best = 0.0;
  for (int l = 0; l < ctx.nl; ++l) {
    double s = 0.0;
    for (int t = 0; t < ctx.nt; ++t) s += beta[l * ctx.nt + t];
    best = std::max(best, s);
  }
  return best;
}

/// Value of the subtree below a ready-to-observe joint at observation k.
/// Lookup entries for the chosen actions in this subtree land in `table`.
double solve_rec(SolveCtx& ctx, const std::vector<double>& eta, int k,
                 std::vector<int>& prefix, std::map<std::string, int>& table) {
  double total = 0.0;
  std::vector<double>& beta = ctx.beta_buf[k];
  for (int y = 0; y < ctx.ny; ++y) {
    const double mass = mask_joint(ctx, eta, y, beta);
    if (mass <= 0.0) continue;  // impossible branch: prune by weight
    if (k == ctx.n) {
      total += leaf_correct_mass(ctx, beta);
      continue;
    }
    int best_a = -1;
    double best_v = -std::numeric_limits<double>::infinity();
    std::map<std::string, int> best_sub;
    prefix.push_back(y);
    for (int a = 0; a < ctx.na; ++a) {
      advance_joint(ctx, beta, a, ctx.eta_buf[k + 1]);
      std::map<std::string, int> sub;
      const double v = solve_rec(ctx, ctx.eta_buf[k + 1], k + 1, prefix, sub);
      if (v > best_v) {
        best_v = v;
        best_a = a;
        best_sub = std::move(sub);
      }
    }
    table[LookupPolicy::key(prefix)] = best_a;
    table.merge(best_sub);
    prefix.pop_back();
    total += best_v;
  }
  return total;
}

std::vector<double> root_joint(const ExpandedHmm& model) {
  const BeliefState eta0 = initial_belief(model);
  return eta0.joint;
}

}  // namespace

SolveResult solve_optimal(const ExpandedHmm& model, const ActionSet& actions,
                          int n, const RunCaps& caps, Exec exec) {
  const ActionSet set = validate_actions(actions, model.num_physical);
  if (n < 1) throw ModelError("horizon must be at least 1");
  const double work =
      std::pow(static_cast<double>(set.size()) * model.num_outputs(), n);
  if (work > caps.max_nodes)
    throw WorkCapExceeded("optimal policy search needs about " +
                          std::to_string(work) + " nodes, cap is " +
                          std::to_string(caps.max_nodes));

  const ActionMatrices mats = precompute_action_matrices(model, set);
  const int ny = model.num_outputs();
  const int na = set.size();
  const int nl = model.num_initial();
  const int nt = model.num_expanded();

  auto make_ctx = [&] {
    SolveCtx ctx;
    ctx.model = &model;
    ctx.mats = &mats;
    ctx.n = n;
    ctx.ny = ny;
    ctx.na = na;
    ctx.nl = nl;
    ctx.nt = nt;
    ctx.beta_buf.assign(n + 1, std::vector<double>(
                                   static_cast<std::size_t>(nl) * nt, 0.0));
    ctx.eta_buf.assign(n + 2, std::vector<double>(
                                  static_cast<std::size_t>(nl) * nt, 0.0));
    return ctx;
  };

  const std::vector<double> eta0 = root_joint(model);

  SolveResult result;
  result.policy.n = n;
  result.policy.set = set;

  if (n == 1) {
    SolveCtx ctx = make_ctx();
    std::vector<int> prefix;
    result.fidelity = solve_rec(ctx, eta0, 1, prefix, result.policy.table);
    result.policy.fidelity = result.fidelity;
    return result;
  }

  // Tasks: one per (y1, a1) pair; each is an independent subtree. Values and
  // tables merge in fixed index order, so serial and parallel agree exactly.
  struct Task {
    int y1, a1;
    double value = 0.0;
    std::map<std::string, int> table;
    bool pruned = false;
  };
  std::vector<Task> tasks;
  {
    SolveCtx ctx = make_ctx();
    for (int y = 0; y < ny; ++y) {
      const double mass = mask_joint(ctx, eta0, y, ctx.beta_buf[1]);
      for (int a = 0; a < na; ++a)
        tasks.push_back(Task{y, a, 0.0, {}, mass <= 0.0});
    }
  }

  const int num_tasks = static_cast<int>(tasks.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) if (exec == Exec::parallel)
#endif
  for (int i = 0; i < num_tasks; ++i) {
    Task& task = tasks[i];
    if (task.pruned) continue;
    SolveCtx ctx = make_ctx();
    const double mass = mask_joint(ctx, eta0, task.y1, ctx.beta_buf[1]);
    (void)mass;
    advance_joint(ctx, ctx.beta_buf[1], task.a1, ctx.eta_buf[2]);
    std::vector<int> prefix{task.y1};
    task.value = solve_rec(ctx, ctx.eta_buf[2], 2, prefix, task.table);
  }

  double fidelity = 0.0;
  for (int y = 0; y < ny; ++y) {
    int best_a = -1;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < na; ++a) {
      Task& task = tasks[static_cast<std::size_t>(y) * na + a];
      if (task.pruned) continue;
      if (task.value > best_v) {
        best_v = task.value;
        best_a = a;
      }
    }
    if (best_a < 0) continue;  // first observation y is impossible
    result.policy.table[LookupPolicy::key({y})] = best_a;
    result.policy.table.merge(
        tasks[static_cast<std::size_t>(y) * na + best_a].table);
    fidelity += best_v;
  }
  result.fidelity = fidelity;
  result.policy.fidelity = fidelity;
  return result;
}

// ---------------------------------------------------------------------------
// Lookahead tree and the min-entropy heuristic

struct LookaheadTree::Node {
  BeliefState belief;  // post-observation
  bool expanded = false;
  std::vector<double> weights;              // [a * ny + y]
  std::vector<std::unique_ptr<Node>> kids;  // [a * ny + y]; null if pruned

  std::unique_ptr<Node> deep_copy() const {
    auto copy = std::make_unique<Node>();
    copy->belief = belief;
    copy->expanded = expanded;
    copy->weights = weights;
    copy->kids.resize(kids.size());
    for (std::size_t i = 0; i < kids.size(); ++i)
      if (kids[i]) copy->kids[i] = kids[i]->deep_copy();
    return copy;
  }
};

LookaheadTree::LookaheadTree(const ExpandedHmm& model, const ActionSet& actions,
                             BeliefState root, int depth)
    : model_(&model), actions_(&actions), depth_(depth) {
  if (root.phase != BeliefPhase::post_observation)
    throw ModelError("lookahead tree roots at a post-observation belief");
  root_ = std::make_unique<Node>();
  root_->belief = std::move(root);
  extend(*root_, depth_);
}

LookaheadTree::LookaheadTree(const LookaheadTree& other)
    : model_(other.model_), actions_(other.actions_),
      root_(other.root_ ? other.root_->deep_copy() : nullptr),
      depth_(other.depth_) {}

LookaheadTree::~LookaheadTree() = default;

void LookaheadTree::extend(Node& node, int remaining) {
  if (remaining <= 0) return;
  const int ny = model_->num_outputs();
  const int na = actions_->size();
  if (!node.expanded) {
    node.weights.assign(static_cast<std::size_t>(na) * ny, 0.0);
    node.kids.resize(static_cast<std::size_t>(na) * ny);
    for (int a = 0; a < na; ++a) {
      const BeliefState eta =
          transition_update(node.belief, actions_->actions[a], *model_);
      for (int y = 0; y < ny; ++y) {
        const double w = branch_weight(eta, y, *model_);
        node.weights[static_cast<std::size_t>(a) * ny + y] = w;
        if (w > 0.0)
          node.kids[static_cast<std::size_t>(a) * ny + y] =
              std::make_unique<Node>(Node{bayes_update(eta, y, *model_),
                                          false,
                                          {},
                                          {}});
      }
    }
    node.expanded = true;
  }
  for (auto& kid : node.kids)
    if (kid) extend(*kid, remaining - 1);
}

// Expected terminal entropy of the plan rooted at `node`, minimized over the
// remaining action choices.
double LookaheadTree::node_cost(const Node& node, int remaining, int na,
                                int ny) {
  if (remaining == 0 || !node.expanded) return posterior_entropy(node.belief);
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < na; ++a) {
    double c = 0.0;
    for (int y = 0; y < ny; ++y) {
      const std::size_t i = static_cast<std::size_t>(a) * ny + y;
      if (!node.kids[i]) continue;
      c += node.weights[i] * node_cost(*node.kids[i], remaining - 1, na, ny);
    }
    if (c < best) best = c;
  }
  return best;
}

int LookaheadTree::best_action(int depth) const {
  if (depth < 1) throw ModelError("lookahead depth must be at least 1");
  if (depth > depth_ || !root_->expanded)
    throw ModelError("lookahead tree was not built deep enough");
  const int ny = model_->num_outputs();
  const int na = actions_->size();
  int best_a = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < na; ++a) {
    double c = 0.0;
    for (int y = 0; y < ny; ++y) {
      const std::size_t i = static_cast<std::size_t>(a) * ny + y;
      if (!root_->kids[i]) continue;
      c += root_->weights[i] * node_cost(*root_->kids[i], depth - 1, na, ny);
    }
    if (c < best) {
      best = c;
      best_a = a;
    }
  }
  return best_a;
}

double LookaheadTree::best_cost(int depth) const {
  if (depth > depth_)
    throw ModelError("lookahead tree was not built deep enough");
  return node_cost(*root_, depth, actions_->size(), model_->num_outputs());
}

void LookaheadTree::advance(int action_taken, int y_observed, int depth) {
  const int ny = model_->num_outputs();
  if (action_taken < 0 || action_taken >= actions_->size())
    throw ModelError("action index out of range");
  if (y_observed < 0 || y_observed >= ny)
    throw ModelError("output out of range");
  if (!root_->expanded)
    throw ModelError("cannot advance an unexpanded lookahead tree");
  auto& slot =
      root_->kids[static_cast<std::size_t>(action_taken) * ny + y_observed];
  if (!slot)
    throw ImpossibleObservation(
        "observed branch was pruned as zero probability; rebuild the tree");
  root_ = std::move(slot);
  depth_ = depth;
  extend(*root_, depth_);
}

const BeliefState& LookaheadTree::root_belief() const {
  return root_->belief;
}

void advance_lookahead_tree(LookaheadTree& tree, int y_observed,
                            int action_taken) {
  tree.advance(action_taken, y_observed, tree.built_depth());
}

int min_entropy_action(const BeliefState& beta, int lookahead,
                       const ExpandedHmm& model, const ActionSet& actions,
                       const RunCaps& caps) {
  if (lookahead < 1) throw ModelError("lookahead must be at least 1");
  const ActionSet set = validate_actions(actions, model.num_physical);
  const double work = std::pow(
      static_cast<double>(set.size()) * model.num_outputs(), lookahead);
  if (work > caps.max_nodes)
    throw WorkCapExceeded("lookahead tree needs about " +
                          std::to_string(work) + " nodes");
  LookaheadTree tree(model, set, beta, lookahead);
  return tree.best_action(lookahead);
}

namespace {

class MinEntropyRun : public PolicyRun {
 public:
  MinEntropyRun(const ExpandedHmm& model, const ActionSet& set, int g, int n)
      : model_(&model), set_(&set), g_(g), n_(n),
        eta_(initial_belief(model)) {}

  MinEntropyRun(const MinEntropyRun& other) = default;

  void observe(int y) override {
    ++k_;
    const int depth = std::min(g_, n_ - k_);
    if (!tree_) {
      const BeliefState beta = bayes_update(eta_, y, *model_);
      if (depth >= 1) tree_.emplace(*model_, *set_, beta, depth);
    } else {
      tree_->advance(committed_, y, std::max(depth, 0));
    }
  }

  int act() override {
    const int depth = std::min(g_, n_ - k_);
    if (!tree_ || depth < 1)
      throw ModelError("min-entropy policy asked to act past the horizon");
    committed_ = tree_->best_action(depth);
    return committed_;
  }

  std::unique_ptr<PolicyRun> clone() const override {
    return std::make_unique<MinEntropyRun>(*this);
  }

 private:
  const ExpandedHmm* model_;
  const ActionSet* set_;
  int g_;
  int n_;
  int k_ = 0;
  int committed_ = -1;
  BeliefState eta_;
  std::optional<LookaheadTree> tree_;
};

}  // namespace

MinEntropyPolicy::MinEntropyPolicy(ActionSet set, int lookahead,
                                   const RunCaps& caps)
    : set_(std::move(set)), g_(lookahead), caps_(caps) {
  if (g_ < 1) throw ModelError("lookahead must be at least 1");
}

std::unique_ptr<PolicyRun> MinEntropyPolicy::start(const ExpandedHmm& model,
                                                   int n) const {
  validate_actions(set_, model.num_physical);
  const double work =
      std::pow(static_cast<double>(set_.size()) * model.num_outputs(), g_);
  if (work > caps_.max_nodes)
    throw WorkCapExceeded("lookahead tree needs about " +
                          std::to_string(work) + " nodes");
  return std::make_unique<MinEntropyRun>(model, set_, g_, n);
}

}  // namespace readout
