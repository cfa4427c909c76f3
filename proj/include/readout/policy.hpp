#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "readout/caps.hpp"
#include "readout/hmm.hpp"

namespace readout {

/// Permutation of the physical state space, stored as an index map.
struct Permutation {
  std::vector<int> map;  // map[s] = sigma(s)
  std::string name;

  bool is_identity() const;
  Permutation inverse() const;
  static Permutation identity(int n);
  static Permutation transposition(int n, int i, int j);
};

/// The set A of allowed permutation actions. Must contain the identity.
/// Action indices are stable and used for tie-breaking: ties always resolve
/// to the lowest index.
struct ActionSet {
  std::vector<Permutation> actions;

  int size() const { return static_cast<int>(actions.size()); }
  int num_states() const;
  int identity_index() const;

  static ActionSet identity_only(int num_states);
  /// Identity followed by all transpositions in lexicographic order.
  static ActionSet transpositions(int num_states);
  /// Transposition set extended with all 3-cycles.
  static ActionSet transpositions_and_cycles(int num_states);
};

/// Throws ModelError unless every action is a bijection on the given state
/// count and the identity is present.
ActionSet validate_actions(ActionSet set, int num_states);

/// Action induced on the expanded space: (s, o) -> (sigma(s), o).
std::vector<int> induced_expanded_map(const Permutation& sigma,
                                      const ExpandedHmm& model);

/// Per-action effective transition matrices A(t' | sigma~(t)), precomputed
/// once so enumeration loops pay nothing per node.
struct ActionMatrices {
  std::vector<Matrix> trans;
  const Matrix& operator[](int a) const { return trans[a]; }
};

ActionMatrices precompute_action_matrices(const ExpandedHmm& model,
                                          const ActionSet& actions);

enum class BeliefPhase {
  post_observation,  // beta_k: just conditioned on y_k
  post_transition    // eta_k: action applied, system transitioned
};

/// Joint posterior over (initial physical state, current expanded state)
/// given the history. Rows index the initial support, columns the expanded
/// space; entries sum to 1.
struct BeliefState {
  int num_initial = 0;
  int num_expanded = 0;
  std::vector<double> joint;
  BeliefPhase phase = BeliefPhase::post_transition;
  int step = 0;  // observations consumed so far

  double& at(int l, int t) {
    return joint[static_cast<std::size_t>(l) * num_expanded + t];
  }
  double at(int l, int t) const {
    return joint[static_cast<std::size_t>(l) * num_expanded + t];
  }
  double total() const;
  /// Marginal over the current state: posterior of the initial state.
  std::vector<double> initial_marginal() const;
};

/// Belief before any observation (eta_0): the prior coupling of initial and
/// current state, already advanced through the first measurement step for
/// product-form models so it is always ready for a Bayes update on y_1.
BeliefState initial_belief(const ExpandedHmm& model);

/// Bayes update on observing y. Throws ImpossibleObservation when the
/// observation has probability zero under the belief; enumeration callers
/// prune such branches by weight instead.
BeliefState bayes_update(const BeliefState& eta, int y,
                         const ExpandedHmm& model);

/// Applies the permutation and one transition: eta(l, t') =
/// sum_t beta(l, t) A(t' | sigma~(t)). Mass is preserved.
BeliefState transition_update(const BeliefState& beta,
                              const Permutation& action,
                              const ExpandedHmm& model);

/// Probability of a correct MAP decision from a final belief:
/// max_s1 sum_t beta(s1, t).
double leaf_value(const BeliefState& beta);

/// P(y | history) = sum_t B(y|t) sum_s1 eta(s1, t); the weights over y sum
/// to 1.
double branch_weight(const BeliefState& eta, int y, const ExpandedHmm& model);

/// Shannon entropy (nats) of the initial-state marginal, with 0 log 0 = 0.
double posterior_entropy(const BeliefState& beta);

// ---------------------------------------------------------------------------
// Policies

/// Stateful evaluator of a policy along one output trajectory. Observations
/// are fed in order; act() asks for the permutation to apply after the most
/// recent observation. Runs are clonable so sequence enumeration can branch.
class PolicyRun {
 public:
  virtual ~PolicyRun() = default;
  virtual void observe(int y) = 0;
  virtual int act() = 0;  // action index into the policy's ActionSet
  virtual std::unique_ptr<PolicyRun> clone() const = 0;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual const ActionSet& actions() const = 0;
  virtual std::unique_ptr<PolicyRun> start(const ExpandedHmm& model,
                                           int n) const = 0;
};

/// Fixed action sequence; an empty sequence is the no-permutations policy.
class StaticPolicy : public Policy {
 public:
  StaticPolicy(ActionSet set, std::vector<int> sequence, std::string name);
  static StaticPolicy no_perms(int num_states);

  std::string name() const override { return name_; }
  const ActionSet& actions() const override { return set_; }
  std::unique_ptr<PolicyRun> start(const ExpandedHmm&, int) const override;
  const std::vector<int>& sequence() const { return sequence_; }

 private:
  ActionSet set_;
  std::vector<int> sequence_;  // action index per step k = 1..; identity after
  std::string name_;
};

/// Precomputed adaptive policy: maps each reachable output prefix
/// (y_1,...,y_k) to the action taken after it. Keys are comma-joined output
/// indices, e.g. "0,3,1".
class LookupPolicy : public Policy {
 public:
  int n = 0;
  ActionSet set;
  std::map<std::string, int> table;
  double fidelity = 0.0;

  std::string name() const override { return "lookup"; }
  const ActionSet& actions() const override { return set; }
  std::unique_ptr<PolicyRun> start(const ExpandedHmm&, int) const override;

  static std::string key(const std::vector<int>& prefix);
};

// ---------------------------------------------------------------------------
// Optimal policy by exhaustive belief-tree search

struct SolveResult {
  LookupPolicy policy;
  double fidelity = 0.0;
};

/// Exhaustive depth-first solution of the finite-horizon Bellman recursion:
/// expectation over observations, maximum over actions, MAP value at the
/// leaves. Returns the optimal lookup policy and its fidelity. Work grows as
/// (|A| |Y|)^n and is checked against caps.max_nodes up front. Top-level
/// branches evaluate independently in parallel; the reduction order is fixed
/// so results do not depend on scheduling.
SolveResult solve_optimal(const ExpandedHmm& model, const ActionSet& actions,
                          int n, const RunCaps& caps = RunCaps{},
                          Exec exec = Exec::parallel);

// ---------------------------------------------------------------------------
// Minimum posterior entropy heuristic

/// Materialized tree of belief states g observations deep, reused across
/// steps of a trajectory: after committing an action and observing the next
/// output the tree is re-rooted at the matching child and every leaf is
/// extended by one layer, which is cheaper than rebuilding.
class LookaheadTree {
 public:
  LookaheadTree(const ExpandedHmm& model, const ActionSet& actions,
                BeliefState root, int depth);
  LookaheadTree(const LookaheadTree&);
  LookaheadTree& operator=(const LookaheadTree&) = delete;
  LookaheadTree(LookaheadTree&&) = default;
  LookaheadTree& operator=(LookaheadTree&&) = default;
  ~LookaheadTree();

  /// First action of the plan minimizing the expected terminal entropy over
  /// `depth` future observations; ties to the lowest action index.
  int best_action(int depth) const;
  /// Expected terminal entropy of the best plan at the given depth.
  double best_cost(int depth) const;

  /// Re-root at the child matching (action_taken, y_observed) and grow back
  /// to `depth`. Throws ImpossibleObservation if that branch was pruned as
  /// zero probability.
  void advance(int action_taken, int y_observed, int depth);

  const BeliefState& root_belief() const;
  int built_depth() const { return depth_; }

 private:
  struct Node;
  void extend(Node& node, int remaining);
  static double node_cost(const Node& node, int remaining, int na, int ny);

  const ExpandedHmm* model_;
  const ActionSet* actions_;
  std::unique_ptr<Node> root_;
  int depth_ = 0;
};

/// Single decision of the heuristic: builds a depth-g tree from the current
/// belief and returns the entropy-minimizing first action.
int min_entropy_action(const BeliefState& beta, int lookahead,
                       const ExpandedHmm& model, const ActionSet& actions,
                       const RunCaps& caps = RunCaps{});

/// The spec'd tree-reuse operation: re-root at (action_taken, y_observed)
/// and extend every leaf one layer, keeping the tree's original depth.
void advance_lookahead_tree(LookaheadTree& tree, int y_observed,
                            int action_taken);

/// Receding-horizon policy choosing each action by min_entropy_action with
/// look-ahead g (truncated near the end of the horizon).
class MinEntropyPolicy : public Policy {
 public:
  MinEntropyPolicy(ActionSet set, int lookahead,
                   const RunCaps& caps = RunCaps{});

  std::string name() const override { return "min-entropy"; }
  const ActionSet& actions() const override { return set_; }
  std::unique_ptr<PolicyRun> start(const ExpandedHmm& model,
                                   int n) const override;
  int lookahead() const { return g_; }

 private:
  ActionSet set_;
  int g_;
  RunCaps caps_;
};

}  // namespace readout
