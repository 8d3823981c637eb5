#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "bpr/random.hpp"

namespace bpr {

using StateIndex = int;
using ActionIndex = int;

enum class RewardLayout {
    PerState,       // length |S|
    PerStateAction, // length |S|*|A|, action-major blocks: index = a*|S| + s
};

struct Reward {
    RewardLayout layout = RewardLayout::PerState;
    Eigen::VectorXd values;

    /// R(s,a) under either layout.
    double at(StateIndex s, ActionIndex a, int num_states) const
    {
        return layout == RewardLayout::PerState ? values[s] : values[a * num_states + s];
    }
};

/**
 * Finite discounted MDP. Transition matrices are dense and row-stochastic,
 * one |S|x|S| matrix per action. The reward is optional so that the same
 * type can describe the reward-free model handed to an IRL learner.
 */
struct Mdp {
    int num_states = 0;
    int num_actions = 0;
    std::vector<Eigen::MatrixXd> transitions;
    double discount = 0.95;
    std::optional<Reward> reward;
    Eigen::VectorXd initial_distribution;

    /// Throws ValidationError if any structural invariant is violated.
    void validate() const;

    Mdp with_reward(Reward r) const;
    Mdp without_reward() const;
};

struct ValueFunction {
    Eigen::VectorXd values;
};

struct QFunction {
    Eigen::MatrixXd q; // |S| x |A|
};

class Policy {
public:
    static Policy deterministic(std::vector<ActionIndex> actions, int num_actions);
    static Policy stochastic(Eigen::MatrixXd probabilities);

    bool is_deterministic() const { return deterministic_; }
    int num_states() const { return static_cast<int>(probs_.rows()); }
    int num_actions() const { return static_cast<int>(probs_.cols()); }

    /// Only valid for deterministic policies.
    ActionIndex action(StateIndex s) const { return actions_.at(static_cast<std::size_t>(s)); }
    /// |S| x |A| row-stochastic matrix; deterministic policies are one-hot.
    const Eigen::MatrixXd& probabilities() const { return probs_; }

    ActionIndex sample(StateIndex s, Rng& rng) const;

private:
    bool deterministic_ = true;
    std::vector<ActionIndex> actions_;
    Eigen::MatrixXd probs_;
};

struct Step {
    StateIndex state = 0;
    ActionIndex action = 0;
    bool operator==(const Step&) const = default;
};

struct Trajectory {
    std::vector<Step> steps;
    bool operator==(const Trajectory&) const = default;
};

struct ValueIterationResult {
    ValueFunction value;
    int iterations = 0;
    bool converged = false;
};

/// Optimal Bellman backups from V = 0 (or `initial` when given). Stops when
/// successive iterates differ by at most tolerance*(1-gamma)/gamma in sup-norm.
ValueIterationResult value_iteration(const Mdp& mdp, double tolerance, int max_iters,
                                     const Eigen::VectorXd* initial = nullptr);

struct PolicyIterationResult {
    Policy policy;
    ValueFunction value;
    int iterations = 0;
    bool converged = false;
};

/// Howard policy iteration with exact evaluation, starting from `initial`
/// (action 0 everywhere when null). An action only replaces the incumbent when it improves Q by
/// more than a relative 1e-12; the returned policy is the lowest-index
/// greedy policy of the final values.
PolicyIterationResult policy_iteration(const Mdp& mdp, int max_iters = 1000,
                                       const std::vector<ActionIndex>* initial = nullptr);

/// One optimal Bellman backup T V.
Eigen::VectorXd bellman_backup(const Mdp& mdp, const Eigen::VectorXd& v);

QFunction q_from_values(const Mdp& mdp, const ValueFunction& v);

/// Argmax per row, ties to the lowest action index.
Policy greedy_policy(const QFunction& q);

/// Softmax of Q(s,.)/temperature with max subtraction.
Eigen::VectorXd boltzmann_probs(const QFunction& q, StateIndex state, double temperature = 1.0);

/// Exact V^pi for a (possibly stochastic) policy: solves (I - gamma P_pi) V = R_pi.
ValueFunction evaluate_policy(const Mdp& mdp, const Policy& policy);

/// Solves (I - gamma P_pi) x = rhs, or (I - gamma P_pi)^T x = rhs when
/// `transpose` is set. Sparse kernels use a sparse factorization.
Eigen::VectorXd solve_policy_system(const Mdp& mdp, const Eigen::MatrixXd& policy_probs, const Eigen::VectorXd& rhs,
                                    bool transpose = false);

/// P_pi(s, s') = sum_a pi(a|s) P_a(s, s').
Eigen::MatrixXd policy_transition_matrix(const Mdp& mdp, const Eigen::MatrixXd& policy_probs);

/// States with all actions self-looping with probability one.
bool is_absorbing(const Mdp& mdp, StateIndex s);

/// Samples up to `length` steps; stops early after an action that enters an
/// absorbing state (the terminal state itself is never recorded).
Trajectory sample_trajectory(const Mdp& mdp, const Policy& policy, StateIndex start, int length,
                             Rng& rng);

/// Draws an index from a probability vector.
int sample_index(const Eigen::VectorXd& probs, Rng& rng);

// JSON document: {num_states, num_actions, gamma, transitions[a][s][s'],
// reward (optional): {layout: "per_state"|"per_state_action", values: [...]},
// initial_distribution}.
nlohmann::json mdp_to_json(const Mdp& mdp);
Mdp mdp_from_json(const nlohmann::json& doc);

} // namespace bpr
