#include <algorithm>
#include <cmath>

#include "bpr/irl.hpp"

namespace bpr {

Eigen::VectorXd policy_feature_expectation(const Mdp& mdp, const Eigen::MatrixXd& policy_probs,
                                           const Eigen::MatrixXd& phi)
{
    // Discounted visitation d solves (I - gamma P_pi^T) d = p0.
    const Eigen::VectorXd visits = solve_policy_system(mdp, policy_probs, mdp.initial_distribution, true);
    return phi.transpose() * visits;
}

ProjResult proj_fit_expectation(const Mdp& mdp, const Eigen::VectorXd& expert_expectation,
                                const BasisFunction& basis, const ProjOptions& opts)
{
    if (expert_expectation.size() != basis.dimension())
        throw ValidationError("expert feature expectation does not match the basis dimension");
    if (opts.max_iters < 0 || !(opts.epsilon >= 0.0))
        throw ValidationError("invalid PROJ options");

    const Eigen::MatrixXd phi = basis.matrix(mdp.num_states);
    const Eigen::MatrixXd uniform =
        Eigen::MatrixXd::Constant(mdp.num_states, mdp.num_actions, 1.0 / mdp.num_actions);

    ProjResult result;
    Eigen::VectorXd mu_bar = policy_feature_expectation(mdp, uniform, phi);
    Eigen::VectorXd w = expert_expectation - mu_bar;
    result.margins.push_back(w.norm());

    std::vector<ActionIndex> previous;
    for (int it = 1; it <= opts.max_iters && result.margins.back() > opts.epsilon; ++it) {
        const auto solved = mdp.with_reward({RewardLayout::PerState, phi * w});
        const auto policy = policy_iteration(solved, 1000, previous.empty() ? nullptr : &previous).policy;
        previous.clear();
        for (int s = 0; s < mdp.num_states; ++s)
            previous.push_back(policy.action(s));
        const Eigen::VectorXd mu = policy_feature_expectation(mdp, policy.probabilities(), phi);

        // Project mu_E onto the segment [mu_bar, mu].
        const Eigen::VectorXd dir = mu - mu_bar;
        const double len2 = dir.squaredNorm();
        if (len2 > 0.0) {
            const double lambda = std::clamp(dir.dot(expert_expectation - mu_bar) / len2, 0.0, 1.0);
            mu_bar += lambda * dir;
        }
        w = expert_expectation - mu_bar;
        result.margins.push_back(w.norm());
        result.iterations = it;
        if (len2 == 0.0)
            break; // the new policy adds no direction
    }
    result.converged = result.margins.back() <= opts.epsilon;
    result.weights = w;
    result.reward = {RewardLayout::PerState, phi * w};
    return result;
}

ProjResult proj_fit(const IrlProblem& problem, const BasisFunction& basis, const ProjOptions& opts)
{
    problem.validate();
    const auto expert = feature_expectation(problem.observations, basis, problem.mdp.discount);
    return proj_fit_expectation(problem.mdp.without_reward(), expert.values, basis, opts);
}

} // namespace bpr
