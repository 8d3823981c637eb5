#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "bpr/irl.hpp"

namespace bpr {

GpHyper GpHyper::uniform(int num_actions, double kappa, double sigma)
{
    return {Eigen::VectorXd::Constant(num_actions, kappa), Eigen::VectorXd::Constant(num_actions, sigma)};
}

void GpHyper::validate() const
{
    if (kappa.size() != sigma.size() || kappa.size() == 0)
        throw ValidationError("GP hyperparameters need one kappa and one sigma per action");
    if (!kappa.allFinite() || (kappa.array() <= 0.0).any())
        throw ValidationError("kernel scale kappa must be positive");
    if (!sigma.allFinite() || (sigma.array() < 0.0).any())
        throw ValidationError("kernel noise sigma must be nonnegative");
}

void IrlProblem::validate() const
{
    if (mdp.num_states <= 0 || mdp.num_actions <= 0)
        throw ValidationError("IRL problem needs a nonempty MDP");
    if (observations.empty())
        throw ValidationError("IRL problem needs at least one trajectory");
    for (const auto& t : observations.trajectories) {
        for (const auto& st : t.steps) {
            if (st.state < 0 || st.state >= mdp.num_states || st.action < 0 || st.action >= mdp.num_actions)
                throw ValidationError("observation indices out of range for the MDP");
        }
    }
    if (state_coordinates.size() != 0 && state_coordinates.rows() != mdp.num_states)
        throw ValidationError("state coordinates need one row per state");
}

Eigen::MatrixXd IrlProblem::coordinates() const
{
    if (state_coordinates.size() != 0)
        return state_coordinates;
    Eigen::MatrixXd c(mdp.num_states, 1);
    for (int s = 0; s < mdp.num_states; ++s)
        c(s, 0) = s;
    return c;
}

PreferenceSet build_preferences(const ObservationSet& obs, int num_actions)
{
    std::map<StateIndex, std::set<ActionIndex>> seen;
    for (const auto& t : obs.trajectories)
        for (const auto& st : t.steps)
            seen[st.state].insert(st.action);

    PreferenceSet prefs;
    for (const auto& [s, actions] : seen) {
        for (ActionIndex a : actions) {
            for (ActionIndex b = 0; b < num_actions; ++b) {
                if (!actions.contains(b))
                    prefs.strict.push_back({s, a, b});
            }
        }
        for (auto i = actions.begin(); i != actions.end(); ++i)
            for (auto j = std::next(i); j != actions.end(); ++j)
                prefs.equivalent.push_back({s, *i, *j});
    }
    return prefs;
}

Eigen::MatrixXd se_kernel_matrix(const Eigen::MatrixXd& coordinates, const GpHyper& hyper, ActionIndex action)
{
    hyper.validate();
    if (action < 0 || action >= hyper.num_actions())
        throw ValidationError("kernel action out of range");
    const double kappa = hyper.kappa[action];
    const double noise = hyper.sigma[action] * hyper.sigma[action];
    const auto n = coordinates.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index c = 0; c < n; ++c) {
        k(c, c) = 1.0 + noise;
        for (Eigen::Index d = c + 1; d < n; ++d) {
            const double dist2 = (coordinates.row(c) - coordinates.row(d)).squaredNorm();
            k(c, d) = k(d, c) = std::exp(-0.5 * kappa * dist2);
        }
    }
    return k;
}

Eigen::MatrixXd observed_policy(const ObservationSet& obs, int num_states, int num_actions)
{
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(num_states, num_actions);
    for (const auto& t : obs.trajectories)
        for (const auto& st : t.steps)
            counts(st.state, st.action) += 1.0;
    for (int s = 0; s < num_states; ++s) {
        const double n = counts.row(s).sum();
        if (n > 0.0)
            counts.row(s) /= n;
        else
            counts.row(s).setConstant(1.0 / num_actions);
    }
    return counts;
}

std::string to_string(IrlEngine engine)
{
    switch (engine) {
    case IrlEngine::MLIRL: return "MLIRL";
    case IrlEngine::GPIRL: return "GPIRL";
    case IrlEngine::PROJ: return "PROJ";
    }
    return "?";
}

IrlEngine irl_engine_from_string(const std::string& name)
{
    if (name == "MLIRL") return IrlEngine::MLIRL;
    if (name == "GPIRL") return IrlEngine::GPIRL;
    if (name == "PROJ") return IrlEngine::PROJ;
    throw ValidationError("unknown IRL engine '" + name + "'");
}

} // namespace bpr
