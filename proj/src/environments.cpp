#include "bpr/environments.hpp"

#include <array>
#include <cmath>

#include "bpr/error.hpp"

namespace bpr {

void GridWorldSpec::validate() const
{
    if (width <= 0 || height <= 0)
        throw ValidationError("grid must have positive width and height");
    if (p_intended < 0 || p_stay < 0 || p_random < 0 ||
        std::abs(p_intended + p_stay + p_random - 1.0) > 1e-12)
        throw ValidationError("movement probabilities must be nonnegative and sum to 1");
    if (!(discount > 0.0 && discount < 1.0))
        throw ValidationError("discount must lie in (0,1)");
}

Mdp build_gridworld(const GridWorldSpec& spec)
{
    spec.validate();
    using namespace gridworld;
    const int n = spec.num_states();

    // Displacement per action; Stay has none.
    constexpr std::array<std::array<int, 2>, kNumActions> delta{{{-1, 0}, {1, 0}, {0, 1}, {0, -1}, {0, 0}}};
    auto target = [&](StateIndex s, int action) {
        const auto c = spec.cell(s);
        const GridCell next{c.row + delta[action][0], c.col + delta[action][1]};
        if (next.row < 0 || next.row >= spec.height || next.col < 0 || next.col >= spec.width)
            return s;
        return spec.index(next);
    };

    Mdp mdp;
    mdp.num_states = n;
    mdp.num_actions = kNumActions;
    mdp.discount = spec.discount;
    for (int a = 0; a < kNumActions; ++a) {
        Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
        for (StateIndex s = 0; s < n; ++s) {
            p(s, target(s, a)) += spec.p_intended;
            p(s, s) += spec.p_stay;
            for (int m = 0; m < 4; ++m)
                p(s, target(s, m)) += spec.p_random / 4.0;
        }
        mdp.transitions.push_back(std::move(p));
    }
    mdp.initial_distribution = Eigen::VectorXd::Zero(n);
    mdp.initial_distribution[0] = 1.0;
    return mdp;
}

Eigen::MatrixXd gridworld_coordinates(const GridWorldSpec& spec)
{
    Eigen::MatrixXd coords(spec.num_states(), 2);
    for (StateIndex s = 0; s < spec.num_states(); ++s) {
        const auto c = spec.cell(s);
        coords(s, 0) = c.row;
        coords(s, 1) = c.col;
    }
    return coords;
}

Reward gridworld_reward(const GridWorldSpec& spec, const std::vector<Destination>& destinations,
                        double noise_std, Rng& rng)
{
    spec.validate();
    if (noise_std < 0.0)
        throw ValidationError("noise_std must be nonnegative");
    Reward r;
    r.layout = RewardLayout::PerState;
    r.values = Eigen::VectorXd::Zero(spec.num_states());
    for (const auto& d : destinations) {
        if (d.cell.row < 0 || d.cell.row >= spec.height || d.cell.col < 0 || d.cell.col >= spec.width)
            throw ValidationError("destination cell outside the grid");
        r.values[spec.index(d.cell)] += d.reward;
    }
    if (noise_std > 0.0) {
        std::normal_distribution<double> noise(0.0, noise_std);
        for (Eigen::Index s = 0; s < r.values.size(); ++s)
            r.values[s] += noise(rng);
    }
    return r;
}

void SecretarySpec::validate() const
{
    if (num_applicants < 2)
        throw ValidationError("secretary problem needs at least 2 applicants");
    if (!(discount > 0.0 && discount < 1.0))
        throw ValidationError("discount must lie in (0,1)");
}

Mdp build_secretary_mdp(const SecretarySpec& spec)
{
    spec.validate();
    using namespace secretary;
    const int x = spec.num_applicants;
    const int n = spec.num_states();
    const StateIndex term = spec.terminal();

    Eigen::MatrixXd reject = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd accept = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i <= x; ++i) {
        const StateIndex s = spec.state_of_position(i);
        for (int j = i + 1; j <= x; ++j)
            reject(s, spec.state_of_position(j)) =
                static_cast<double>(i) / (static_cast<double>(j) * static_cast<double>(j - 1));
        reject(s, term) = static_cast<double>(i) / static_cast<double>(x);
        if (spec.accept_mode == AcceptMode::Terminal)
            accept(s, term) = 1.0;
        else
            accept(s, s) = 1.0;
    }
    reject(term, term) = 1.0;
    accept(term, term) = 1.0;

    Mdp mdp;
    mdp.num_states = n;
    mdp.num_actions = kNumActions;
    mdp.discount = spec.discount;
    mdp.transitions = {std::move(reject), std::move(accept)};
    mdp.initial_distribution = Eigen::VectorXd::Zero(n);
    mdp.initial_distribution[spec.state_of_position(1)] = 1.0;
    return mdp;
}

Eigen::MatrixXd secretary_coordinates(const SecretarySpec& spec)
{
    Eigen::MatrixXd coords(spec.num_states(), 1);
    for (int i = 1; i <= spec.num_applicants; ++i)
        coords(spec.state_of_position(i), 0) = i;
    coords(spec.terminal(), 0) = -1000.0;
    return coords;
}

} // namespace bpr
