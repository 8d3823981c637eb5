#include "bpr/mdp.hpp"

#include <cmath>
#include <limits>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "bpr/error.hpp"

namespace bpr {

namespace {

constexpr double kStochasticTol = 1e-9;

void check_reward_shape(const Mdp& mdp)
{
    if (!mdp.reward)
        return;
    const auto expected = mdp.reward->layout == RewardLayout::PerState
                              ? mdp.num_states
                              : mdp.num_states * mdp.num_actions;
    if (mdp.reward->values.size() != expected)
        throw ValidationError("reward length " + std::to_string(mdp.reward->values.size()) +
                              " does not match layout (expected " + std::to_string(expected) + ")");
    if (!mdp.reward->values.allFinite())
        throw ValidationError("reward contains non-finite entries");
}

const Reward& require_reward(const Mdp& mdp)
{
    if (!mdp.reward)
        throw ConfigError("MDP has no reward");
    return *mdp.reward;
}

// Q(s,a) = R(s,a) + gamma * P_a(s,:) V
Eigen::MatrixXd q_matrix(const Mdp& mdp, const Eigen::VectorXd& v)
{
    const auto& r = require_reward(mdp);
    Eigen::MatrixXd q(mdp.num_states, mdp.num_actions);
    for (int a = 0; a < mdp.num_actions; ++a) {
        q.col(a) = mdp.discount * (mdp.transitions[a] * v);
        if (r.layout == RewardLayout::PerState)
            q.col(a) += r.values;
        else
            q.col(a) += r.values.segment(a * mdp.num_states, mdp.num_states);
    }
    return q;
}

} // namespace

void Mdp::validate() const
{
    if (num_states <= 0 || num_actions <= 0)
        throw ValidationError("MDP needs at least one state and one action");
    if (!(discount > 0.0 && discount < 1.0))
        throw ValidationError("discount must lie in (0,1)");
    if (static_cast<int>(transitions.size()) != num_actions)
        throw ValidationError("expected one transition matrix per action");
    for (int a = 0; a < num_actions; ++a) {
        const auto& p = transitions[a];
        if (p.rows() != num_states || p.cols() != num_states)
            throw ValidationError("transition matrix " + std::to_string(a) + " has wrong shape");
        if ((p.array() < 0.0).any() || !p.allFinite())
            throw ValidationError("transition matrix " + std::to_string(a) +
                                  " has negative or non-finite entries");
        for (int s = 0; s < num_states; ++s) {
            if (std::abs(p.row(s).sum() - 1.0) > kStochasticTol)
                throw ValidationError("row " + std::to_string(s) + " of P_" + std::to_string(a) +
                                      " does not sum to 1");
        }
    }
    if (initial_distribution.size() != num_states)
        throw ValidationError("initial distribution has wrong length");
    if ((initial_distribution.array() < 0.0).any() ||
        std::abs(initial_distribution.sum() - 1.0) > kStochasticTol)
        throw ValidationError("initial distribution is not a probability vector");
    check_reward_shape(*this);
}

Mdp Mdp::with_reward(Reward r) const
{
    Mdp out = *this;
    out.reward = std::move(r);
    check_reward_shape(out);
    return out;
}

Mdp Mdp::without_reward() const
{
    Mdp out = *this;
    out.reward.reset();
    return out;
}

Policy Policy::deterministic(std::vector<ActionIndex> actions, int num_actions)
{
    Policy p;
    p.deterministic_ = true;
    p.probs_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()), num_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) {
        if (actions[s] < 0 || actions[s] >= num_actions)
            throw ValidationError("policy action out of range at state " + std::to_string(s));
        p.probs_(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
    }
    p.actions_ = std::move(actions);
    return p;
}

Policy Policy::stochastic(Eigen::MatrixXd probabilities)
{
    for (Eigen::Index s = 0; s < probabilities.rows(); ++s) {
        if ((probabilities.row(s).array() < 0.0).any() ||
            std::abs(probabilities.row(s).sum() - 1.0) > kStochasticTol)
            throw ValidationError("policy row " + std::to_string(s) + " is not a distribution");
    }
    Policy p;
    p.deterministic_ = false;
    p.probs_ = std::move(probabilities);
    return p;
}

ActionIndex Policy::sample(StateIndex s, Rng& rng) const
{
    if (deterministic_)
        return actions_.at(static_cast<std::size_t>(s));
    return sample_index(probs_.row(s).transpose(), rng);
}

int sample_index(const Eigen::VectorXd& probs, Rng& rng)
{
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    double acc = 0.0;
    int last_positive = 0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0)
            continue;
        acc += probs[i];
        last_positive = static_cast<int>(i);
        if (u < acc)
            return static_cast<int>(i);
    }
    return last_positive; // rounding slack
}

Eigen::VectorXd bellman_backup(const Mdp& mdp, const Eigen::VectorXd& v)
{
    return q_matrix(mdp, v).rowwise().maxCoeff();
}

ValueIterationResult value_iteration(const Mdp& mdp, double tolerance, int max_iters,
                                     const Eigen::VectorXd* initial)
{
    require_reward(mdp);
    mdp.validate();
    if (!(tolerance > 0.0))
        throw ValidationError("tolerance must be positive");
    if (max_iters < 1)
        throw ValidationError("max_iters must be positive");

    const double threshold = tolerance * (1.0 - mdp.discount) / mdp.discount;
    ValueIterationResult result;
    Eigen::VectorXd v = initial ? *initial : Eigen::VectorXd::Zero(mdp.num_states);
    if (v.size() != mdp.num_states)
        throw ValidationError("initial value has wrong length");

    // All actions stacked into one (|A||S|) x |S| operator; sparse kernels
    // (GridWorld, secretary) are much cheaper to apply that way.
    const int ns = mdp.num_states, na = mdp.num_actions;
    Eigen::MatrixXd r(ns, na);
    for (int a = 0; a < na; ++a)
        r.col(a) = mdp.reward->layout == RewardLayout::PerState ? mdp.reward->values
                                                                : mdp.reward->values.segment(a * ns, ns);
    std::vector<Eigen::Triplet<double>> entries;
    for (int a = 0; a < na; ++a)
        for (int s = 0; s < ns; ++s)
            for (int t = 0; t < ns; ++t)
                if (mdp.transitions[a](s, t) != 0.0)
                    entries.emplace_back(a * ns + s, t, mdp.transitions[a](s, t));
    Eigen::SparseMatrix<double, Eigen::RowMajor> stacked(static_cast<Eigen::Index>(na) * ns, ns);
    stacked.setFromTriplets(entries.begin(), entries.end());

    Eigen::VectorXd lookahead(static_cast<Eigen::Index>(na) * ns);
    for (int it = 1; it <= max_iters; ++it) {
        lookahead.noalias() = stacked * v;
        Eigen::Map<const Eigen::MatrixXd> pv(lookahead.data(), ns, na);
        Eigen::VectorXd next = (r + mdp.discount * pv).rowwise().maxCoeff();
        const double delta = (next - v).cwiseAbs().maxCoeff();
        v = std::move(next);
        result.iterations = it;
        if (delta <= threshold) {
            result.converged = true;
            break;
        }
    }
    result.value.values = std::move(v);
    return result;
}

PolicyIterationResult policy_iteration(const Mdp& mdp, int max_iters, const std::vector<ActionIndex>* initial)
{
    require_reward(mdp);
    mdp.validate();
    if (max_iters < 1)
        throw ValidationError("max_iters must be positive");
    std::vector<ActionIndex> actions(static_cast<std::size_t>(mdp.num_states), 0);
    if (initial) {
        if (initial->size() != actions.size())
            throw ValidationError("initial policy has wrong length");
        actions = *initial;
    }
    PolicyIterationResult result{Policy::deterministic(actions, mdp.num_actions), {}, 0, false};
    for (int it = 1; it <= max_iters; ++it) {
        result.value = evaluate_policy(mdp, result.policy);
        const Eigen::MatrixXd q = q_matrix(mdp, result.value.values);
        const double slack = 1e-12 * std::max(1.0, q.cwiseAbs().maxCoeff());
        bool changed = false;
        for (int s = 0; s < mdp.num_states; ++s) {
            ActionIndex best = actions[static_cast<std::size_t>(s)];
            for (int a = 0; a < mdp.num_actions; ++a)
                if (q(s, a) > q(s, best) + slack)
                    best = a;
            if (best != actions[static_cast<std::size_t>(s)]) {
                actions[static_cast<std::size_t>(s)] = best;
                changed = true;
            }
        }
        result.iterations = it;
        if (!changed) {
            // Report the lowest-index maximizer, as greedy_policy would.
            result.policy = greedy_policy(QFunction{q});
            result.converged = true;
            break;
        }
        result.policy = Policy::deterministic(actions, mdp.num_actions);
    }
    return result;
}

QFunction q_from_values(const Mdp& mdp, const ValueFunction& v)
{
    if (v.values.size() != mdp.num_states)
        throw ValidationError("value function length does not match MDP");
    check_reward_shape(mdp);
    return QFunction{q_matrix(mdp, v.values)};
}

Policy greedy_policy(const QFunction& q)
{
    std::vector<ActionIndex> actions(static_cast<std::size_t>(q.q.rows()));
    for (Eigen::Index s = 0; s < q.q.rows(); ++s) {
        Eigen::Index best = 0;
        for (Eigen::Index a = 1; a < q.q.cols(); ++a) {
            if (q.q(s, a) > q.q(s, best))
                best = a;
        }
        actions[static_cast<std::size_t>(s)] = static_cast<ActionIndex>(best);
    }
    return Policy::deterministic(std::move(actions), static_cast<int>(q.q.cols()));
}

Eigen::VectorXd boltzmann_probs(const QFunction& q, StateIndex state, double temperature)
{
    if (!(temperature > 0.0))
        throw ValidationError("temperature must be positive");
    Eigen::VectorXd z = q.q.row(state).transpose() / temperature;
    z.array() -= z.maxCoeff();
    Eigen::VectorXd e = z.array().exp();
    return e / e.sum();
}

Eigen::MatrixXd policy_transition_matrix(const Mdp& mdp, const Eigen::MatrixXd& policy_probs)
{
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_states);
    for (int a = 0; a < mdp.num_actions; ++a)
        p += policy_probs.col(a).asDiagonal() * mdp.transitions[a];
    return p;
}

ValueFunction evaluate_policy(const Mdp& mdp, const Policy& policy)
{
    const auto& r = require_reward(mdp);
    const auto& pi = policy.probabilities();
    Eigen::VectorXd r_pi = Eigen::VectorXd::Zero(mdp.num_states);
    for (int a = 0; a < mdp.num_actions; ++a) {
        for (int s = 0; s < mdp.num_states; ++s)
            r_pi[s] += pi(s, a) * r.at(s, a, mdp.num_states);
    }
    return ValueFunction{solve_policy_system(mdp, pi, r_pi)};
}

Eigen::VectorXd solve_policy_system(const Mdp& mdp, const Eigen::MatrixXd& policy_probs, const Eigen::VectorXd& rhs,
                                    bool transpose)
{
    const int n = mdp.num_states;
    if (rhs.size() != n)
        throw ValidationError("right-hand side length does not match MDP");
    std::vector<Eigen::Triplet<double>> entries;
    for (int s = 0; s < n; ++s)
        entries.emplace_back(s, s, 1.0);
    for (int a = 0; a < mdp.num_actions; ++a)
        for (int s = 0; s < n; ++s) {
            const double w = policy_probs(s, a);
            if (w == 0.0)
                continue;
            for (int t = 0; t < n; ++t) {
                const double p = mdp.transitions[a](s, t);
                if (p != 0.0)
                    entries.emplace_back(transpose ? t : s, transpose ? s : t, -mdp.discount * w * p);
            }
        }
    if (entries.size() * 10 < static_cast<std::size_t>(n) * n) {
        Eigen::SparseMatrix<double> system(n, n);
        system.setFromTriplets(entries.begin(), entries.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::NaturalOrdering<int>> lu;
        lu.compute(system);
        if (lu.info() != Eigen::Success)
            throw NumericalError("policy system factorization failed");
        return lu.solve(rhs);
    }
    Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : entries)
        system(e.row(), e.col()) += e.value();
    return system.partialPivLu().solve(rhs);
}

bool is_absorbing(const Mdp& mdp, StateIndex s)
{
    for (int a = 0; a < mdp.num_actions; ++a) {
        if (mdp.transitions[a](s, s) < 1.0)
            return false;
    }
    return true;
}

Trajectory sample_trajectory(const Mdp& mdp, const Policy& policy, StateIndex start, int length,
                             Rng& rng)
{
    if (start < 0 || start >= mdp.num_states)
        throw ValidationError("start state out of range");
    if (length < 1)
        throw ValidationError("trajectory length must be at least 1");

    Trajectory traj;
    traj.steps.reserve(static_cast<std::size_t>(length));
    StateIndex s = start;
    for (int t = 0; t < length; ++t) {
        const ActionIndex a = policy.sample(s, rng);
        traj.steps.push_back({s, a});
        const StateIndex next = sample_index(mdp.transitions[a].row(s).transpose(), rng);
        if (next != s && is_absorbing(mdp, next))
            break;
        s = next;
    }
    return traj;
}

nlohmann::json mdp_to_json(const Mdp& mdp)
{
    nlohmann::json doc;
    doc["num_states"] = mdp.num_states;
    doc["num_actions"] = mdp.num_actions;
    doc["gamma"] = mdp.discount;
    auto trans = nlohmann::json::array();
    for (const auto& p : mdp.transitions) {
        auto rows = nlohmann::json::array();
        // Eigen is column-major, so rows are copied element-wise.
        for (Eigen::Index s = 0; s < p.rows(); ++s) {
            std::vector<double> row(static_cast<std::size_t>(p.cols()));
            for (Eigen::Index c = 0; c < p.cols(); ++c)
                row[static_cast<std::size_t>(c)] = p(s, c);
            rows.push_back(std::move(row));
        }
        trans.push_back(std::move(rows));
    }
    doc["transitions"] = std::move(trans);
    if (mdp.reward) {
        doc["reward"] = {
            {"layout", mdp.reward->layout == RewardLayout::PerState ? "per_state" : "per_state_action"},
            {"values", std::vector<double>(mdp.reward->values.data(),
                                           mdp.reward->values.data() + mdp.reward->values.size())}};
    }
    doc["initial_distribution"] =
        std::vector<double>(mdp.initial_distribution.data(),
                            mdp.initial_distribution.data() + mdp.initial_distribution.size());
    return doc;
}

Mdp mdp_from_json(const nlohmann::json& doc)
{
    Mdp mdp;
    try {
        mdp.num_states = doc.at("num_states").get<int>();
        mdp.num_actions = doc.at("num_actions").get<int>();
        mdp.discount = doc.at("gamma").get<double>();
        for (const auto& rows : doc.at("transitions")) {
            Eigen::MatrixXd p(mdp.num_states, mdp.num_states);
            if (static_cast<int>(rows.size()) != mdp.num_states)
                throw ValidationError("transition matrix has wrong number of rows");
            for (int s = 0; s < mdp.num_states; ++s) {
                const auto row = rows[static_cast<std::size_t>(s)].get<std::vector<double>>();
                if (static_cast<int>(row.size()) != mdp.num_states)
                    throw ValidationError("transition row has wrong length");
                for (int c = 0; c < mdp.num_states; ++c)
                    p(s, c) = row[static_cast<std::size_t>(c)];
            }
            mdp.transitions.push_back(std::move(p));
        }
        if (doc.contains("reward") && !doc["reward"].is_null()) {
            const auto& r = doc["reward"];
            Reward reward;
            const auto layout = r.at("layout").get<std::string>();
            if (layout == "per_state")
                reward.layout = RewardLayout::PerState;
            else if (layout == "per_state_action")
                reward.layout = RewardLayout::PerStateAction;
            else
                throw ValidationError("unknown reward layout '" + layout + "'");
            const auto values = r.at("values").get<std::vector<double>>();
            reward.values = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                              static_cast<Eigen::Index>(values.size()));
            mdp.reward = std::move(reward);
        }
        const auto init = doc.at("initial_distribution").get<std::vector<double>>();
        mdp.initial_distribution =
            Eigen::Map<const Eigen::VectorXd>(init.data(), static_cast<Eigen::Index>(init.size()));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed MDP document: ") + e.what());
    }
    mdp.validate();
    return mdp;
}

} // namespace bpr
