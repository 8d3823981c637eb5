#include <cmath>
#include <limits>

#include "bpr/irl.hpp"

namespace bpr {

namespace {

Eigen::MatrixXd reward_table(const Eigen::VectorXd& r, RewardLayout layout, int ns, int na)
{
    Eigen::MatrixXd table(ns, na);
    for (int a = 0; a < na; ++a)
        table.col(a) = layout == RewardLayout::PerState ? r : Eigen::VectorXd(r.segment(a * ns, ns));
    return table;
}

Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& q, double temperature)
{
    Eigen::MatrixXd z = q / temperature;
    z.colwise() -= z.rowwise().maxCoeff();
    z = z.array().exp();
    return z.array().colwise() / z.rowwise().sum().array();
}

Eigen::MatrixXd lookahead(const Mdp& mdp, const Eigen::VectorXd& v)
{
    Eigen::MatrixXd out(mdp.num_states, mdp.num_actions);
    for (int a = 0; a < mdp.num_actions; ++a)
        out.col(a) = mdp.discount * (mdp.transitions[a] * v);
    return out;
}

int reward_length(const Mdp& mdp, RewardLayout layout)
{
    return layout == RewardLayout::PerState ? mdp.num_states : mdp.num_states * mdp.num_actions;
}

} // namespace

QFunction soft_q(const Mdp& mdp, double temperature, int backups)
{
    if (!mdp.reward)
        throw ConfigError("MDP has no reward");
    if (!(temperature > 0.0))
        throw ValidationError("temperature must be positive");
    const auto table = reward_table(mdp.reward->values, mdp.reward->layout, mdp.num_states, mdp.num_actions);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(mdp.num_states);
    for (int k = 0; k < backups; ++k) {
        const Eigen::MatrixXd q = table + lookahead(mdp, v);
        v = row_softmax(q, temperature).cwiseProduct(q).rowwise().sum();
    }
    return {table + lookahead(mdp, v)};
}

double boltzmann_log_likelihood(const QFunction& q, const ObservationSet& obs, double temperature)
{
    double total = 0.0;
    for (const auto& t : obs.trajectories) {
        for (const auto& st : t.steps) {
            const Eigen::VectorXd p = boltzmann_probs(q, st.state, temperature);
            total += std::log(p[st.action]);
        }
    }
    return total;
}

ObjectiveValue mlirl_objective(const IrlProblem& problem, const Eigen::VectorXd& r, const MlirlOptions& opts)
{
    const auto& mdp = problem.mdp;
    const int ns = mdp.num_states;
    const int na = mdp.num_actions;
    const double temp = opts.temperature;
    if (!(temp > 0.0))
        throw ValidationError("temperature must be positive");
    if (opts.backups < 0)
        throw ValidationError("backups must be nonnegative");
    if (r.size() != reward_length(mdp, opts.layout))
        throw ValidationError("reward vector has wrong length for the layout");

    const Eigen::MatrixXd table = reward_table(r, opts.layout, ns, na);

    // Forward pass, keeping every Q_k and pi_k for the reverse sweep.
    std::vector<Eigen::MatrixXd> qs, pis;
    std::vector<Eigen::VectorXd> vs{Eigen::VectorXd::Zero(ns)};
    for (int k = 0; k < opts.backups; ++k) {
        qs.push_back(table + lookahead(mdp, vs.back()));
        pis.push_back(row_softmax(qs.back(), temp));
        vs.push_back(pis.back().cwiseProduct(qs.back()).rowwise().sum());
    }
    const Eigen::MatrixXd q_final = table + lookahead(mdp, vs.back());
    const Eigen::MatrixXd pi_final = row_softmax(q_final, temp);

    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(ns, na);
    for (const auto& t : problem.observations.trajectories)
        for (const auto& st : t.steps)
            counts(st.state, st.action) += 1.0;

    ObjectiveValue out;
    Eigen::MatrixXd zc = q_final / temp;
    const Eigen::VectorXd zmax = zc.rowwise().maxCoeff();
    zc.colwise() -= zmax;
    const Eigen::VectorXd lse = zmax.array() + zc.array().exp().rowwise().sum().log();
    for (int s = 0; s < ns; ++s)
        for (int a = 0; a < na; ++a)
            if (counts(s, a) > 0.0)
                out.value += counts(s, a) * (q_final(s, a) / temp - lse[s]);

    // Reverse sweep.
    const Eigen::VectorXd visits = counts.rowwise().sum();
    Eigen::MatrixXd q_bar = (counts.array() - pi_final.array().colwise() * visits.array()).matrix() / temp;
    Eigen::MatrixXd table_bar = q_bar;
    auto back_through_lookahead = [&](const Eigen::MatrixXd& qb) {
        Eigen::VectorXd vb = Eigen::VectorXd::Zero(ns);
        for (int a = 0; a < na; ++a)
            vb += mdp.discount * (mdp.transitions[a].transpose() * qb.col(a));
        return vb;
    };
    Eigen::VectorXd v_bar = back_through_lookahead(q_bar);
    for (int k = opts.backups - 1; k >= 0; --k) {
        const auto& q = qs[static_cast<std::size_t>(k)];
        const auto& pi = pis[static_cast<std::size_t>(k)];
        const auto& v_next = vs[static_cast<std::size_t>(k + 1)];
        // dV(s)/dQ(s,a) = pi(a|s) (1 + (Q(s,a) - V(s)) / T)
        Eigen::MatrixXd jac = ((q.colwise() - v_next) / temp).array() + 1.0;
        q_bar = (pi.cwiseProduct(jac)).array().colwise() * v_bar.array();
        table_bar += q_bar;
        v_bar = back_through_lookahead(q_bar);
    }

    if (opts.layout == RewardLayout::PerState) {
        out.gradient = table_bar.rowwise().sum();
    } else {
        out.gradient.resize(ns * na);
        for (int a = 0; a < na; ++a)
            out.gradient.segment(a * ns, ns) = table_bar.col(a);
    }

    if (const auto* g = std::get_if<GaussianPrior>(&problem.prior)) {
        const double var = g->std * g->std;
        const Eigen::VectorXd centred = r.array() - g->mean;
        out.value -= 0.5 * centred.squaredNorm() / var;
        out.gradient -= centred / var;
    } else if (std::holds_alternative<GpPrior>(problem.prior)) {
        throw ConfigError("MLIRL supports a Gaussian or non-informative prior only");
    }
    return out;
}

MlirlResult mlirl_fit(const IrlProblem& problem, const MlirlOptions& opts)
{
    problem.validate();
    if (!(opts.step_size > 0.0))
        throw ValidationError("step size must be positive");
    if (opts.iters < 0)
        throw ValidationError("iteration count must be nonnegative");

    const int n = reward_length(problem.mdp, opts.layout);
    double start = 0.0;
    if (const auto* g = std::get_if<GaussianPrior>(&problem.prior))
        start = g->mean;
    Eigen::VectorXd r = Eigen::VectorXd::Constant(n, start);

    MlirlResult result;
    auto current = mlirl_objective(problem, r, opts);
    if (!std::isfinite(current.value))
        throw DivergenceError("MLIRL objective is not finite at the prior mean", r);
    double step = opts.step_size;
    for (int it = 0; it < opts.iters; ++it) {
        if (current.gradient.norm() < 1e-10) {
            result.converged = true;
            break;
        }
        bool accepted = false;
        bool saw_finite = false;
        for (int ls = 0; ls < 30; ++ls, step *= 0.5) {
            Eigen::VectorXd trial = r + step * current.gradient;
            auto value = mlirl_objective(problem, trial, opts);
            if (!std::isfinite(value.value) || !value.gradient.allFinite())
                continue;
            saw_finite = true;
            if (value.value >= current.value) {
                r = std::move(trial);
                current = std::move(value);
                accepted = true;
                break;
            }
        }
        if (!saw_finite)
            throw DivergenceError("MLIRL objective became NaN", r);
        result.iterations = it + 1;
        if (!accepted) {
            result.converged = true; // no ascent step representable
            break;
        }
    }
    result.reward = {opts.layout, r};
    result.objective = current.value;
    result.gradient_norm = current.gradient.norm();
    return result;
}

} // namespace bpr
