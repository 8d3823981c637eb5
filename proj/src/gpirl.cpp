#include <algorithm>
#include <cmath>
#include <numbers>

#include "bpr/irl.hpp"

namespace bpr {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

double log_normal_cdf(double z)
{
    if (z > -20.0)
        return std::log(0.5 * std::erfc(-z / kSqrt2));
    // Asymptotic tail: Phi(z) ~ phi(z)/(-z) * (1 - 1/z^2 + 3/z^4)
    const double z2 = z * z;
    return -0.5 * z2 - std::log(-z) - 0.5 * std::log(2.0 * std::numbers::pi) +
           std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
}

/// phi(z) / Phi(z)
double inverse_mills(double z)
{
    if (z > -20.0) {
        const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
        return pdf / (0.5 * std::erfc(-z / kSqrt2));
    }
    const double z2 = z * z;
    return -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2));
}

double log_det_spd(const Eigen::MatrixXd& m)
{
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
        throw NumericalError("kernel matrix is not positive definite");
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

} // namespace

GpirlModel::GpirlModel(const IrlProblem& problem, double beta)
    : num_states_(problem.mdp.num_states), num_actions_(problem.mdp.num_actions), beta_(beta),
      coords_(problem.coordinates())
{
    problem.validate();
    if (!(beta > 0.0))
        throw ValidationError("likelihood scale beta must be positive");

    const auto& mdp = problem.mdp;
    const int ns = num_states_;
    prefs_ = build_preferences(problem.observations, num_actions_);
    const auto m = static_cast<Eigen::Index>(prefs_.size());

    // Row difference of transition kernels and the direct reward entries of
    // each relation gap Q(s,a) - Q(s,b).
    Eigen::MatrixXd dp(m, ns);
    g_ = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(ns) * num_actions_);
    strict_.assign(static_cast<std::size_t>(m), false);
    Eigen::Index row = 0;
    auto add = [&](StateIndex s, ActionIndex a, ActionIndex b, bool strict) {
        dp.row(row) = mdp.transitions[a].row(s) - mdp.transitions[b].row(s);
        g_(row, a * ns + s) += 1.0;
        g_(row, b * ns + s) -= 1.0;
        strict_[static_cast<std::size_t>(row)] = strict;
        ++row;
    };
    for (const auto& p : prefs_.strict)
        add(p.state, p.preferred, p.other, true);
    for (const auto& e : prefs_.equivalent)
        add(e.state, e.first, e.second, false);

    if (m == 0)
        return;

    // Future value term: gamma * dp * (I - gamma P_pi)^-1 * Pi * r.
    const Eigen::MatrixXd pi = observed_policy(problem.observations, ns, num_actions_);
    const Eigen::MatrixXd system =
        Eigen::MatrixXd::Identity(ns, ns) - mdp.discount * policy_transition_matrix(mdp, pi);
    const Eigen::MatrixXd u = system.transpose().partialPivLu().solve(dp.transpose()).transpose();
    for (int a = 0; a < num_actions_; ++a)
        g_.middleCols(a * ns, ns) += mdp.discount * (u * pi.col(a).asDiagonal());
}

GpirlModel::LikelihoodTerms GpirlModel::likelihood_terms(const Eigen::VectorXd& gaps) const
{
    const auto m = gaps.size();
    LikelihoodTerms t;
    t.d1.resize(m);
    t.d2.resize(m);
    t.d3.resize(m);
    const double scale = kSqrt2 * beta_;
    const double inv_b2 = 1.0 / (beta_ * beta_);
    const double log_norm = std::log(std::sqrt(2.0 * std::numbers::pi) * beta_);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double f = gaps[i];
        if (strict_[static_cast<std::size_t>(i)]) {
            const double z = f / scale;
            const double lam = inverse_mills(z);
            t.value -= log_normal_cdf(z);
            t.d1[i] = -lam / scale;
            t.d2[i] = lam * (z + lam) / (scale * scale);
            t.d3[i] = lam * (1.0 - (z + lam) * (z + 2.0 * lam)) / (scale * scale * scale);
        } else {
            t.value += 0.5 * f * f * inv_b2 + log_norm;
            t.d1[i] = f * inv_b2;
            t.d2[i] = inv_b2;
            t.d3[i] = 0.0;
        }
    }
    return t;
}

double GpirlModel::neg_log_likelihood(const Eigen::VectorXd& gaps) const
{
    if (gaps.size() != g_.rows())
        throw ValidationError("expected one gap per relation");
    return likelihood_terms(gaps).value;
}

std::vector<Eigen::MatrixXd> GpirlModel::kernels(const GpHyper& hyper) const
{
    if (hyper.num_actions() != num_actions_)
        throw ValidationError("hyperparameters do not match the action count");
    std::vector<Eigen::MatrixXd> ks;
    ks.reserve(static_cast<std::size_t>(num_actions_));
    for (int a = 0; a < num_actions_; ++a)
        ks.push_back(se_kernel_matrix(coords_, hyper, a));
    return ks;
}

Eigen::MatrixXd GpirlModel::relation_covariance(const std::vector<Eigen::MatrixXd>& ks) const
{
    const auto m = g_.rows();
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m, m);
    for (int a = 0; a < num_actions_; ++a) {
        const auto ga = g_.middleCols(a * num_states_, num_states_);
        const Eigen::MatrixXd gk = ga * ks[static_cast<std::size_t>(a)];
        c.noalias() += gk * ga.transpose();
    }
    return c;
}

Eigen::MatrixXd GpirlModel::prior_covariance(const GpHyper& hyper) const
{
    const auto ks = kernels(hyper);
    const int n = reward_size();
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    for (int a = 0; a < num_actions_; ++a)
        k.block(a * num_states_, a * num_states_, num_states_, num_states_) = ks[static_cast<std::size_t>(a)];
    return k;
}

double GpirlModel::map_objective(const Eigen::VectorXd& r, const GpHyper& hyper) const
{
    if (r.size() != reward_size())
        throw ValidationError("reward vector has wrong length");
    const auto ks = kernels(hyper);
    double prior = 0.0;
    for (int a = 0; a < num_actions_; ++a) {
        const auto& k = ks[static_cast<std::size_t>(a)];
        Eigen::LLT<Eigen::MatrixXd> llt(k);
        if (llt.info() != Eigen::Success)
            throw NumericalError("kernel matrix is not positive definite");
        const Eigen::VectorXd ra = r.segment(a * num_states_, num_states_);
        prior += 0.5 * ra.dot(llt.solve(ra)) + llt.matrixLLT().diagonal().array().log().sum();
    }
    const double nll = g_.rows() > 0 ? likelihood_terms(g_ * r).value : 0.0;
    return nll + prior;
}

Eigen::VectorXd GpirlModel::map_gradient(const Eigen::VectorXd& r, const GpHyper& hyper) const
{
    if (r.size() != reward_size())
        throw ValidationError("reward vector has wrong length");
    const auto ks = kernels(hyper);
    Eigen::VectorXd grad(reward_size());
    for (int a = 0; a < num_actions_; ++a) {
        Eigen::LLT<Eigen::MatrixXd> llt(ks[static_cast<std::size_t>(a)]);
        if (llt.info() != Eigen::Success)
            throw NumericalError("kernel matrix is not positive definite");
        grad.segment(a * num_states_, num_states_) = llt.solve(r.segment(a * num_states_, num_states_));
    }
    if (g_.rows() > 0)
        grad += g_.transpose() * likelihood_terms(g_ * r).d1;
    return grad;
}

GpirlModel::MapSolution GpirlModel::solve_map(const GpHyper& hyper, const GpirlOptions& opts,
                                              const Eigen::VectorXd& warm_alpha) const
{
    const auto ks = kernels(hyper);
    const auto m = g_.rows();
    MapSolution sol;

    double log_det_k = 0.0;
    for (const auto& k : ks)
        log_det_k += log_det_spd(k);

    if (m == 0) {
        sol.reward = Eigen::VectorXd::Zero(reward_size());
        sol.objective = 0.5 * log_det_k;
        sol.converged = true;
        return sol;
    }

    const Eigen::MatrixXd c = relation_covariance(ks);
    Eigen::VectorXd alpha = warm_alpha.size() == m ? warm_alpha : Eigen::VectorXd::Zero(m);
    Eigen::VectorXd f = c * alpha;
    auto psi = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& gaps) {
        return likelihood_terms(gaps).value + 0.5 * a.dot(gaps);
    };
    double current = psi(alpha, f);

    auto factor = [&](const Eigen::VectorXd& d2) {
        const Eigen::VectorXd sd = d2.cwiseSqrt();
        Eigen::MatrixXd b = sd.asDiagonal() * c * sd.asDiagonal();
        b.diagonal().array() += 1.0;
        Eigen::LLT<Eigen::MatrixXd> llt(b);
        if (llt.info() != Eigen::Success)
            throw NumericalError("B = I + D^1/2 C D^1/2 is not positive definite; "
                                 "check kernel hyperparameters (kappa, sigma)");
        return std::pair{sd, llt};
    };

    for (int it = 0; it < opts.max_newton; ++it) {
        const auto terms = likelihood_terms(f);
        sol.gradient_norm = (g_.transpose() * (terms.d1 + alpha)).norm();
        if (sol.gradient_norm <= opts.tol) {
            sol.converged = true;
            break;
        }
        const auto [sd, llt] = factor(terms.d2);
        const Eigen::VectorXd b = terms.d2.cwiseProduct(f) - terms.d1;
        const Eigen::VectorXd target =
            b - sd.cwiseProduct(llt.solve(sd.cwiseProduct(c * b)));
        const Eigen::VectorXd dir = target - alpha;

        double step = 1.0;
        bool improved = false;
        for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
            const Eigen::VectorXd a_try = alpha + step * dir;
            const Eigen::VectorXd f_try = c * a_try;
            const double v = psi(a_try, f_try);
            if (std::isfinite(v) && v <= current) {
                improved = v < current || step == 1.0;
                alpha = a_try;
                f = f_try;
                current = v;
                break;
            }
        }
        ++sol.iterations;
        if (!improved)
            break; // no further decrease representable
    }

    const auto terms = likelihood_terms(f);
    sol.gradient_norm = (g_.transpose() * (terms.d1 + alpha)).norm();
    sol.converged = sol.converged || sol.gradient_norm <= opts.tol;
    const auto [sd, llt] = factor(terms.d2);
    sol.log_evidence = -terms.value - 0.5 * alpha.dot(f) -
                       llt.matrixLLT().diagonal().array().log().sum();
    sol.objective = terms.value + 0.5 * alpha.dot(f) + 0.5 * log_det_k;
    sol.alpha = alpha;
    sol.reward.resize(reward_size());
    const Eigen::VectorXd gta = g_.transpose() * alpha;
    for (int a = 0; a < num_actions_; ++a)
        sol.reward.segment(a * num_states_, num_states_) =
            ks[static_cast<std::size_t>(a)] * gta.segment(a * num_states_, num_states_);
    return sol;
}

Eigen::VectorXd GpirlModel::log_evidence_gradient(const GpHyper& hyper, const MapSolution& map) const
{
    const int na = num_actions_;
    const int ns = num_states_;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(2 * na);
    const auto m = g_.rows();
    if (m == 0)
        return grad;

    const auto ks = kernels(hyper);
    const Eigen::MatrixXd c = relation_covariance(ks);
    const Eigen::VectorXd& alpha = map.alpha;
    const Eigen::VectorXd f = c * alpha;
    const auto terms = likelihood_terms(f);

    const Eigen::VectorXd sd = terms.d2.cwiseSqrt();
    Eigen::MatrixXd b = sd.asDiagonal() * c * sd.asDiagonal();
    b.diagonal().array() += 1.0;
    Eigen::LLT<Eigen::MatrixXd> llt(b);
    if (llt.info() != Eigen::Success)
        throw NumericalError("B is not positive definite in the evidence gradient");

    // R = D^1/2 B^-1 D^1/2
    const Eigen::MatrixXd rmat = sd.asDiagonal() * llt.solve(Eigen::MatrixXd(sd.asDiagonal()));
    const Eigen::MatrixXd v = llt.matrixL().solve(sd.asDiagonal() * c);
    const Eigen::VectorXd post_var = c.diagonal() - v.colwise().squaredNorm().transpose();
    const Eigen::VectorXd s2 = -0.5 * post_var.cwiseProduct(terms.d3); // d3 is of -log p

    for (int a = 0; a < na; ++a) {
        const auto ga = g_.middleCols(a * ns, ns);
        const Eigen::MatrixXd rga = rmat * ga;
        const Eigen::MatrixXd ma = ga.transpose() * rga; // G_a^T R G_a
        const Eigen::VectorXd u = ga.transpose() * alpha;

        const double kappa = hyper.kappa[a];
        const double sigma = hyper.sigma[a];
        Eigen::MatrixXd dk_kappa(ns, ns);
        const auto& k = ks[static_cast<std::size_t>(a)];
        for (int i = 0; i < ns; ++i) {
            dk_kappa(i, i) = 0.0;
            for (int j = i + 1; j < ns; ++j) {
                const double dist2 = (coords_.row(i) - coords_.row(j)).squaredNorm();
                dk_kappa(i, j) = dk_kappa(j, i) = -0.5 * kappa * dist2 * k(i, j);
            }
        }

        auto component = [&](const Eigen::MatrixXd& dk) {
            const double explicit_part = 0.5 * u.dot(dk * u) - 0.5 * ma.cwiseProduct(dk).sum();
            const Eigen::VectorXd bj = ga * (dk * u);
            const Eigen::VectorXd s3 = bj - c * (rmat * bj);
            return explicit_part + s2.dot(s3);
        };
        grad[a] = component(dk_kappa);
        grad[na + a] = component(Eigen::MatrixXd(2.0 * sigma * sigma * Eigen::MatrixXd::Identity(ns, ns)));
    }
    return grad;
}

GpirlResult gpirl_fit(const IrlProblem& problem, const GpHyper& init_hyper, const GpirlOptions& opts)
{
    init_hyper.validate();
    if (init_hyper.num_actions() != problem.mdp.num_actions)
        throw ValidationError("hyperparameters do not match the action count");
    const GpirlModel model(problem, opts.beta);

    GpHyper hyper = init_hyper;
    auto clamp_hyper = [&](GpHyper& h) {
        h.kappa = h.kappa.cwiseMax(opts.min_kappa).cwiseMin(opts.max_kappa);
        h.sigma = h.sigma.cwiseMax(opts.min_sigma).cwiseMin(opts.max_sigma);
    };
    if (opts.learn_hyper)
        clamp_hyper(hyper);

    auto map = model.solve_map(hyper, opts);
    GpirlResult result;
    if (opts.learn_hyper && model.num_relations() > 0) {
        const int na = hyper.num_actions();
        double step = opts.hyper_step;
        for (int outer = 0; outer < opts.max_outer; ++outer) {
            const Eigen::VectorXd grad = model.log_evidence_gradient(hyper, map);
            const double gnorm = grad.norm();
            if (!(gnorm > 0.0) || !std::isfinite(gnorm))
                break;
            const Eigen::VectorXd dir = grad / std::max(1.0, gnorm);
            bool accepted = false;
            double gain = 0.0;
            for (int tries = 0; tries < 8; ++tries, step *= 0.5) {
                GpHyper trial = hyper;
                trial.kappa = (hyper.kappa.array().log() + step * dir.head(na).array()).exp();
                trial.sigma = (hyper.sigma.array().log() + step * dir.tail(na).array()).exp();
                clamp_hyper(trial);
                if ((trial.kappa - hyper.kappa).norm() + (trial.sigma - hyper.sigma).norm() < 1e-12)
                    break; // pinned at the bounds
                auto trial_map = model.solve_map(trial, opts, map.alpha);
                if (trial_map.log_evidence > map.log_evidence) {
                    gain = trial_map.log_evidence - map.log_evidence;
                    hyper = std::move(trial);
                    map = std::move(trial_map);
                    accepted = true;
                    step = std::min(2.0 * step, 4.0 * opts.hyper_step);
                    break;
                }
            }
            result.outer_iterations = outer + 1;
            if (!accepted || gain < opts.outer_tol)
                break;
        }
    }

    result.reward = {RewardLayout::PerStateAction, map.reward};
    result.hyper = hyper;
    result.objective = map.objective;
    result.log_evidence = map.log_evidence;
    result.gradient_norm = map.gradient_norm;
    result.newton_iterations = map.iterations;
    result.converged = map.converged;
    return result;
}

} // namespace bpr
