#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "bpr/agents.hpp"
#include "bpr/error.hpp"
#include "bpr/features.hpp"
#include "bpr/mdp.hpp"

namespace bpr {

struct GaussianPrior {
    double mean = 0.0;
    double std = 1.0;
};

/// Per-action squared-exponential kernel parameters: K_a(c,d) =
/// exp(-kappa_a/2 |x_c - x_d|^2) + sigma_a^2 [c == d].
struct GpHyper {
    Eigen::VectorXd kappa;
    Eigen::VectorXd sigma;

    static GpHyper uniform(int num_actions, double kappa, double sigma);
    int num_actions() const { return static_cast<int>(kappa.size()); }
    void validate() const;
};

struct GpPrior {
    GpHyper hyper;
};

/// monostate = non-informative prior.
using RewardPrior = std::variant<std::monostate, GaussianPrior, GpPrior>;

struct IrlProblem {
    Mdp mdp; // reward is ignored
    ObservationSet observations;
    RewardPrior prior = GaussianPrior{};
    /// |S| x dim kernel inputs; empty means "use the state index".
    Eigen::MatrixXd state_coordinates;

    void validate() const;
    Eigen::MatrixXd coordinates() const;
};

struct RewardVector {
    RewardLayout layout = RewardLayout::PerState;
    Eigen::VectorXd values;
};

// ---------------------------------------------------------------------------
// Preference relations

struct StrictPreference {
    StateIndex state = 0;
    ActionIndex preferred = 0;
    ActionIndex other = 0;
    bool operator==(const StrictPreference&) const = default;
};

struct Equivalence {
    StateIndex state = 0;
    ActionIndex first = 0;
    ActionIndex second = 0; // first < second
    bool operator==(const Equivalence&) const = default;
};

struct PreferenceSet {
    std::vector<StrictPreference> strict;
    std::vector<Equivalence> equivalent;

    std::size_t size() const { return strict.size() + equivalent.size(); }
};

/// At every observed state s with observed action set A_s: a > b for each
/// a in A_s, b not in A_s, and a ~ a' for each unordered pair in A_s.
/// Relations are ordered by state, then action.
PreferenceSet build_preferences(const ObservationSet& obs, int num_actions);

/// Covariance of r_a over all states.
Eigen::MatrixXd se_kernel_matrix(const Eigen::MatrixXd& coordinates, const GpHyper& hyper, ActionIndex action);

/// Empirical action frequencies at observed states, uniform elsewhere.
Eigen::MatrixXd observed_policy(const ObservationSet& obs, int num_states, int num_actions);

// ---------------------------------------------------------------------------
// GPIRL

struct GpirlOptions {
    double beta = 1.0;          // likelihood scale of the Q-gap
    double tol = 1e-6;          // MAP gradient norm
    int max_newton = 100;
    bool learn_hyper = true;
    int max_outer = 20;
    double outer_tol = 1e-4;    // stop when the evidence gain falls below this
    double hyper_step = 0.5;    // initial step in log-hyperparameter space
    double min_kappa = 1e-3, max_kappa = 1e2;
    double min_sigma = 1e-2, max_sigma = 10.0;
};

struct GpirlResult {
    RewardVector reward; // per-state-action, action-major
    GpHyper hyper;
    double objective = 0.0;    // MAP objective at the returned reward
    double log_evidence = 0.0; // Laplace approximation at the returned hyper
    double gradient_norm = 0.0;
    int newton_iterations = 0;
    int outer_iterations = 0;
    bool converged = false;
};

/**
 * Reward-space view of the GPIRL posterior for fixed hyperparameters.
 *
 * Q is linear in the per-state-action reward r: the observed policy pi is
 * evaluated exactly, Q(s,a) = r_a(s) + gamma P_a(s,:) (I - gamma P_pi)^-1 r_pi,
 * so every relation depends on r through one row g of the relation matrix G.
 * Strict preferences use a probit of the scaled Q-gap and equivalences a
 * Gaussian density of the gap, which keeps the MAP problem convex.
 */
class GpirlModel {
public:
    GpirlModel(const IrlProblem& problem, double beta);

    const Eigen::MatrixXd& relation_matrix() const { return g_; }
    const PreferenceSet& preferences() const { return prefs_; }
    std::size_t num_relations() const { return static_cast<std::size_t>(g_.rows()); }
    int reward_size() const { return num_states_ * num_actions_; }

    /// -log p(O|r) as a function of the relation gaps f = G r.
    double neg_log_likelihood(const Eigen::VectorXd& gaps) const;

    /// -log p(O|r) - log p(r|theta), dropping only theta-independent constants.
    double map_objective(const Eigen::VectorXd& r, const GpHyper& hyper) const;
    Eigen::VectorXd map_gradient(const Eigen::VectorXd& r, const GpHyper& hyper) const;

    /// Block-diagonal prior covariance over the full reward vector.
    Eigen::MatrixXd prior_covariance(const GpHyper& hyper) const;

    struct MapSolution {
        Eigen::VectorXd reward;
        Eigen::VectorXd alpha; // r = K G^T alpha
        double objective = 0.0;
        double log_evidence = 0.0;
        double gradient_norm = 0.0;
        int iterations = 0;
        bool converged = false;
    };

    /// Newton iterations in relation space. `warm_alpha` may be empty.
    MapSolution solve_map(const GpHyper& hyper, const GpirlOptions& opts,
                          const Eigen::VectorXd& warm_alpha = {}) const;

    /// Gradient of the Laplace log evidence w.r.t. (log kappa_a, log sigma_a),
    /// laid out [kappa_0..kappa_{m-1}, sigma_0..sigma_{m-1}], at a MAP solution.
    Eigen::VectorXd log_evidence_gradient(const GpHyper& hyper, const MapSolution& map) const;

private:
    struct LikelihoodTerms {
        double value = 0.0;
        Eigen::VectorXd d1, d2, d3; // derivatives of -log p per relation
    };
    LikelihoodTerms likelihood_terms(const Eigen::VectorXd& gaps) const;
    Eigen::MatrixXd relation_covariance(const std::vector<Eigen::MatrixXd>& kernels) const;
    std::vector<Eigen::MatrixXd> kernels(const GpHyper& hyper) const;

    int num_states_ = 0;
    int num_actions_ = 0;
    double beta_ = 1.0;
    Eigen::MatrixXd coords_;
    PreferenceSet prefs_;
    std::vector<bool> strict_; // per relation row
    Eigen::MatrixXd g_;        // relations x |S||A|
};

GpirlResult gpirl_fit(const IrlProblem& problem, const GpHyper& init_hyper, const GpirlOptions& opts = {});

// ---------------------------------------------------------------------------
// MLIRL

struct MlirlOptions {
    double temperature = 1.0;
    double step_size = 0.05;
    int iters = 100;
    int backups = 50; // softmax-weighted Bellman backups per Q evaluation
    RewardLayout layout = RewardLayout::PerState;
};

struct MlirlResult {
    RewardVector reward;
    double objective = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Objective error carrying the last finite iterate.
class DivergenceError : public NumericalError {
public:
    DivergenceError(const std::string& what, Eigen::VectorXd last_finite)
        : NumericalError(what), last_finite_(std::move(last_finite))
    {}
    const Eigen::VectorXd& last_finite() const { return last_finite_; }

private:
    Eigen::VectorXd last_finite_;
};

/// Soft Q-values after `backups` Boltzmann-weighted backups from V = 0.
QFunction soft_q(const Mdp& mdp_with_reward, double temperature, int backups);

struct ObjectiveValue {
    double value = 0.0;
    Eigen::VectorXd gradient;
};

/// log p(O|r) + log p(r) with its exact gradient (reverse mode through the backups).
ObjectiveValue mlirl_objective(const IrlProblem& problem, const Eigen::VectorXd& r, const MlirlOptions& opts);

/// sum over observed (s,a) of log p(a|s,r) under the Boltzmann model.
double boltzmann_log_likelihood(const QFunction& q, const ObservationSet& obs, double temperature);

MlirlResult mlirl_fit(const IrlProblem& problem, const MlirlOptions& opts = {});

// ---------------------------------------------------------------------------
// PROJ

struct ProjOptions {
    double epsilon = 1e-3;
    int max_iters = 50;
};

struct ProjResult {
    Eigen::VectorXd weights;
    RewardVector reward;         // per-state, R(s) = w . phi(s)
    std::vector<double> margins; // t_0, t_1, ...
    int iterations = 0;
    bool converged = false;
};

/// Exact discounted feature expectation of a policy from mdp.initial_distribution.
Eigen::VectorXd policy_feature_expectation(const Mdp& mdp, const Eigen::MatrixXd& policy_probs,
                                           const Eigen::MatrixXd& phi);

/// Projection method starting from the uniform policy.
ProjResult proj_fit(const IrlProblem& problem, const BasisFunction& basis, const ProjOptions& opts = {});
ProjResult proj_fit_expectation(const Mdp& mdp, const Eigen::VectorXd& expert_expectation,
                                const BasisFunction& basis, const ProjOptions& opts = {});

// ---------------------------------------------------------------------------
// Cohort-level inference

enum class IrlEngine { MLIRL, GPIRL, PROJ };

std::string to_string(IrlEngine engine);
IrlEngine irl_engine_from_string(const std::string& name);

struct InferenceOptions {
    GpHyper gp_init;
    GpirlOptions gpirl;
    MlirlOptions mlirl;
    GaussianPrior mlirl_prior;
    ProjOptions proj;
    int jobs = 1;
};

struct AgentDiagnostics {
    int iterations = 0;
    double objective = 0.0;
    double gradient_norm = 0.0;
    bool converged = false;
};

struct InferenceOutcome {
    int agent_id = 0;
    std::optional<FeatureVector> reward; // empty when the engine failed
    AgentDiagnostics diagnostics;
    std::string error;
};

/// One flattened reward per agent, in cohort order. Failures are recorded per
/// agent instead of aborting the cohort.
std::vector<InferenceOutcome> infer_rewards(const std::vector<AgentRecord>& cohort, IrlEngine engine,
                                            const Mdp& mdp, const Eigen::MatrixXd& state_coordinates,
                                            const InferenceOptions& opts);

void write_diagnostics_jsonl(std::ostream& out, const std::vector<InferenceOutcome>& outcomes);

} // namespace bpr
