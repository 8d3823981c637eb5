#include <ostream>

#include <nlohmann/json.hpp>

#include "bpr/irl.hpp"
#include "bpr/parallel.hpp"

namespace bpr {

namespace {

InferenceOutcome infer_one(const AgentRecord& agent, IrlEngine engine, const Mdp& mdp,
                           const Eigen::MatrixXd& coords, const InferenceOptions& opts)
{
    InferenceOutcome out;
    out.agent_id = agent.agent_id;
    try {
        IrlProblem problem{mdp.without_reward(), agent.observations, GaussianPrior{}, coords};
        switch (engine) {
        case IrlEngine::GPIRL: {
            problem.prior = GpPrior{opts.gp_init};
            const auto fit = gpirl_fit(problem, opts.gp_init, opts.gpirl);
            out.reward = FeatureVector{fit.reward.values, FeatureSource::Reward};
            out.diagnostics = {fit.newton_iterations + fit.outer_iterations, fit.objective, fit.gradient_norm,
                               fit.converged};
            break;
        }
        case IrlEngine::MLIRL: {
            problem.prior = opts.mlirl_prior;
            const auto fit = mlirl_fit(problem, opts.mlirl);
            out.reward = FeatureVector{fit.reward.values, FeatureSource::Reward};
            out.diagnostics = {fit.iterations, fit.objective, fit.gradient_norm, fit.converged};
            break;
        }
        case IrlEngine::PROJ: {
            const auto fit = proj_fit(problem, BasisFunction::indicator(mdp.num_states), opts.proj);
            out.reward = FeatureVector{fit.reward.values, FeatureSource::Reward};
            out.diagnostics = {fit.iterations, fit.margins.back(), 0.0, fit.converged};
            break;
        }
        }
    } catch (const std::exception& e) {
        out.reward.reset();
        out.error = e.what();
    }
    return out;
}

} // namespace

std::vector<InferenceOutcome> infer_rewards(const std::vector<AgentRecord>& cohort, IrlEngine engine,
                                            const Mdp& mdp, const Eigen::MatrixXd& state_coordinates,
                                            const InferenceOptions& opts)
{
    std::vector<InferenceOutcome> outcomes(cohort.size());
    parallel_for(cohort.size(), opts.jobs, [&](std::size_t i) {
        outcomes[i] = infer_one(cohort[i], engine, mdp, state_coordinates, opts);
    });
    return outcomes;
}

void write_diagnostics_jsonl(std::ostream& out, const std::vector<InferenceOutcome>& outcomes)
{
    for (const auto& o : outcomes) {
        nlohmann::json line{{"agent_id", o.agent_id},
                            {"iterations", o.diagnostics.iterations},
                            {"objective", o.diagnostics.objective},
                            {"gradient_norm", o.diagnostics.gradient_norm},
                            {"converged", o.diagnostics.converged}};
        if (!o.error.empty())
            line["error"] = o.error;
        out << line.dump() << '\n';
    }
}

} // namespace bpr
