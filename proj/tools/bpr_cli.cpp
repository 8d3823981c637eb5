// Batch driver for the behavior-recognition experiments.
#include <iostream>

#include <CLI11.hpp>

#include "bpr/error.hpp"
#include "bpr/harness.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> profile;
    std::optional<std::string> out;
    std::optional<int> jobs;
};

void add_common(CLI::App* cmd, CommonFlags& f)
{
    cmd->add_option("--config", f.config, "experiment config (JSON)")->required();
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--profile", f.profile, "desk or paper");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--jobs", f.jobs, "worker threads");
}

int run_stages(const CommonFlags& f, const std::vector<bpr::Stage>& stages)
{
    bpr::ConfigOverrides ov{f.profile, f.seed, f.out, f.jobs};
    bpr::ExperimentConfig cfg = bpr::load_config(f.config, ov);
    std::vector<std::string> failures;
    for (auto st : stages) {
        auto summary = bpr::run_stage(cfg, st, cfg.jobs);
        failures.insert(failures.end(), summary.failures.begin(), summary.failures.end());
    }
    for (const auto& msg : failures) std::cerr << "failed: " << msg << '\n';
    return failures.empty() ? 0 : kExitPartial;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Behavior recognition from IRL reward vectors"};
    app.require_subcommand(1);

    struct Verb {
        const char* name;
        const char* help;
        std::vector<bpr::Stage> stages;
    };
    const std::vector<Verb> verbs = {
        {"simulate", "generate cohorts", {bpr::Stage::Simulate}},
        {"featurize", "compute action-space features", {bpr::Stage::Featurize}},
        {"irl", "recover reward vectors", {bpr::Stage::Irl}},
        {"recognize", "cluster / classify every cell", {bpr::Stage::Recognize}},
        {"report", "aggregate metrics and plot data", {bpr::Stage::Report}},
        {"run", "all stages",
         {bpr::Stage::Simulate, bpr::Stage::Featurize, bpr::Stage::Irl, bpr::Stage::Recognize, bpr::Stage::Report}},
    };
    std::vector<CommonFlags> flags(verbs.size());
    std::vector<CLI::App*> cmds;
    for (std::size_t i = 0; i < verbs.size(); ++i) {
        cmds.push_back(app.add_subcommand(verbs[i].name, verbs[i].help));
        add_common(cmds.back(), flags[i]);
    }

    auto* dp = app.add_subcommand("dp-oracle", "optimal cutoff for the classical secretary problem");
    int applicants = 0;
    std::string dp_config;
    dp->add_option("--applicants,-X", applicants, "number of applicants");
    dp->add_option("--config", dp_config, "take X from a secretary config");

    CLI11_PARSE(app, argc, argv);

    try {
        if (dp->parsed()) {
            if (applicants == 0) {
                if (dp_config.empty()) throw bpr::ConfigError("dp-oracle needs --applicants or --config");
                auto cfg = bpr::load_config(dp_config);
                applicants = cfg.secretary.spec.num_applicants;
            }
            auto r = bpr::secretary_dp_oracle(applicants);
            nlohmann::json out{{"applicants", applicants}, {"cutoff", r.cutoff}, {"skipped", r.skipped}, {"success", r.success}};
            std::cout << out.dump() << '\n';
            return 0;
        }
        for (std::size_t i = 0; i < verbs.size(); ++i)
            if (cmds[i]->parsed()) return run_stages(flags[i], verbs[i].stages);
    } catch (const bpr::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
