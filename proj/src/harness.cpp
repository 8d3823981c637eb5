#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "bpr/error.hpp"
#include "bpr/harness.hpp"
#include "bpr/parallel.hpp"
#include "bpr/random.hpp"

namespace bpr {

namespace fs = std::filesystem;
using nlohmann::json;

std::string CellKey::directory_name() const
{
    return group + "_sweep" + std::to_string(sweep) + "_rep" + std::to_string(replication);
}

namespace {

std::vector<std::string> cell_groups(const ExperimentConfig& config)
{
    if (config.kind != ExperimentKind::SecretaryWithinRule) return {"all"};
    std::vector<std::string> out;
    std::map<std::string, int> seen;
    for (const auto& r : config.secretary.rules) {
        std::string name = to_string(r.kind);
        int n = seen[name]++;
        out.push_back(n == 0 ? name : name + std::to_string(n + 1));
    }
    return out;
}

fs::path cell_dir(const ExperimentConfig& config, const CellKey& cell)
{
    return fs::path(config.output_dir) / "cells" / cell.directory_name();
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    if (!in) throw Error("missing stage input " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text)
{
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
}

std::string error_file_name(Method method) { return feature_file_name(method) + ".error"; }

std::vector<std::optional<int>> labels_of(const std::vector<AgentRecord>& cohort)
{
    std::vector<std::optional<int>> out;
    for (const auto& a : cohort) out.push_back(a.label);
    return out;
}

std::vector<AgentRecord> read_cohort(const ExperimentConfig& config, const CellKey& cell)
{
    std::istringstream in(slurp(cell_dir(config, cell) / "cohort.jsonl"));
    return read_cohort_jsonl(in);
}

std::string sanitize(std::string s)
{
    for (char& c : s)
        if (c == '+') c = '-';
    return s;
}

} // namespace

std::vector<CellKey> enumerate_cells(const ExperimentConfig& config)
{
    std::vector<CellKey> cells;
    for (const auto& g : cell_groups(config))
        for (int v : config.sweep)
            for (int r = 0; r < config.replications; ++r) cells.push_back({g, v, r});
    std::sort(cells.begin(), cells.end());
    return cells;
}

SecretaryCohortPlan secretary_plan(const ExperimentConfig& config, const std::string& group)
{
    SecretaryCohortPlan plan;
    const auto groups = cell_groups(config);
    const auto& rules = config.secretary.rules;
    if (config.kind == ExperimentKind::SecretaryWithinRule) {
        auto it = std::find(groups.begin(), groups.end(), group);
        if (it == groups.end()) throw ConfigError("unknown rule group " + group);
        const auto& r = rules[static_cast<std::size_t>(it - groups.begin())];
        for (std::size_t i = 0; i < r.parameters.size(); ++i) {
            plan.groups.push_back({{r.kind, r.parameters[i]}, r.count, r.param_noise_std});
            plan.labels.push_back(static_cast<int>(i));
        }
        plan.num_classes = static_cast<int>(r.parameters.size());
        return plan;
    }
    for (std::size_t i = 0; i < rules.size(); ++i) {
        const auto& r = rules[i];
        std::vector<double> params = r.parameters;
        if (r.kind == RuleKind::Random && params.empty()) params = {0.0};
        for (double p : params) {
            plan.groups.push_back({{r.kind, p}, r.count, r.param_noise_std});
            plan.labels.push_back(static_cast<int>(i));
        }
    }
    plan.num_classes = static_cast<int>(rules.size());
    return plan;
}

Mdp experiment_mdp(const ExperimentConfig& config)
{
    if (!config.is_gridworld()) return build_secretary_mdp(config.secretary.spec);
    const auto& g = config.gridworld;
    Mdp mdp = build_gridworld(g.spec);
    if (g.start) {
        mdp.initial_distribution = Eigen::VectorXd::Zero(mdp.num_states);
        mdp.initial_distribution[g.spec.index(*g.start)] = 1.0;
    } else {
        mdp.initial_distribution = Eigen::VectorXd::Constant(mdp.num_states, 1.0 / mdp.num_states);
    }
    return mdp;
}

Eigen::MatrixXd experiment_coordinates(const ExperimentConfig& config)
{
    return config.is_gridworld() ? gridworld_coordinates(config.gridworld.spec)
                                 : secretary_coordinates(config.secretary.spec);
}

std::vector<AgentRecord> simulate_cell(const ExperimentConfig& config, const CellKey& cell)
{
    // The cohort seed ignores the sweep value: a larger observation budget
    // extends the same agents' observation sets.
    const std::uint64_t seed = derive_seed(
        config.seed, {hash_tag("cohort"), hash_tag(cell.group), static_cast<std::uint64_t>(cell.replication)});
    if (config.is_gridworld()) {
        GridWorldCohortSpec cohort = config.gridworld.cohort;
        cohort.trajectories_per_agent = cell.sweep;
        return simulate_gridworld_cohort(config.gridworld.spec, experiment_mdp(config), cohort, seed);
    }
    auto plan = secretary_plan(config, cell.group);
    auto cohort = simulate_secretary_cohort(plan.groups, cell.sweep, config.secretary.spec, seed);
    for (auto& a : cohort) a.label = plan.labels[static_cast<std::size_t>(*a.label)];
    return cohort;
}

std::string feature_file_name(Method method)
{
    if (is_irl(method)) return "rewards_" + to_string(engine_of(method)) + ".csv";
    return "features_" + sanitize(to_string(method)) + ".csv";
}

std::vector<FeatureVector> featurize(const ExperimentConfig& config, Method method,
                                     const std::vector<AgentRecord>& cohort)
{
    const Mdp mdp = experiment_mdp(config);
    std::vector<FeatureVector> out;
    switch (method) {
    case Method::FE:
    case Method::PcaFE: {
        const double gamma = config.features.fe_discount.value_or(mdp.discount);
        const auto basis = BasisFunction::indicator(mdp.num_states);
        for (const auto& a : cohort) out.push_back(feature_expectation(a.observations, basis, gamma));
        if (method == Method::PcaFE) out = pca_project(out, config.features.pca_components_fe).projected;
        return out;
    }
    case Method::FT:
    case Method::PcaFT: {
        FeatureTrajectoryOptions opts;
        opts.horizon = config.features.ft_horizon;
        opts.normalization = config.features.ft_normalization;
        opts.num_states = mdp.num_states;
        opts.num_actions = mdp.num_actions;
        for (const auto& a : cohort) out.push_back(feature_trajectory(a.observations, opts));
        if (method == Method::PcaFT) out = pca_project(out, config.features.pca_components_ft).projected;
        return out;
    }
    default: break;
    }
    auto outcomes = infer_rewards(cohort, engine_of(method), mdp, experiment_coordinates(config), config.irl);
    for (const auto& o : outcomes) {
        if (!o.reward) throw NumericalError("agent " + std::to_string(o.agent_id) + ": " + o.error);
        out.push_back(*o.reward);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

void stage_simulate(const ExperimentConfig& config, const CellKey& cell)
{
    std::ostringstream out;
    write_cohort_jsonl(out, simulate_cell(config, cell));
    write_text(cell_dir(config, cell) / "cohort.jsonl", out.str());
}

void write_features(const ExperimentConfig& config, const CellKey& cell, Method method,
                    const std::vector<AgentRecord>& cohort, std::vector<std::string>& failures)
{
    const fs::path dir = cell_dir(config, cell);
    fs::remove(dir / error_file_name(method));
    try {
        std::vector<FeatureVector> fv;
        std::vector<std::string> columns;
        if (is_irl(method)) {
            const Mdp mdp = experiment_mdp(config);
            const IrlEngine engine = engine_of(method);
            auto outcomes = infer_rewards(cohort, engine, mdp, experiment_coordinates(config), config.irl);
            std::ostringstream diag;
            write_diagnostics_jsonl(diag, outcomes);
            write_text(dir / ("diagnostics_" + to_string(engine) + ".jsonl"), diag.str());
            for (const auto& o : outcomes) {
                if (!o.reward) throw NumericalError("agent " + std::to_string(o.agent_id) + ": " + o.error);
                fv.push_back(*o.reward);
            }
            const auto len = fv.empty() ? 0 : fv.front().values.size();
            const bool per_state = len == mdp.num_states;
            for (Eigen::Index c = 0; c < len; ++c)
                columns.push_back(per_state ? "r_s" + std::to_string(c)
                                            : "r_a" + std::to_string(c / mdp.num_states) + "_s" +
                                                  std::to_string(c % mdp.num_states));
        } else {
            fv = featurize(config, method, cohort);
            const auto len = fv.empty() ? 0 : fv.front().values.size();
            for (Eigen::Index c = 0; c < len; ++c) columns.push_back("f" + std::to_string(c));
        }
        std::ostringstream out;
        write_feature_csv(out, fv, labels_of(cohort), columns);
        write_text(dir / feature_file_name(method), out.str());
    } catch (const Error& e) {
        fs::remove(dir / feature_file_name(method));
        write_text(dir / error_file_name(method), std::string(e.what()) + "\n");
        failures.push_back(cell.directory_name() + "/" + to_string(method) + ": " + e.what());
    }
}

void stage_featurize(const ExperimentConfig& config, const CellKey& cell, bool irl, std::vector<std::string>& failures)
{
    auto cohort = read_cohort(config, cell);
    for (Method m : config.methods)
        if (is_irl(m) == irl) write_features(config, cell, m, cohort, failures);
}

json recognize_cell(const ExperimentConfig& config, const CellKey& cell)
{
    const fs::path dir = cell_dir(config, cell);
    json results = json::array(), failures = json::array();
    for (Method m : config.methods) {
        const std::string tag = to_string(m);
        if (fs::exists(dir / error_file_name(m))) {
            failures.push_back({{"method", tag}, {"error", slurp(dir / error_file_name(m))}});
            continue;
        }
        try {
            std::istringstream in(slurp(dir / feature_file_name(m)));
            FeatureTable table = read_feature_csv(in);
            Dataset data;
            data.rows = table.rows;
            std::vector<int> labels;
            for (const auto& l : table.labels) {
                if (!l) throw ValidationError("recognition needs ground-truth labels");
                labels.push_back(*l);
            }
            data.labels = labels;
            const std::uint64_t base = derive_seed(config.seed, {hash_tag(cell.group), static_cast<std::uint64_t>(cell.sweep),
                                                                 static_cast<std::uint64_t>(cell.replication), hash_tag(tag)});
            if (config.does_clustering()) {
                const int k = static_cast<int>(std::set<int>(labels.begin(), labels.end()).size());
                auto cr = kmeans(data, k, config.recognition.kmeans_restarts, derive_seed(base, {hash_tag("kmeans")}));
                results.push_back({{"method", tag}, {"metric", "nmi"}, {"values", {nmi(cr.assignments, labels)}}});
                results.push_back(
                    {{"method", tag}, {"metric", "accuracy"}, {"values", {clustering_accuracy(cr.assignments, labels)}}});
            }
            if (config.does_classification()) {
                for (auto clf : config.recognition.classifiers) {
                    auto cv = cross_validate(data, clf, config.recognition.hyper, config.recognition.folds,
                                             config.recognition.cv_replications,
                                             derive_seed(base, {hash_tag("cv"), hash_tag(to_string(clf))}));
                    results.push_back(
                        {{"method", tag}, {"metric", "cv_accuracy_" + to_string(clf)}, {"values", cv.fold_accuracies}});
                }
            }
        } catch (const Error& e) {
            failures.push_back({{"method", tag}, {"error", e.what()}});
        }
    }
    return json{{"cell", cell.directory_name()}, {"results", results}, {"failures", failures}};
}

CellOutcome read_outcome(const ExperimentConfig& config, const CellKey& cell)
{
    json doc = json::parse(slurp(cell_dir(config, cell) / "results.json"));
    CellOutcome out;
    out.key = cell;
    for (const auto& r : doc.at("results"))
        out.results.push_back({method_from_string(r.at("method")), r.at("metric"), r.at("values").get<std::vector<double>>()});
    for (const auto& f : doc.at("failures"))
        out.failures.emplace_back(method_from_string(f.at("method")), f.at("error").get<std::string>());
    return out;
}

} // namespace

StageSummary run_stage(const ExperimentConfig& config, Stage stage, int jobs)
{
    StageSummary summary;
    const auto cells = enumerate_cells(config);
    std::mutex mu;

    if (stage == Stage::Report) {
        std::vector<CellOutcome> outcomes;
        for (const auto& c : cells) outcomes.push_back(read_outcome(config, c));
        ExperimentReport report = build_report(config, outcomes);
        const fs::path out(config.output_dir);
        fs::create_directories(out);
        {
            std::ofstream f(out / "metrics.csv", std::ios::binary);
            write_metrics_csv(f, report.rows);
        }
        emit_plot_data(report, out);
        if (!config.is_gridworld()) {
            const int c = config.kind == ExperimentKind::SecretaryWithinRule ? 2 : 3;
            const int last = *std::max_element(config.sweep.begin(), config.sweep.end());
            for (const auto& g : cell_groups(config)) {
                try {
                    emit_projections(config, {g, last, 0}, c, out);
                } catch (const Error& e) {
                    report.failures.push_back("projection " + g + ": " + e.what());
                }
            }
        }
        report.provenance["failures"] = report.failures;
        write_text(out / "provenance.json", report.provenance.dump(2) + "\n");
        summary.failures = report.failures;
        return summary;
    }

    parallel_for(cells.size(), jobs, [&](std::size_t i) {
        const CellKey& cell = cells[i];
        std::vector<std::string> local;
        switch (stage) {
        case Stage::Simulate: stage_simulate(config, cell); break;
        case Stage::Featurize: stage_featurize(config, cell, false, local); break;
        case Stage::Irl: stage_featurize(config, cell, true, local); break;
        case Stage::Recognize: {
            json doc = recognize_cell(config, cell);
            for (const auto& f : doc.at("failures"))
                local.push_back(cell.directory_name() + "/" + f.at("method").get<std::string>() + ": " +
                                f.at("error").get<std::string>());
            write_text(cell_dir(config, cell) / "results.json", doc.dump(1) + "\n");
            break;
        }
        case Stage::Report: break;
        }
        if (!local.empty()) {
            std::lock_guard lock(mu);
            summary.failures.insert(summary.failures.end(), local.begin(), local.end());
        }
    });
    std::sort(summary.failures.begin(), summary.failures.end());
    return summary;
}

std::vector<fs::path> emit_projections(const ExperimentConfig& config, const CellKey& cell, int components,
                                       const fs::path& dir)
{
    std::vector<fs::path> written;
    const int fig = figure_number(config.kind);
    for (Method m : config.methods) {
        const fs::path src = cell_dir(config, cell) / feature_file_name(m);
        if (!fs::exists(src)) continue;
        std::istringstream in(slurp(src));
        FeatureTable table = read_feature_csv(in);
        std::vector<FeatureVector> rows;
        for (Eigen::Index i = 0; i < table.rows.rows(); ++i) rows.push_back({table.rows.row(i).transpose(), FeatureSource::FE});
        const int c = std::min<int>(components, static_cast<int>(table.rows.cols()));
        auto pca = pca_project(rows, c);
        std::string name = "fig" + std::to_string(fig) + "_projection_";
        if (cell.group != "all") name += cell.group + "_";
        name += sanitize(to_string(m)) + ".csv";
        std::ostringstream out;
        write_feature_csv(out, pca.projected, table.labels, "pc");
        write_text(dir / name, out.str());
        written.push_back(dir / name);
    }
    return written;
}

} // namespace bpr
