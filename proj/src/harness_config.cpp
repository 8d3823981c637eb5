#include <cstdio>
#include <fstream>
#include <set>

#include "bpr/error.hpp"
#include "bpr/harness.hpp"
#include "bpr/random.hpp"

namespace bpr {

using nlohmann::json;

std::string to_string(ExperimentKind kind)
{
    switch (kind) {
    case ExperimentKind::GridworldCluster: return "gridworld-cluster";
    case ExperimentKind::GridworldClassify: return "gridworld-classify";
    case ExperimentKind::SecretaryAcrossRules: return "secretary-across-rules";
    case ExperimentKind::SecretaryWithinRule: return "secretary-within-rule";
    case ExperimentKind::SecretaryCrVsRandom: return "secretary-cr-vs-random";
    }
    return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& name)
{
    for (auto k : {ExperimentKind::GridworldCluster, ExperimentKind::GridworldClassify,
                   ExperimentKind::SecretaryAcrossRules, ExperimentKind::SecretaryWithinRule,
                   ExperimentKind::SecretaryCrVsRandom})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown experiment kind: " + name);
}

std::string to_string(Method method)
{
    switch (method) {
    case Method::FT: return "FT";
    case Method::FE: return "FE";
    case Method::PcaFE: return "PCA+FE";
    case Method::PcaFT: return "PCA+FT";
    case Method::PROJ: return "PROJ";
    case Method::MLIRL: return "MLIRL";
    case Method::GPIRL: return "GPIRL";
    }
    return "?";
}

Method method_from_string(const std::string& name)
{
    for (auto m : {Method::FT, Method::FE, Method::PcaFE, Method::PcaFT, Method::PROJ, Method::MLIRL, Method::GPIRL})
        if (to_string(m) == name) return m;
    throw ConfigError("unknown method: " + name);
}

bool is_irl(Method method)
{
    return method == Method::PROJ || method == Method::MLIRL || method == Method::GPIRL;
}

IrlEngine engine_of(Method method)
{
    switch (method) {
    case Method::PROJ: return IrlEngine::PROJ;
    case Method::MLIRL: return IrlEngine::MLIRL;
    case Method::GPIRL: return IrlEngine::GPIRL;
    default: break;
    }
    throw ConfigError(to_string(method) + " is not an IRL method");
}

bool ExperimentConfig::is_gridworld() const
{
    return kind == ExperimentKind::GridworldCluster || kind == ExperimentKind::GridworldClassify;
}

bool ExperimentConfig::does_clustering() const
{
    return kind == ExperimentKind::GridworldCluster || kind == ExperimentKind::SecretaryWithinRule ||
           kind == ExperimentKind::SecretaryCrVsRandom;
}

bool ExperimentConfig::does_classification() const
{
    return kind == ExperimentKind::GridworldClassify || kind == ExperimentKind::SecretaryAcrossRules ||
           kind == ExperimentKind::SecretaryCrVsRandom;
}

std::string ExperimentConfig::sweep_name() const { return is_gridworld() ? "O_n" : "H"; }

void ExperimentConfig::validate() const
{
    if (schema_version != kConfigSchemaVersion)
        throw ConfigError("unsupported schema_version " + std::to_string(schema_version));
    if (sweep.empty()) throw ConfigError("sweep must not be empty");
    for (int v : sweep)
        if (v < 1) throw ConfigError("sweep values must be positive");
    if (std::set<int>(sweep.begin(), sweep.end()).size() != sweep.size())
        throw ConfigError("sweep values must be distinct");
    if (methods.empty()) throw ConfigError("methods must not be empty");
    if (std::set<Method>(methods.begin(), methods.end()).size() != methods.size())
        throw ConfigError("methods must be distinct");
    if (replications < 1) throw ConfigError("replications must be at least 1");
    if (jobs < 1) throw ConfigError("jobs must be at least 1");
    if (does_classification()) {
        if (recognition.classifiers.empty()) throw ConfigError("classification needs at least one classifier");
        if (recognition.folds < 2) throw ConfigError("folds must be at least 2");
        if (recognition.cv_replications < 1) throw ConfigError("cv_replications must be at least 1");
    }
    if (recognition.kmeans_restarts < 1) throw ConfigError("kmeans_restarts must be at least 1");
    if (features.ft_horizon < 1) throw ConfigError("ft_horizon must be at least 1");
    if (features.pca_components_fe < 1 || features.pca_components_ft < 1)
        throw ConfigError("PCA component counts must be positive");
    try {
        if (is_gridworld()) {
            gridworld.spec.validate();
            if (gridworld.cohort.groups.size() < 2) throw ConfigError("gridworld needs at least two groups");
            if (gridworld.cohort.agents_per_group < 1) throw ConfigError("agents_per_group must be positive");
            if (gridworld.cohort.trajectory_length < 1) throw ConfigError("trajectory_length must be positive");
            if (gridworld.cohort.reward_noise_std < 0) throw ConfigError("reward_noise_std must be nonnegative");
            auto in_grid = [&](GridCell c) {
                return c.row >= 0 && c.row < gridworld.spec.height && c.col >= 0 && c.col < gridworld.spec.width;
            };
            if (gridworld.start && !in_grid(*gridworld.start)) throw ConfigError("start cell is off the grid");
            for (const auto& g : gridworld.cohort.groups) {
                if (g.destinations.empty()) throw ConfigError("every gridworld group needs a destination");
                for (const auto& d : g.destinations)
                    if (!in_grid(d.cell)) throw ConfigError("destination cell is off the grid");
            }
        } else {
            secretary.spec.validate();
            if (secretary.rules.empty()) throw ConfigError("secretary experiments need rules");
            for (const auto& r : secretary.rules) {
                if (r.count < 1) throw ConfigError("rule count must be positive");
                if (r.param_noise_std < 0) throw ConfigError("param_noise_std must be nonnegative");
                if (r.kind != RuleKind::Random && r.parameters.empty())
                    throw ConfigError("rule " + to_string(r.kind) + " needs parameters");
                for (double p : r.parameters) HeuristicRule{r.kind, p}.validate();
            }
            if (kind == ExperimentKind::SecretaryCrVsRandom) {
                bool cr = false, rnd = false;
                for (const auto& r : secretary.rules) {
                    cr = cr || r.kind == RuleKind::CR;
                    rnd = rnd || r.kind == RuleKind::Random;
                }
                if (!cr || !rnd) throw ConfigError("secretary-cr-vs-random needs a CR rule and a RANDOM rule");
            }
            if (kind == ExperimentKind::SecretaryWithinRule)
                for (const auto& r : secretary.rules)
                    if (r.parameters.size() < 2) throw ConfigError("within-rule runs need at least two parameters per rule");
            if (kind == ExperimentKind::SecretaryAcrossRules && secretary.rules.size() < 2)
                throw ConfigError("across-rule runs need at least two rules");
        }
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
}

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed)
{
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : obj.items())
        if (!ok.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& obj, const char* key, T& out)
{
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

GridCell read_cell(const json& v)
{
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
        throw ConfigError("cells are written as [row, col]");
    return {v[0].get<int>(), v[1].get<int>()};
}

json default_profile_patch(const std::string& profile)
{
    if (profile == "desk") return json::object();
    if (profile == "paper") return json{{"replications", 100}, {"gridworld", {{"agents_per_group", 200}}}};
    throw ConfigError("unknown profile: " + profile);
}

void parse_gridworld(const json& g, GridworldSettings& out)
{
    check_keys(g, "gridworld",
               {"width", "height", "p_intended", "p_stay", "p_random", "discount", "start", "agents_per_group",
                "trajectory_length", "reward_noise_std", "groups"});
    read(g, "width", out.spec.width);
    read(g, "height", out.spec.height);
    read(g, "p_intended", out.spec.p_intended);
    read(g, "p_stay", out.spec.p_stay);
    read(g, "p_random", out.spec.p_random);
    read(g, "discount", out.spec.discount);
    if (g.contains("start")) {
        const auto& s = g.at("start");
        if (s.is_string()) {
            if (s.get<std::string>() != "uniform") throw ConfigError("start must be [row, col] or \"uniform\"");
            out.start.reset();
        } else {
            out.start = read_cell(s);
        }
    }
    read(g, "agents_per_group", out.cohort.agents_per_group);
    read(g, "trajectory_length", out.cohort.trajectory_length);
    read(g, "reward_noise_std", out.cohort.reward_noise_std);
    if (g.contains("groups")) {
        out.cohort.groups.clear();
        for (const auto& grp : g.at("groups")) {
            check_keys(grp, "gridworld group", {"destinations"});
            GridWorldGroup group;
            for (const auto& d : grp.at("destinations")) {
                check_keys(d, "destination", {"cell", "reward"});
                Destination dest;
                dest.cell = read_cell(d.at("cell"));
                read(d, "reward", dest.reward);
                group.destinations.push_back(dest);
            }
            out.cohort.groups.push_back(group);
        }
    } else {
        out.cohort.groups = default_gridworld_groups();
    }
}

void parse_secretary(const json& s, SecretarySettings& out)
{
    check_keys(s, "secretary", {"num_applicants", "discount", "accept_mode", "rules"});
    read(s, "num_applicants", out.spec.num_applicants);
    read(s, "discount", out.spec.discount);
    if (s.contains("accept_mode")) {
        std::string mode = s.at("accept_mode").get<std::string>();
        if (mode == "terminal")
            out.spec.accept_mode = secretary::AcceptMode::Terminal;
        else if (mode == "self_loop")
            out.spec.accept_mode = secretary::AcceptMode::SelfLoop;
        else
            throw ConfigError("accept_mode must be \"terminal\" or \"self_loop\"");
    }
    if (s.contains("rules")) {
        for (const auto& r : s.at("rules")) {
            check_keys(r, "rule", {"rule", "parameters", "count", "param_noise_std"});
            SecretaryRuleSettings rule;
            try {
                rule.kind = rule_kind_from_string(r.at("rule").get<std::string>());
            } catch (const ValidationError& e) {
                throw ConfigError(e.what());
            } catch (const json::exception&) {
                throw ConfigError("every rule needs a \"rule\" name");
            }
            read(r, "parameters", rule.parameters);
            read(r, "count", rule.count);
            read(r, "param_noise_std", rule.param_noise_std);
            out.rules.push_back(rule);
        }
    }
}

void parse_features(const json& f, FeatureSettings& out)
{
    check_keys(f, "features", {"ft_normalization", "ft_horizon", "pca_components_fe", "pca_components_ft", "fe_discount"});
    if (f.contains("ft_normalization")) {
        std::string n = f.at("ft_normalization").get<std::string>();
        if (n == "per_agent")
            out.ft_normalization = FtNormalization::PerAgent;
        else if (n == "global")
            out.ft_normalization = FtNormalization::Global;
        else
            throw ConfigError("ft_normalization must be \"per_agent\" or \"global\"");
    }
    read(f, "ft_horizon", out.ft_horizon);
    read(f, "pca_components_fe", out.pca_components_fe);
    read(f, "pca_components_ft", out.pca_components_ft);
    if (f.contains("fe_discount")) out.fe_discount = f.at("fe_discount").get<double>();
}

void parse_irl(const json& j, InferenceOptions& out, double& kappa, double& sigma)
{
    check_keys(j, "irl", {"gp_kappa", "gp_sigma", "gpirl", "mlirl", "proj"});
    read(j, "gp_kappa", kappa);
    read(j, "gp_sigma", sigma);
    if (j.contains("gpirl")) {
        const auto& g = j.at("gpirl");
        check_keys(g, "irl.gpirl",
                   {"beta", "tol", "max_newton", "learn_hyper", "max_outer", "outer_tol", "hyper_step"});
        read(g, "beta", out.gpirl.beta);
        read(g, "tol", out.gpirl.tol);
        read(g, "max_newton", out.gpirl.max_newton);
        read(g, "learn_hyper", out.gpirl.learn_hyper);
        read(g, "max_outer", out.gpirl.max_outer);
        read(g, "outer_tol", out.gpirl.outer_tol);
        read(g, "hyper_step", out.gpirl.hyper_step);
    }
    if (j.contains("mlirl")) {
        const auto& m = j.at("mlirl");
        check_keys(m, "irl.mlirl", {"temperature", "step_size", "iters", "backups", "prior_std", "layout"});
        read(m, "temperature", out.mlirl.temperature);
        read(m, "step_size", out.mlirl.step_size);
        read(m, "iters", out.mlirl.iters);
        read(m, "backups", out.mlirl.backups);
        read(m, "prior_std", out.mlirl_prior.std);
        if (m.contains("layout")) {
            std::string l = m.at("layout").get<std::string>();
            if (l == "per_state")
                out.mlirl.layout = RewardLayout::PerState;
            else if (l == "per_state_action")
                out.mlirl.layout = RewardLayout::PerStateAction;
            else
                throw ConfigError("irl.mlirl.layout must be \"per_state\" or \"per_state_action\"");
        }
    }
    if (j.contains("proj")) {
        const auto& p = j.at("proj");
        check_keys(p, "irl.proj", {"epsilon", "max_iters"});
        read(p, "epsilon", out.proj.epsilon);
        read(p, "max_iters", out.proj.max_iters);
    }
}

void parse_recognition(const json& r, RecognitionSettings& out)
{
    check_keys(r, "recognition",
               {"classifiers", "folds", "cv_replications", "kmeans_restarts", "knn_k", "lr_lambda", "lr_rate",
                "lr_iters", "svm_lambda", "svm_iters", "fda_reg"});
    if (r.contains("classifiers")) {
        out.classifiers.clear();
        for (const auto& c : r.at("classifiers")) out.classifiers.push_back(classifier_kind_from_string(c.get<std::string>()));
    }
    read(r, "folds", out.folds);
    read(r, "cv_replications", out.cv_replications);
    read(r, "kmeans_restarts", out.kmeans_restarts);
    read(r, "knn_k", out.hyper.knn_k);
    read(r, "lr_lambda", out.hyper.lr_lambda);
    read(r, "lr_rate", out.hyper.lr_rate);
    read(r, "lr_iters", out.hyper.lr_iters);
    read(r, "svm_lambda", out.hyper.svm_lambda);
    read(r, "svm_iters", out.hyper.svm_iters);
    read(r, "fda_reg", out.hyper.fda_reg);
}

} // namespace

ExperimentConfig parse_config(json doc, const ConfigOverrides& overrides)
{
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    check_keys(doc, "config",
               {"schema_version", "name", "experiment", "profile", "profiles", "seed", "replications", "sweep",
                "methods", "output_dir", "jobs", "gridworld", "secretary", "features", "irl", "recognition"});
    if (!doc.contains("schema_version")) throw ConfigError("config needs a schema_version");
    if (!doc.contains("experiment")) throw ConfigError("config needs an experiment kind");

    std::string profile = overrides.profile.value_or(doc.value("profile", std::string("desk")));
    json patch;
    if (doc.contains("profiles") && doc.at("profiles").contains(profile))
        patch = doc.at("profiles").at(profile);
    else
        patch = default_profile_patch(profile);
    doc.erase("profiles");
    doc.merge_patch(patch);
    doc["profile"] = profile;
    if (overrides.seed) doc["seed"] = *overrides.seed;
    if (overrides.output_dir) doc["output_dir"] = *overrides.output_dir;
    if (overrides.jobs) doc["jobs"] = *overrides.jobs;

    ExperimentConfig cfg;
    try {
        read(doc, "schema_version", cfg.schema_version);
        cfg.kind = experiment_kind_from_string(doc.at("experiment").get<std::string>());
        cfg.name = doc.value("name", to_string(cfg.kind));
        cfg.profile = profile;
        read(doc, "seed", cfg.seed);
        read(doc, "replications", cfg.replications);
        read(doc, "sweep", cfg.sweep);
        if (doc.contains("methods")) {
            for (const auto& m : doc.at("methods")) cfg.methods.push_back(method_from_string(m.get<std::string>()));
        }
        read(doc, "output_dir", cfg.output_dir);
        read(doc, "jobs", cfg.jobs);
        if (cfg.is_gridworld()) {
            parse_gridworld(doc.value("gridworld", json::object()), cfg.gridworld);
        } else {
            parse_secretary(doc.value("secretary", json::object()), cfg.secretary);
            cfg.features.ft_horizon = cfg.secretary.spec.num_applicants;
        }
        parse_features(doc.value("features", json::object()), cfg.features);
        double kappa = 1.0, sigma = 0.1;
        parse_irl(doc.value("irl", json::object()), cfg.irl, kappa, sigma);
        const int na = cfg.is_gridworld() ? gridworld::kNumActions : secretary::kNumActions;
        cfg.irl.gp_init = GpHyper::uniform(na, kappa, sigma);
        cfg.irl.gp_init.validate();
        parse_recognition(doc.value("recognition", json::object()), cfg.recognition);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    cfg.resolved = std::move(doc);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(std::move(doc), overrides);
}

std::string config_hash(const ExperimentConfig& config)
{
    json doc = config.resolved;
    doc.erase("output_dir");
    doc.erase("jobs");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_tag(doc.dump())));
    return buf;
}

} // namespace bpr
