#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bpr/agents.hpp"
#include "bpr/environments.hpp"
#include "bpr/features.hpp"
#include "bpr/irl.hpp"
#include "bpr/recognition.hpp"

namespace bpr {

inline constexpr int kConfigSchemaVersion = 1;

enum class ExperimentKind {
    GridworldCluster,
    GridworldClassify,
    SecretaryAcrossRules,
    SecretaryWithinRule,
    SecretaryCrVsRandom,
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

enum class Method { FT, FE, PcaFE, PcaFT, PROJ, MLIRL, GPIRL };

std::string to_string(Method method);
Method method_from_string(const std::string& name);
bool is_irl(Method method);
IrlEngine engine_of(Method method);

struct GridworldSettings {
    GridWorldSpec spec;
    std::optional<GridCell> start = GridCell{0, 0}; // nullopt: uniform over all cells
    GridWorldCohortSpec cohort;
};

struct SecretaryRuleSettings {
    RuleKind kind = RuleKind::CR;
    std::vector<double> parameters;
    int count = 100; // agents per parameter value
    double param_noise_std = 1.0;
};

struct SecretarySettings {
    SecretarySpec spec;
    std::vector<SecretaryRuleSettings> rules;
};

struct FeatureSettings {
    FtNormalization ft_normalization = FtNormalization::PerAgent;
    int ft_horizon = 6;
    int pca_components_fe = 10;
    int pca_components_ft = 2;
    std::optional<double> fe_discount; // defaults to the environment's discount
};

struct RecognitionSettings {
    std::vector<ClassifierKind> classifiers;
    int folds = 10;
    int cv_replications = 1;
    int kmeans_restarts = 10;
    ClassifierHyper hyper;
};

struct ExperimentConfig {
    int schema_version = kConfigSchemaVersion;
    std::string name;
    ExperimentKind kind = ExperimentKind::GridworldCluster;
    std::string profile = "desk";
    std::uint64_t seed = 7;
    int replications = 10;
    std::vector<int> sweep;
    std::vector<Method> methods;
    GridworldSettings gridworld;
    SecretarySettings secretary;
    FeatureSettings features;
    InferenceOptions irl;
    RecognitionSettings recognition;
    std::string output_dir = "out";
    int jobs = 1;
    /// Fully resolved document (profile applied, CLI overrides included).
    nlohmann::json resolved;

    bool is_gridworld() const;
    bool does_clustering() const;
    bool does_classification() const;
    /// "O_n" for GridWorld (trajectories per agent), "H" for the secretary.
    std::string sweep_name() const;
    void validate() const;
};

struct ConfigOverrides {
    std::optional<std::string> profile;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    std::optional<int> jobs;
};

/// Applies the selected profile patch, then the overrides, then parses.
/// Throws ConfigError on any schema problem.
ExperimentConfig parse_config(nlohmann::json doc, const ConfigOverrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// FNV-1a over the compact dump of the resolved document, as 16 hex digits.
/// output_dir and jobs are left out: they do not change any result.
std::string config_hash(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Cells

struct CellKey {
    std::string group; // "all", or the rule name for within-rule runs
    int sweep = 0;
    int replication = 0;

    std::string directory_name() const;
    auto operator<=>(const CellKey&) const = default;
};

/// Every (group, sweep point, replication) in sorted order.
std::vector<CellKey> enumerate_cells(const ExperimentConfig& config);

/// Rule groups of one cell's cohort and their ground-truth labels.
struct SecretaryCohortPlan {
    std::vector<RuleGroup> groups;
    std::vector<int> labels; // per group
    int num_classes = 0;
};
SecretaryCohortPlan secretary_plan(const ExperimentConfig& config, const std::string& group);

std::vector<AgentRecord> simulate_cell(const ExperimentConfig& config, const CellKey& cell);

/// Shared reward-free model and kernel coordinates for the configured environment.
Mdp experiment_mdp(const ExperimentConfig& config);
Eigen::MatrixXd experiment_coordinates(const ExperimentConfig& config);

std::vector<FeatureVector> featurize(const ExperimentConfig& config, Method method,
                                     const std::vector<AgentRecord>& cohort);

std::string feature_file_name(Method method);

struct MethodResult {
    Method method = Method::FE;
    std::string metric;
    std::vector<double> values; // one per replication, or per CV fold
};

struct CellOutcome {
    CellKey key;
    std::vector<MethodResult> results;
    std::vector<std::pair<Method, std::string>> failures;
};

// ---------------------------------------------------------------------------
// Stages. Each stage reads the previous stage's files under
// <output_dir>/cells/<cell>/ and writes its own.

enum class Stage { Simulate, Featurize, Irl, Recognize, Report };

struct StageSummary {
    std::vector<std::string> failures; // "<cell>/<method>: <message>"
};

StageSummary run_stage(const ExperimentConfig& config, Stage stage, int jobs);

// ---------------------------------------------------------------------------
// Report

struct MetricRow {
    std::string experiment;
    std::string method;
    int sweep = 0;
    std::string metric;
    double mean = 0.0;
    double std = 0.0;
    int replications = 0; // 0 marks a failed row
};

struct ExperimentReport {
    std::string experiment;
    ExperimentKind kind = ExperimentKind::GridworldCluster;
    std::string sweep_name;
    std::vector<std::string> methods;
    std::vector<MetricRow> rows;
    std::vector<std::string> failures;
    nlohmann::json provenance;
};

/// Aggregates cell outcomes: clustering metrics average over replications,
/// CV accuracies pool all folds of all replications.
ExperimentReport build_report(const ExperimentConfig& config, const std::vector<CellOutcome>& outcomes);

/// Figure index used in plot-data file names (fig<k>_...).
int figure_number(ExperimentKind kind);

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);

/// Per-figure series files. Returns the files written; writes nothing and
/// warns on stderr when the report has no methods.
std::vector<std::filesystem::path> emit_plot_data(const ExperimentReport& report,
                                                  const std::filesystem::path& dir);

/// PCA scatter of each method's vectors for one cell: c principal components
/// plus the label column.
std::vector<std::filesystem::path> emit_projections(const ExperimentConfig& config, const CellKey& cell,
                                                    int components, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Secretary optimum

struct DpOracleResult {
    int cutoff = 1;  // h* : accept the first candidate at position >= h*
    int skipped = 0; // k = h* - 1
    double success = 0.0;
};

/// success(k) = (k/X) sum_{j=k+1}^{X} 1/(j-1), success(0) = 1/X; ties go to the smaller k.
DpOracleResult secretary_dp_oracle(int num_applicants);

} // namespace bpr
