#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include "bpr/error.hpp"
#include "bpr/harness.hpp"

namespace bpr {

namespace fs = std::filesystem;
using nlohmann::json;

int figure_number(ExperimentKind kind)
{
    switch (kind) {
    case ExperimentKind::GridworldCluster: return 1;
    case ExperimentKind::GridworldClassify: return 2;
    case ExperimentKind::SecretaryWithinRule: return 3;
    case ExperimentKind::SecretaryCrVsRandom: return 4;
    case ExperimentKind::SecretaryAcrossRules: return 5;
    }
    return 0;
}

namespace {

std::string experiment_id(const ExperimentConfig& config, const std::string& group)
{
    return group == "all" ? config.name : config.name + ":" + group;
}

std::vector<std::string> expected_metrics(const ExperimentConfig& config)
{
    std::vector<std::string> out;
    if (config.does_clustering()) {
        out.push_back("nmi");
        out.push_back("accuracy");
    }
    if (config.does_classification())
        for (auto c : config.recognition.classifiers) out.push_back("cv_accuracy_" + to_string(c));
    return out;
}

std::string fmt(double v)
{
    if (!std::isfinite(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace

ExperimentReport build_report(const ExperimentConfig& config, const std::vector<CellOutcome>& outcomes)
{
    ExperimentReport report;
    report.experiment = config.name;
    report.kind = config.kind;
    report.sweep_name = config.sweep_name();
    for (Method m : config.methods) report.methods.push_back(to_string(m));

    struct Acc {
        std::vector<double> values;
        int replications = 0;
    };
    using Key = std::tuple<std::string, std::string, std::string, int>; // experiment, method, metric, sweep
    std::map<Key, Acc> acc;
    std::set<std::string> groups;
    for (const auto& o : outcomes) {
        groups.insert(o.key.group);
        for (const auto& r : o.results) {
            auto& a = acc[{experiment_id(config, o.key.group), to_string(r.method), r.metric, o.key.sweep}];
            a.values.insert(a.values.end(), r.values.begin(), r.values.end());
            ++a.replications;
        }
        for (const auto& [m, err] : o.failures)
            report.failures.push_back(o.key.directory_name() + "/" + to_string(m) + ": " + err);
    }
    std::sort(report.failures.begin(), report.failures.end());

    // Every configured (method, metric, sweep) appears, even when all of its cells failed.
    for (const auto& g : groups)
        for (Method m : config.methods)
            for (const auto& metric : expected_metrics(config))
                for (int v : config.sweep) acc[{experiment_id(config, g), to_string(m), metric, v}];

    for (const auto& [key, a] : acc) {
        MetricRow row;
        std::tie(row.experiment, row.method, row.metric, row.sweep) = key;
        row.replications = a.replications;
        if (a.values.empty()) {
            row.mean = row.std = std::nan("");
        } else {
            const double n = static_cast<double>(a.values.size());
            row.mean = std::accumulate(a.values.begin(), a.values.end(), 0.0) / n;
            double ss = 0.0;
            for (double v : a.values) ss += (v - row.mean) * (v - row.mean);
            row.std = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
        }
        report.rows.push_back(row);
    }

    json cfg = config.resolved;
    cfg.erase("output_dir");
    cfg.erase("jobs");
    report.provenance = {
        {"config_hash", config_hash(config)},
        {"experiment", to_string(config.kind)},
        {"name", config.name},
        {"profile", config.profile},
        {"seed", config.seed},
        {"schema_version", config.schema_version},
        {"sweep_variable", config.sweep_name()},
        {"software", {{"bpr", "1.0.0"}, {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION)}}},
        {"methods", report.methods},
        {"config", cfg},
    };
    return report;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows)
{
    out << "experiment,method,sweep,metric,mean,std,replications\n";
    for (const auto& r : rows)
        out << r.experiment << ',' << r.method << ',' << r.sweep << ',' << r.metric << ',' << fmt(r.mean) << ','
            << fmt(r.std) << ',' << r.replications << '\n';
}

std::vector<fs::path> emit_plot_data(const ExperimentReport& report, const fs::path& dir)
{
    std::vector<fs::path> written;
    if (report.methods.empty()) {
        std::cerr << "warning: report has no methods; no plot data written\n";
        return written;
    }
    const int fig = figure_number(report.kind);
    // experiment id -> metric -> sweep -> method -> mean
    std::map<std::string, std::map<std::string, std::map<int, std::map<std::string, double>>>> series;
    for (const auto& r : report.rows) series[r.experiment][r.metric][r.sweep][r.method] = r.mean;

    fs::create_directories(dir);
    for (const auto& [exp, metrics] : series) {
        std::string suffix;
        if (auto colon = exp.find(':'); colon != std::string::npos) suffix = "_" + exp.substr(colon + 1);
        for (const auto& [metric, by_sweep] : metrics) {
            std::string name = metric.rfind("cv_accuracy_", 0) == 0 ? metric.substr(12) : metric;
            fs::path path = dir / ("fig" + std::to_string(fig) + "_" + name + suffix + ".csv");
            std::ofstream out(path, std::ios::binary);
            out << report.sweep_name;
            for (const auto& m : report.methods) out << ',' << m;
            out << '\n';
            for (const auto& [sweep, by_method] : by_sweep) {
                out << sweep;
                for (const auto& m : report.methods) {
                    auto it = by_method.find(m);
                    out << ',' << (it == by_method.end() ? std::string("nan") : fmt(it->second));
                }
                out << '\n';
            }
            written.push_back(path);
        }
    }
    return written;
}

DpOracleResult secretary_dp_oracle(int num_applicants)
{
    if (num_applicants < 2) throw ValidationError("secretary problem needs at least two applicants");
    const int x = num_applicants;
    DpOracleResult best;
    best.skipped = 0;
    best.success = 1.0 / x;
    // success(k) for k >= 1, via the tail sum of 1/(j-1).
    double tail = 0.0;
    std::vector<double> tails(static_cast<std::size_t>(x) + 1, 0.0);
    for (int k = x - 1; k >= 1; --k) {
        tail += 1.0 / k; // j = k+1 contributes 1/(j-1) = 1/k
        tails[k] = tail;
    }
    for (int k = 1; k < x; ++k) {
        double s = static_cast<double>(k) / x * tails[k];
        if (s > best.success) {
            best.success = s;
            best.skipped = k;
        }
    }
    best.cutoff = best.skipped + 1;
    return best;
}

} // namespace bpr
