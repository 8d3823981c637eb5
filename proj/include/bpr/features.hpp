#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bpr/agents.hpp"

namespace bpr {

enum class FeatureSource { FT, FE, PCA, Reward };

std::string to_string(FeatureSource source);

struct FeatureVector {
    Eigen::VectorXd values;
    FeatureSource source = FeatureSource::FE;
};

/// phi : S -> [0,1]^d
class BasisFunction {
public:
    BasisFunction(int dimension, std::function<Eigen::VectorXd(StateIndex)> map);

    /// phi(s) = e_s, d = |S|.
    static BasisFunction indicator(int num_states);

    int dimension() const { return dimension_; }
    /// Throws ValidationError if the output leaves [0,1]^d or has the wrong length.
    Eigen::VectorXd operator()(StateIndex s) const;
    /// |S| x d matrix of phi(s) rows.
    Eigen::MatrixXd matrix(int num_states) const;

private:
    int dimension_;
    std::function<Eigen::VectorXd(StateIndex)> map_;
};

enum class FtNormalization {
    PerAgent, // min-max per component over the agent's own trajectories
    Global,   // states scaled by 1/(|S|-1), actions by 1/(|A|-1)
};

struct FeatureTrajectoryOptions {
    int horizon = 6;
    FtNormalization normalization = FtNormalization::PerAgent;
    int num_states = 0;  // required for Global
    int num_actions = 0; // required for Global
};

/// [s_1, a_1, ..., s_H, a_H] per trajectory (short ones padded with their last
/// pair), normalized, then averaged over the observation set.
FeatureVector feature_trajectory(const ObservationSet& obs, const FeatureTrajectoryOptions& opts);

/// (1/|O|) sum_j sum_t gamma^t phi(s_t), t = 0 at each trajectory's first state.
FeatureVector feature_expectation(const ObservationSet& obs, const BasisFunction& basis,
                                  double discount);

struct PcaResult {
    std::vector<FeatureVector> projected;
    Eigen::MatrixXd components;           // d x c, columns sorted by eigenvalue
    Eigen::VectorXd eigenvalues;          // top c, descending
    Eigen::VectorXd explained_variance;   // ratios of total variance
    Eigen::VectorXd mean;
};

/// Mean-centred projection onto the top-c covariance eigenvectors. Each
/// eigenvector is oriented so its largest-magnitude coordinate is positive.
PcaResult pca_project(const std::vector<FeatureVector>& vectors, int num_components);

/// One row per agent, label column last ("" when unlabeled).
void write_feature_csv(std::ostream& out, const std::vector<FeatureVector>& rows,
                       const std::vector<std::optional<int>>& labels, const std::string& header_prefix = "f");
void write_feature_csv(std::ostream& out, const std::vector<FeatureVector>& rows,
                       const std::vector<std::optional<int>>& labels, const std::vector<std::string>& columns);

struct FeatureTable {
    Eigen::MatrixXd rows;
    std::vector<std::optional<int>> labels;
};

FeatureTable read_feature_csv(std::istream& in);

/// Stacks feature vectors into an n x d matrix; lengths must agree.
Eigen::MatrixXd stack_rows(const std::vector<FeatureVector>& vectors);

} // namespace bpr
