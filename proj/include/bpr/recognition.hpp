#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bpr {

struct Dataset {
    Eigen::MatrixXd rows;
    std::optional<std::vector<int>> labels; // 0..K-1 when present

    void validate() const;
    int num_classes() const;
};

struct ClusterResult {
    std::vector<int> assignments;
    Eigen::MatrixXd centroids; // k x d
    double inertia = 0.0;
    std::vector<double> inertia_trace; // per Lloyd assignment step of the winning restart
    int iterations = 0;
};

/// Best-of-restarts Lloyd iteration with k-means++ seeding. Restart r uses a
/// stream derived from (seed, r).
ClusterResult kmeans(const Dataset& data, int k, int restarts, std::uint64_t seed, int max_iters = 300);

/// Rows: distinct values of `a` (sorted); columns: distinct values of `b`.
Eigen::MatrixXi contingency_matrix(std::span<const int> a, std::span<const int> b);

/// I(A;B) / sqrt(H(A) H(B)), natural logs; 0 when either entropy is 0.
double nmi(std::span<const int> labels_a, std::span<const int> labels_b);

/// Best agreement fraction over one-to-one cluster/class matchings
/// (exhaustive search, at most 8 groups per side).
double clustering_accuracy(std::span<const int> predicted, std::span<const int> truth);

enum class ClassifierKind { SVM, KNN, FDA, LR };

std::string to_string(ClassifierKind kind);
ClassifierKind classifier_kind_from_string(const std::string& name);

struct ClassifierHyper {
    int knn_k = 5;
    double lr_lambda = 1e-3;
    double lr_rate = 0.5;
    int lr_iters = 300;
    double svm_lambda = 1e-2;
    int svm_iters = 200;
    double fda_reg = 1e-6; // ridge, relative to trace(S_w)/d
};

/// Affine scorer on standardized inputs: w . ((x - mean) / scale) + b.
struct LinearModel {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;
    Eigen::VectorXd w;
    double b = 0.0;

    double score(const Eigen::VectorXd& x) const;
};

struct Classifier {
    ClassifierKind kind = ClassifierKind::KNN;
    int num_classes = 0;
    // Binary problems use one model (class 1 vs 0); otherwise one per class.
    std::vector<LinearModel> models;
    // KNN memory.
    Eigen::MatrixXd train_rows;
    std::vector<int> train_labels;
    int k = 5;
};

Classifier train_classifier(ClassifierKind kind, const Dataset& train, const ClassifierHyper& hyper = {});
std::vector<int> predict(const Classifier& clf, const Eigen::MatrixXd& rows);

/// Mean L2-penalized logistic loss over standardized rows, with labels in {0,1}.
/// Fills the gradient w.r.t. (w, b) when requested.
double logistic_loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                     double lambda, Eigen::VectorXd* grad_w = nullptr, double* grad_b = nullptr);

struct CvResult {
    double mean = 0.0;
    double std = 0.0;
    std::vector<double> fold_accuracies;
};

/// Fold id per row. Each class is shuffled and dealt round-robin, continuing
/// the deal across classes so fold sizes stay balanced.
std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed);

/// Stratified k-fold CV repeated `replications` times with reshuffled folds.
/// mean/std are over all (replication, fold) accuracies.
CvResult cross_validate(const Dataset& data, ClassifierKind kind, const ClassifierHyper& hyper, int folds,
                        int replications, std::uint64_t seed);

} // namespace bpr
