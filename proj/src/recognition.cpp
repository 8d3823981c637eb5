#include "bpr/recognition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "bpr/error.hpp"
#include "bpr/random.hpp"

namespace bpr {

namespace {

std::vector<int> distinct_sorted(std::span<const int> v)
{
    std::vector<int> out(v.begin(), v.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

int index_in(const std::vector<int>& sorted, int value)
{
    return static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), value) - sorted.begin());
}

} // namespace

void Dataset::validate() const
{
    if (rows.rows() == 0) throw ValidationError("dataset has no rows");
    if (!rows.allFinite()) throw ValidationError("dataset contains non-finite values");
    if (labels) {
        if (static_cast<Eigen::Index>(labels->size()) != rows.rows())
            throw ValidationError("label count does not match row count");
        for (int l : *labels)
            if (l < 0) throw ValidationError("labels must be non-negative");
    }
}

int Dataset::num_classes() const
{
    if (!labels || labels->empty()) return 0;
    return *std::max_element(labels->begin(), labels->end()) + 1;
}

// ---------------------------------------------------------------------------
// k-means

namespace {

struct LloydRun {
    std::vector<int> assignments;
    Eigen::MatrixXd centroids;
    std::vector<double> trace;
    int iterations = 0;
};

Eigen::MatrixXd kmeanspp_seed(const Eigen::MatrixXd& x, int k, Rng& rng)
{
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd c(k, x.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    c.row(0) = x.row(first(rng));
    Eigen::VectorXd d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = (x.row(i) - c.row(0)).squaredNorm();
    for (int j = 1; j < k; ++j) {
        double total = d2.sum();
        Eigen::Index pick = 0;
        if (total <= 0.0) {
            pick = first(rng);
        } else {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng), acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > target) {
                    pick = i;
                    break;
                }
            }
        }
        c.row(j) = x.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (x.row(i) - c.row(j)).squaredNorm());
    }
    return c;
}

LloydRun lloyd(const Eigen::MatrixXd& x, Eigen::MatrixXd c, int max_iters)
{
    const Eigen::Index n = x.rows();
    const int k = static_cast<int>(c.rows());
    LloydRun run;
    run.assignments.assign(static_cast<std::size_t>(n), -1);
    for (int it = 0; it < max_iters; ++it) {
        bool changed = false;
        double inertia = 0.0;
        Eigen::VectorXd dist(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int j = 0; j < k; ++j) {
                double d = (x.row(i) - c.row(j)).squaredNorm();
                if (d < bd) {
                    bd = d;
                    best = j;
                }
            }
            if (run.assignments[i] != best) changed = true;
            run.assignments[i] = best;
            dist[i] = bd;
            inertia += bd;
        }
        run.trace.push_back(inertia);
        run.iterations = it + 1;
        if (!changed && it > 0) break;

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
        std::vector<int> counts(k, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(run.assignments[i]) += x.row(i);
            ++counts[run.assignments[i]];
        }
        for (int j = 0; j < k; ++j) {
            if (counts[j] > 0) {
                c.row(j) = sums.row(j) / counts[j];
                continue;
            }
            // Empty cluster: move it onto the point farthest from its centroid.
            Eigen::Index far = 0;
            dist.maxCoeff(&far);
            c.row(j) = x.row(far);
            dist[far] = 0.0;
            run.assignments[far] = j;
        }
    }
    run.centroids = std::move(c);
    return run;
}

} // namespace

ClusterResult kmeans(const Dataset& data, int k, int restarts, std::uint64_t seed, int max_iters)
{
    data.validate();
    if (k < 1) throw ConfigError("k must be at least 1");
    if (k > data.rows.rows()) throw ValidationError("k exceeds the number of rows");
    if (restarts < 1) throw ConfigError("restarts must be at least 1");

    ClusterResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(r)}));
        LloydRun run = lloyd(data.rows, kmeanspp_seed(data.rows, k, rng), max_iters);
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < data.rows.rows(); ++i)
            inertia += (data.rows.row(i) - run.centroids.row(run.assignments[i])).squaredNorm();
        if (inertia < best.inertia) {
            best.assignments = std::move(run.assignments);
            best.centroids = std::move(run.centroids);
            best.inertia = inertia;
            best.inertia_trace = std::move(run.trace);
            best.iterations = run.iterations;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Clustering metrics

Eigen::MatrixXi contingency_matrix(std::span<const int> a, std::span<const int> b)
{
    if (a.size() != b.size()) throw ValidationError("label vectors differ in length");
    auto ua = distinct_sorted(a), ub = distinct_sorted(b);
    Eigen::MatrixXi m = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(ua.size()), static_cast<Eigen::Index>(ub.size()));
    for (std::size_t i = 0; i < a.size(); ++i) ++m(index_in(ua, a[i]), index_in(ub, b[i]));
    return m;
}

double nmi(std::span<const int> labels_a, std::span<const int> labels_b)
{
    if (labels_a.empty()) throw ValidationError("empty label vectors");
    Eigen::MatrixXi m = contingency_matrix(labels_a, labels_b);
    const double n = static_cast<double>(labels_a.size());
    Eigen::VectorXd pa = m.rowwise().sum().cast<double>() / n;
    Eigen::VectorXd pb = m.colwise().sum().transpose().cast<double>() / n;
    auto entropy = [](const Eigen::VectorXd& p) {
        double h = 0.0;
        for (double v : p)
            if (v > 0.0) h -= v * std::log(v);
        return h;
    };
    double ha = entropy(pa), hb = entropy(pb);
    if (ha <= 0.0 || hb <= 0.0) return 0.0;
    double mi = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (m(i, j) == 0) continue;
            double pij = m(i, j) / n;
            mi += pij * std::log(pij / (pa[i] * pb[j]));
        }
    return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

double clustering_accuracy(std::span<const int> predicted, std::span<const int> truth)
{
    if (predicted.empty()) throw ValidationError("empty label vectors");
    Eigen::MatrixXi m = contingency_matrix(predicted, truth);
    const int size = static_cast<int>(std::max(m.rows(), m.cols()));
    if (size > 8) throw ConfigError("clustering_accuracy supports at most 8 groups");
    Eigen::MatrixXi sq = Eigen::MatrixXi::Zero(size, size);
    sq.topLeftCorner(m.rows(), m.cols()) = m;
    std::vector<int> perm(static_cast<std::size_t>(size));
    std::iota(perm.begin(), perm.end(), 0);
    int best = 0;
    do {
        int hit = 0;
        for (int i = 0; i < size; ++i) hit += sq(i, perm[i]);
        best = std::max(best, hit);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(predicted.size());
}

// ---------------------------------------------------------------------------
// Classifiers

std::string to_string(ClassifierKind kind)
{
    switch (kind) {
    case ClassifierKind::SVM: return "SVM";
    case ClassifierKind::KNN: return "KNN";
    case ClassifierKind::FDA: return "FDA";
    case ClassifierKind::LR: return "LR";
    }
    return "?";
}

ClassifierKind classifier_kind_from_string(const std::string& name)
{
    if (name == "SVM") return ClassifierKind::SVM;
    if (name == "KNN") return ClassifierKind::KNN;
    if (name == "FDA") return ClassifierKind::FDA;
    if (name == "LR") return ClassifierKind::LR;
    throw ConfigError("unknown classifier: " + name);
}

double LinearModel::score(const Eigen::VectorXd& x) const
{
    return w.dot(((x - mean).array() / scale.array()).matrix()) + b;
}

namespace {

void fit_standardizer(const Eigen::MatrixXd& x, LinearModel& m)
{
    m.mean = x.colwise().mean().transpose();
    Eigen::MatrixXd centered = x.rowwise() - m.mean.transpose();
    m.scale = (centered.colwise().squaredNorm() / static_cast<double>(x.rows())).transpose().cwiseSqrt();
    for (Eigen::Index j = 0; j < m.scale.size(); ++j)
        if (m.scale[j] < 1e-12) m.scale[j] = 1.0;
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& x, const LinearModel& m)
{
    Eigen::MatrixXd z = x.rowwise() - m.mean.transpose();
    return z.array().rowwise() / m.scale.transpose().array();
}

LinearModel train_lr(const Eigen::MatrixXd& x, const Eigen::VectorXd& y01, const ClassifierHyper& hp)
{
    LinearModel m;
    fit_standardizer(x, m);
    Eigen::MatrixXd z = standardize(x, m);
    m.w = Eigen::VectorXd::Zero(x.cols());
    m.b = 0.0;
    Eigen::VectorXd gw;
    double gb = 0.0;
    for (int it = 0; it < hp.lr_iters; ++it) {
        logistic_loss(z, y01, m.w, m.b, hp.lr_lambda, &gw, &gb);
        m.w -= hp.lr_rate * gw;
        m.b -= hp.lr_rate * gb;
    }
    return m;
}

LinearModel train_svm(const Eigen::MatrixXd& x, const Eigen::VectorXd& y01, const ClassifierHyper& hp)
{
    LinearModel m;
    fit_standardizer(x, m);
    Eigen::MatrixXd z = standardize(x, m);
    const Eigen::Index n = z.rows(), d = z.cols();
    Eigen::VectorXd y = 2.0 * y01.array() - 1.0;
    // Bias folded into a constant regularized feature.
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
    const double radius = 1.0 / std::sqrt(hp.svm_lambda);
    for (int t = 1; t <= hp.svm_iters; ++t) {
        Eigen::VectorXd margins = y.array() * ((z * w.head(d)).array() + w[d]);
        Eigen::VectorXd sub = Eigen::VectorXd::Zero(d + 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (margins[i] >= 1.0) continue;
            sub.head(d) += y[i] * z.row(i).transpose();
            sub[d] += y[i];
        }
        double eta = 1.0 / (hp.svm_lambda * t);
        w = (1.0 - eta * hp.svm_lambda) * w + (eta / static_cast<double>(n)) * sub;
        double norm = w.norm();
        if (norm > radius) w *= radius / norm;
    }
    m.w = w.head(d);
    m.b = w[d];
    return m;
}

LinearModel train_fda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y01, const ClassifierHyper& hp)
{
    const Eigen::Index d = x.cols();
    Eigen::VectorXd m0 = Eigen::VectorXd::Zero(d), m1 = Eigen::VectorXd::Zero(d);
    double n0 = 0, n1 = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (y01[i] > 0.5) {
            m1 += x.row(i).transpose();
            ++n1;
        } else {
            m0 += x.row(i).transpose();
            ++n0;
        }
    }
    m0 /= n0;
    m1 /= n1;
    Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Eigen::VectorXd c = x.row(i).transpose() - (y01[i] > 0.5 ? m1 : m0);
        sw.noalias() += c * c.transpose();
    }
    double ridge = hp.fda_reg * sw.trace() / static_cast<double>(d);
    if (ridge <= 0.0) ridge = 1e-12;
    sw.diagonal().array() += ridge;
    Eigen::VectorXd w = sw.ldlt().solve(m1 - m0);

    LinearModel m;
    m.mean = Eigen::VectorXd::Zero(d);
    m.scale = Eigen::VectorXd::Ones(d);
    double p0 = w.dot(m0), p1 = w.dot(m1);
    double half = 0.5 * (p1 - p0);
    if (!(std::abs(half) > 0.0) || !w.allFinite()) {
        m.w = Eigen::VectorXd::Zero(d);
        m.b = n1 >= n0 ? 1.0 : -1.0;
        return m;
    }
    // Scaled so the class means project to -1 and +1.
    m.w = w / half;
    m.b = -0.5 * (p0 + p1) / half;
    return m;
}

LinearModel train_binary(ClassifierKind kind, const Eigen::MatrixXd& x, const Eigen::VectorXd& y01,
                         const ClassifierHyper& hp)
{
    switch (kind) {
    case ClassifierKind::LR: return train_lr(x, y01, hp);
    case ClassifierKind::SVM: return train_svm(x, y01, hp);
    case ClassifierKind::FDA: return train_fda(x, y01, hp);
    case ClassifierKind::KNN: break;
    }
    throw ConfigError("not a linear classifier");
}

} // namespace

double logistic_loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                     double lambda, Eigen::VectorXd* grad_w, double* grad_b)
{
    const double n = static_cast<double>(x.rows());
    Eigen::VectorXd s = (x * w).array() + b;
    double loss = 0.0;
    Eigen::VectorXd resid(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        // log(1 + e^s) - y s, evaluated stably.
        double si = s[i];
        double softplus = si > 0 ? si + std::log1p(std::exp(-si)) : std::log1p(std::exp(si));
        loss += softplus - y[i] * si;
        double p = si >= 0 ? 1.0 / (1.0 + std::exp(-si)) : std::exp(si) / (1.0 + std::exp(si));
        resid[i] = p - y[i];
    }
    loss = loss / n + 0.5 * lambda * w.squaredNorm();
    if (grad_w) *grad_w = x.transpose() * resid / n + lambda * w;
    if (grad_b) *grad_b = resid.sum() / n;
    return loss;
}

Classifier train_classifier(ClassifierKind kind, const Dataset& train, const ClassifierHyper& hyper)
{
    train.validate();
    if (!train.labels) throw ValidationError("training data needs labels");
    Classifier clf;
    clf.kind = kind;
    clf.num_classes = train.num_classes();
    const auto& labels = *train.labels;
    if (distinct_sorted(labels).size() < 2) throw ValidationError("training data must contain at least two classes");

    if (kind == ClassifierKind::KNN) {
        if (hyper.knn_k < 1) throw ConfigError("knn k must be at least 1");
        clf.train_rows = train.rows;
        clf.train_labels = labels;
        clf.k = hyper.knn_k;
        return clf;
    }

    auto target = [&](int cls) {
        Eigen::VectorXd y(train.rows.rows());
        for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = labels[i] == cls ? 1.0 : 0.0;
        return y;
    };
    if (clf.num_classes == 2) {
        clf.models.push_back(train_binary(kind, train.rows, target(1), hyper));
    } else {
        for (int c = 0; c < clf.num_classes; ++c) {
            Eigen::VectorXd y = target(c);
            if (y.sum() == 0.0) {
                // Class absent from this split: never predicted.
                LinearModel never;
                never.mean = Eigen::VectorXd::Zero(train.rows.cols());
                never.scale = Eigen::VectorXd::Ones(train.rows.cols());
                never.w = Eigen::VectorXd::Zero(train.rows.cols());
                never.b = -std::numeric_limits<double>::infinity();
                clf.models.push_back(never);
                continue;
            }
            clf.models.push_back(train_binary(kind, train.rows, y, hyper));
        }
    }
    return clf;
}

std::vector<int> predict(const Classifier& clf, const Eigen::MatrixXd& rows)
{
    std::vector<int> out(static_cast<std::size_t>(rows.rows()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        Eigen::VectorXd x = rows.row(i).transpose();
        if (clf.kind == ClassifierKind::KNN) {
            const Eigen::Index n = clf.train_rows.rows();
            std::vector<std::pair<double, Eigen::Index>> d(static_cast<std::size_t>(n));
            for (Eigen::Index j = 0; j < n; ++j) d[j] = {(clf.train_rows.row(j).transpose() - x).squaredNorm(), j};
            const auto k = static_cast<std::size_t>(std::min<Eigen::Index>(clf.k, n));
            std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
            std::map<int, int> votes;
            for (std::size_t j = 0; j < k; ++j) ++votes[clf.train_labels[d[j].second]];
            int best = -1, best_votes = -1;
            for (auto [label, v] : votes)
                if (v > best_votes) {
                    best = label;
                    best_votes = v;
                }
            out[i] = best;
        } else if (clf.models.size() == 1) {
            out[i] = clf.models[0].score(x) > 0.0 ? 1 : 0;
        } else {
            int best = 0;
            double bs = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < clf.models.size(); ++c) {
                double s = clf.models[c].score(x);
                if (s > bs) {
                    bs = s;
                    best = static_cast<int>(c);
                }
            }
            out[i] = best;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation

std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed)
{
    if (folds < 2) throw ConfigError("need at least two folds");
    if (static_cast<int>(labels.size()) < folds) throw ValidationError("fewer rows than folds");
    Rng rng(seed);
    std::vector<int> fold(labels.size(), 0);
    int next = 0;
    for (int cls : distinct_sorted(labels)) {
        std::vector<int> idx;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) idx.push_back(static_cast<int>(i));
        std::shuffle(idx.begin(), idx.end(), rng);
        for (int i : idx) {
            fold[i] = next;
            next = (next + 1) % folds;
        }
    }
    return fold;
}

CvResult cross_validate(const Dataset& data, ClassifierKind kind, const ClassifierHyper& hyper, int folds,
                        int replications, std::uint64_t seed)
{
    data.validate();
    if (!data.labels) throw ValidationError("cross-validation needs labels");
    if (replications < 1) throw ConfigError("replications must be at least 1");
    const auto& labels = *data.labels;
    CvResult res;
    for (int rep = 0; rep < replications; ++rep) {
        auto fold = stratified_folds(labels, folds, derive_seed(seed, {static_cast<std::uint64_t>(rep)}));
        for (int f = 0; f < folds; ++f) {
            std::vector<Eigen::Index> tr, te;
            for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
            Dataset train;
            train.rows = data.rows(tr, Eigen::all);
            std::vector<int> tl;
            for (auto i : tr) tl.push_back(labels[static_cast<std::size_t>(i)]);
            train.labels = tl;
            if (distinct_sorted(tl).size() < 2) throw ValidationError("a training split holds a single class");
            Classifier clf = train_classifier(kind, train, hyper);
            auto pred = predict(clf, data.rows(te, Eigen::all));
            int hit = 0;
            for (std::size_t j = 0; j < te.size(); ++j) hit += pred[j] == labels[static_cast<std::size_t>(te[j])];
            res.fold_accuracies.push_back(static_cast<double>(hit) / static_cast<double>(te.size()));
        }
    }
    const double n = static_cast<double>(res.fold_accuracies.size());
    res.mean = std::accumulate(res.fold_accuracies.begin(), res.fold_accuracies.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : res.fold_accuracies) ss += (a - res.mean) * (a - res.mean);
    res.std = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    return res;
}

} // namespace bpr
