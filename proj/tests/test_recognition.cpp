#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "bpr/error.hpp"
#include "bpr/random.hpp"
#include "bpr/recognition.hpp"

using namespace bpr;

namespace {

Dataset blobs(int per_class, std::vector<Eigen::Vector2d> centres, double spread, unsigned seed)
{
    Rng rng(seed);
    std::normal_distribution<double> n01;
    Dataset d;
    d.rows.resize(per_class * static_cast<int>(centres.size()), 2);
    std::vector<int> labels;
    int i = 0;
    for (int c = 0; c < static_cast<int>(centres.size()); ++c)
        for (int k = 0; k < per_class; ++k, ++i) {
            d.rows(i, 0) = centres[c][0] + spread * n01(rng);
            d.rows(i, 1) = centres[c][1] + spread * n01(rng);
            labels.push_back(c);
        }
    d.labels = labels;
    return d;
}

// Best exhaustive 2-partition inertia for tiny data.
double brute_two_means(const Eigen::MatrixXd& x)
{
    const int n = static_cast<int>(x.rows());
    double best = INFINITY;
    for (int mask = 1; mask < (1 << n) - 1; ++mask) {
        double total = 0.0;
        for (int side = 0; side < 2; ++side) {
            std::vector<int> idx;
            for (int i = 0; i < n; ++i)
                if (((mask >> i) & 1) == side)
                    idx.push_back(i);
            Eigen::MatrixXd part = x(idx, Eigen::all);
            Eigen::RowVectorXd mu = part.colwise().mean();
            total += (part.rowwise() - mu).squaredNorm();
        }
        best = std::min(best, total);
    }
    return best;
}

double accuracy(const std::vector<int>& a, const std::vector<int>& b)
{
    int hit = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        hit += a[i] == b[i];
    return static_cast<double>(hit) / a.size();
}

} // namespace

TEST_SUITE("recognition")
{
    TEST_CASE("kmeans k=1")
    {
        auto d = blobs(10, {{1, 2}, {4, -1}}, 1.0, 1);
        auto r = kmeans(d, 1, 3, 5);
        Eigen::RowVectorXd mean = d.rows.colwise().mean();
        CHECK((r.centroids.row(0) - mean).norm() < 1e-12);
        CHECK(r.inertia == doctest::Approx((d.rows.rowwise() - mean).squaredNorm()).epsilon(1e-12));
    }

    TEST_CASE("kmeans separated blobs match the exhaustive optimum")
    {
        auto d = blobs(6, {{0, 0}, {10, 10}}, 0.3, 2);
        auto r = kmeans(d, 2, 5, 9);
        CHECK(nmi(r.assignments, *d.labels) == doctest::Approx(1.0));
        CHECK(r.inertia == doctest::Approx(brute_two_means(d.rows)).epsilon(1e-10));
    }

    TEST_CASE("kmeans duplicates, errors and determinism")
    {
        Dataset d;
        d.rows.resize(9, 1);
        for (int i = 0; i < 9; ++i)
            d.rows(i, 0) = i % 3;
        auto r = kmeans(d, 3, 2, 1);
        CHECK(r.inertia == 0.0);
        CHECK_THROWS_AS(kmeans(d, 10, 1, 1), ValidationError);
        auto b = blobs(20, {{0, 0}, {2, 1}, {1, 3}}, 1.0, 7);
        CHECK(kmeans(b, 3, 4, 11).assignments == kmeans(b, 3, 4, 11).assignments);
    }

    TEST_CASE("kmeans inertia nonincreasing")
    {
        for (unsigned s = 0; s < 20; ++s) {
            auto b = blobs(15, {{0, 0}, {1.5, 0.5}, {0.5, 2}, {3, 3}}, 1.0, 100 + s);
            auto r = kmeans(b, 4, 1, s);
            REQUIRE(!r.inertia_trace.empty());
            for (std::size_t i = 1; i < r.inertia_trace.size(); ++i)
                CHECK(r.inertia_trace[i] <= r.inertia_trace[i - 1] + 1e-9);
            CHECK(r.inertia >= 0.0);
        }
    }

    TEST_CASE("nmi")
    {
        std::vector<int> a{0, 0, 1, 1}, b{0, 1, 0, 1}, swapped{1, 1, 0, 0};
        CHECK(nmi(a, a) == doctest::Approx(1.0));
        CHECK(nmi(a, swapped) == doctest::Approx(1.0));
        CHECK(nmi(a, b) == doctest::Approx(0.0));
        std::vector<int> c{0, 0, 0, 1};
        // joint table {(0,0):1/2, (1,0):1/4, (1,1):1/4}
        const double ha = std::log(2.0);
        const double hc = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
        const double mi = 0.5 * std::log(0.5 / (0.5 * 0.75)) + 0.25 * std::log(0.25 / (0.5 * 0.75)) +
                          0.25 * std::log(0.25 / (0.5 * 0.25));
        CHECK(nmi(a, c) == doctest::Approx(mi / std::sqrt(ha * hc)));
        CHECK(nmi(std::vector<int>{0, 0, 0}, std::vector<int>{0, 1, 2}) == 0.0);
        CHECK_THROWS_AS(nmi(a, std::vector<int>{0}), ValidationError);

        Rng rng(1);
        std::uniform_int_distribution<int> u(0, 3);
        for (int t = 0; t < 50; ++t) {
            std::vector<int> x(30), y(30);
            for (auto& v : x) v = u(rng);
            for (auto& v : y) v = u(rng);
            const double xy = nmi(x, y);
            CHECK(xy == doctest::Approx(nmi(y, x)).epsilon(1e-12));
            CHECK(xy >= 0.0);
            CHECK(xy <= 1.0);
            std::vector<int> perm{2, 0, 3, 1}, xp(30);
            for (int i = 0; i < 30; ++i) xp[i] = perm[x[i]];
            CHECK(nmi(xp, y) == doctest::Approx(xy).epsilon(1e-12));
        }
    }

    TEST_CASE("clustering accuracy")
    {
        std::vector<int> a{0, 0, 1, 1}, b{0, 1, 0, 1}, swapped{1, 1, 0, 0};
        CHECK(clustering_accuracy(a, a) == 1.0);
        CHECK(clustering_accuracy(swapped, a) == 1.0);
        CHECK(clustering_accuracy(b, a) == 0.5);
        CHECK(clustering_accuracy(std::vector<int>{0, 1, 1, 2, 2, 2}, std::vector<int>{1, 1, 0, 0, 2, 2}) ==
              doctest::Approx(4.0 / 6));
        CHECK_THROWS_AS(clustering_accuracy(a, std::vector<int>{0}), ValidationError);

        Rng rng(2);
        std::uniform_int_distribution<int> u(0, 2);
        std::vector<int> truth;
        for (int k = 0; k < 3; ++k)
            truth.insert(truth.end(), 10, k);
        for (int t = 0; t < 30; ++t) {
            std::vector<int> p(30);
            for (auto& v : p) v = u(rng);
            CHECK(clustering_accuracy(p, truth) >= 1.0 / 3 - 1e-12);
        }
    }

    TEST_CASE("KNN k=1 memorizes")
    {
        auto d = blobs(12, {{0, 0}, {1, 1}, {0, 1}}, 0.8, 3);
        ClassifierHyper h;
        h.knn_k = 1;
        auto clf = train_classifier(ClassifierKind::KNN, d, h);
        CHECK(predict(clf, d.rows) == *d.labels);
    }

    TEST_CASE("linear classifiers separate blobs")
    {
        auto d = blobs(25, {{0, 0}, {5, 5}}, 0.7, 4);
        for (auto kind : {ClassifierKind::LR, ClassifierKind::SVM, ClassifierKind::FDA}) {
            auto clf = train_classifier(kind, d);
            CHECK(accuracy(predict(clf, d.rows), *d.labels) == 1.0);
        }
        auto three = blobs(20, {{0, 0}, {6, 0}, {0, 6}}, 0.5, 5);
        for (auto kind : {ClassifierKind::LR, ClassifierKind::SVM, ClassifierKind::FDA, ClassifierKind::KNN})
            CHECK(accuracy(predict(train_classifier(kind, three), three.rows), *three.labels) == 1.0);
    }

    TEST_CASE("FDA 1-D threshold at zero")
    {
        Dataset d;
        d.rows.resize(4, 1);
        d.rows << -1, -2, 1, 2;
        d.labels = std::vector<int>{0, 0, 1, 1};
        auto clf = train_classifier(ClassifierKind::FDA, d);
        Eigen::MatrixXd probe(4, 1);
        probe << -0.01, 0.01, -1.5, 1.5;
        CHECK(predict(clf, probe) == std::vector<int>{0, 1, 0, 1});
        CHECK(clf.models[0].score(Eigen::VectorXd::Zero(1)) == doctest::Approx(0.0).epsilon(1e-9));
    }

    TEST_CASE("single class rejected")
    {
        auto d = blobs(5, {{0, 0}}, 1.0, 1);
        CHECK_THROWS_AS(train_classifier(ClassifierKind::LR, d), ValidationError);
    }

    TEST_CASE("logistic gradient vs finite differences")
    {
        Rng rng(6);
        std::normal_distribution<double> n01;
        Eigen::MatrixXd x(20, 3);
        Eigen::VectorXd y(20);
        for (int i = 0; i < 20; ++i) {
            for (int k = 0; k < 3; ++k) x(i, k) = n01(rng);
            y[i] = i % 2;
        }
        for (int t = 0; t < 10; ++t) {
            Eigen::VectorXd w(3);
            for (int k = 0; k < 3; ++k) w[k] = n01(rng);
            const double b = n01(rng);
            Eigen::VectorXd gw;
            double gb = 0.0;
            logistic_loss(x, y, w, b, 0.1, &gw, &gb);
            const double h = 1e-6;
            for (int k = 0; k < 3; ++k) {
                Eigen::VectorXd wp = w, wm = w;
                wp[k] += h;
                wm[k] -= h;
                const double fd = (logistic_loss(x, y, wp, b, 0.1, nullptr, nullptr) -
                                   logistic_loss(x, y, wm, b, 0.1, nullptr, nullptr)) / (2 * h);
                CHECK(std::abs(fd - gw[k]) <= 1e-5 * std::max(1.0, std::abs(gw[k])));
            }
            const double fdb = (logistic_loss(x, y, w, b + h, 0.1, nullptr, nullptr) -
                                logistic_loss(x, y, w, b - h, 0.1, nullptr, nullptr)) / (2 * h);
            CHECK(std::abs(fdb - gb) <= 1e-5 * std::max(1.0, std::abs(gb)));
        }
    }

    TEST_CASE("stratified folds")
    {
        std::vector<int> labels;
        for (int i = 0; i < 30; ++i) labels.push_back(i % 3);
        auto f = stratified_folds(labels, 10, 4);
        CHECK(f == stratified_folds(labels, 10, 4));
        for (int k = 0; k < 10; ++k) {
            std::vector<int> count(3, 0);
            for (std::size_t i = 0; i < labels.size(); ++i)
                if (f[i] == k) count[labels[i]]++;
            CHECK(std::accumulate(count.begin(), count.end(), 0) == 3);
        }
        CHECK_THROWS_AS(stratified_folds(labels, 31, 0), ValidationError);
    }

    TEST_CASE("cross validation separable and null")
    {
        auto d = blobs(20, {{0, 0}, {8, 8}}, 0.5, 8);
        for (auto kind : {ClassifierKind::LR, ClassifierKind::SVM, ClassifierKind::FDA, ClassifierKind::KNN}) {
            auto cv = cross_validate(d, kind, {}, 10, 2, 1);
            CHECK(cv.mean == 1.0);
            CHECK(cv.std == 0.0);
        }

        // ten independent null datasets, 2000 held-out predictions in total
        double pooled = 0.0;
        for (unsigned seed = 9; seed < 19; ++seed) {
            Rng rng(seed);
            std::normal_distribution<double> n01;
            Dataset noise;
            noise.rows.resize(200, 3);
            std::vector<int> lab;
            for (int i = 0; i < 200; ++i) {
                for (int k = 0; k < 3; ++k) noise.rows(i, k) = n01(rng);
                lab.push_back(i % 2);
            }
            std::shuffle(lab.begin(), lab.end(), rng);
            noise.labels = lab;
            pooled += cross_validate(noise, ClassifierKind::LR, {}, 10, 1, 3).mean / 10;
            if (seed == 9)
                CHECK(cross_validate(noise, ClassifierKind::KNN, {}, 10, 1, 3).fold_accuracies ==
                      cross_validate(noise, ClassifierKind::KNN, {}, 10, 1, 3).fold_accuracies);
        }
        CHECK(std::abs(pooled - 0.5) <= 3 * std::sqrt(0.25 / 2000));
    }
}
