#include <doctest.h>

#include <cmath>
#include <sstream>

#include "bpr/error.hpp"
#include "bpr/features.hpp"

using namespace bpr;

namespace {

Trajectory traj(std::initializer_list<std::pair<int, int>> pairs)
{
    Trajectory t;
    for (auto [s, a] : pairs)
        t.steps.push_back({s, a});
    return t;
}

ObservationSet random_obs(Rng& rng, int n, int ns, int na)
{
    ObservationSet o;
    std::uniform_int_distribution<int> len(1, 7), st(0, ns - 1), ac(0, na - 1);
    for (int i = 0; i < n; ++i) {
        Trajectory t;
        for (int k = len(rng); k > 0; --k)
            t.steps.push_back({st(rng), ac(rng)});
        o.trajectories.push_back(t);
    }
    return o;
}

} // namespace

TEST_SUITE("features")
{
    TEST_CASE("FT hand case")
    {
        ObservationSet o{{traj({{1, 1}, {2, 2}}), traj({{3, 1}, {2, 1}})}};
        auto f = feature_trajectory(o, {.horizon = 2});
        CHECK(f.source == FeatureSource::FT);
        REQUIRE(f.values.size() == 4);
        CHECK(f.values[0] == doctest::Approx(0.5));
        CHECK(f.values[1] == 0.0);
        CHECK(f.values[2] == 0.0);
        CHECK(f.values[3] == doctest::Approx(0.5));
    }

    TEST_CASE("FT padding, single trajectory and duplication")
    {
        ObservationSet one{{traj({{4, 1}})}};
        auto f = feature_trajectory(one, {.horizon = 3});
        CHECK(f.values == Eigen::VectorXd::Zero(6));

        ObservationSet g{{traj({{0, 0}}), traj({{2, 1}, {3, 0}})}};
        auto fg = feature_trajectory(g, {.horizon = 3, .normalization = FtNormalization::Global,
                                         .num_states = 5, .num_actions = 2});
        // padded: (0,0,0,0,0,0) and (2,1,3,0,3,0), scaled by 1/4 and 1/1
        Eigen::VectorXd expect(6);
        expect << 0.25, 0.5, 0.375, 0.0, 0.375, 0.0;
        CHECK((fg.values - expect).norm() < 1e-12);

        Rng rng(3);
        auto o = random_obs(rng, 5, 9, 3);
        auto d = o;
        d.trajectories.insert(d.trajectories.end(), o.trajectories.begin(), o.trajectories.end());
        CHECK((feature_trajectory(o, {.horizon = 6}).values - feature_trajectory(d, {.horizon = 6}).values).norm() <
              1e-12);
        CHECK_THROWS_AS(feature_trajectory(ObservationSet{}, {}), ValidationError);
        CHECK_THROWS_AS(feature_trajectory(o, {.horizon = 0}), ValidationError);
    }

    TEST_CASE("FE geometric sum")
    {
        ObservationSet o{{traj({{2, 0}, {2, 0}, {2, 0}})}};
        auto f = feature_expectation(o, BasisFunction::indicator(4), 0.5);
        CHECK(f.values[2] == doctest::Approx(1.75));
        CHECK(f.values.sum() == doctest::Approx(1.75));

        auto dup = o;
        dup.trajectories.push_back(o.trajectories[0]);
        CHECK((feature_expectation(dup, BasisFunction::indicator(4), 0.5).values - f.values).norm() < 1e-15);

        auto first = feature_expectation(ObservationSet{{traj({{1, 0}, {3, 0}})}}, BasisFunction::indicator(4), 1e-300);
        CHECK(first.values[1] == 1.0);
        CHECK(first.values[3] < 1e-299);
        CHECK_THROWS_AS(feature_expectation(ObservationSet{}, BasisFunction::indicator(4), 0.5), ValidationError);
    }

    TEST_CASE("FE additivity and indicator mass")
    {
        Rng rng(8);
        for (int trial = 0; trial < 20; ++trial) {
            auto a = random_obs(rng, 3, 6, 2);
            auto b = random_obs(rng, 5, 6, 2);
            auto ab = a;
            ab.trajectories.insert(ab.trajectories.end(), b.trajectories.begin(), b.trajectories.end());
            auto basis = BasisFunction::indicator(6);
            const double g = 0.9;
            Eigen::VectorXd lhs = feature_expectation(ab, basis, g).values;
            Eigen::VectorXd rhs =
                (3 * feature_expectation(a, basis, g).values + 5 * feature_expectation(b, basis, g).values) / 8;
            CHECK((lhs - rhs).norm() < 1e-12);

            double closed = 0.0;
            for (const auto& t : ab.trajectories)
                closed += (1 - std::pow(g, static_cast<double>(t.steps.size()))) / (1 - g);
            CHECK(lhs.sum() == doctest::Approx(closed / 8).epsilon(1e-12));
        }
    }

    TEST_CASE("basis range check")
    {
        BasisFunction bad(1, [](StateIndex) { return Eigen::VectorXd::Constant(1, 2.0); });
        CHECK_THROWS_AS(bad(0), ValidationError);
        BasisFunction wrong(2, [](StateIndex) { return Eigen::VectorXd::Zero(3); });
        CHECK_THROWS_AS(wrong(0), ValidationError);
    }

    TEST_CASE("PCA hand case and invariants")
    {
        std::vector<FeatureVector> v;
        for (double x : {0.0, 1.0, 2.0})
            v.push_back({Eigen::Vector2d(x, 0.0), FeatureSource::FE});
        auto p = pca_project(v, 1);
        CHECK(std::abs(p.projected[0].values[0]) == doctest::Approx(1.0));
        CHECK(p.projected[1].values[0] == doctest::Approx(0.0));
        CHECK(p.projected[0].values[0] == doctest::Approx(-p.projected[2].values[0]));
        CHECK(p.projected[0].source == FeatureSource::PCA);
        CHECK(p.explained_variance[0] >= 1 - 1e-9);
        CHECK(p.components(0, 0) > 0.0);

        Rng rng(4);
        std::normal_distribution<double> n01;
        std::vector<FeatureVector> r;
        for (int i = 0; i < 12; ++i) {
            Eigen::VectorXd x(4);
            for (int k = 0; k < 4; ++k)
                x[k] = n01(rng) * (k + 1);
            r.push_back({x, FeatureSource::FT});
        }
        auto full = pca_project(r, 4);
        CHECK(full.explained_variance.sum() <= 1 + 1e-12);
        for (int i = 1; i < 4; ++i)
            CHECK(full.eigenvalues[i] <= full.eigenvalues[i - 1]);
        for (int i = 0; i < 12; ++i)
            for (int j = 0; j < 12; ++j) {
                double d0 = (r[i].values - r[j].values).norm();
                double d1 = (full.projected[i].values - full.projected[j].values).norm();
                CHECK(std::abs(d0 - d1) < 1e-9);
            }
        CHECK_THROWS_AS(pca_project(r, 5), ValidationError);
        CHECK_THROWS_AS(pca_project({r[0]}, 1), ValidationError);
    }

    TEST_CASE("feature csv round trip")
    {
        std::vector<FeatureVector> rows{{Eigen::Vector2d(0.1, -2.5), FeatureSource::FE},
                                        {Eigen::Vector2d(1.0 / 3, 4.0), FeatureSource::FE}};
        std::stringstream ss;
        write_feature_csv(ss, rows, {1, std::nullopt});
        auto t = read_feature_csv(ss);
        CHECK(t.rows.rows() == 2);
        CHECK(t.rows(1, 0) == 1.0 / 3);
        CHECK(t.labels[0] == 1);
        CHECK(!t.labels[1]);
    }
}
