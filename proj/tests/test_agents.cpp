#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "bpr/agents.hpp"
#include "bpr/error.hpp"
#include "bpr/harness.hpp"

using namespace bpr;

namespace {

// Ranks from a list of candidate positions (1-based): candidates improve in
// order, everybody else is worse than position 1.
std::vector<int> ranks_with_candidates(int x, const std::vector<int>& cands)
{
    std::vector<int> ranks(x, 0);
    int best = static_cast<int>(cands.size());
    for (int p : cands)
        ranks[p - 1] = best--;
    int next = static_cast<int>(cands.size()) + 1;
    for (auto& r : ranks)
        if (r == 0)
            r = next++;
    return ranks;
}

std::vector<std::pair<int, int>> pairs(const Trajectory& t, const SecretarySpec& spec)
{
    std::vector<std::pair<int, int>> out;
    for (const auto& s : t.steps)
        out.emplace_back(spec.position_of_state(s.state), s.action);
    return out;
}

// Independent trace of the three rules over the raw permutation.
int brute_accept(RuleKind kind, int param, const std::vector<int>& ranks)
{
    const int x = static_cast<int>(ranks.size());
    int best = x + 1, seen = 0, since = 0;
    for (int pos = 1; pos <= x; ++pos) {
        bool cand = ranks[pos - 1] < best;
        if (!cand) {
            ++since;
            continue;
        }
        best = ranks[pos - 1];
        ++seen;
        bool take = false;
        if (kind == RuleKind::CR)
            take = pos >= param;
        else if (kind == RuleKind::SNCCR)
            take = since >= param;
        else
            take = seen >= param;
        if (take || pos == x)
            return pos;
        since = 0;
    }
    return -1; // no candidate after the last rejection
}

} // namespace

TEST_SUITE("agents")
{
    TEST_CASE("candidates_of")
    {
        std::vector<int> r{2, 1, 3, 4};
        auto f = candidates_of(r);
        CHECK(f == std::vector<bool>{true, true, false, false});
        std::vector<int> desc{1, 2, 3, 4, 5};
        CHECK(candidates_of(desc) == std::vector<bool>{true, false, false, false, false});
        std::vector<int> bad{1, 1, 2};
        CHECK_THROWS_AS(candidates_of(bad), ValidationError);
    }

    TEST_CASE("rule hand traces")
    {
        SecretarySpec spec;
        spec.num_applicants = 10;
        Rng rng(0);
        auto ranks = ranks_with_candidates(10, {1, 2, 5, 9});
        auto t = run_secretary_rule({RuleKind::CR, 3}, ranks, spec, rng);
        CHECK(pairs(t, spec) == std::vector<std::pair<int, int>>{{1, 0}, {2, 0}, {5, 1}});

        auto r2 = ranks_with_candidates(10, {1, 4, 9});
        CHECK(pairs(run_secretary_rule({RuleKind::SNCCR, 2}, r2, spec, rng), spec) ==
              std::vector<std::pair<int, int>>{{1, 0}, {4, 1}});
        CHECK(pairs(run_secretary_rule({RuleKind::CCR, 2}, r2, spec, rng), spec) ==
              std::vector<std::pair<int, int>>{{1, 0}, {4, 1}});
        CHECK(pairs(run_secretary_rule({RuleKind::CR, 1}, r2, spec, rng), spec) ==
              std::vector<std::pair<int, int>>{{1, 1}});
    }

    TEST_CASE("rules agree with a brute-force trace")
    {
        SecretarySpec spec;
        spec.num_applicants = 12;
        Rng rng(11);
        for (int trial = 0; trial < 2000; ++trial) {
            auto ranks = random_ranks(12, rng);
            for (RuleKind kind : {RuleKind::CR, RuleKind::SNCCR, RuleKind::CCR})
                for (int p = 1; p <= 6; ++p) {
                    auto t = run_secretary_rule({kind, static_cast<double>(p)}, ranks, spec, rng);
                    const int expect = brute_accept(kind, p, ranks);
                    const auto& last = t.steps.back();
                    if (expect < 0) {
                        CHECK(last.action == secretary::Reject);
                    } else {
                        CHECK(last.action == secretary::Accept);
                        CHECK(spec.position_of_state(last.state) == expect);
                    }
                    // candidate positions in strictly increasing order
                    for (std::size_t i = 1; i < t.steps.size(); ++i)
                        CHECK(t.steps[i].state > t.steps[i - 1].state);
                    auto flags = candidates_of(ranks);
                    for (const auto& s : t.steps)
                        CHECK(flags[static_cast<std::size_t>(spec.position_of_state(s.state) - 1)]);
                }
        }
    }

    TEST_CASE("random rule accepts about half the candidates")
    {
        SecretarySpec spec;
        spec.num_applicants = 20;
        Rng rng(5);
        int accepts = 0, decisions = 0;
        for (int i = 0; i < 4000; ++i) {
            auto ranks = random_ranks(20, rng);
            auto t = run_secretary_rule({RuleKind::Random, 0}, ranks, spec, rng);
            for (const auto& s : t.steps) {
                if (spec.position_of_state(s.state) == 20)
                    continue;
                ++decisions;
                accepts += s.action == secretary::Accept;
            }
        }
        const double p = static_cast<double>(accepts) / decisions;
        CHECK(std::abs(p - 0.5) < 3 * 0.5 / std::sqrt(static_cast<double>(decisions)));
    }

    TEST_CASE("CR at the optimal cutoff matches the DP success probability")
    {
        const int x = 20;
        const auto dp = secretary_dp_oracle(x);
        SecretarySpec spec;
        spec.num_applicants = x;
        Rng rng(2024);
        const int n = 100000;
        int wins = 0;
        for (int i = 0; i < n; ++i) {
            auto ranks = random_ranks(x, rng);
            auto t = run_secretary_rule({RuleKind::CR, static_cast<double>(dp.cutoff)}, ranks, spec, rng);
            const auto& last = t.steps.back();
            if (last.action == secretary::Accept && ranks[static_cast<std::size_t>(spec.position_of_state(last.state) - 1)] == 1)
                ++wins;
        }
        const double p = dp.success;
        CHECK(std::abs(static_cast<double>(wins) / n - p) <= 3 * std::sqrt(p * (1 - p) / n));
    }

    TEST_CASE("secretary cohort")
    {
        SecretarySpec spec;
        std::vector<RuleGroup> groups;
        for (int h : {3, 6, 10})
            groups.push_back({{RuleKind::CR, static_cast<double>(h)}, 100, 1.0});
        auto cohort = simulate_secretary_cohort(groups, 5, spec, 9);
        REQUIRE(cohort.size() == 300);
        std::map<int, int> hist;
        for (const auto& a : cohort) {
            hist[*a.label]++;
            CHECK(a.observations.size() == 5);
            CHECK(*a.provenance.parameter >= 1.0);
            CHECK(*a.provenance.parameter == std::round(*a.provenance.parameter));
        }
        CHECK(hist == std::map<int, int>{{0, 100}, {1, 100}, {2, 100}});
        CHECK(cohort == simulate_secretary_cohort(groups, 5, spec, 9));
        CHECK(!(cohort == simulate_secretary_cohort(groups, 5, spec, 10)));

        for (auto& g : groups)
            g.param_noise_std = 0.0;
        for (const auto& a : simulate_secretary_cohort(groups, 2, spec, 9))
            CHECK(*a.provenance.parameter == *a.provenance.base_parameter);
    }

    TEST_CASE("gridworld cohort")
    {
        GridWorldSpec spec;
        auto mdp = build_gridworld(spec);
        GridWorldCohortSpec cs;
        cs.groups = default_gridworld_groups();
        cs.agents_per_group = 6;
        cs.trajectories_per_agent = 4;
        auto cohort = simulate_gridworld_cohort(spec, mdp, cs, 3);
        REQUIRE(cohort.size() == 12);
        int zeros = 0;
        for (const auto& a : cohort) {
            zeros += *a.label == 0;
            CHECK(a.observations.size() == 4);
            for (const auto& t : a.observations.trajectories) {
                CHECK(t.steps.size() == 6);
                CHECK(t.steps.front().state == 0);
                for (std::size_t i = 1; i < t.steps.size(); ++i)
                    CHECK(mdp.transitions[t.steps[i - 1].action](t.steps[i - 1].state, t.steps[i].state) > 0.0);
            }
        }
        CHECK(zeros == 6);
        CHECK(cohort == simulate_gridworld_cohort(spec, mdp, cs, 3));

        // noise-free agents in a group share one policy
        cs.reward_noise_std = 0.0;
        cs.trajectories_per_agent = 30;
        auto clean = simulate_gridworld_cohort(spec, mdp, cs, 4);
        std::map<int, std::map<int, int>> act;
        for (const auto& a : clean) {
            if (*a.label != 0)
                continue;
            for (const auto& t : a.observations.trajectories)
                for (const auto& s : t.steps) {
                    auto [it, fresh] = act[0].emplace(s.state, s.action);
                    CHECK(it->second == s.action);
                }
        }
    }

    TEST_CASE("cohort jsonl round trip")
    {
        SecretarySpec spec;
        auto cohort = simulate_secretary_cohort({{{RuleKind::SNCCR, 2}, 3, 1.0}, {{RuleKind::Random, 0}, 2, 0.0}}, 3,
                                                spec, 1);
        std::stringstream ss;
        write_cohort_jsonl(ss, cohort);
        CHECK(read_cohort_jsonl(ss) == cohort);
    }
}
