#include "bpr/agents.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "bpr/error.hpp"

namespace bpr {

std::string to_string(RuleKind kind)
{
    switch (kind) {
    case RuleKind::CR: return "CR";
    case RuleKind::SNCCR: return "SNCCR";
    case RuleKind::CCR: return "CCR";
    case RuleKind::Random: return "RANDOM";
    }
    return "?";
}

RuleKind rule_kind_from_string(const std::string& name)
{
    if (name == "CR") return RuleKind::CR;
    if (name == "SNCCR") return RuleKind::SNCCR;
    if (name == "CCR") return RuleKind::CCR;
    if (name == "RANDOM") return RuleKind::Random;
    throw ValidationError("unknown heuristic rule '" + name + "'");
}

void HeuristicRule::validate() const
{
    if (!std::isfinite(parameter))
        throw ValidationError("rule parameter must be finite");
    if (kind == RuleKind::CR && parameter < 1.0)
        throw ValidationError("CR cutoff must be at least 1");
    if ((kind == RuleKind::SNCCR || kind == RuleKind::CCR) && parameter < 0.0)
        throw ValidationError("rule parameter must be nonnegative");
}

std::vector<bool> candidates_of(std::span<const int> relative_ranks)
{
    const auto n = relative_ranks.size();
    std::vector<bool> seen(n + 1, false);
    for (int r : relative_ranks) {
        if (r < 1 || static_cast<std::size_t>(r) > n || seen[static_cast<std::size_t>(r)])
            throw ValidationError("relative ranks must be a permutation of 1..X");
        seen[static_cast<std::size_t>(r)] = true;
    }
    std::vector<bool> flags(n, false);
    int best = static_cast<int>(n) + 1;
    for (std::size_t t = 0; t < n; ++t) {
        if (relative_ranks[t] < best) {
            best = relative_ranks[t];
            flags[t] = true;
        }
    }
    return flags;
}

Trajectory run_secretary_rule(const HeuristicRule& rule, std::span<const int> relative_ranks,
                              const SecretarySpec& spec, Rng& rng)
{
    rule.validate();
    const auto flags = candidates_of(relative_ranks);
    if (static_cast<int>(flags.size()) != spec.num_applicants)
        throw ValidationError("permutation length does not match the number of applicants");

    const long p = std::lround(rule.parameter);
    std::bernoulli_distribution coin(0.5);
    Trajectory traj;
    int run_of_non_candidates = 0;
    int candidates_seen = 0;
    for (int pos = 1; pos <= spec.num_applicants; ++pos) {
        if (!flags[static_cast<std::size_t>(pos - 1)]) {
            ++run_of_non_candidates;
            continue;
        }
        ++candidates_seen;
        bool accept = false;
        switch (rule.kind) {
        case RuleKind::CR: accept = pos >= p; break;
        case RuleKind::SNCCR: accept = run_of_non_candidates >= p; break;
        case RuleKind::CCR: accept = candidates_seen >= p; break;
        case RuleKind::Random: accept = coin(rng); break;
        }
        if (pos == spec.num_applicants)
            accept = true;
        traj.steps.push_back({spec.state_of_position(pos), accept ? secretary::Accept : secretary::Reject});
        if (accept)
            break;
        run_of_non_candidates = 0;
    }
    return traj;
}

std::vector<int> random_ranks(int num_applicants, Rng& rng)
{
    std::vector<int> ranks(static_cast<std::size_t>(num_applicants));
    std::iota(ranks.begin(), ranks.end(), 1);
    std::shuffle(ranks.begin(), ranks.end(), rng);
    return ranks;
}

std::vector<AgentRecord> simulate_secretary_cohort(const std::vector<RuleGroup>& groups,
                                                   int trajectories_per_agent,
                                                   const SecretarySpec& spec, std::uint64_t seed)
{
    spec.validate();
    if (trajectories_per_agent < 1)
        throw ValidationError("each agent needs at least one trajectory");
    std::vector<AgentRecord> cohort;
    int agent_id = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& group = groups[g];
        group.rule.validate();
        if (group.count < 1)
            throw ValidationError("group counts must be positive");
        for (int i = 0; i < group.count; ++i, ++agent_id) {
            Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(agent_id)}));
            HeuristicRule own = group.rule;
            if (group.param_noise_std > 0.0) {
                std::normal_distribution<double> noise(0.0, group.param_noise_std);
                own.parameter += noise(rng);
            }
            own.parameter = std::max(1.0, std::round(own.parameter));

            AgentRecord rec;
            rec.agent_id = agent_id;
            rec.label = static_cast<int>(g);
            rec.provenance = {to_string(group.rule.kind), group.rule.parameter, own.parameter};
            for (int h = 0; h < trajectories_per_agent; ++h) {
                const auto ranks = random_ranks(spec.num_applicants, rng);
                rec.observations.trajectories.push_back(run_secretary_rule(own, ranks, spec, rng));
            }
            cohort.push_back(std::move(rec));
        }
    }
    return cohort;
}

std::vector<GridWorldGroup> default_gridworld_groups()
{
    return {GridWorldGroup{{Destination{{9, 9}, 1.0}}}, GridWorldGroup{{Destination{{0, 9}, 1.0}}}};
}

std::vector<AgentRecord> simulate_gridworld_cohort(const GridWorldSpec& spec, const Mdp& mdp,
                                                   const GridWorldCohortSpec& cohort,
                                                   std::uint64_t seed)
{
    spec.validate();
    mdp.validate();
    if (cohort.agents_per_group < 1 || cohort.trajectory_length < 1 || cohort.trajectories_per_agent < 1)
        throw ValidationError("cohort sizes must be positive");

    std::vector<AgentRecord> records;
    int agent_id = 0;
    for (std::size_t g = 0; g < cohort.groups.size(); ++g) {
        for (int j = 0; j < cohort.agents_per_group; ++j, ++agent_id) {
            Rng reward_rng(derive_seed(seed, {static_cast<std::uint64_t>(agent_id), 0}));
            Rng traj_rng(derive_seed(seed, {static_cast<std::uint64_t>(agent_id), 1}));
            auto reward = gridworld_reward(spec, cohort.groups[g].destinations,
                                           cohort.reward_noise_std, reward_rng);
            const auto agent_mdp = mdp.with_reward(std::move(reward));
            const auto vi = value_iteration(agent_mdp, 1e-6, 100000);
            const auto policy = greedy_policy(q_from_values(agent_mdp, vi.value));

            AgentRecord rec;
            rec.agent_id = agent_id;
            rec.label = static_cast<int>(g);
            rec.provenance.generator = "gridworld-group-" + std::to_string(g);
            for (int n = 0; n < cohort.trajectories_per_agent; ++n) {
                const StateIndex start = sample_index(mdp.initial_distribution, traj_rng);
                rec.observations.trajectories.push_back(
                    sample_trajectory(agent_mdp, policy, start, cohort.trajectory_length, traj_rng));
            }
            records.push_back(std::move(rec));
        }
    }
    return records;
}

void write_cohort_jsonl(std::ostream& out, const std::vector<AgentRecord>& cohort)
{
    for (const auto& rec : cohort) {
        nlohmann::json line;
        line["agent_id"] = rec.agent_id;
        line["label"] = rec.label ? nlohmann::json(*rec.label) : nlohmann::json(nullptr);
        nlohmann::json prov;
        prov["generator"] = rec.provenance.generator;
        prov["base_parameter"] = rec.provenance.base_parameter ? nlohmann::json(*rec.provenance.base_parameter)
                                                               : nlohmann::json(nullptr);
        prov["parameter"] = rec.provenance.parameter ? nlohmann::json(*rec.provenance.parameter)
                                                     : nlohmann::json(nullptr);
        line["provenance"] = std::move(prov);
        auto trajs = nlohmann::json::array();
        for (const auto& t : rec.observations.trajectories) {
            auto steps = nlohmann::json::array();
            for (const auto& st : t.steps)
                steps.push_back({st.state, st.action});
            trajs.push_back(std::move(steps));
        }
        line["trajectories"] = std::move(trajs);
        out << line.dump() << '\n';
    }
}

std::vector<AgentRecord> read_cohort_jsonl(std::istream& in)
{
    std::vector<AgentRecord> cohort;
    std::string text;
    int line_no = 0;
    while (std::getline(in, text)) {
        ++line_no;
        if (text.empty())
            continue;
        try {
            const auto line = nlohmann::json::parse(text);
            AgentRecord rec;
            rec.agent_id = line.at("agent_id").get<int>();
            if (!line.at("label").is_null())
                rec.label = line["label"].get<int>();
            const auto& prov = line.at("provenance");
            rec.provenance.generator = prov.at("generator").get<std::string>();
            if (!prov.at("base_parameter").is_null())
                rec.provenance.base_parameter = prov["base_parameter"].get<double>();
            if (!prov.at("parameter").is_null())
                rec.provenance.parameter = prov["parameter"].get<double>();
            for (const auto& t : line.at("trajectories")) {
                Trajectory traj;
                for (const auto& st : t)
                    traj.steps.push_back({st.at(0).get<int>(), st.at(1).get<int>()});
                rec.observations.trajectories.push_back(std::move(traj));
            }
            cohort.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("cohort line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cohort;
}

} // namespace bpr
