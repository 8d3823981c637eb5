#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bpr/environments.hpp"
#include "bpr/mdp.hpp"

namespace bpr {

struct ObservationSet {
    std::vector<Trajectory> trajectories;

    bool empty() const { return trajectories.empty(); }
    std::size_t size() const { return trajectories.size(); }
    bool operator==(const ObservationSet&) const = default;
};

struct Provenance {
    std::string generator;                // e.g. "CR", "gridworld-group-1"
    std::optional<double> base_parameter; // the group's nominal h, k or l
    std::optional<double> parameter;      // the agent's perturbed value
    bool operator==(const Provenance&) const = default;
};

struct AgentRecord {
    int agent_id = 0;
    ObservationSet observations;
    std::optional<int> label;
    Provenance provenance;
    bool operator==(const AgentRecord&) const = default;
};

enum class RuleKind { CR, SNCCR, CCR, Random };

std::string to_string(RuleKind kind);
RuleKind rule_kind_from_string(const std::string& name);

struct HeuristicRule {
    RuleKind kind = RuleKind::CR;
    double parameter = 1.0; // h for CR, k for SNCCR, l for CCR; unused for Random

    void validate() const;
};

/// flag[t] is true iff applicant t is better than everyone before it.
/// Ranks are a permutation of 1..X with 1 the best.
std::vector<bool> candidates_of(std::span<const int> relative_ranks);

/// Runs one secretary problem instance. Only candidate positions are recorded,
/// in the secretary MDP's state encoding. The trajectory ends on accept; a
/// final candidate at position X is always accepted.
Trajectory run_secretary_rule(const HeuristicRule& rule, std::span<const int> relative_ranks,
                              const SecretarySpec& spec, Rng& rng);

/// Uniform random permutation of 1..X.
std::vector<int> random_ranks(int num_applicants, Rng& rng);

struct RuleGroup {
    HeuristicRule rule;
    int count = 1;
    double param_noise_std = 1.0;
};

/// Agents are numbered consecutively across groups; the label is the group
/// index. Each agent draws from its own stream derived from (seed, agent id).
std::vector<AgentRecord> simulate_secretary_cohort(const std::vector<RuleGroup>& groups,
                                                   int trajectories_per_agent,
                                                   const SecretarySpec& spec, std::uint64_t seed);

struct GridWorldGroup {
    std::vector<Destination> destinations;
};

struct GridWorldCohortSpec {
    std::vector<GridWorldGroup> groups;
    int agents_per_group = 200;
    int trajectory_length = 6;
    int trajectories_per_agent = 4;
    double reward_noise_std = 0.1;
};

/// Every agent solves the MDP under its own noisy reward and samples
/// trajectories from `mdp.initial_distribution` with the greedy policy.
std::vector<AgentRecord> simulate_gridworld_cohort(const GridWorldSpec& spec, const Mdp& mdp,
                                                   const GridWorldCohortSpec& cohort,
                                                   std::uint64_t seed);

/// The r*_1 / r*_2 pair used when a config gives no destinations.
std::vector<GridWorldGroup> default_gridworld_groups();

// JSON-lines interchange: one record per line,
// {agent_id, label, provenance, trajectories: [[[s,a], ...], ...]}
void write_cohort_jsonl(std::ostream& out, const std::vector<AgentRecord>& cohort);
std::vector<AgentRecord> read_cohort_jsonl(std::istream& in);

} // namespace bpr
