#pragma once

#include <utility>
#include <vector>

#include "bpr/mdp.hpp"

namespace bpr {

namespace gridworld {

enum Action : ActionIndex { North = 0, South = 1, East = 2, West = 3, Stay = 4 };
inline constexpr int kNumActions = 5;

} // namespace gridworld

struct GridCell {
    int row = 0;
    int col = 0;
    bool operator==(const GridCell&) const = default;
};

struct GridWorldSpec {
    int width = 10;
    int height = 10;
    double p_intended = 0.65;
    double p_stay = 0.15;
    double p_random = 0.2; // split evenly over the four cardinal moves
    double discount = 0.95;

    void validate() const;
    int num_states() const { return width * height; }
    int index(GridCell c) const { return c.row * width + c.col; }
    GridCell cell(StateIndex s) const { return {s / width, s % width}; }
};

/// Row 0 is the top edge; North decreases the row, West decreases the column.
/// Off-grid moves leave the agent in place. The initial distribution is a
/// point mass on (0,0).
Mdp build_gridworld(const GridWorldSpec& spec);

/// (row, col) per state, used as the kernel input space.
Eigen::MatrixXd gridworld_coordinates(const GridWorldSpec& spec);

struct Destination {
    GridCell cell;
    double reward = 1.0;
};

/// Sparse destination reward plus i.i.d. N(0, noise_std^2) on every state.
Reward gridworld_reward(const GridWorldSpec& spec, const std::vector<Destination>& destinations,
                        double noise_std, Rng& rng);

namespace secretary {

enum Action : ActionIndex { Reject = 0, Accept = 1 };
inline constexpr int kNumActions = 2;

enum class AcceptMode {
    Terminal, // accept moves to the absorbing terminal state
    SelfLoop, // accept keeps the process in the current state
};

} // namespace secretary

struct SecretarySpec {
    int num_applicants = 20;
    double discount = 0.95;
    secretary::AcceptMode accept_mode = secretary::AcceptMode::Terminal;

    void validate() const;
    /// Applicant positions 1..X map to states 0..X-1; state X is terminal.
    int num_states() const { return num_applicants + 1; }
    StateIndex terminal() const { return num_applicants; }
    StateIndex state_of_position(int position) const { return position - 1; }
    int position_of_state(StateIndex s) const { return s + 1; }
};

/// Candidate-position MDP. Rejecting at position i moves to a later candidate
/// position j > i with probability i/(j(j-1)); the remaining i/X mass (no later
/// candidate) goes to the terminal state, which absorbs under both actions.
/// The initial distribution is a point mass on position 1, which is always a
/// candidate.
Mdp build_secretary_mdp(const SecretarySpec& spec);

/// Position per state; the terminal sits far away so it is uncorrelated under
/// any kernel of moderate length scale.
Eigen::MatrixXd secretary_coordinates(const SecretarySpec& spec);

} // namespace bpr
