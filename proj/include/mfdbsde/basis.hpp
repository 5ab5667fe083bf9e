#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mfdbsde/errors.hpp"

namespace mfdbsde {

/// Uniform time grid on [0, T] with a delay window [-delta, 0] and a
/// fixed shift s in [-delta, 0]. delta and |s| must be integer multiples
/// of dt = T/N.
struct TimeGrid {
    double horizon = 0.0;  // T
    int steps = 0;         // N
    double dt = 0.0;       // T / N
    double delta = 0.0;    // delay window length
    double shift = 0.0;    // s in [-delta, 0]
    int delay_steps = 0;   // delta / dt
    int shift_steps = 0;   // |s| / dt

    double time(int layer) const { return (horizon * layer) / steps; }
};

/// Finite jump measure: distinct nonzero marks with intensities
/// lambda_j = nu({zeta_j}).
struct JumpSpec {
    std::vector<double> marks;
    std::vector<double> intensities;

    std::size_t mark_count() const { return marks.size(); }
    double total_intensity() const;
};

TimeGrid build_grid(double horizon, int steps, double delta, double shift);

using NodeId = std::uint32_t;

/// Non-recombining scenario tree. Every node at layer i has 2*(m+1)
/// children: jump outcome (none, mark 1..m) crossed with Brownian sign,
/// ordered outcome-major with + before -. Immutable after construction.
class ScenarioTree {
public:
    static constexpr std::size_t kDefaultNodeBudget = 2'000'000;

    ScenarioTree(const TimeGrid& grid, const JumpSpec& jumps,
                 std::size_t node_budget = kDefaultNodeBudget);

    const TimeGrid& grid() const { return grid_; }
    const JumpSpec& jumps() const { return jumps_; }

    std::size_t node_count() const { return path_prob_.size(); }
    int layers() const { return grid_.steps + 1; }
    std::size_t branching() const { return branching_; }
    std::size_t mark_count() const { return jumps_.mark_count(); }

    NodeId layer_begin(int layer) const { return layer_offset_[static_cast<std::size_t>(layer)]; }
    NodeId layer_end(int layer) const { return layer_offset_[static_cast<std::size_t>(layer) + 1]; }
    std::size_t layer_size(int layer) const { return layer_end(layer) - layer_begin(layer); }
    int layer_of(NodeId node) const;

    NodeId parent(NodeId node) const { return parent_[node]; }
    NodeId first_child(NodeId node) const;
    /// first_child with the node's layer already known.
    NodeId first_child_at(NodeId node, int layer) const {
        return layer_end(layer) + static_cast<NodeId>((node - layer_begin(layer)) * branching_);
    }
    bool is_leaf(NodeId node) const { return node >= layer_begin(grid_.steps); }

    /// Transition probability from the parent (1 for the root).
    double transition_prob(NodeId node) const { return trans_prob_[node]; }
    /// Probability of the whole path from the root.
    double path_prob(NodeId node) const { return path_prob_[node]; }
    /// Brownian increment on the edge from the parent (0 for the root).
    double brownian_increment(NodeId node) const { return db_[node]; }
    /// Compensated jump increment for mark j on the edge from the parent.
    double jump_increment(NodeId node, std::size_t mark) const {
        return dn_[node * mark_count() + mark];
    }
    /// Index of the jump mark on the edge from the parent, or -1 for none/root.
    int jump_outcome(NodeId node) const { return jump_outcome_[node]; }

    /// Ancestor of `node` at `layer` (walks parents).
    NodeId ancestor(NodeId node, int layer) const;

private:
    TimeGrid grid_;
    JumpSpec jumps_;
    std::size_t branching_ = 0;
    std::vector<NodeId> layer_offset_;
    std::vector<NodeId> parent_;
    std::vector<double> trans_prob_;
    std::vector<double> path_prob_;
    std::vector<double> db_;
    std::vector<double> dn_;
    std::vector<int> jump_outcome_;
};

ScenarioTree build_tree(const TimeGrid& grid, const JumpSpec& jumps,
                        std::size_t node_budget = ScenarioTree::kDefaultNodeBudget);

/// Exact one-step conditional expectation: sum over the children of `node`
/// of transition probability times value, in ascending child order.
/// `values` must cover the child layer (indexed by node id).
double conditional_expectation(const ScenarioTree& tree, std::span<const double> values,
                               NodeId node);

/// Exact expectation over layer `layer`: sum of path probability times
/// value in ascending node order. `values` is indexed by node id.
double layer_expectation(const ScenarioTree& tree, std::span<const double> values, int layer);

}  // namespace mfdbsde
