#include "mfdbsde/basis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace mfdbsde {

namespace {

// delta / dt must be integral within 1e-9.
int aligned_steps(double value, double dt, const char* what) {
    const double ratio = value / dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9) {
        std::ostringstream msg;
        msg << what << " = " << value << " is not an integer multiple of dt = " << dt;
        throw AlignmentError(msg.str());
    }
    return static_cast<int>(rounded);
}

}  // namespace

double JumpSpec::total_intensity() const {
    double sum = 0.0;
    for (double lam : intensities) sum += lam;
    return sum;
}

TimeGrid build_grid(double horizon, int steps, double delta, double shift) {
    if (!(horizon > 0.0)) throw DomainError("horizon must be positive");
    if (steps < 1) throw DomainError("step count must be at least 1");
    if (delta < 0.0) throw DomainError("delay must be nonnegative");
    if (shift > 0.0 || shift < -delta - 1e-12) {
        std::ostringstream msg;
        msg << "shift s = " << shift << " must lie in [-delta, 0] = [" << -delta << ", 0]";
        throw DomainError(msg.str());
    }
    TimeGrid grid;
    grid.horizon = horizon;
    grid.steps = steps;
    grid.dt = horizon / steps;
    grid.delta = delta;
    grid.shift = shift;
    grid.delay_steps = aligned_steps(delta, grid.dt, "delta");
    grid.shift_steps = aligned_steps(-shift, grid.dt, "|s|");
    if (grid.shift_steps > grid.delay_steps) {
        std::ostringstream msg;
        msg << "shift s = " << shift << " lies outside the delay window of length " << delta;
        throw DomainError(msg.str());
    }
    return grid;
}

ScenarioTree::ScenarioTree(const TimeGrid& grid, const JumpSpec& jumps,
                           std::size_t node_budget)
    : grid_(grid), jumps_(jumps) {
    if (jumps_.marks.size() != jumps_.intensities.size())
        throw DomainError("jump marks and intensities must have equal length");
    for (std::size_t j = 0; j < jumps_.marks.size(); ++j) {
        if (jumps_.marks[j] == 0.0) throw DomainError("jump marks must be nonzero");
        if (jumps_.intensities[j] < 0.0) throw DomainError("jump intensities must be nonnegative");
        for (std::size_t l = 0; l < j; ++l)
            if (jumps_.marks[l] == jumps_.marks[j])
                throw DomainError("jump marks must be distinct");
    }
    const double thinning = jumps_.total_intensity() * grid_.dt;
    if (thinning >= 1.0) {
        std::ostringstream msg;
        msg << "(sum of intensities) * dt = " << thinning << " must be < 1";
        throw ThinningError(msg.str());
    }

    const std::size_t m = jumps_.mark_count();
    branching_ = 2 * (m + 1);

    // Node count sum_{i=0..N} branching^i, guarded against overflow.
    long double count = 0.0L;
    long double layer = 1.0L;
    for (int i = 0; i <= grid_.steps; ++i) {
        count += layer;
        layer *= static_cast<long double>(branching_);
        if (count > static_cast<long double>(node_budget)) {
            std::ostringstream msg;
            msg << "tree with N = " << grid_.steps << " steps and branching " << branching_
                << " exceeds the node budget of " << node_budget;
            throw BudgetError(msg.str());
        }
    }
    const auto total = static_cast<std::size_t>(count);

    layer_offset_.resize(static_cast<std::size_t>(grid_.steps) + 2);
    parent_.resize(total);
    trans_prob_.resize(total);
    path_prob_.resize(total);
    db_.resize(total);
    dn_.resize(total * std::max<std::size_t>(m, 1), 0.0);
    if (m == 0) dn_.clear();
    jump_outcome_.resize(total);

    // Branch law: jump outcome o in {none, mark 1..m} with probability
    // q_none = 1 - sum(lambda) dt, q_j = lambda_j dt; Brownian sign +/- each 1/2,
    // independent of the outcome. Children ordered outcome-major, + before -.
    const double sqrt_dt = std::sqrt(grid_.dt);
    std::vector<double> outcome_prob(m + 1);
    outcome_prob[0] = 1.0 - thinning;
    for (std::size_t j = 0; j < m; ++j) outcome_prob[j + 1] = jumps_.intensities[j] * grid_.dt;

    layer_offset_[0] = 0;
    parent_[0] = 0;
    trans_prob_[0] = 1.0;
    path_prob_[0] = 1.0;
    db_[0] = 0.0;
    jump_outcome_[0] = -1;

    NodeId next = 1;
    std::size_t layer_begin = 0;
    std::size_t layer_count = 1;
    for (int i = 0; i < grid_.steps; ++i) {
        layer_offset_[static_cast<std::size_t>(i) + 1] = next;
        for (std::size_t p = 0; p < layer_count; ++p) {
            const NodeId parent_id = static_cast<NodeId>(layer_begin + p);
            for (std::size_t o = 0; o <= m; ++o) {
                for (int sign = 0; sign < 2; ++sign) {
                    const NodeId child = next++;
                    parent_[child] = parent_id;
                    trans_prob_[child] = 0.5 * outcome_prob[o];
                    path_prob_[child] = path_prob_[parent_id] * trans_prob_[child];
                    db_[child] = (sign == 0) ? sqrt_dt : -sqrt_dt;
                    jump_outcome_[child] = static_cast<int>(o) - 1;
                    for (std::size_t j = 0; j < m; ++j) {
                        const double indicator = (o == j + 1) ? 1.0 : 0.0;
                        dn_[static_cast<std::size_t>(child) * m + j] =
                            indicator - jumps_.intensities[j] * grid_.dt;
                    }
                }
            }
        }
        layer_begin = layer_offset_[static_cast<std::size_t>(i) + 1];
        layer_count *= branching_;
    }
    layer_offset_[static_cast<std::size_t>(grid_.steps) + 1] = next;
}

int ScenarioTree::layer_of(NodeId node) const {
    const auto it = std::upper_bound(layer_offset_.begin() + 1, layer_offset_.end(), node);
    if (it == layer_offset_.end()) throw DomainError("node id out of range");
    return static_cast<int>(it - layer_offset_.begin()) - 1;
}

NodeId ScenarioTree::first_child(NodeId node) const {
    const int layer = layer_of(node);
    if (layer >= grid_.steps) throw DomainError("leaf nodes have no children");
    return first_child_at(node, layer);
}

NodeId ScenarioTree::ancestor(NodeId node, int layer) const {
    int current = layer_of(node);
    if (layer > current) throw DomainError("ancestor layer is below the node");
    while (current > layer) {
        node = parent_[node];
        --current;
    }
    return node;
}

double conditional_expectation(const ScenarioTree& tree, std::span<const double> values,
                               NodeId node) {
    const NodeId first = tree.first_child(node);
    const NodeId last = first + static_cast<NodeId>(tree.branching());
    if (values.size() < last)
        throw IncompleteLayerError("values do not cover all children of the node");
    double sum = 0.0;
    for (NodeId c = first; c < last; ++c) sum += tree.transition_prob(c) * values[c];
    return sum;
}

double layer_expectation(const ScenarioTree& tree, std::span<const double> values, int layer) {
    const NodeId begin = tree.layer_begin(layer);
    const NodeId end = tree.layer_end(layer);
    if (values.size() < end)
        throw IncompleteLayerError("values do not cover the requested layer");
    double sum = 0.0;
    for (NodeId v = begin; v < end; ++v) sum += tree.path_prob(v) * values[v];
    return sum;
}

}  // namespace mfdbsde
