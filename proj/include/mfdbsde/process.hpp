#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mfdbsde/basis.hpp"

namespace mfdbsde {

enum class ProcessKind { Y, Z, K };

/// Real-valued process adapted to the tree filtration by construction:
/// one value per node (per mark for K) on a contiguous layer range
/// starting at layer 0.
class AdaptedProcess {
public:
    AdaptedProcess() = default;
    AdaptedProcess(const ScenarioTree& tree, ProcessKind kind);

    const ScenarioTree& tree() const { return *tree_; }
    ProcessKind kind() const { return kind_; }
    int last_layer() const { return last_layer_; }
    std::size_t components() const { return components_; }

    double value(NodeId node, std::size_t comp = 0) const {
        return values_[node * components_ + comp];
    }
    void set(NodeId node, double v) { values_[node * components_] = v; }
    void set(NodeId node, std::size_t comp, double v) { values_[node * components_ + comp] = v; }

    std::span<const double> raw() const { return values_; }
    std::span<double> raw() { return values_; }

    /// Values of one component as a node-indexed buffer (K only has
    /// non-unit stride, so this copies; Y/Z return a view-equivalent copy).
    std::vector<double> component(std::size_t comp) const;

private:
    const ScenarioTree* tree_ = nullptr;
    ProcessKind kind_ = ProcessKind::Y;
    int last_layer_ = 0;
    std::size_t components_ = 1;
    std::vector<double> values_;
};

/// Delayed window of a process along the ancestral path of one node.
/// Samples are ordered by ascending offset: index 0 is -delta, the last
/// index is offset 0 (the anchor itself). Boundary conventions: Y freezes
/// at Y(0) before time 0, Z and K are zero-extended.
struct SegmentView {
    double anchor_time = 0.0;
    double dt = 0.0;
    ProcessKind kind = ProcessKind::Y;
    std::size_t components = 1;
    std::vector<double> values;  // (window x components), offset-major

    std::size_t window() const { return values.size() / components; }
    double sample(std::size_t offset_index, std::size_t comp = 0) const {
        return values[offset_index * components + comp];
    }
    /// Sample at a time shift (a nonpositive multiple of dt).
    double at_shift(double shift, std::size_t comp = 0) const;
};

SegmentView segment_view(const AdaptedProcess& proc, NodeId node);

/// Segment of a per-layer (deterministic) value array, same conventions.
SegmentView segment_from_layers(std::span<const double> layer_values, int anchor_layer,
                                const TimeGrid& grid, ProcessKind kind,
                                std::size_t components = 1);

enum class SegmentNormKind { S, L, H };

double norm_segment(const SegmentView& view, SegmentNormKind kind,
                    const JumpSpec* jumps = nullptr);

/// E[ sup_{t in grid} e^{beta t} |Y(t)|^2 ].
double norm_s2_beta(const AdaptedProcess& y, double beta);
/// E[ sum_i e^{beta t_i} |Q(t_i)|^2 dt ] over layers 0..N-1.
double norm_l2_beta(const AdaptedProcess& q, double beta);
/// E[ sum_i sum_j e^{beta t_i} |K(t_i, zeta_j)|^2 lambda_j dt ].
double norm_h2_beta(const AdaptedProcess& k, double beta);

/// Solution candidate (Y, Z, K) on one tree. Y lives on layers 0..N,
/// Z and K on 0..N-1.
struct SolutionTriple {
    const ScenarioTree* tree = nullptr;
    AdaptedProcess y;
    AdaptedProcess z;
    AdaptedProcess k;

    static SolutionTriple zero(const ScenarioTree& tree);
};

/// Squared beta-weighted distance: ||dY||_S^2 + ||dZ||_L^2 + ||dK||_H^2.
double triple_distance(const SolutionTriple& a, const SolutionTriple& b, double beta);

/// Norm of the infinite-horizon space restricted to the grid:
/// E[ sup e^{bt}|Y|^2 ] + E[ sum e^{bt} (|Z|^2 + sum_j K_j^2 lambda_j) dt ].
double norm_call(const SolutionTriple& triple, double beta);

/// Deterministic (one value per layer) triple: the closed subspace the
/// Picard map preserves when the terminal value is deterministic. Z and K
/// stay zero there but are carried for uniformity.
struct DeterministicTriple {
    TimeGrid grid;
    JumpSpec jumps;
    std::vector<double> y;  // layers 0..N
    std::vector<double> z;  // layers 0..N-1
    std::vector<double> k;  // (layer, mark), layers 0..N-1

    static DeterministicTriple zero(const TimeGrid& grid, const JumpSpec& jumps);

    std::size_t mark_count() const { return jumps.mark_count(); }
    /// Y at a grid time; exactly 0 beyond the horizon.
    double y_at_time(double t) const;
};

double triple_distance(const DeterministicTriple& a, const DeterministicTriple& b, double beta);
double norm_call(const DeterministicTriple& triple, double beta);

}  // namespace mfdbsde
