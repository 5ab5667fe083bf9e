#pragma once

#include <span>
#include <vector>

#include "mfdbsde/contraction.hpp"
#include "mfdbsde/generator.hpp"
#include "mfdbsde/process.hpp"

namespace mfdbsde {

struct PicardConfig {
    double tol = 1e-10;          // on the squared beta-weighted triple distance
    int max_iterations = 100;
    double beta = 1.0;           // norm weight for the stopping metric
    int divergence_patience = 3; // consecutive distance increases before giving up
    int threads = 1;
};

struct MartingaleProjection {
    double z = 0.0;
    std::vector<double> k;   // one entry per mark
    double residual = 0.0;   // sqrt(E[(v - z dB - k dN)^2]) at the node
};

/// Conditional least-squares decomposition of the centered next-layer
/// values onto (dB, dN_1..dN_m). The Brownian and jump blocks decouple
/// (their cross-covariance vanishes by construction); distinct jump
/// increments are anticorrelated under one-jump thinning, so the jump
/// block is a full m x m solve. Marks with zero intensity get k_j = 0.
/// `next_values` is node-indexed and must cover the children of `node`.
MartingaleProjection martingale_projection(const ScenarioTree& tree,
                                           std::span<const double> next_values, NodeId node);

/// One application of the Picard map: evaluates the driver on `input`
/// (segments and layer means), runs the exact backward pass from the
/// terminal values, then extracts Z and K by martingale projection.
/// `xi` holds the terminal values indexed by leaf position within layer N.
SolutionTriple apply_upsilon(const ScenarioTree& tree, const GeneratorSpec& gen,
                             std::span<const double> xi, const SolutionTriple& input,
                             int threads = 1);

struct SolveResult {
    SolutionTriple solution;
    IterationTrace trace;
};

/// Picard iteration from the zero triple; stops when the beta-weighted
/// triple distance between consecutive iterates drops to config.tol.
SolveResult solve_finite(const ScenarioTree& tree, const GeneratorSpec& gen,
                         std::span<const double> xi, const PicardConfig& config);

struct VerifyReport {
    double max_one_step = 0.0;        // max |Y - E[Y'] - f dt| over nodes
    double max_orthogonality = 0.0;   // max |E[res dB]|, |E[res dN_j]|
    double max_terminal = 0.0;        // max |Y(leaf) - xi|
    NodeId worst_node = 0;
    bool pass = false;
};

/// Checks the one-step solution identity (driver evaluated on the
/// solution itself) and the projection orthogonality at every node.
VerifyReport verify_solution(const ScenarioTree& tree, const GeneratorSpec& gen,
                             std::span<const double> xi, const SolutionTriple& sol, double tol);

struct StabilityInstance {
    const GeneratorSpec* gen = nullptr;
    std::span<const double> xi;  // leaf-indexed
    const SolutionTriple* sol = nullptr;
};

struct StabilityReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double c_beta_value = 0.0;
    bool holds = false;
};

/// Stability inequality between two solved instances on one tree:
/// lhs = squared triple distance, rhs = C_beta (E|dxi|^2 + E int e^{bt}|df|^2 dt)
/// with each driver evaluated along its own solution.
StabilityReport stability_check(const StabilityInstance& a, const StabilityInstance& b,
                                double beta);

/// Terminal data for the reduced (per-layer) solver.
struct ReducedTerminal {
    double mean = 0.0;            // E[xi]
    double mean_z = 0.0;          // layer mean of the Z projection implied by xi
    std::vector<double> mean_k;   // per-mark layer means, empty means zero
    bool deterministic = true;    // xi is a constant: the whole triple is deterministic

    static ReducedTerminal constant(double value) { return {value, 0.0, {}, true}; }
    /// xi = intercept + slope * B(T): E[xi] = intercept, E[Z] = slope.
    static ReducedTerminal linear_brownian(double intercept, double slope) {
        return {intercept, slope, {}, false};
    }
};

struct ReducedSolveResult {
    DeterministicTriple solution;
    bool means_only = false;  // true when y carries layer means of a random solution
    IterationTrace trace;
};

/// Picard iteration on the per-layer reduction. Exact (equal to the tree
/// solve) in two regimes: a deterministic terminal value keeps every
/// iterate deterministic under any pure driver; a mean-only driver closes
/// the layer-mean recursion for any square-summable terminal value.
ReducedSolveResult solve_finite_reduced(const TimeGrid& grid, const JumpSpec& jumps,
                                        const GeneratorSpec& gen,
                                        const ReducedTerminal& terminal,
                                        const PicardConfig& config);

}  // namespace mfdbsde
