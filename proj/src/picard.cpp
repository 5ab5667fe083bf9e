#include "mfdbsde/picard.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>
#include <utility>

namespace mfdbsde {

namespace {

// Static contiguous partition; per-node work only writes its own slots, so
// results are identical for any thread count.
template <class Fn>
void parallel_nodes(NodeId begin, NodeId end, int threads, Fn&& fn) {
    const std::size_t count = end - begin;
    if (threads <= 1 || count < 2048) {
        for (NodeId v = begin; v < end; ++v) fn(v);
        return;
    }
    const auto workers = static_cast<std::size_t>(threads);
    const std::size_t chunk = (count + workers - 1) / workers;
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const NodeId lo = begin + static_cast<NodeId>(std::min(w * chunk, count));
        const NodeId hi = begin + static_cast<NodeId>(std::min((w + 1) * chunk, count));
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn, &errors, w] {
            try {
                for (NodeId v = lo; v < hi; ++v) fn(v);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);
}

void validate_delay(const GeneratorSpec& gen, const TimeGrid& grid) {
    const auto aligned_within = [&](double offset, const char* what) {
        const double ratio = -offset / grid.dt;
        const auto steps = std::llround(ratio);
        if (std::abs(ratio - static_cast<double>(steps)) > 1e-9) {
            std::ostringstream msg;
            msg << "generator " << what << " = " << offset
                << " is not an integer multiple of dt = " << grid.dt;
            throw AlignmentError(msg.str());
        }
        if (steps < 0 || steps > grid.delay_steps) {
            std::ostringstream msg;
            msg << "generator " << what << " = " << offset
                << " lies outside the grid delay window [-" << grid.delta << ", 0]";
            throw AlignmentError(msg.str());
        }
    };
    switch (gen.delay.kind) {
        case DelayDescriptor::Kind::point_shift:
            aligned_within(gen.delay.shift, "shift");
            break;
        case DelayDescriptor::Kind::two_point:
            aligned_within(-gen.delay.delta, "two-point delay");
            break;
        case DelayDescriptor::Kind::measure: {
            const double ratio = gen.delay.delta / grid.dt;
            if (std::abs(ratio - grid.delay_steps) > 1e-9)
                throw AlignmentError(
                    "measure-delay window must coincide with the grid delay window");
            (void)gen.delay.window_weights(grid.dt);  // checks dirac alignment
            break;
        }
    }
}

// Reusable segment fill; same conventions as segment_view.
void fill_segment(const AdaptedProcess& proc, const ScenarioTree& tree, NodeId node,
                  int anchor_layer, SegmentView& view) {
    const TimeGrid& grid = tree.grid();
    view.anchor_time = grid.time(anchor_layer);
    view.dt = grid.dt;
    view.kind = proc.kind();
    view.components = proc.components();
    const int w = grid.delay_steps;
    view.values.resize(static_cast<std::size_t>(w + 1) * view.components);

    NodeId walker = node;
    int walker_layer = anchor_layer;
    for (int idx = w; idx >= 0; --idx) {
        const int layer = anchor_layer - (w - idx);
        double* out = view.values.data() + static_cast<std::size_t>(idx) * view.components;
        if (layer < 0) {
            if (proc.kind() == ProcessKind::Y) {
                for (std::size_t c = 0; c < view.components; ++c) out[c] = proc.value(0, c);
            } else {
                std::fill(out, out + view.components, 0.0);
            }
            continue;
        }
        while (walker_layer > layer) {
            walker = tree.parent(walker);
            --walker_layer;
        }
        for (std::size_t c = 0; c < view.components; ++c) out[c] = proc.value(walker, c);
    }
}

struct LayerMeans {
    std::vector<double> y;  // layers 0..N-1
    std::vector<double> z;
    std::vector<double> k;  // (layer, mark)
};

LayerMeans layer_means(const ScenarioTree& tree, const SolutionTriple& input) {
    const int n = tree.grid().steps;
    const std::size_t m = tree.mark_count();
    LayerMeans means;
    means.y.resize(n);
    means.z.resize(n);
    means.k.assign(static_cast<std::size_t>(n) * std::max<std::size_t>(m, 1), 0.0);
    for (int i = 0; i < n; ++i) {
        means.y[i] = layer_expectation(tree, input.y.raw(), i);
        means.z[i] = layer_expectation(tree, input.z.raw(), i);
        for (std::size_t j = 0; j < m; ++j) {
            double sum = 0.0;
            for (NodeId v = tree.layer_begin(i); v < tree.layer_end(i); ++v)
                sum += tree.path_prob(v) * input.k.value(v, j);
            means.k[static_cast<std::size_t>(i) * m + j] = sum;
        }
    }
    return means;
}

// Driver values phi(node) for layers 0..N-1, evaluated on `input`.
std::vector<double> driver_values(const ScenarioTree& tree, const GeneratorSpec& gen,
                                  const SolutionTriple& input, int threads) {
    const TimeGrid& grid = tree.grid();
    const int n = grid.steps;
    const std::size_t m = tree.mark_count();
    const LayerMeans means = layer_means(tree, input);

    std::vector<double> phi(tree.layer_end(n - 1));
    for (int i = 0; i < n; ++i) {
        const double t = grid.time(i);
        const std::optional<double> pi =
            gen.pi ? std::optional<double>(gen.pi(t)) : std::nullopt;
        const std::span<const double> mean_k(means.k.data() + static_cast<std::size_t>(i) * m, m);
        const double mean_y = means.y[i];
        const double mean_z = means.z[i];
        parallel_nodes(tree.layer_begin(i), tree.layer_end(i), threads, [&](NodeId v) {
            thread_local SegmentView seg_y, seg_z, seg_k;
            fill_segment(input.y, tree, v, i, seg_y);
            fill_segment(input.z, tree, v, i, seg_z);
            fill_segment(input.k, tree, v, i, seg_k);
            GeneratorInputs in;
            in.t = t;
            in.seg_y = &seg_y;
            in.seg_z = &seg_z;
            in.seg_k = &seg_k;
            in.mean_y = mean_y;
            in.mean_z = mean_z;
            in.mean_k = mean_k;
            in.pi = pi;
            phi[v] = evaluate(gen, in);
        });
    }
    return phi;
}

// Jump-block normal equations at one node; A and b are scratch.
void project_node(const ScenarioTree& tree, std::span<const double> next_values, NodeId node,
                  int layer, double& z_out, std::span<double> k_out, double& residual_out,
                  std::vector<double>& scratch) {
    const std::size_t m = tree.mark_count();
    const NodeId first = tree.first_child_at(node, layer);
    const NodeId last = first + static_cast<NodeId>(tree.branching());

    double ce = 0.0;
    for (NodeId c = first; c < last; ++c) ce += tree.transition_prob(c) * next_values[c];

    double gram_bb = 0.0;
    double cov_b = 0.0;
    for (NodeId c = first; c < last; ++c) {
        const double p = tree.transition_prob(c);
        const double db = tree.brownian_increment(c);
        gram_bb += p * db * db;
        cov_b += p * (next_values[c] - ce) * db;
    }
    z_out = (gram_bb > 0.0) ? cov_b / gram_bb : 0.0;

    if (m > 0) {
        scratch.assign(m * m + m, 0.0);
        double* gram = scratch.data();  // m x m
        double* rhs = gram + m * m;     // m
        for (NodeId c = first; c < last; ++c) {
            const double p = tree.transition_prob(c);
            const double v = next_values[c] - ce;
            for (std::size_t j = 0; j < m; ++j) {
                const double dnj = tree.jump_increment(c, j);
                rhs[j] += p * v * dnj;
                for (std::size_t l = 0; l <= j; ++l)
                    gram[j * m + l] += p * dnj * tree.jump_increment(c, l);
            }
        }
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t l = j + 1; l < m; ++l) gram[j * m + l] = gram[l * m + j];

        // Active marks: zero intensity gives an identically-zero row.
        std::vector<std::size_t> active;
        active.reserve(m);
        for (std::size_t j = 0; j < m; ++j)
            if (tree.jumps().intensities[j] > 0.0) active.push_back(j);

        const std::size_t r = active.size();
        if (r > 0) {
            std::vector<double> a(r * r);
            std::vector<double> y(r);
            for (std::size_t j = 0; j < r; ++j) {
                y[j] = rhs[active[j]];
                for (std::size_t l = 0; l < r; ++l) a[j * r + l] = gram[active[j] * m + active[l]];
            }
            // Gaussian elimination with partial pivoting.
            std::vector<std::size_t> perm(r);
            for (std::size_t j = 0; j < r; ++j) perm[j] = j;
            for (std::size_t col = 0; col < r; ++col) {
                std::size_t pivot = col;
                for (std::size_t row = col + 1; row < r; ++row)
                    if (std::abs(a[row * r + col]) > std::abs(a[pivot * r + col])) pivot = row;
                if (pivot != col) {
                    for (std::size_t l = 0; l < r; ++l) std::swap(a[col * r + l], a[pivot * r + l]);
                    std::swap(y[col], y[pivot]);
                }
                const double diag = a[col * r + col];
                if (diag == 0.0) continue;  // degenerate direction stays zero
                for (std::size_t row = col + 1; row < r; ++row) {
                    const double factor = a[row * r + col] / diag;
                    if (factor == 0.0) continue;
                    for (std::size_t l = col; l < r; ++l) a[row * r + l] -= factor * a[col * r + l];
                    y[row] -= factor * y[col];
                }
            }
            for (std::size_t col = r; col-- > 0;) {
                double acc = y[col];
                for (std::size_t l = col + 1; l < r; ++l) acc -= a[col * r + l] * y[l];
                const double diag = a[col * r + col];
                y[col] = (diag == 0.0) ? 0.0 : acc / diag;
            }
            for (std::size_t j = 0; j < m; ++j) k_out[j] = 0.0;
            for (std::size_t j = 0; j < r; ++j) k_out[active[j]] = y[j];
        } else {
            for (std::size_t j = 0; j < m; ++j) k_out[j] = 0.0;
        }
    }

    double res_sq = 0.0;
    for (NodeId c = first; c < last; ++c) {
        double res = next_values[c] - ce - z_out * tree.brownian_increment(c);
        for (std::size_t j = 0; j < m; ++j) res -= k_out[j] * tree.jump_increment(c, j);
        res_sq += tree.transition_prob(c) * res * res;
    }
    residual_out = std::sqrt(std::max(res_sq, 0.0));
}

}  // namespace

MartingaleProjection martingale_projection(const ScenarioTree& tree,
                                           std::span<const double> next_values, NodeId node) {
    const int layer = tree.layer_of(node);
    if (layer >= tree.grid().steps) throw DomainError("projection needs a non-leaf node");
    const NodeId last = tree.first_child_at(node, layer) + static_cast<NodeId>(tree.branching());
    if (next_values.size() < last)
        throw IncompleteLayerError("next_values do not cover the children of the node");
    MartingaleProjection out;
    out.k.assign(tree.mark_count(), 0.0);
    std::vector<double> scratch;
    project_node(tree, next_values, node, layer, out.z, out.k, out.residual, scratch);
    return out;
}

SolutionTriple apply_upsilon(const ScenarioTree& tree, const GeneratorSpec& gen,
                             std::span<const double> xi, const SolutionTriple& input,
                             int threads) {
    const TimeGrid& grid = tree.grid();
    const int n = grid.steps;
    if (input.tree != &tree)
        throw IncompatibilityError("input triple lives on a different tree");
    if (xi.size() != tree.layer_size(n))
        throw DomainError("terminal values must cover every leaf");
    validate_delay(gen, grid);

    const std::vector<double> phi = driver_values(tree, gen, input, threads);

    SolutionTriple out = SolutionTriple::zero(tree);
    auto y = out.y.raw();
    const NodeId leaf_begin = tree.layer_begin(n);
    for (NodeId v = leaf_begin; v < tree.layer_end(n); ++v) y[v] = xi[v - leaf_begin];
    for (int i = n - 1; i >= 0; --i) {
        for (NodeId v = tree.layer_begin(i); v < tree.layer_end(i); ++v) {
            const NodeId first = tree.first_child_at(v, i);
            double ce = 0.0;
            for (NodeId c = first; c < first + tree.branching(); ++c)
                ce += tree.transition_prob(c) * y[c];
            y[v] = ce + phi[v] * grid.dt;
        }
    }

    const std::size_t m = tree.mark_count();
    for (int i = 0; i < n; ++i) {
        parallel_nodes(tree.layer_begin(i), tree.layer_end(i), threads, [&](NodeId v) {
            thread_local std::vector<double> scratch;
            thread_local std::vector<double> kbuf;
            kbuf.resize(std::max<std::size_t>(m, 1));
            double z = 0.0;
            double residual = 0.0;
            project_node(tree, y, v, i, z, std::span<double>(kbuf.data(), m), residual, scratch);
            out.z.set(v, z);
            for (std::size_t j = 0; j < m; ++j) out.k.set(v, j, kbuf[j]);
        });
    }
    return out;
}

namespace {

// Shared Picard loop: `step` maps the current state to the next, `dist`
// measures consecutive iterates.
template <class State, class Step, class Dist>
IterationTrace picard_loop(State& current, const PicardConfig& config, Step&& step, Dist&& dist) {
    if (!(config.tol > 0.0)) throw DomainError("Picard tolerance must be positive");
    if (config.max_iterations < 1) throw DomainError("max_iterations must be at least 1");
    IterationTrace trace;
    trace.beta = config.beta;
    int increase_streak = 0;
    double prev_distance = 0.0;
    for (int k = 1; k <= config.max_iterations; ++k) {
        State next = step(current);
        const double d = dist(next, current);
        trace.distances.push_back(d);
        if (k >= 2) trace.ratios.push_back(prev_distance > 0.0 ? d / prev_distance : 0.0);
        current = std::move(next);
        trace.iterations = k;
        if (d <= config.tol) {
            trace.converged = true;
            return trace;
        }
        if (k >= 2 && d > prev_distance) {
            if (++increase_streak >= config.divergence_patience) {
                std::ostringstream msg;
                msg << "Picard distances increased for " << increase_streak
                    << " consecutive iterations (last d = " << d << ")";
                throw DivergenceError(msg.str(), trace);
            }
        } else {
            increase_streak = 0;
        }
        prev_distance = d;
    }
    std::ostringstream msg;
    msg << "Picard iteration did not reach tol = " << config.tol << " within "
        << config.max_iterations << " iterations (last d = " << trace.distances.back() << ")";
    throw NonConvergenceError(msg.str(), trace);
}

}  // namespace

SolveResult solve_finite(const ScenarioTree& tree, const GeneratorSpec& gen,
                         std::span<const double> xi, const PicardConfig& config) {
    SolveResult result;
    result.solution = SolutionTriple::zero(tree);
    result.trace = picard_loop(
        result.solution, config,
        [&](const SolutionTriple& cur) { return apply_upsilon(tree, gen, xi, cur, config.threads); },
        [&](const SolutionTriple& a, const SolutionTriple& b) {
            return triple_distance(a, b, config.beta);
        });
    return result;
}

VerifyReport verify_solution(const ScenarioTree& tree, const GeneratorSpec& gen,
                             std::span<const double> xi, const SolutionTriple& sol, double tol) {
    const TimeGrid& grid = tree.grid();
    const int n = grid.steps;
    const std::size_t m = tree.mark_count();
    const std::vector<double> phi = driver_values(tree, gen, sol, 1);

    VerifyReport report;
    auto y = sol.y.raw();
    for (int i = 0; i < n; ++i) {
        for (NodeId v = tree.layer_begin(i); v < tree.layer_end(i); ++v) {
            const NodeId first = tree.first_child_at(v, i);
            double ce = 0.0;
            for (NodeId c = first; c < first + tree.branching(); ++c)
                ce += tree.transition_prob(c) * y[c];
            const double violation = std::abs(y[v] - ce - phi[v] * grid.dt);
            if (violation > report.max_one_step) {
                report.max_one_step = violation;
                report.worst_node = v;
            }
            // Orthogonality of the representation residual.
            double ortho_b = 0.0;
            std::vector<double> ortho_n(m, 0.0);
            for (NodeId c = first; c < first + tree.branching(); ++c) {
                const double p = tree.transition_prob(c);
                double res = y[c] - ce - sol.z.value(v) * tree.brownian_increment(c);
                for (std::size_t j = 0; j < m; ++j)
                    res -= sol.k.value(v, j) * tree.jump_increment(c, j);
                ortho_b += p * res * tree.brownian_increment(c);
                for (std::size_t j = 0; j < m; ++j) ortho_n[j] += p * res * tree.jump_increment(c, j);
            }
            double ortho = std::abs(ortho_b);
            for (std::size_t j = 0; j < m; ++j) ortho = std::max(ortho, std::abs(ortho_n[j]));
            report.max_orthogonality = std::max(report.max_orthogonality, ortho);
        }
    }
    const NodeId leaf_begin = tree.layer_begin(n);
    for (NodeId v = leaf_begin; v < tree.layer_end(n); ++v)
        report.max_terminal = std::max(report.max_terminal, std::abs(y[v] - xi[v - leaf_begin]));
    report.pass = report.max_one_step <= tol && report.max_orthogonality <= tol;
    return report;
}

StabilityReport stability_check(const StabilityInstance& a, const StabilityInstance& b,
                                double beta) {
    if (a.sol == nullptr || b.sol == nullptr || a.gen == nullptr || b.gen == nullptr)
        throw DomainError("stability check needs two solved instances");
    if (a.sol->tree != b.sol->tree)
        throw IncompatibilityError("stability check requires both instances on one tree");
    const ScenarioTree& tree = *a.sol->tree;
    const TimeGrid& grid = tree.grid();
    const int n = grid.steps;

    const std::vector<double> phi_a = driver_values(tree, *a.gen, *a.sol, 1);
    const std::vector<double> phi_b = driver_values(tree, *b.gen, *b.sol, 1);

    double xi_term = 0.0;
    const NodeId leaf_begin = tree.layer_begin(n);
    for (NodeId v = leaf_begin; v < tree.layer_end(n); ++v) {
        const double d = a.xi[v - leaf_begin] - b.xi[v - leaf_begin];
        xi_term += tree.path_prob(v) * d * d;
    }
    double f_term = 0.0;
    for (int i = 0; i < n; ++i) {
        const double weight = std::exp(beta * grid.time(i)) * grid.dt;
        for (NodeId v = tree.layer_begin(i); v < tree.layer_end(i); ++v) {
            const double d = phi_a[v] - phi_b[v];
            f_term += tree.path_prob(v) * weight * d * d;
        }
    }

    StabilityReport report;
    report.c_beta_value = c_beta(beta, grid.horizon);
    report.lhs = triple_distance(*a.sol, *b.sol, beta);
    report.rhs = report.c_beta_value * (xi_term + f_term);
    report.holds = report.lhs <= report.rhs * (1.0 + 1e-9);
    return report;
}

ReducedSolveResult solve_finite_reduced(const TimeGrid& grid, const JumpSpec& jumps,
                                        const GeneratorSpec& gen,
                                        const ReducedTerminal& terminal,
                                        const PicardConfig& config) {
    if (!terminal.deterministic && !gen.mean_only)
        throw ConfigError("reduced solve needs a deterministic terminal value or a mean-only driver");
    validate_delay(gen, grid);
    const int n = grid.steps;
    const std::size_t m = jumps.mark_count();
    if (!terminal.mean_k.empty() && terminal.mean_k.size() != m)
        throw IncompatibilityError("terminal mean_k length does not match the jump measure");

    const double mean_z = terminal.deterministic ? 0.0 : terminal.mean_z;
    std::vector<double> mean_k(m, 0.0);
    if (!terminal.deterministic && !terminal.mean_k.empty()) mean_k = terminal.mean_k;

    const std::vector<double> zeros_z(static_cast<std::size_t>(n), 0.0);
    const std::vector<double> zeros_k(static_cast<std::size_t>(n) * std::max<std::size_t>(m, 1),
                                      0.0);

    ReducedSolveResult result;
    result.means_only = !terminal.deterministic;
    result.solution = DeterministicTriple::zero(grid, jumps);

    auto step = [&](const DeterministicTriple& cur) {
        DeterministicTriple next = cur;
        next.y[n] = terminal.mean;
        double acc = terminal.mean;
        for (int i = n - 1; i >= 0; --i) {
            const double t = grid.time(i);
            const SegmentView seg_y = segment_from_layers(cur.y, i, grid, ProcessKind::Y);
            const SegmentView seg_z = segment_from_layers(zeros_z, i, grid, ProcessKind::Z);
            const SegmentView seg_k = segment_from_layers(zeros_k, i, grid, ProcessKind::K,
                                                          std::max<std::size_t>(m, 1));
            GeneratorInputs in;
            in.t = t;
            in.seg_y = &seg_y;
            in.seg_z = &seg_z;
            in.seg_k = &seg_k;
            in.mean_y = cur.y[i];
            in.mean_z = mean_z;
            in.mean_k = mean_k;
            in.pi = gen.pi ? std::optional<double>(gen.pi(t)) : std::nullopt;
            acc += evaluate(gen, in) * grid.dt;
            next.y[i] = acc;
        }
        return next;
    };
    auto dist = [&](const DeterministicTriple& a, const DeterministicTriple& b) {
        double sup = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double d = a.y[i] - b.y[i];
            sup = std::max(sup, std::exp(config.beta * grid.time(i)) * d * d);
        }
        return sup;
    };
    result.trace = picard_loop(result.solution, config, step, dist);

    if (result.means_only) {
        std::fill(result.solution.z.begin(), result.solution.z.end(), mean_z);
        for (int i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) result.solution.k[i * m + j] = mean_k[j];
    }
    return result;
}

}  // namespace mfdbsde
