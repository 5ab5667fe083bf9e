#include "mfdbsde/process.hpp"

#include <algorithm>
#include <cmath>

namespace mfdbsde {

AdaptedProcess::AdaptedProcess(const ScenarioTree& tree, ProcessKind kind)
    : tree_(&tree), kind_(kind) {
    last_layer_ = (kind == ProcessKind::Y) ? tree.grid().steps : tree.grid().steps - 1;
    components_ = (kind == ProcessKind::K) ? std::max<std::size_t>(tree.mark_count(), 1) : 1;
    values_.assign(tree.layer_end(last_layer_) * components_, 0.0);
}

std::vector<double> AdaptedProcess::component(std::size_t comp) const {
    std::vector<double> out(values_.size() / components_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = values_[i * components_ + comp];
    return out;
}

double SegmentView::at_shift(double shift, std::size_t comp) const {
    const double ratio = -shift / dt;
    const auto steps_back = static_cast<std::size_t>(std::llround(ratio));
    if (std::abs(ratio - static_cast<double>(steps_back)) > 1e-9 || steps_back >= window())
        throw DomainError("segment shift is not an aligned offset inside the window");
    return sample(window() - 1 - steps_back, comp);
}

SegmentView segment_view(const AdaptedProcess& proc, NodeId node) {
    const ScenarioTree& tree = proc.tree();
    const TimeGrid& grid = tree.grid();
    const int anchor_layer = tree.layer_of(node);

    SegmentView view;
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
                for (std::size_t c = 0; c < view.components; ++c) out[c] = 0.0;
            }
            continue;
        }
        while (walker_layer > layer) {
            walker = tree.parent(walker);
            --walker_layer;
        }
        for (std::size_t c = 0; c < view.components; ++c) out[c] = proc.value(walker, c);
    }
    return view;
}

SegmentView segment_from_layers(std::span<const double> layer_values, int anchor_layer,
                                const TimeGrid& grid, ProcessKind kind,
                                std::size_t components) {
    SegmentView view;
    view.anchor_time = grid.time(anchor_layer);
    view.dt = grid.dt;
    view.kind = kind;
    view.components = components;
    const int w = grid.delay_steps;
    view.values.resize(static_cast<std::size_t>(w + 1) * components);
    for (int idx = 0; idx <= w; ++idx) {
        const int layer = anchor_layer - (w - idx);
        double* out = view.values.data() + static_cast<std::size_t>(idx) * components;
        for (std::size_t c = 0; c < components; ++c) {
            if (layer >= 0) {
                out[c] = layer_values[static_cast<std::size_t>(layer) * components + c];
            } else {
                out[c] = (kind == ProcessKind::Y) ? layer_values[c] : 0.0;
            }
        }
    }
    return view;
}

double norm_segment(const SegmentView& view, SegmentNormKind kind, const JumpSpec* jumps) {
    switch (kind) {
        case SegmentNormKind::S: {
            double best = 0.0;
            for (double v : view.values) best = std::max(best, v * v);
            return best;
        }
        case SegmentNormKind::L: {
            double sum = 0.0;
            for (double v : view.values) sum += v * v;
            return sum * view.dt;
        }
        case SegmentNormKind::H: {
            if (jumps == nullptr)
                throw DomainError("H-kind segment norm requires the jump measure");
            if (view.components != jumps->mark_count())
                throw IncompatibilityError("segment components do not match the jump measure");
            double sum = 0.0;
            for (std::size_t w = 0; w < view.window(); ++w)
                for (std::size_t j = 0; j < view.components; ++j) {
                    const double v = view.sample(w, j);
                    sum += v * v * jumps->intensities[j];
                }
            return sum * view.dt;
        }
    }
    throw DomainError("unknown segment norm kind");
}

double norm_s2_beta(const AdaptedProcess& y, double beta) {
    const ScenarioTree& tree = y.tree();
    const TimeGrid& grid = tree.grid();
    const int n = grid.steps;

    // Running pathwise max of e^{beta t} Y^2, propagated layer by layer;
    // the expectation is then the leaf sum in ascending order.
    std::vector<double> running(tree.node_count());
    const double y0 = y.value(0);
    running[0] = y0 * y0;  // e^{0} at t = 0
    for (int i = 1; i <= n; ++i) {
        const double weight = std::exp(beta * grid.time(i));
        for (NodeId v = tree.layer_begin(i); v < tree.layer_end(i); ++v) {
            const double val = y.value(v);
            running[v] = std::max(running[tree.parent(v)], weight * val * val);
        }
    }
    double sum = 0.0;
    for (NodeId v = tree.layer_begin(n); v < tree.layer_end(n); ++v)
        sum += tree.path_prob(v) * running[v];
    return sum;
}

double norm_l2_beta(const AdaptedProcess& q, double beta) {
    const ScenarioTree& tree = q.tree();
    const TimeGrid& grid = tree.grid();
    double sum = 0.0;
    for (int i = 0; i < grid.steps; ++i) {
        const double weight = std::exp(beta * grid.time(i)) * grid.dt;
        for (NodeId v = tree.layer_begin(i); v < tree.layer_end(i); ++v) {
            const double val = q.value(v);
            sum += tree.path_prob(v) * weight * val * val;
        }
    }
    return sum;
}

double norm_h2_beta(const AdaptedProcess& k, double beta) {
    const ScenarioTree& tree = k.tree();
    const TimeGrid& grid = tree.grid();
    const JumpSpec& jumps = tree.jumps();
    const std::size_t m = tree.mark_count();
    double sum = 0.0;
    for (int i = 0; i < grid.steps; ++i) {
        const double weight = std::exp(beta * grid.time(i)) * grid.dt;
        for (NodeId v = tree.layer_begin(i); v < tree.layer_end(i); ++v) {
            double node_sum = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const double val = k.value(v, j);
                node_sum += val * val * jumps.intensities[j];
            }
            sum += tree.path_prob(v) * weight * node_sum;
        }
    }
    return sum;
}

SolutionTriple SolutionTriple::zero(const ScenarioTree& tree) {
    SolutionTriple t;
    t.tree = &tree;
    t.y = AdaptedProcess(tree, ProcessKind::Y);
    t.z = AdaptedProcess(tree, ProcessKind::Z);
    t.k = AdaptedProcess(tree, ProcessKind::K);
    return t;
}

namespace {

AdaptedProcess difference(const AdaptedProcess& a, const AdaptedProcess& b) {
    AdaptedProcess d(a.tree(), a.kind());
    auto out = d.raw();
    auto av = a.raw();
    auto bv = b.raw();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return d;
}

}  // namespace

double triple_distance(const SolutionTriple& a, const SolutionTriple& b, double beta) {
    if (a.tree != b.tree)
        throw IncompatibilityError("triple distance requires both triples on the same tree");
    return norm_s2_beta(difference(a.y, b.y), beta) +
           norm_l2_beta(difference(a.z, b.z), beta) +
           norm_h2_beta(difference(a.k, b.k), beta);
}

double norm_call(const SolutionTriple& triple, double beta) {
    const ScenarioTree& tree = *triple.tree;
    const TimeGrid& grid = tree.grid();
    const JumpSpec& jumps = tree.jumps();
    const std::size_t m = tree.mark_count();
    double integral = 0.0;
    for (int i = 0; i < grid.steps; ++i) {
        const double weight = std::exp(beta * grid.time(i)) * grid.dt;
        for (NodeId v = tree.layer_begin(i); v < tree.layer_end(i); ++v) {
            const double zv = triple.z.value(v);
            double node_sum = zv * zv;
            for (std::size_t j = 0; j < m; ++j) {
                const double kv = triple.k.value(v, j);
                node_sum += kv * kv * jumps.intensities[j];
            }
            integral += tree.path_prob(v) * weight * node_sum;
        }
    }
    return norm_s2_beta(triple.y, beta) + integral;
}

DeterministicTriple DeterministicTriple::zero(const TimeGrid& grid, const JumpSpec& jumps) {
    DeterministicTriple t;
    t.grid = grid;
    t.jumps = jumps;
    t.y.assign(static_cast<std::size_t>(grid.steps) + 1, 0.0);
    t.z.assign(static_cast<std::size_t>(grid.steps), 0.0);
    t.k.assign(static_cast<std::size_t>(grid.steps) * std::max<std::size_t>(jumps.mark_count(), 1),
               0.0);
    if (jumps.mark_count() == 0) t.k.clear();
    return t;
}

double DeterministicTriple::y_at_time(double t) const {
    if (t > grid.horizon + 1e-12) return 0.0;
    const double ratio = t / grid.dt;
    const auto layer = static_cast<std::size_t>(std::llround(ratio));
    if (std::abs(ratio - static_cast<double>(layer)) > 1e-9 || layer >= y.size())
        throw DomainError("time is not a grid point of the triple");
    return y[layer];
}

double triple_distance(const DeterministicTriple& a, const DeterministicTriple& b, double beta) {
    if (a.y.size() != b.y.size() || a.grid.steps != b.grid.steps)
        throw IncompatibilityError("triple distance requires matching grids");
    const int n = a.grid.steps;
    const std::size_t m = a.mark_count();
    double sup = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double d = a.y[i] - b.y[i];
        sup = std::max(sup, std::exp(beta * a.grid.time(i)) * d * d);
    }
    double integral = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dz = a.z[i] - b.z[i];
        double node_sum = dz * dz;
        for (std::size_t j = 0; j < m; ++j) {
            const double dk = a.k[i * m + j] - b.k[i * m + j];
            node_sum += dk * dk * a.jumps.intensities[j];
        }
        integral += std::exp(beta * a.grid.time(i)) * node_sum * a.grid.dt;
    }
    return sup + integral;
}

double norm_call(const DeterministicTriple& triple, double beta) {
    const int n = triple.grid.steps;
    const std::size_t m = triple.mark_count();
    double sup = 0.0;
    for (int i = 0; i <= n; ++i)
        sup = std::max(sup, std::exp(beta * triple.grid.time(i)) * triple.y[i] * triple.y[i]);
    double integral = 0.0;
    for (int i = 0; i < n; ++i) {
        double node_sum = triple.z[i] * triple.z[i];
        for (std::size_t j = 0; j < m; ++j)
            node_sum += triple.k[i * m + j] * triple.k[i * m + j] * triple.jumps.intensities[j];
        integral += std::exp(beta * triple.grid.time(i)) * node_sum * triple.grid.dt;
    }
    return sup + integral;
}

}  // namespace mfdbsde
