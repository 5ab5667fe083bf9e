#include "mfdbsde/generator.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <utility>

namespace mfdbsde {

std::vector<double> DelayDescriptor::window_weights(double dt) const {
    const double ratio = delta / dt;
    const auto steps = static_cast<int>(std::llround(ratio));
    if (std::abs(ratio - steps) > 1e-9)
        throw AlignmentError("delay window is not an integer multiple of dt");
    std::vector<double> weights(static_cast<std::size_t>(steps) + 1, 0.0);
    if (measure == Measure::lebesgue) {
        for (double& w : weights) w = dt;
    } else {
        const double back = -dirac_at / dt;
        const auto idx = static_cast<int>(std::llround(back));
        if (std::abs(back - idx) > 1e-9 || idx < 0 || idx > steps) {
            std::ostringstream msg;
            msg << "dirac location " << dirac_at << " is not an aligned offset in [-" << delta
                << ", 0] with dt = " << dt;
            throw AlignmentError(msg.str());
        }
        weights[static_cast<std::size_t>(steps - idx)] = 1.0;
    }
    return weights;
}

double IntegrabilityWitness::weighted_tail(double beta, double from) const {
    if (!exponential) return std::numeric_limits<double>::quiet_NaN();
    if (bound_scale == 0.0) return 0.0;
    const double rate = 2.0 * decay_rate - beta;
    if (rate <= 0.0) return std::numeric_limits<double>::infinity();
    return bound_scale * bound_scale * std::exp(-rate * from) / rate;
}

double evaluate(const GeneratorSpec& gen, const GeneratorInputs& in) {
    const double value = gen.f(in);
    if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "generator '" << gen.name << "' produced a non-finite value at t = " << in.t
            << " (mean_y = " << in.mean_y << ", mean_z = " << in.mean_z << ")";
        throw EvaluationError(msg.str());
    }
    return value;
}

GeneratorSpec builtin_zero() {
    GeneratorSpec gen;
    gen.name = "zero";
    gen.f = [](const GeneratorInputs&) { return 0.0; };
    gen.lipschitz = 0.0;
    gen.mean_only = true;
    gen.witness.at_zero = [](double) { return 0.0; };
    gen.witness.bound_scale = 0.0;
    return gen;
}

GeneratorSpec builtin_affine_meanfield(double a, double b) {
    GeneratorSpec gen;
    gen.name = "affine_meanfield";
    gen.f = [a, b](const GeneratorInputs& in) { return a * in.mean_y + b; };
    gen.lipschitz = std::abs(a);
    gen.mean_only = true;
    gen.witness.at_zero = [b](double) { return std::abs(b); };
    gen.witness.bound_scale = std::abs(b);
    return gen;
}

GeneratorSpec builtin_point_delay(double a, double s) {
    if (s > 0.0) throw DomainError("point delay shift must be nonpositive");
    GeneratorSpec gen;
    gen.name = "point_delay";
    gen.delay.kind = DelayDescriptor::Kind::point_shift;
    gen.delay.shift = s;
    gen.delay.delta = -s;
    gen.f = [a, s](const GeneratorInputs& in) { return a * in.seg_y->at_shift(s); };
    gen.lipschitz = std::abs(a);
    gen.witness.at_zero = [](double) { return 0.0; };
    return gen;
}

GeneratorSpec builtin_two_point(double a1, double a2, double delta) {
    if (delta < 0.0) throw DomainError("two-point delay must be nonnegative");
    GeneratorSpec gen;
    gen.name = "two_point";
    gen.delay.kind = DelayDescriptor::Kind::two_point;
    gen.delay.delta = delta;
    gen.f = [a1, a2, delta](const GeneratorInputs& in) {
        return a1 * in.seg_y->at_shift(0.0) + a2 * in.seg_y->at_shift(-delta);
    };
    gen.lipschitz = std::max(std::abs(a1), std::abs(a2));
    gen.witness.at_zero = [](double) { return 0.0; };
    return gen;
}

GeneratorSpec builtin_recursive_utility(double c, std::function<double(double)> pi) {
    GeneratorSpec gen;
    gen.name = "recursive_utility";
    gen.pi = std::move(pi);
    gen.f = [c](const GeneratorInputs& in) {
        return -c * in.seg_y->at_shift(0.0) + in.pi.value_or(0.0);
    };
    gen.lipschitz = std::abs(c);
    const auto path = gen.pi;
    gen.witness.at_zero = [path](double t) { return path ? std::abs(path(t)) : 0.0; };
    gen.witness.exponential = false;
    return gen;
}

GeneratorSpec builtin_recursive_utility(double c, std::vector<double> pi_samples, double pi_dt) {
    if (pi_dt <= 0.0) throw DomainError("pi path step must be positive");
    auto path = [samples = std::move(pi_samples), pi_dt](double t) {
        const double ratio = t / pi_dt;
        const auto idx = static_cast<long long>(std::llround(ratio));
        if (std::abs(ratio - static_cast<double>(idx)) > 1e-9 || idx < 0)
            throw AlignmentError("pi path queried off its sampling grid");
        if (static_cast<std::size_t>(idx) >= samples.size())
            throw ConfigError("pi path is shorter than the run grid");
        return samples[static_cast<std::size_t>(idx)];
    };
    return builtin_recursive_utility(c, std::function<double(double)>(path));
}

GeneratorSpec builtin_forced_decay(double a, double kappa) {
    if (!(a > 0.0) || !(kappa > 0.0))
        throw DomainError("forced decay requires a > 0 and kappa > 0");
    GeneratorSpec gen;
    gen.name = "forced_decay";
    gen.f = [a, kappa](const GeneratorInputs& in) {
        return -a * in.seg_y->at_shift(0.0) + std::exp(-kappa * in.t);
    };
    gen.lipschitz = a;
    gen.witness.at_zero = [kappa](double t) { return std::exp(-kappa * t); };
    gen.witness.bound_scale = 1.0;
    gen.witness.decay_rate = kappa;
    return gen;
}

GeneratorSpec builtin_weighted_window(double a, DelayDescriptor::Measure measure, double delta,
                                      double dirac_at) {
    if (delta < 0.0) throw DomainError("window length must be nonnegative");
    GeneratorSpec gen;
    gen.name = "weighted_window";
    gen.delay.kind = DelayDescriptor::Kind::measure;
    gen.delay.delta = delta;
    gen.delay.measure = measure;
    gen.delay.dirac_at = dirac_at;
    gen.f = [a, descriptor = gen.delay](const GeneratorInputs& in) {
        const auto weights = descriptor.window_weights(in.seg_y->dt);
        if (weights.size() != in.seg_y->window())
            throw IncompatibilityError("segment window does not match the delay descriptor");
        double sum = 0.0;
        for (std::size_t w = 0; w < weights.size(); ++w) sum += weights[w] * in.seg_y->sample(w);
        return a * sum;
    };
    gen.lipschitz = std::abs(a);
    gen.witness.at_zero = [](double) { return 0.0; };
    return gen;
}

namespace {

// Probe state: one flat vector of primitive coordinates
// [segY window | segZ window | segK window x marks | mean_y | mean_z | mean_k].
struct ProbeLayout {
    double dt = 0.25;
    int window_steps = 0;
    std::size_t marks = 1;

    std::size_t window() const { return static_cast<std::size_t>(window_steps) + 1; }
    std::size_t size() const { return window() * (2 + marks) + 2 + marks; }
    std::size_t y_base() const { return 0; }
    std::size_t z_base() const { return window(); }
    std::size_t k_base() const { return 2 * window(); }
    std::size_t mean_base() const { return window() * (2 + marks); }
};

ProbeLayout make_layout(const DelayDescriptor& delay, std::size_t marks) {
    ProbeLayout layout;
    layout.marks = std::max<std::size_t>(marks, 1);
    if (delay.delta <= 0.0) {
        layout.window_steps = 0;
        layout.dt = 0.25;
        return layout;
    }
    const double candidates[] = {delay.delta / 4.0, delay.delta / 2.0, delay.delta,
                                 std::abs(delay.shift), std::abs(delay.shift) / 2.0};
    for (double dt : candidates) {
        if (!(dt > 0.0)) continue;
        const double wr = delay.delta / dt;
        const double sr = -delay.shift / dt;
        const double dr = -delay.dirac_at / dt;
        if (std::abs(wr - std::llround(wr)) > 1e-9) continue;
        if (std::abs(sr - std::llround(sr)) > 1e-9) continue;
        if (delay.kind == DelayDescriptor::Kind::measure &&
            delay.measure == DelayDescriptor::Measure::dirac &&
            std::abs(dr - std::llround(dr)) > 1e-9)
            continue;
        layout.dt = dt;
        layout.window_steps = static_cast<int>(std::llround(wr));
        return layout;
    }
    throw AlignmentError("cannot build an aligned probe window for the delay descriptor");
}

struct ProbePoint {
    SegmentView seg_y, seg_z, seg_k;
    double mean_y = 0.0, mean_z = 0.0;
    std::vector<double> mean_k;
};

ProbePoint assemble(const ProbeLayout& layout, std::span<const double> coords) {
    ProbePoint p;
    auto fill = [&](SegmentView& seg, std::size_t base, std::size_t components, ProcessKind kind) {
        seg.anchor_time = 0.0;
        seg.dt = layout.dt;
        seg.kind = kind;
        seg.components = components;
        seg.values.assign(coords.begin() + static_cast<std::ptrdiff_t>(base),
                          coords.begin() + static_cast<std::ptrdiff_t>(base + layout.window() * components));
    };
    fill(p.seg_y, layout.y_base(), 1, ProcessKind::Y);
    fill(p.seg_z, layout.z_base(), 1, ProcessKind::Z);
    fill(p.seg_k, layout.k_base(), layout.marks, ProcessKind::K);
    p.mean_y = coords[layout.mean_base()];
    p.mean_z = coords[layout.mean_base() + 1];
    p.mean_k.assign(coords.begin() + static_cast<std::ptrdiff_t>(layout.mean_base() + 2),
                    coords.begin() + static_cast<std::ptrdiff_t>(layout.mean_base() + 2 + layout.marks));
    return p;
}

// Sum of squared slot differences in the declared (uniform squared) form.
double slot_sum(const GeneratorSpec& gen, const ProbeLayout& layout, const ProbePoint& a,
                const ProbePoint& b, std::span<const double> intensities) {
    double sum = 0.0;
    auto add_point = [&](double shift) {
        const double dy = a.seg_y.at_shift(shift) - b.seg_y.at_shift(shift);
        const double dz = a.seg_z.at_shift(shift) - b.seg_z.at_shift(shift);
        sum += dy * dy + dz * dz;
        for (std::size_t j = 0; j < layout.marks; ++j) {
            const double dk = a.seg_k.at_shift(shift, j) - b.seg_k.at_shift(shift, j);
            sum += dk * dk * intensities[j];
        }
    };
    switch (gen.delay.kind) {
        case DelayDescriptor::Kind::point_shift:
            add_point(gen.delay.shift);
            break;
        case DelayDescriptor::Kind::two_point:
            add_point(0.0);
            add_point(-gen.delay.delta);
            break;
        case DelayDescriptor::Kind::measure: {
            const auto weights = gen.delay.window_weights(layout.dt);
            double dy = 0.0, dz = 0.0;
            std::vector<double> dk(layout.marks, 0.0);
            for (std::size_t w = 0; w < weights.size(); ++w) {
                dy += weights[w] * (a.seg_y.sample(w) - b.seg_y.sample(w));
                dz += weights[w] * (a.seg_z.sample(w) - b.seg_z.sample(w));
                for (std::size_t j = 0; j < layout.marks; ++j)
                    dk[j] += weights[w] * (a.seg_k.sample(w, j) - b.seg_k.sample(w, j));
            }
            sum += dy * dy + dz * dz;
            for (std::size_t j = 0; j < layout.marks; ++j) sum += dk[j] * dk[j] * intensities[j];
            break;
        }
    }
    const double dmy = a.mean_y - b.mean_y;
    const double dmz = a.mean_z - b.mean_z;
    sum += dmy * dmy + dmz * dmz;
    for (std::size_t j = 0; j < layout.marks; ++j) {
        const double dmk = a.mean_k[j] - b.mean_k[j];
        sum += dmk * dmk * intensities[j];
    }
    return sum;
}

double eval_point(const GeneratorSpec& gen, const ProbePoint& p) {
    GeneratorInputs in;
    in.t = 0.0;
    in.seg_y = &p.seg_y;
    in.seg_z = &p.seg_z;
    in.seg_k = &p.seg_k;
    in.mean_y = p.mean_y;
    in.mean_z = p.mean_z;
    in.mean_k = p.mean_k;
    in.pi = gen.pi ? std::optional<double>(gen.pi(0.0)) : std::nullopt;
    return evaluate(gen, in);
}

}  // namespace

LipschitzProbeReport probe_lipschitz(const GeneratorSpec& gen, int trials, double scale,
                                     const JumpSpec* jumps, std::uint64_t seed) {
    if (trials < 1) throw DomainError("probe requires at least one trial");
    const std::size_t marks = (jumps != nullptr) ? jumps->mark_count() : 1;
    const ProbeLayout layout = make_layout(gen.delay, marks);
    std::vector<double> intensities;
    if (jumps != nullptr && jumps->mark_count() > 0) {
        intensities = jumps->intensities;
    } else {
        intensities.assign(layout.marks, 1.0);
    }

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-scale, scale);

    LipschitzProbeReport report;
    report.trials = trials;
    report.declared = gen.lipschitz;

    std::vector<double> base(layout.size());
    std::vector<double> other(layout.size());
    for (int trial = 0; trial < trials; ++trial) {
        for (double& v : base) v = uniform(rng);
        if (trial % 2 == 0) {
            for (double& v : other) v = uniform(rng);
        } else {
            other = base;
            other[static_cast<std::size_t>(trial / 2) % layout.size()] = uniform(rng);
        }
        const ProbePoint a = assemble(layout, base);
        const ProbePoint b = assemble(layout, other);
        const double df = eval_point(gen, a) - eval_point(gen, b);
        const double denom = gen.lipschitz * slot_sum(gen, layout, a, b, intensities);
        double ratio;
        if (denom == 0.0) {
            ratio = (df == 0.0) ? 0.0 : std::numeric_limits<double>::infinity();
        } else {
            ratio = (df * df) / denom;
        }
        report.max_ratio = std::max(report.max_ratio, ratio);
    }
    report.pass = report.max_ratio <= 1.0 + 1e-9;
    return report;
}

}  // namespace mfdbsde
