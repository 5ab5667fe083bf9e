#include "mfdbsde/contraction.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace mfdbsde {

std::string to_string(FeasibilityMode mode) {
    switch (mode) {
        case FeasibilityMode::finite_point: return "finite_point";
        case FeasibilityMode::finite_measure: return "finite_measure";
        case FeasibilityMode::special_two_point: return "special_two_point";
        case FeasibilityMode::infinite: return "infinite";
    }
    return "unknown";
}

double c_beta(double beta, double horizon) {
    if (!(beta > 0.0)) throw DomainError("c_beta requires beta > 0 (1/beta is singular)");
    if (!(horizon > 0.0)) throw DomainError("c_beta requires a positive horizon");
    return std::max(9.0 * std::exp(beta * horizon), 8.0 * horizon + 1.0 / beta);
}

double finite_condition(double beta, double lipschitz, double horizon, double shift) {
    if (lipschitz < 0.0) throw DomainError("Lipschitz constant must be nonnegative");
    if (shift > 0.0) throw DomainError("shift must be nonpositive");
    return c_beta(beta, horizon) * lipschitz * (1.0 + std::exp(-beta * shift)) *
           std::max(1.0, horizon);
}

double measure_condition(double beta, double lipschitz, double horizon,
                         const DelayDescriptor& mu) {
    if (lipschitz < 0.0) throw DomainError("Lipschitz constant must be nonnegative");
    double integral;
    if (mu.measure == DelayDescriptor::Measure::lebesgue) {
        integral = (std::exp(beta * mu.delta) - 1.0) / beta;  // int_{-delta}^0 e^{-beta s} ds
    } else {
        if (mu.dirac_at > 0.0 || mu.dirac_at < -mu.delta - 1e-12)
            throw ConfigError("dirac location must lie in [-delta, 0]");
        integral = std::exp(-beta * mu.dirac_at);
    }
    return c_beta(beta, horizon) * lipschitz * (2.0 + integral) * std::max(1.0, horizon);
}

double special_condition(double beta, double lipschitz, double horizon, double delta) {
    if (lipschitz < 0.0) throw DomainError("Lipschitz constant must be nonnegative");
    if (delta < 0.0) throw DomainError("delay must be nonnegative");
    return c_beta(beta, horizon) * lipschitz * (2.0 + std::exp(beta * delta)) *
           std::max(1.0, horizon);
}

InfiniteConditionResult infinite_condition(double beta, double epsilon, double lipschitz,
                                           double shift) {
    if (!(beta > 0.0)) throw DomainError("infinite condition requires beta > 0");
    if (!(epsilon > 0.0)) throw DomainError("infinite condition requires epsilon > 0");
    if (lipschitz < 0.0) throw DomainError("Lipschitz constant must be nonnegative");
    InfiniteConditionResult r;
    r.slack_beta = beta - 6.0 * lipschitz * lipschitz / epsilon - 0.5;
    r.slack_eps = 0.5 - 6.0 * epsilon * (2.0 + std::exp(-beta * shift));
    r.ok = r.slack_beta > 0.0 && r.slack_eps > 0.0;
    return r;
}

std::pair<double, double> infinite_epsilon_interval(double beta, double lipschitz, double shift) {
    if (beta <= 0.5) return {1.0, 0.0};  // empty
    const double lo = 6.0 * lipschitz * lipschitz / (beta - 0.5);
    const double hi = 1.0 / (12.0 * (2.0 + std::exp(-beta * shift)));
    return {lo, hi};
}

namespace {

constexpr double kBetaLow = 1e-4;
constexpr double kBetaHigh = 50.0;

double condition_value(const SearchParams& p, double beta) {
    switch (p.mode) {
        case FeasibilityMode::finite_point:
            return finite_condition(beta, p.lipschitz, p.horizon, p.shift);
        case FeasibilityMode::finite_measure:
            return measure_condition(beta, p.lipschitz, p.horizon, p.mu);
        case FeasibilityMode::special_two_point:
            return special_condition(beta, p.lipschitz, p.horizon, p.delta);
        case FeasibilityMode::infinite: {
            const auto [lo, hi] = infinite_epsilon_interval(beta, p.lipschitz, p.shift);
            if (!(hi > 0.0) || beta <= 0.5) return std::numeric_limits<double>::infinity();
            return lo / hi;  // < 1 exactly when the epsilon interval is nonempty
        }
    }
    throw DomainError("unknown feasibility mode");
}

}  // namespace

FeasibilityReport search_beta(const SearchParams& params) {
    if (params.budget < 10) throw DomainError("search budget must be at least 10");

    FeasibilityReport report;
    report.mode = params.mode;

    const double log_lo = std::log(kBetaLow);
    const double log_hi = std::log(kBetaHigh);
    std::vector<double> betas(static_cast<std::size_t>(params.budget));
    for (int i = 0; i < params.budget; ++i)
        betas[static_cast<std::size_t>(i)] =
            std::exp(log_lo + (log_hi - log_lo) * i / (params.budget - 1));

    std::size_t best = 0;
    double best_value = std::numeric_limits<double>::infinity();
    report.trace.reserve(betas.size());
    for (std::size_t i = 0; i < betas.size(); ++i) {
        const double v = condition_value(params, betas[i]);
        report.trace.emplace_back(betas[i], v);
        if (v < best_value) {  // strict: ties keep the smaller beta
            best_value = v;
            best = i;
        }
    }

    // Golden-section refinement inside the bracket around the best grid point.
    double a = betas[best > 0 ? best - 1 : 0];
    double b = betas[std::min(best + 1, betas.size() - 1)];
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = condition_value(params, x1);
    double f2 = condition_value(params, x2);
    while (b - a > 1e-9) {
        if (f1 <= f2) {  // ties move left
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = condition_value(params, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = condition_value(params, x2);
        }
    }
    const double refined_beta = 0.5 * (a + b);
    const double refined_value = condition_value(params, refined_beta);
    if (refined_value < best_value) {
        report.best_beta = refined_beta;
        report.condition_value = refined_value;
    } else {
        report.best_beta = betas[best];
        report.condition_value = best_value;
    }

    report.feasible = report.condition_value < 1.0;
    report.margin = 1.0 - report.condition_value;
    if (params.mode == FeasibilityMode::infinite && report.feasible) {
        const auto [lo, hi] =
            infinite_epsilon_interval(report.best_beta, params.lipschitz, params.shift);
        report.best_epsilon = 0.5 * (lo + hi);
    }
    return report;
}

}  // namespace mfdbsde
