#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mfdbsde/generator.hpp"

namespace mfdbsde {

enum class FeasibilityMode { finite_point, finite_measure, special_two_point, infinite };

std::string to_string(FeasibilityMode mode);

/// Outcome of a (beta, epsilon) admissibility search.
struct FeasibilityReport {
    FeasibilityMode mode = FeasibilityMode::finite_point;
    bool feasible = false;
    double condition_value = 0.0;  // at the best parameters
    double best_beta = 0.0;
    std::optional<double> best_epsilon;
    double margin = 0.0;  // 1 - condition_value
    std::vector<std::pair<double, double>> trace;  // sampled (beta, value)
};

/// C_beta = max(9 e^{beta T}, 8 T + 1/beta), beta > 0.
double c_beta(double beta, double horizon);

/// C_beta * C_f * (1 + e^{-beta s}) * max(1, T), s in [-delta, 0].
double finite_condition(double beta, double lipschitz, double horizon, double shift);

/// Measure form: C_beta * C_f * (2 + integral e^{-beta s} mu(ds)) * max(1, T).
double measure_condition(double beta, double lipschitz, double horizon,
                         const DelayDescriptor& mu);

/// Two-point special case: C_beta * C_hat * (2 + e^{beta delta}) * max(1, T).
double special_condition(double beta, double lipschitz, double horizon, double delta);

struct InfiniteConditionResult {
    bool ok = false;
    double slack_beta = 0.0;  // beta - 6 C^2/eps - 1/2
    double slack_eps = 0.0;   // 1/2 - 6 eps (2 + e^{-beta r})
};

InfiniteConditionResult infinite_condition(double beta, double epsilon, double lipschitz,
                                           double shift);

/// Admissible epsilon interval (lo, hi) for the infinite mode at a given beta;
/// empty (lo >= hi) when infeasible.
std::pair<double, double> infinite_epsilon_interval(double beta, double lipschitz, double shift);

struct SearchParams {
    FeasibilityMode mode = FeasibilityMode::finite_point;
    double lipschitz = 0.0;
    double horizon = 1.0;            // T (finite modes)
    double shift = 0.0;              // s (finite_point) or r (infinite)
    double delta = 0.0;              // special_two_point
    DelayDescriptor mu;              // finite_measure
    int budget = 200;                // log-grid points
};

/// Log-grid scan of beta over [1e-4, 50] followed by golden-section
/// refinement of the best bracket; ties break toward smaller beta.
FeasibilityReport search_beta(const SearchParams& params);

}  // namespace mfdbsde
