#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfdbsde/process.hpp"

namespace mfdbsde {

/// How the driver reaches into the past of the solution.
struct DelayDescriptor {
    enum class Kind { point_shift, two_point, measure };
    enum class Measure { lebesgue, dirac };

    Kind kind = Kind::point_shift;
    double shift = 0.0;   // point_shift: s in [-delta, 0]
    double delta = 0.0;   // window length
    Measure measure = Measure::lebesgue;
    double dirac_at = 0.0;  // dirac location in [-delta, 0]

    /// Weight vector over an aligned window of `steps+1` samples
    /// (lebesgue -> dt per sample, dirac -> unit weight at the aligned offset).
    std::vector<double> window_weights(double dt) const;
};

/// |f(t, 0, ..., 0)| and, when available, a declared exponential bound
/// M e^{-kappa t} with closed-form weighted tail integrals.
struct IntegrabilityWitness {
    std::function<double(double)> at_zero;
    double bound_scale = 0.0;  // M
    double decay_rate = 0.0;   // kappa
    bool exponential = true;   // closed-form tail available

    /// integral_n^inf e^{beta t} (M e^{-kappa t})^2 dt; +inf when beta >= 2 kappa.
    double weighted_tail(double beta, double from) const;
};

struct GeneratorInputs {
    double t = 0.0;
    const SegmentView* seg_y = nullptr;
    const SegmentView* seg_z = nullptr;
    const SegmentView* seg_k = nullptr;
    double mean_y = 0.0;
    double mean_z = 0.0;
    std::span<const double> mean_k;
    std::optional<double> pi;
};

/// Driver contract: a pure evaluation callback plus the declared Lipschitz
/// constant, delay structure and integrability witness.
struct GeneratorSpec {
    std::string name;
    std::function<double(const GeneratorInputs&)> f;
    double lipschitz = 0.0;
    DelayDescriptor delay;
    IntegrabilityWitness witness;
    bool mean_only = false;  // reads nothing but (t, means, pi)
    std::function<double(double)> pi;  // exogenous consumption path, may be empty
};

/// Evaluates the driver and rejects non-finite output.
double evaluate(const GeneratorSpec& gen, const GeneratorInputs& in);

// Built-in driver family. Declared constants are exact for each formula.
GeneratorSpec builtin_zero();
GeneratorSpec builtin_affine_meanfield(double a, double b);
GeneratorSpec builtin_point_delay(double a, double s);
GeneratorSpec builtin_two_point(double a1, double a2, double delta);
GeneratorSpec builtin_recursive_utility(double c, std::function<double(double)> pi);
GeneratorSpec builtin_recursive_utility(double c, std::vector<double> pi_samples, double pi_dt);
GeneratorSpec builtin_forced_decay(double a, double kappa);
/// f = a * integral of the Y segment against the descriptor's measure.
GeneratorSpec builtin_weighted_window(double a, DelayDescriptor::Measure measure, double delta,
                                      double dirac_at = 0.0);

struct LipschitzProbeReport {
    double max_ratio = 0.0;
    bool pass = true;
    int trials = 0;
    double declared = 0.0;
};

/// Empirical falsification of the declared squared-form Lipschitz bound:
/// draws input pairs (jointly random and one-slot-at-a-time), compares
/// |f - f~|^2 against declared * (sum of squared slot differences).
/// The jump measure weighs the K slots; a unit single-mark measure is
/// used when none is given.
LipschitzProbeReport probe_lipschitz(const GeneratorSpec& gen, int trials, double scale,
                                     const JumpSpec* jumps = nullptr,
                                     std::uint64_t seed = 0x5eedULL);

}  // namespace mfdbsde
