#pragma once

#include <vector>

#include "rsdcm/statespace.hpp"

namespace rsdcm {

/// Biophysical parameters of the Balloon-Windkessel model.
struct BalloonParams {
    double kappa = 0.65;  // signal decay, 1/s
    double gamma = 0.41;  // flow-dependent elimination, 1/s
    double tau = 0.98;    // hemodynamic transit time, s
    double alpha = 0.32;  // Grubb exponent
    double rho = 0.34;    // resting oxygen extraction fraction

    void validate() const;
};

/// Hemodynamic state (vasodilatory signal, inflow, volume, deoxyhemoglobin).
struct BalloonState {
    double s = 0.0;
    double f = 1.0;
    double v = 1.0;
    double q = 1.0;

    static BalloonState equilibrium() { return {0.0, 1.0, 1.0, 1.0}; }
};

/// Constants of the BOLD output equation. k1..k3 are derived from the base
/// scanner constants and rho; see derive_bold_constants.
struct OutputConstants {
    double V0 = 0.4;
    double k1 = 0.0;
    double k2 = 0.0;
    double k3 = 0.0;
    double T_E = 0.04;     // echo time, s
    double theta0 = 40.3;  // frequency offset, 1/s
    double epsilon = 0.4;  // intra/extravascular signal ratio
    double r0 = 25.0;      // relaxation slope, 1/s
};

// k1 = 4.3*theta0*rho*T_E, k2 = epsilon*r0*rho*T_E, k3 = 1-epsilon.
OutputConstants derive_bold_constants(double rho, const OutputConstants& base = {});

// Right-hand side of the hemodynamic ODE. Throws on f <= 0 or v <= 0
// (fractional powers undefined there).
BalloonState balloon_derivatives(const BalloonState& state, double x_input,
                                 const BalloonParams& params);

// Noiseless BOLD value for a given state. Throws on v <= 0.
double bold_output(const BalloonState& state, const OutputConstants& consts);

// Fixed-step RK4 integration from equilibrium with zero-order-hold input.
// The three positive states (f, v, q) are integrated as logarithms — a smooth
// change of variables that keeps every trajectory inside the positive domain,
// matching the convention of the standard neuroimaging integrators. x_series
// holds one input value per dt step; the returned BOLD series has
// x_series.size() + 1 values (output at t=0 included).
std::vector<double> integrate_balloon(const std::vector<double>& x_series,
                                      const BalloonParams& params, const OutputConstants& consts,
                                      double dt);

// Sampled response to a discrete unit impulse, realized as a rectangular
// pulse of the given height lasting one T_R. Output sampled every T_R,
// truncated to `taps` values (t = 0, T_R, ..., (taps-1)*T_R).
std::vector<double> impulse_response(const BalloonParams& params, const OutputConstants& consts,
                                     int taps, double T_R, double dt = 0.01,
                                     double pulse_height = 1.0);

}  // namespace rsdcm
