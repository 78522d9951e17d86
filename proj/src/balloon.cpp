#include "rsdcm/balloon.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rsdcm/errors.hpp"

namespace rsdcm {

namespace {

// State in the integrator's coordinates: (s, ln f, ln v, ln q). Exponentiating
// the last three always yields a valid positive hemodynamic state.
struct LogState {
    double s = 0.0, lf = 0.0, lv = 0.0, lq = 0.0;
};

bool all_finite(const LogState& z) {
    return std::isfinite(z.s) && std::isfinite(z.lf) && std::isfinite(z.lv) &&
           std::isfinite(z.lq);
}

LogState axpy(const LogState& a, double h, const LogState& d) {
    return {a.s + h * d.s, a.lf + h * d.lf, a.lv + h * d.lv, a.lq + h * d.lq};
}

// Strong sustained de-activation can drive the inflow toward zero faster than
// any fixed step can track (the log-derivative s/f grows without bound as f
// shrinks). Saturating the log-rates keeps the integration stable through such
// episodes while leaving ordinary trajectories untouched: physical rate
// constants are all well below 1/s, so the cap only engages during collapse.
constexpr double kMaxLogRate = 8.0;  // 1/s

double clamp_rate(double r) { return std::clamp(r, -kMaxLogRate, kMaxLogRate); }

// d/dt of the log coordinates: chain rule on the plain-state derivatives,
// d(ln f)/dt = f'/f and likewise for v, q.
LogState log_derivatives(const LogState& z, double x_input, const BalloonParams& params) {
    const BalloonState st{z.s, std::exp(z.lf), std::exp(z.lv), std::exp(z.lq)};
    const BalloonState d = balloon_derivatives(st, x_input, params);
    return {d.s, clamp_rate(d.f / st.f), clamp_rate(d.v / st.v), clamp_rate(d.q / st.q)};
}

}  // namespace

void BalloonParams::validate() const {
    if (!(kappa > 0.0) || !(gamma > 0.0) || !(tau > 0.0))
        throw ConfigError("hemodynamic rates kappa, gamma, tau must be positive");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("Grubb exponent alpha must lie in (0, 1)");
    if (!(rho > 0.0 && rho < 1.0))
        throw ConfigError("extraction fraction rho must lie in (0, 1)");
}

OutputConstants derive_bold_constants(double rho, const OutputConstants& base) {
    OutputConstants c = base;
    c.k1 = 4.3 * c.theta0 * rho * c.T_E;
    c.k2 = c.epsilon * c.r0 * rho * c.T_E;
    c.k3 = 1.0 - c.epsilon;
    return c;
}

BalloonState balloon_derivatives(const BalloonState& state, double x_input,
                                 const BalloonParams& params) {
    if (!(state.f > 0.0) || !(state.v > 0.0))
        throw NumericalError("hemodynamic state left the positive domain (f or v <= 0)");
    const double fv = std::pow(state.v, 1.0 / params.alpha);  // outflow f_out(v)
    BalloonState d;
    d.s = x_input - params.kappa * state.s - params.gamma * (state.f - 1.0);
    d.f = state.s;
    d.v = (state.f - fv) / params.tau;
    // Oxygen extraction E(f, rho) = 1 - (1 - rho)^(1/f), relative to rest.
    const double extraction = 1.0 - std::pow(1.0 - params.rho, 1.0 / state.f);
    d.q = (state.f * extraction / params.rho - fv * state.q / state.v) / params.tau;
    return d;
}

double bold_output(const BalloonState& state, const OutputConstants& consts) {
    if (!(state.v > 0.0)) throw NumericalError("BOLD output undefined for v <= 0");
    return consts.V0 * (consts.k1 * (1.0 - state.q) + consts.k2 * (1.0 - state.q / state.v) +
                        consts.k3 * (1.0 - state.v));
}

std::vector<double> integrate_balloon(const std::vector<double>& x_series,
                                      const BalloonParams& params, const OutputConstants& consts,
                                      double dt) {
    params.validate();
    if (!(dt > 0.0)) throw InvalidArgumentError("integration step dt must be positive");

    LogState z;  // equilibrium (0,1,1,1) is the origin in log coordinates
    std::vector<double> y;
    y.reserve(x_series.size() + 1);
    y.push_back(bold_output(BalloonState::equilibrium(), consts));
    std::size_t step = 0;
    for (double x : x_series) {
        ++step;
        // Classic RK4 with the input held constant over the step.
        const LogState k1 = log_derivatives(z, x, params);
        const LogState k2 = log_derivatives(axpy(z, 0.5 * dt, k1), x, params);
        const LogState k3 = log_derivatives(axpy(z, 0.5 * dt, k2), x, params);
        const LogState k4 = log_derivatives(axpy(z, dt, k3), x, params);
        z.s += dt / 6.0 * (k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s);
        z.lf += dt / 6.0 * (k1.lf + 2.0 * k2.lf + 2.0 * k3.lf + k4.lf);
        z.lv += dt / 6.0 * (k1.lv + 2.0 * k2.lv + 2.0 * k3.lv + k4.lv);
        z.lq += dt / 6.0 * (k1.lq + 2.0 * k2.lq + 2.0 * k3.lq + k4.lq);
        if (!all_finite(z))
            throw NumericalError("hemodynamic integration diverged at step " +
                                 std::to_string(step));
        const BalloonState st{z.s, std::exp(z.lf), std::exp(z.lv), std::exp(z.lq)};
        y.push_back(bold_output(st, consts));
    }
    return y;
}

std::vector<double> impulse_response(const BalloonParams& params, const OutputConstants& consts,
                                     int taps, double T_R, double dt, double pulse_height) {
    if (taps < 1) throw InvalidArgumentError("impulse response needs at least one tap");
    if (!(T_R > 0.0)) throw InvalidArgumentError("sampling interval T_R must be positive");
    const double ratio = T_R / dt;
    const int steps_per_tap = static_cast<int>(std::lround(ratio));
    if (steps_per_tap < 1 || std::abs(ratio - steps_per_tap) > 1e-9 * ratio)
        throw InvalidArgumentError("T_R must be an integer multiple of dt");

    // Unit discrete impulse realized as a rectangular pulse over the first
    // sampling interval; zero input afterwards.
    std::vector<double> x(static_cast<std::size_t>(steps_per_tap) * (taps > 1 ? taps - 1 : 1),
                          0.0);
    for (int i = 0; i < steps_per_tap && i < static_cast<int>(x.size()); ++i)
        x[static_cast<std::size_t>(i)] = pulse_height;

    const std::vector<double> y = integrate_balloon(x, params, consts, dt);
    std::vector<double> h(static_cast<std::size_t>(taps));
    for (int k = 0; k < taps; ++k)
        h[static_cast<std::size_t>(k)] = y[static_cast<std::size_t>(k) * steps_per_tap];
    return h;
}

}  // namespace rsdcm
