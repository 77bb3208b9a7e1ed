#pragma once

// Reference data used by the examples, the CLI defaults and the acceptance
// suite: m = 0.2, M = 0.8, u_c = -10, ramp half-width 1, g(u) = u, S = 1,
// f = -12. With these, the constant equilibria of u = Q beta(u) - 12 are
// Q m - 12 (ice), Q M - 12 (ice free) and, on the ramp, the middle branch.

#include "ebm/solver.hpp"

namespace ebm::reference {

inline ModelConfig sellers_model(double Q = 4.5)
{
    ModelConfig c;
    c.Q = Q;
    c.coalbedo = Sellers{0.2, 0.8, kIceTemperature, 1.0};
    c.emission = LinearEmission{1.0};
    c.forcing.insolation = PolyProfile::constant(1.0);
    c.forcing.forcing = {ForcingKnot{0.0, PolyProfile::constant(-12.0)}};
    return c;
}

inline ModelConfig budyko_model(double Q = 4.5, double lambda = 1e-4)
{
    ModelConfig c = sellers_model(Q);
    c.coalbedo = Budyko{0.2, 0.8, kIceTemperature};
    c.lambda = lambda;
    return c;
}

/// Cylindrical noise with gamma_n = 1/mu_n on 16 modes.
inline CylindricalNoise smooth_noise(Modulation psi = ConstantModulation{1.0})
{
    CylindricalNoise n;
    n.truncation = 16;
    n.smoothing = 1.0;
    n.psi = psi;
    return n;
}

} // namespace ebm::reference
