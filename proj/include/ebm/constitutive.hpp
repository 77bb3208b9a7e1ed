#pragma once

// Co-albedo graphs, emission law, insolation and forcing profiles.
//
// The Sellers co-albedo is a continuous ramp of half-width eps around the
// ice-formation temperature u_c; the Budyko co-albedo jumps from m to M at
// u_c and is only ever evaluated through its Yosida approximation, which for
// this graph is again a ramp, on [u_c + lambda m, u_c + lambda M].

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ebm/errors.hpp"
#include "ebm/legendre.hpp"

namespace ebm {

inline constexpr double kIceTemperature = -10.0;

/// Single-valued nondecreasing ramp from `low` (at r <= lo) to `high` (at r >= hi).
struct Ramp {
    double low = 0.0;
    double high = 0.0;
    double lo = 0.0;
    double hi = 0.0;

    double operator()(double r) const
    {
        if (r <= lo)
            return low;
        if (r >= hi)
            return high;
        return low + (high - low) * (r - lo) / (hi - lo);
    }

    /// Right-continuous a.e. derivative.
    double slope(double r) const { return (r >= lo && r < hi) ? lipschitz() : 0.0; }

    double lipschitz() const { return (high - low) / (hi - lo); }

    /// An antiderivative, continuous in r.
    double antiderivative(double r) const
    {
        if (r <= lo)
            return low * r;
        if (r < hi)
            return low * r + 0.5 * (high - low) * (r - lo) * (r - lo) / (hi - lo);
        return low * hi + 0.5 * (high - low) * (hi - lo) + high * (r - hi);
    }
};

struct Sellers {
    double m = 0.2;
    double M = 0.8;
    double u_c = kIceTemperature;
    double half_width = 1.0;
};

struct Budyko {
    double m = 0.2;
    double M = 0.8;
    double u_c = kIceTemperature;
};

using CoalbedoGraph = std::variant<Sellers, Budyko>;

inline void validate(const CoalbedoGraph& graph)
{
    std::visit(
        [](const auto& g) {
            if (!(0.0 < g.m && g.m < g.M && g.M < 1.0))
                throw InvalidArgument("co-albedo requires 0 < m < M < 1");
            if constexpr (std::is_same_v<std::decay_t<decltype(g)>, Sellers>) {
                if (!(g.half_width > 0.0))
                    throw InvalidArgument("Sellers ramp half-width must be > 0");
            }
        },
        graph);
}

inline double lower_value(const CoalbedoGraph& graph)
{
    return std::visit([](const auto& g) { return g.m; }, graph);
}

inline double upper_value(const CoalbedoGraph& graph)
{
    return std::visit([](const auto& g) { return g.M; }, graph);
}

inline double ice_temperature(const CoalbedoGraph& graph)
{
    return std::visit([](const auto& g) { return g.u_c; }, graph);
}

inline bool is_budyko(const CoalbedoGraph& graph) { return std::holds_alternative<Budyko>(graph); }

inline Ramp sellers_ramp(const Sellers& s)
{
    return Ramp{s.m, s.M, s.u_c - s.half_width, s.u_c + s.half_width};
}

/// Yosida approximation of the Budyko jump: solving s + lambda beta(s) = r piecewise
/// gives the ramp (r - u_c)/lambda clipped to [m, M].
inline Ramp yosida_ramp(const Budyko& b, double lambda)
{
    if (!(lambda > 0.0))
        throw NonpositiveLambda("Yosida parameter must be > 0, got " + std::to_string(lambda));
    return Ramp{b.m, b.M, b.u_c + lambda * b.m, b.u_c + lambda * b.M};
}

/// The single-valued branch used by dynamics: the Sellers ramp, or the Yosida ramp
/// with parameter `lambda` for Budyko.
inline Ramp regularized_branch(const CoalbedoGraph& graph, double lambda)
{
    if (const auto* s = std::get_if<Sellers>(&graph))
        return sellers_ramp(*s);
    return yosida_ramp(std::get<Budyko>(graph), lambda);
}

inline double beta_eval(const CoalbedoGraph& graph, double u)
{
    const auto* s = std::get_if<Sellers>(&graph);
    if (s == nullptr)
        throw WrongVariant("beta_eval needs the Sellers graph; use yosida_eval for Budyko");
    return sellers_ramp(*s)(u);
}

inline double yosida_eval(const CoalbedoGraph& graph, double lambda, double r)
{
    const auto* b = std::get_if<Budyko>(&graph);
    if (b == nullptr)
        throw WrongVariant("yosida_eval needs the Budyko graph");
    return yosida_ramp(*b, lambda)(r);
}

/// Selection of the multivalued Budyko graph; the midpoint at the jump.
/// Only used for residual reporting.
inline double budyko_section(const Budyko& b, double u)
{
    if (u < b.u_c)
        return b.m;
    if (u > b.u_c)
        return b.M;
    return 0.5 * (b.m + b.M);
}

/// Convex primitive j of the single-valued branch, anchored at j(u_c) = 0.
/// `param` is ignored for Sellers (the ramp half-width comes from the graph) and is
/// the Yosida lambda for Budyko.
inline double j_primitive(const CoalbedoGraph& graph, double param, double r)
{
    const Ramp ramp = regularized_branch(graph, param);
    const double uc = ice_temperature(graph);
    return ramp.antiderivative(r) - ramp.antiderivative(uc);
}

// ---------------------------------------------------------------------------
// Emission

struct LinearEmission {
    double slope = 1.0;
};

/// Linearized outgoing radiation g(r) = offset + B r.
struct StefanLinearized {
    double B = 1.0;
    double offset = 0.0;
};

using EmissionLaw = std::variant<LinearEmission, StefanLinearized>;

namespace detail {
inline std::pair<double, double> affine_coefficients(const EmissionLaw& law)
{
    if (const auto* l = std::get_if<LinearEmission>(&law))
        return {l->slope, 0.0};
    const auto& s = std::get<StefanLinearized>(law);
    return {s.B, s.offset};
}
} // namespace detail

inline void validate(const EmissionLaw& law)
{
    if (!(detail::affine_coefficients(law).first > 0.0))
        throw NonMonotoneLaw("emission law must be strictly increasing (slope > 0)");
}

inline double g_eval(const EmissionLaw& law, double r)
{
    const auto [b, a] = detail::affine_coefficients(law);
    return a + b * r;
}

/// G(r) = int_0^r g.
inline double g_primitive(const EmissionLaw& law, double r)
{
    const auto [b, a] = detail::affine_coefficients(law);
    return a * r + 0.5 * b * r * r;
}

inline double g_inverse(const EmissionLaw& law, double v)
{
    const auto [b, a] = detail::affine_coefficients(law);
    return (v - a) / b;
}

inline double g_slope(const EmissionLaw& law) { return detail::affine_coefficients(law).first; }

// ---------------------------------------------------------------------------
// Insolation and forcing

/// A profile on I given by ordinary Legendre coefficients: p(x) = sum a_k P_k(x).
/// Kept independent of any basis so one config can be run at several resolutions.
struct PolyProfile {
    std::vector<double> p_coeffs{0.0};

    static PolyProfile constant(double value) { return PolyProfile{{value}}; }

    double operator()(double x) const
    {
        double v = 0.0;
        for (std::size_t k = 0; k < p_coeffs.size(); ++k)
            v += p_coeffs[k] * legendre_poly(static_cast<int>(k), x);
        return v;
    }

    bool is_constant() const
    {
        return std::all_of(p_coeffs.begin() + 1, p_coeffs.end(), [](double a) { return a == 0.0; });
    }

    /// (inf, sup) over [-1, 1]; exact for constants, dense sampling otherwise.
    std::pair<double, double> bounds() const
    {
        if (is_constant())
            return {p_coeffs[0], p_coeffs[0]};
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        constexpr int samples = 4001;
        for (int i = 0; i < samples; ++i) {
            const double v = (*this)(-1.0 + 2.0 * i / (samples - 1));
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        return {lo, hi};
    }

    Eigen::VectorXd nodal(const LegendreBasis& basis) const
    {
        Eigen::VectorXd v(basis.quadrature_order());
        for (int j = 0; j < v.size(); ++j)
            v(j) = (*this)(basis.nodes()(j));
        return v;
    }

    PolyProfile operator+(double shift) const
    {
        PolyProfile out = *this;
        out.p_coeffs[0] += shift;
        return out;
    }
};

struct ForcingKnot {
    double t = 0.0;
    PolyProfile profile;
};

/// Insolation S(x) and forcing f(x, t). The forcing is piecewise linear in time
/// between knots and constant outside them; the last knot is f_infinity.
struct ForcingData {
    PolyProfile insolation = PolyProfile::constant(1.0);
    std::vector<ForcingKnot> forcing{ForcingKnot{0.0, PolyProfile::constant(-12.0)}};

    void validate() const
    {
        if (forcing.empty())
            throw InvalidArgument("forcing needs at least one knot");
        for (std::size_t i = 1; i < forcing.size(); ++i)
            if (!(forcing[i].t > forcing[i - 1].t))
                throw InvalidArgument("forcing knots must have increasing times");
        if (!(insolation_min() > 0.0))
            throw InvalidArgument("insolation must be bounded below by S0 > 0");
    }

    double insolation_min() const { return insolation.bounds().first; }
    double insolation_max() const { return insolation.bounds().second; }
    bool time_dependent() const { return forcing.size() > 1; }
    const PolyProfile& asymptotic_forcing() const { return forcing.back().profile; }

    /// ||f_inf||_inf
    double forcing_sup_norm() const
    {
        const auto [lo, hi] = asymptotic_forcing().bounds();
        return std::max(std::abs(lo), std::abs(hi));
    }

    /// C_f with f_inf <= -C_f.
    double forcing_gap() const { return -asymptotic_forcing().bounds().second; }

    /// f(., t) at the quadrature nodes.
    Eigen::VectorXd forcing_nodal(double t, const LegendreBasis& basis) const
    {
        if (t <= forcing.front().t)
            return forcing.front().profile.nodal(basis);
        if (t >= forcing.back().t)
            return forcing.back().profile.nodal(basis);
        std::size_t i = 1;
        while (forcing[i].t < t)
            ++i;
        const double s = (t - forcing[i - 1].t) / (forcing[i].t - forcing[i - 1].t);
        return (1.0 - s) * forcing[i - 1].profile.nodal(basis) + s * forcing[i].profile.nodal(basis);
    }
};

} // namespace ebm
