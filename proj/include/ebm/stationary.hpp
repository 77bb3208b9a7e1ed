#pragma once

// Equilibria of
//   -d/dx((1 - x^2) du/dx) + g(u) = Q S beta(u) + f_inf   on I,
// their minimal/maximal bracket, the multiplicity thresholds Q1..Q4, the
// energy functional whose critical points they are, and a scan over Q.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ebm/constitutive.hpp"
#include "ebm/errors.hpp"
#include "ebm/legendre.hpp"
#include "ebm/noise.hpp"
#include "ebm/parallel.hpp"
#include "ebm/solver.hpp"

namespace ebm {

namespace detail {

struct StationaryData {
    Eigen::VectorXd s;
    Eigen::VectorXd f;
    Ramp branch;
};

inline StationaryData stationary_data(const ModelConfig& config, const LegendreBasis& basis)
{
    return {config.forcing.insolation.nodal(basis), config.forcing.asymptotic_forcing().nodal(basis), config.branch()};
}

} // namespace detail

/// A u + P(g(u) - Q S beta(u) - f_inf).
inline SpectralField stationary_residual(const SpectralField& u, double Q, const ModelConfig& config,
                                         const LegendreBasis& basis)
{
    const auto data = detail::stationary_data(config, basis);
    const Eigen::VectorXd un = to_nodal(u, basis);
    Eigen::VectorXd r(un.size());
    for (Eigen::Index j = 0; j < r.size(); ++j)
        r(j) = g_eval(config.emission, un(j)) - Q * data.s(j) * data.branch(un(j)) - data.f(j);
    return apply_operator(u, basis) + to_spectral(r, basis);
}

struct StationaryOptions {
    double tol = 1e-9;
    int max_newton = 100;
    int max_picard = 20000;
};

struct StationaryResult {
    SpectralField field;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Shift of the fixed-point map; makes u -> Q S beta(u) - g(u) + delta u nondecreasing.
inline double picard_shift(double Q, const ModelConfig& config)
{
    return Q * config.forcing.insolation_min() * config.branch().lipschitz() + g_slope(config.emission);
}

/// One application of u -> (A + delta)^{-1} [Q S beta(u) - g(u) + delta u + f_inf].
inline SpectralField picard_map(const SpectralField& u, double Q, double delta, const ModelConfig& config,
                                const LegendreBasis& basis)
{
    const auto data = detail::stationary_data(config, basis);
    const Eigen::VectorXd un = to_nodal(u, basis);
    Eigen::VectorXd r(un.size());
    for (Eigen::Index j = 0; j < r.size(); ++j)
        r(j) = Q * data.s(j) * data.branch(un(j)) - g_eval(config.emission, un(j)) + delta * un(j) + data.f(j);
    const Eigen::VectorXd rhs = to_spectral(r, basis).coeffs();
    return SpectralField(Eigen::VectorXd(rhs.array() / (basis.eigenvalues().array() + delta)));
}

namespace detail {

inline std::optional<StationaryResult> newton(const SpectralField& init, double Q, const ModelConfig& config,
                                              const LegendreBasis& basis, const StationaryOptions& opts)
{
    const auto data = stationary_data(config, basis);
    SpectralField u = init;
    SpectralField res = stationary_residual(u, Q, config, basis);
    double rn = res.norm();
    for (int it = 0; it < opts.max_newton; ++it) {
        if (rn < opts.tol)
            return StationaryResult{u, rn, it, true};
        const Eigen::VectorXd un = to_nodal(u, basis);
        Eigen::VectorXd dr(un.size());
        for (Eigen::Index j = 0; j < dr.size(); ++j)
            dr(j) = g_slope(config.emission) - Q * data.s(j) * data.branch.slope(un(j));
        Eigen::MatrixXd jac = basis.projection() * dr.asDiagonal() * basis.table();
        jac.diagonal() += basis.eigenvalues();
        const Eigen::VectorXd delta = jac.partialPivLu().solve(res.coeffs());
        if (!delta.allFinite())
            return std::nullopt;
        // Backtracking on the residual norm.
        double step = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls, step *= 0.5) {
            SpectralField trial(Eigen::VectorXd(u.coeffs() - step * delta));
            SpectralField trial_res = stationary_residual(trial, Q, config, basis);
            if (trial_res.norm() < rn) {
                u = std::move(trial);
                res = std::move(trial_res);
                rn = res.norm();
                accepted = true;
                break;
            }
        }
        if (!accepted)
            break;
    }
    if (rn < opts.tol)
        return StationaryResult{u, rn, opts.max_newton, true};
    return std::nullopt;
}

} // namespace detail

/// Equilibrium from `init`. Newton on the Galerkin residual (reaches unstable
/// branches as well); if that fails, the shifted fixed-point iteration followed by
/// a Newton polish. `converged == false` reports NoConvergence.
inline StationaryResult solve_stationary(double Q, const ModelConfig& config, const SpectralField& init,
                                         const LegendreBasis& basis, const StationaryOptions& opts = {})
{
    if (!init.coeffs().allFinite())
        throw InvalidArgument("initial field must be finite");
    if (auto r = detail::newton(init, Q, config, basis, opts))
        return *r;

    const double delta = picard_shift(Q, config);
    SpectralField u = init;
    int it = 0;
    for (; it < opts.max_picard; ++it) {
        SpectralField next = picard_map(u, Q, delta, config, basis);
        const double change = (next - u).norm();
        u = std::move(next);
        if (change < 1e-3 * opts.tol)
            break;
    }
    if (auto r = detail::newton(u, Q, config, basis, opts)) {
        r->iterations += it;
        return *r;
    }
    const double rn = stationary_residual(u, Q, config, basis).norm();
    return StationaryResult{u, rn, it, rn < opts.tol};
}

// ---------------------------------------------------------------------------
// Brackets and thresholds

struct SolutionBracket {
    double lower = 0.0; // g^{-1}(Q S0 m - ||f_inf||_inf)
    double upper = 0.0; // g^{-1}(Q S1 M - C_f)
};

inline SolutionBracket solution_bracket(double Q, const ModelConfig& config)
{
    const auto& fd = config.forcing;
    return {g_inverse(config.emission, Q * fd.insolation_min() * lower_value(config.coalbedo) - fd.forcing_sup_norm()),
            g_inverse(config.emission, Q * fd.insolation_max() * upper_value(config.coalbedo) - fd.forcing_gap())};
}

struct MinMaxResult {
    SpectralField u_min;
    SpectralField u_max;
    int iterations_min = 0;
    int iterations_max = 0;
    bool converged = false;
    bool monotone = true; // every iterate moved in the expected nodal direction
};

/// Monotone sub/supersolution iteration from the constant bracket ends.
inline MinMaxResult minimal_maximal(double Q, const ModelConfig& config, const LegendreBasis& basis,
                                    double tol = 1e-12, int max_iterations = 100000)
{
    const SolutionBracket br = solution_bracket(Q, config);
    const double delta = picard_shift(Q, config);
    MinMaxResult out;
    out.converged = true;
    auto iterate = [&](double start, double direction, int& iterations) {
        SpectralField u = SpectralField::constant(basis.size(), start);
        Eigen::VectorXd prev = to_nodal(u, basis);
        const double slack = 1e-10 * (1.0 + prev.cwiseAbs().maxCoeff());
        for (iterations = 0; iterations < max_iterations; ++iterations) {
            SpectralField next = picard_map(u, Q, delta, config, basis);
            const Eigen::VectorXd nn = to_nodal(next, basis);
            if ((direction * (nn - prev).array() < -slack).any())
                out.monotone = false;
            const double change = (next - u).norm();
            u = std::move(next);
            prev = nn;
            if (change < tol)
                return u;
        }
        out.converged = false;
        return u;
    };
    out.u_min = iterate(br.lower, +1.0, out.iterations_min);
    out.u_max = iterate(br.upper, -1.0, out.iterations_max);
    return out;
}

/// Half-width eps of the zone outside which the co-albedo branch is constant.
inline double threshold_halfwidth(const ModelConfig& config)
{
    if (const auto* s = std::get_if<Sellers>(&config.coalbedo))
        return s->half_width;
    return config.lambda * upper_value(config.coalbedo);
}

struct Thresholds {
    double Q1 = 0, Q2 = 0, Q3 = 0, Q4 = 0;
    // Same constants with the primitive G in place of g.
    double Q1_primitive = 0, Q2_primitive = 0, Q3_primitive = 0, Q4_primitive = 0;
    bool primitive_differs = false;
    bool valid = false; // the ratio condition of (H_Cf)
};

inline Thresholds q_thresholds(const ModelConfig& config)
{
    const auto& fd = config.forcing;
    const double eps = threshold_halfwidth(config);
    const double uc = ice_temperature(config.coalbedo);
    const double m = lower_value(config.coalbedo);
    const double M = upper_value(config.coalbedo);
    const double s0 = fd.insolation_min();
    const double s1 = fd.insolation_max();
    const double cf = fd.forcing_gap();
    const double fsup = fd.forcing_sup_norm();

    const double below = g_eval(config.emission, uc - eps) + cf;
    if (!(below > 0.0))
        throw HypothesisViolated("g(u_c - eps) + C_f = " + std::to_string(below) + " must be > 0");
    const double above = g_eval(config.emission, uc + eps) + fsup;

    Thresholds t;
    t.Q1 = below / (s1 * M);
    t.Q2 = above / (s0 * M);
    t.Q3 = below / (s1 * m);
    t.Q4 = above / (s0 * m);
    t.valid = above / below <= (s0 * M) / (s1 * m);

    const double below_p = g_primitive(config.emission, uc - eps) + cf;
    const double above_p = g_primitive(config.emission, uc + eps) + fsup;
    t.Q1_primitive = below_p / (s1 * M);
    t.Q2_primitive = above_p / (s0 * M);
    t.Q3_primitive = below_p / (s1 * m);
    t.Q4_primitive = above_p / (s0 * m);
    t.primitive_differs = below_p != below || above_p != above;
    return t;
}

// ---------------------------------------------------------------------------
// Energy functional

/// J(u) = 1/2 int (1-x^2)|u'|^2 + int G(u) - int f_inf u - Q int S j(u).
inline double functional_J(const SpectralField& u, double Q, const ModelConfig& config, const LegendreBasis& basis)
{
    const auto data = detail::stationary_data(config, basis);
    const Eigen::VectorXd un = to_nodal(u, basis);
    Eigen::VectorXd integrand(un.size());
    for (Eigen::Index j = 0; j < un.size(); ++j)
        integrand(j) = g_primitive(config.emission, un(j)) - data.f(j) * un(j) -
                       Q * data.s(j) * j_primitive(config.coalbedo, config.lambda, un(j));
    return dirichlet_energy(u, basis) + basis.integrate(integrand);
}

// ---------------------------------------------------------------------------
// Q scan

enum class BranchClass { Below, Above, Mixed };

inline const char* to_string(BranchClass c)
{
    switch (c) {
    case BranchClass::Below: return "below";
    case BranchClass::Above: return "above";
    default: return "mixed";
    }
}

struct Equilibrium {
    SpectralField field;
    double residual = 0.0;
    double J = 0.0;
    double value_at_0 = 0.0;
    BranchClass tag = BranchClass::Mixed;
    bool in_bracket = true;
};

struct StationaryBranch {
    double Q = 0.0;
    std::vector<Equilibrium> equilibria; // sorted by mean value
    int failed_starts = 0;
};

/// Roots of g(c) = Q S beta(c) + f for constant S and f (bisection on sign changes
/// of a fine scan over the bracket, padded by one unit).
inline std::vector<double> scalar_balance_roots(double Q, const ModelConfig& config)
{
    const auto& fd = config.forcing;
    if (!fd.insolation.is_constant() || !fd.asymptotic_forcing().is_constant())
        return {};
    const double s = fd.insolation.p_coeffs[0];
    const double f = fd.asymptotic_forcing().p_coeffs[0];
    const Ramp branch = config.branch();
    auto h = [&](double c) { return g_eval(config.emission, c) - Q * s * branch(c) - f; };
    const SolutionBracket br = solution_bracket(Q, config);
    const double lo = br.lower - 1.0;
    const double hi = br.upper + 1.0;
    // The branch kinks are also grid points, so exact roots at kinks are seen.
    std::vector<double> grid;
    constexpr int samples = 20000;
    for (int i = 0; i <= samples; ++i)
        grid.push_back(lo + (hi - lo) * i / samples);
    grid.push_back(branch.lo);
    grid.push_back(branch.hi);
    std::sort(grid.begin(), grid.end());
    std::vector<double> roots;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        double a = grid[i];
        double b = grid[i + 1];
        double ha = h(a);
        const double hb = h(b);
        if (ha == 0.0) {
            roots.push_back(a);
            continue;
        }
        if (ha * hb >= 0.0)
            continue;
        for (int it = 0; it < 200 && b - a > 1e-15 * (1.0 + std::abs(a)); ++it) {
            const double mid = 0.5 * (a + b);
            const double hm = h(mid);
            if ((hm < 0.0) == (ha < 0.0)) {
                a = mid;
                ha = hm;
            } else {
                b = mid;
            }
        }
        roots.push_back(0.5 * (a + b));
    }
    roots.erase(std::unique(roots.begin(), roots.end(), [](double x, double y) { return std::abs(x - y) < 1e-12; }),
                roots.end());
    return roots;
}

/// Default multistart constants: bracket ends, u_c, and the scalar-balance roots
/// with their midpoints.
inline std::vector<double> multistart_constants(double Q, const ModelConfig& config)
{
    const SolutionBracket br = solution_bracket(Q, config);
    std::vector<double> starts{br.lower, br.upper, ice_temperature(config.coalbedo)};
    const auto roots = scalar_balance_roots(Q, config);
    for (std::size_t i = 0; i < roots.size(); ++i) {
        starts.push_back(roots[i]);
        if (i + 1 < roots.size())
            starts.push_back(0.5 * (roots[i] + roots[i + 1]));
    }
    return starts;
}

struct ScanOptions {
    StationaryOptions solve;
    double dedup_tol = 1e-6;
    double bracket_slack = 1e-8;
    int threads = 1;
};

inline Equilibrium describe_equilibrium(const StationaryResult& r, double Q, const ModelConfig& config,
                                        const LegendreBasis& basis, double bracket_slack = 1e-8)
{
    Equilibrium e;
    e.field = r.field;
    e.residual = r.residual;
    e.J = functional_J(r.field, Q, config, basis);
    e.value_at_0 = evaluate(r.field, 0.0);
    const Eigen::VectorXd nodal = to_nodal(r.field, basis);
    const double uc = ice_temperature(config.coalbedo);
    if (nodal.maxCoeff() < uc)
        e.tag = BranchClass::Below;
    else if (nodal.minCoeff() > uc)
        e.tag = BranchClass::Above;
    else
        e.tag = BranchClass::Mixed;
    const SolutionBracket br = solution_bracket(Q, config);
    e.in_bracket = nodal.minCoeff() >= br.lower - bracket_slack && nodal.maxCoeff() <= br.upper + bracket_slack;
    return e;
}

inline StationaryBranch find_equilibria(double Q, const ModelConfig& config, const std::vector<SpectralField>& inits,
                                        const LegendreBasis& basis, const ScanOptions& opts = {})
{
    std::vector<SpectralField> starts = inits;
    for (double c : multistart_constants(Q, config))
        starts.push_back(SpectralField::constant(basis.size(), c));

    StationaryBranch branch;
    branch.Q = Q;
    for (const auto& init : starts) {
        const StationaryResult r = solve_stationary(Q, config, init, basis, opts.solve);
        if (!r.converged) {
            ++branch.failed_starts;
            continue;
        }
        const bool duplicate = std::any_of(branch.equilibria.begin(), branch.equilibria.end(), [&](const Equilibrium& e) {
            return (e.field - r.field).norm() <= opts.dedup_tol;
        });
        if (!duplicate)
            branch.equilibria.push_back(describe_equilibrium(r, Q, config, basis, opts.bracket_slack));
    }
    std::sort(branch.equilibria.begin(), branch.equilibria.end(),
              [](const Equilibrium& a, const Equilibrium& b) { return a.field[0] < b.field[0]; });
    return branch;
}

inline std::vector<StationaryBranch> scan_q(const ModelConfig& config, const std::vector<double>& q_grid,
                                            const std::vector<SpectralField>& inits, const LegendreBasis& basis,
                                            const ScanOptions& opts = {})
{
    if (!std::is_sorted(q_grid.begin(), q_grid.end()))
        throw InvalidArgument("Q grid must be sorted");
    std::vector<StationaryBranch> out(q_grid.size());
    parallel_for(q_grid.size(), opts.threads,
                 [&](std::size_t i) { out[i] = find_equilibria(q_grid[i], config, inits, basis, opts); });
    return out;
}

// ---------------------------------------------------------------------------
// Long-time behaviour under decaying noise

struct LongtimeOptions {
    int paths = 100;
    std::uint64_t seed = 0;
    int sample_every = 1000; // steps between recorded distances
    double tol = 1e-2;
    int threads = 1;
};

struct LongtimeResult {
    std::vector<double> times;
    std::vector<std::vector<double>> distances; // [path][sample]
    std::vector<double> terminal;               // per path
    std::vector<int> terminal_nearest;          // index of the closest equilibrium at the end
    int within_tol = 0;
};

/// Distance min_e ||u_t - e|| to a set of equilibria along each path.
inline LongtimeResult longtime_experiment(const ModelConfig& config, const NoiseSpec& noise, const SpectralField& u0,
                                          const std::vector<SpectralField>& equilibria, const LegendreBasis& basis,
                                          const LongtimeOptions& opts)
{
    if (const auto* c = std::get_if<CylindricalNoise>(&noise)) {
        if (const auto* p = std::get_if<PowerDecay>(&c->psi); p && !(2.0 * p->alpha > 1.0))
            throw InvalidArgument("long-time experiment needs 2 alpha > 1");
    }
    if (equilibria.empty())
        throw InvalidArgument("need at least one equilibrium");
    const PathwiseSolver solver(config, basis);
    const TimeGrid grid = config.grid();
    LongtimeResult out;
    out.distances.resize(static_cast<std::size_t>(opts.paths));
    out.terminal_nearest.resize(static_cast<std::size_t>(opts.paths));
    std::vector<std::vector<double>> times(static_cast<std::size_t>(opts.paths));
    parallel_for(static_cast<std::size_t>(opts.paths), opts.threads, [&](std::size_t p) {
        const SamplePath path = gw_path(noise, grid, opts.seed, basis, p);
        const Trajectory traj = solver.solve(u0, path, SolveOptions{opts.sample_every, false, false});
        for (std::size_t k = 0; k < traj.u.size(); ++k) {
            double d = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < equilibria.size(); ++i) {
                const double di = (traj.u[k] - equilibria[i]).norm();
                if (di < d) {
                    d = di;
                    out.terminal_nearest[p] = static_cast<int>(i);
                }
            }
            out.distances[p].push_back(d);
        }
        times[p] = traj.times;
    });
    out.times = times.empty() ? std::vector<double>{} : times.front();
    for (const auto& d : out.distances) {
        out.terminal.push_back(d.back());
        if (d.back() < opts.tol)
            ++out.within_tol;
    }
    return out;
}

} // namespace ebm
