#pragma once

// Pathwise time integration of
//   du - d/dx((1 - x^2) du/dx) dt + g(u) dt = (Q S beta(u) + f) dt + G dW
// along one sample path, using implicit (diagonal) diffusion and explicit
// reaction evaluated at the quadrature nodes.
//
// Two equivalent stepping forms are provided:
//   UForm: the noise increment z_{k+1} - z_k is added directly to u;
//   YForm: integrates y = u - (G.W) as a random PDE with the extra source
//          -A z, and reconstructs u = y + z.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ebm/constitutive.hpp"
#include "ebm/errors.hpp"
#include "ebm/legendre.hpp"
#include "ebm/noise.hpp"

namespace ebm {

enum class SteppingForm { YForm, UForm };

struct ModelConfig {
    double Q = 4.5;
    ForcingData forcing;
    CoalbedoGraph coalbedo = Sellers{};
    EmissionLaw emission = LinearEmission{};
    int modes = 32;
    int quad_order = 64;
    double dt = 1e-3;
    double horizon = 5.0;
    SteppingForm form = SteppingForm::UForm;
    double lambda = 1e-4; // Yosida parameter, Budyko only
    std::vector<double> nondegeneracy_bands{0.1, 0.5};

    void validate() const
    {
        if (!(Q > 0.0))
            throw InvalidArgument("Q must be > 0");
        if (!(dt > 0.0))
            throw InvalidArgument("dt must be > 0");
        if (horizon < 0.0)
            throw InvalidArgument("horizon must be >= 0");
        if (is_budyko(coalbedo) && !(lambda > 0.0))
            throw NonpositiveLambda("Budyko dynamics need lambda > 0");
        ebm::validate(coalbedo);
        ebm::validate(emission);
        forcing.validate();
    }

    TimeGrid grid() const { return TimeGrid::covering(horizon, dt); }

    /// The single-valued co-albedo actually used by the dynamics.
    Ramp branch() const { return regularized_branch(coalbedo, lambda); }

    /// Lipschitz constant of the reaction Q S beta - g; the explicit step is
    /// only monotone for dt below its inverse.
    double reaction_lipschitz() const { return Q * forcing.insolation_max() * branch().lipschitz() + g_slope(emission); }
};

struct StepDiagnostics {
    double t = 0.0;
    double l2 = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::vector<double> nondegeneracy; // one per configured band
};

struct Trajectory {
    std::vector<double> times;
    std::vector<SpectralField> u;
    std::vector<SpectralField> y; // only filled by YForm when requested
    std::vector<StepDiagnostics> diagnostics;
    std::vector<std::string> warnings;
};

struct SolveOptions {
    int store_every = 1;
    bool keep_y = false;
    bool diagnostics = true;
};

/// Quadrature measure of the nodes where |u - u_c| <= eps.
inline double nondegeneracy_measure(const Eigen::VectorXd& nodal, double eps, const LegendreBasis& basis,
                                    double u_c = kIceTemperature)
{
    if (!(eps > 0.0))
        throw InvalidArgument("nondegeneracy band must be > 0");
    double measure = 0.0;
    for (Eigen::Index j = 0; j < nodal.size(); ++j)
        if (std::abs(nodal(j) - u_c) <= eps)
            measure += basis.weights()(j);
    return measure;
}

inline double nondegeneracy_measure(const SpectralField& field, double eps, const LegendreBasis& basis,
                                    double u_c = kIceTemperature)
{
    return nondegeneracy_measure(to_nodal(field, basis), eps, basis, u_c);
}

/// Stepper bound to one configuration and basis. Holds nodal insolation and,
/// for time-independent forcing, nodal forcing; otherwise stateless.
class PathwiseSolver {
public:
    PathwiseSolver(ModelConfig config, const LegendreBasis& basis)
        : config_(std::move(config)), basis_(&basis), branch_(config_.branch())
    {
        config_.validate();
        if (basis.size() != config_.modes || basis.quadrature_order() != config_.quad_order)
            throw DimensionMismatch("basis does not match config modes/quadrature");
        s_nodal_ = config_.forcing.insolation.nodal(basis);
        if (!config_.forcing.time_dependent())
            f_nodal_ = config_.forcing.forcing_nodal(0.0, basis);
        implicit_ = (1.0 + config_.dt * basis.eigenvalues().array()).inverse().matrix();
    }

    const ModelConfig& config() const noexcept { return config_; }
    const LegendreBasis& basis() const noexcept { return *basis_; }

    /// Nodal reaction Q S beta(u) - g(u) + f(t).
    Eigen::VectorXd reaction_nodal(const Eigen::VectorXd& u_nodal, double t) const
    {
        const Eigen::VectorXd f = forcing_at(t);
        Eigen::VectorXd r(u_nodal.size());
        for (Eigen::Index j = 0; j < r.size(); ++j)
            r(j) = config_.Q * s_nodal_(j) * branch_(u_nodal(j)) - g_eval(config_.emission, u_nodal(j)) + f(j);
        return r;
    }

    /// Projected reaction for a spectral state.
    SpectralField reaction(const SpectralField& u, double t) const
    {
        return to_spectral(reaction_nodal(to_nodal(u, *basis_), t), *basis_);
    }

    /// One step from t_k. `state` is u_k (UForm) or y_k (YForm).
    SpectralField step(const SpectralField& state, const SpectralField& z_k, const SpectralField& z_next,
                       double t_k) const
    {
        check_size(state);
        const double dt = config_.dt;
        Eigen::VectorXd rhs;
        if (config_.form == SteppingForm::UForm) {
            rhs = state.coeffs() + dt * reaction(state, t_k).coeffs() + (z_next.coeffs() - z_k.coeffs());
        } else {
            const SpectralField u = state + z_k;
            rhs = state.coeffs() + dt * (reaction(u, t_k).coeffs() - apply_operator(z_k, *basis_).coeffs());
        }
        return SpectralField(Eigen::VectorXd(rhs.cwiseProduct(implicit_)));
    }

    Trajectory solve(const SpectralField& u0, const SamplePath& path, const SolveOptions& opts = {}) const
    {
        check_size(u0);
        const TimeGrid grid = config_.grid();
        if (!(path.grid.steps == grid.steps && std::abs(path.grid.dt - grid.dt) <= 1e-15 * grid.dt))
            throw GridMismatch("sample path grid (dt=" + std::to_string(path.grid.dt) + ", K=" +
                               std::to_string(path.grid.steps) + ") differs from config grid (dt=" +
                               std::to_string(grid.dt) + ", K=" + std::to_string(grid.steps) + ")");
        if (path.z.size() != static_cast<std::size_t>(grid.steps) + 1)
            throw GridMismatch("sample path has no (G.W) trajectory for every step");
        if (path.z.front().size() != u0.size())
            throw DimensionMismatch("sample path modes differ from initial field");

        Trajectory traj;
        if (config_.dt * config_.reaction_lipschitz() >= 1.0)
            traj.warnings.push_back("dt exceeds the explicit-reaction bound 1/(Q S1 L_beta + g'), got dt*L = " +
                                    std::to_string(config_.dt * config_.reaction_lipschitz()));
        const int stride = std::max(opts.store_every, 1);
        const bool y_form = config_.form == SteppingForm::YForm;

        SpectralField state = y_form ? u0 - path.z[0] : u0;
        auto record = [&](int k, const SpectralField& u, const SpectralField& y) {
            traj.times.push_back(grid.t(k));
            traj.u.push_back(u);
            if (y_form && opts.keep_y)
                traj.y.push_back(y);
            if (opts.diagnostics)
                traj.diagnostics.push_back(diagnose(grid.t(k), u));
        };
        record(0, u0, state);
        for (int k = 0; k < grid.steps; ++k) {
            state = step(state, path.z[k], path.z[k + 1], grid.t(k));
            if ((k + 1) % stride == 0 || k + 1 == grid.steps) {
                if (y_form)
                    record(k + 1, state + path.z[k + 1], state);
                else
                    record(k + 1, state, state);
            }
        }
        return traj;
    }

    StepDiagnostics diagnose(double t, const SpectralField& u) const
    {
        const Eigen::VectorXd nodal = to_nodal(u, *basis_);
        StepDiagnostics d;
        d.t = t;
        d.l2 = u.norm();
        d.min = nodal.minCoeff();
        d.max = nodal.maxCoeff();
        for (double eps : config_.nondegeneracy_bands)
            d.nondegeneracy.push_back(nondegeneracy_measure(nodal, eps, *basis_, ice_temperature(config_.coalbedo)));
        return d;
    }

private:
    Eigen::VectorXd forcing_at(double t) const
    {
        return f_nodal_ ? *f_nodal_ : config_.forcing.forcing_nodal(t, *basis_);
    }

    void check_size(const SpectralField& f) const
    {
        if (f.size() != basis_->size())
            throw DimensionMismatch("field has " + std::to_string(f.size()) + " modes, solver uses " +
                                    std::to_string(basis_->size()));
    }

    ModelConfig config_;
    const LegendreBasis* basis_;
    Ramp branch_;
    Eigen::VectorXd s_nodal_;
    std::optional<Eigen::VectorXd> f_nodal_;
    Eigen::VectorXd implicit_;
};

inline SpectralField step(const SpectralField& state, const SpectralField& z_k, const SpectralField& z_next,
                          double t_k, const ModelConfig& config, const LegendreBasis& basis)
{
    return PathwiseSolver(config, basis).step(state, z_k, z_next, t_k);
}

inline Trajectory solve_path(const ModelConfig& config, const SpectralField& u0, const SamplePath& path,
                             const LegendreBasis& basis, const SolveOptions& opts = {})
{
    return PathwiseSolver(config, basis).solve(u0, path, opts);
}

/// A path with no noise on the config grid.
inline SamplePath quiet_path(const ModelConfig& config, const LegendreBasis& basis)
{
    return gw_path(NoiseOff{}, config.grid(), 0, basis);
}

/// max_k ||a_k - b_k|| over the stored steps.
inline double sup_distance(const Trajectory& a, const Trajectory& b)
{
    if (a.u.size() != b.u.size())
        throw GridMismatch("trajectories have different lengths");
    double d = 0.0;
    for (std::size_t k = 0; k < a.u.size(); ++k)
        d = std::max(d, (a.u[k] - b.u[k]).norm());
    return d;
}

// ---------------------------------------------------------------------------
// Comparison

struct ComparisonReport {
    std::vector<double> times;
    std::vector<double> gap;          // ||u_k - uh_k||
    std::vector<double> bound;        // e^{t Q S0 L}(||du0|| + int ||df||)
    std::vector<double> positive_gap; // ||[u_k - uh_k]_+||
    std::vector<double> positive_bound;
    double sup_gap = 0.0;
    int bound_violations = 0;
    int positive_bound_violations = 0;
    bool data_ordered = false;   // u0 <= uh0 and f <= fh at every node
    bool order_preserved = true; // u_k <= uh_k at every node and step (checked when data_ordered)
    double worst_order_excess = 0.0;
};

namespace detail {
inline double positive_part_norm(const Eigen::VectorXd& nodal, const LegendreBasis& basis)
{
    double s = 0.0;
    for (Eigen::Index j = 0; j < nodal.size(); ++j)
        if (nodal(j) > 0.0)
            s += basis.weights()(j) * nodal(j) * nodal(j);
    return std::sqrt(s);
}
} // namespace detail

/// Runs (u0, f) and (uh0, fh) on the same path and checks the Lipschitz
/// comparison estimate in L2 and for positive parts, plus nodal ordering.
inline ComparisonReport comparison_check(const ModelConfig& config, const SpectralField& u0, const SpectralField& uh0,
                                         const ForcingData& f, const ForcingData& fh, const SamplePath& path,
                                         const LegendreBasis& basis, double order_slack = 1e-12)
{
    if (is_budyko(config.coalbedo))
        throw VariantMismatch("comparison estimate needs the Lipschitz (Sellers) co-albedo");
    ModelConfig cfg = config;
    ModelConfig cfg_hat = config;
    cfg.forcing = f;
    cfg_hat.forcing = fh;
    cfg.forcing.insolation = config.forcing.insolation;
    cfg_hat.forcing.insolation = config.forcing.insolation;

    const SolveOptions opts{1, false, false};
    const Trajectory a = solve_path(cfg, u0, path, basis, opts);
    const Trajectory b = solve_path(cfg_hat, uh0, path, basis, opts);
    const TimeGrid grid = config.grid();

    const double rate = config.Q * config.forcing.insolation_min() * config.branch().lipschitz();
    const double slack = 1e-12;

    ComparisonReport rep;
    const Eigen::VectorXd du0 = to_nodal(u0 - uh0, basis);
    rep.data_ordered = (du0.array() <= 0.0).all();
    for (int k = 0; k <= grid.steps && rep.data_ordered; ++k) {
        const Eigen::VectorXd df = f.forcing_nodal(grid.t(k), basis) - fh.forcing_nodal(grid.t(k), basis);
        rep.data_ordered = (df.array() <= 0.0).all();
        if (!f.time_dependent() && !fh.time_dependent())
            break;
    }

    const double initial_gap = (u0 - uh0).norm();
    const double initial_pos = detail::positive_part_norm(du0, basis);
    double forcing_integral = 0.0;
    double forcing_pos_integral = 0.0;
    for (int k = 0; k <= grid.steps; ++k) {
        const double t = grid.t(k);
        const SpectralField d = a.u[k] - b.u[k];
        const Eigen::VectorXd dn = to_nodal(d, basis);
        const double growth = std::exp(t * rate);
        rep.times.push_back(t);
        rep.gap.push_back(d.norm());
        rep.bound.push_back(growth * (initial_gap + forcing_integral));
        rep.positive_gap.push_back(detail::positive_part_norm(dn, basis));
        rep.positive_bound.push_back(growth * (initial_pos + forcing_pos_integral));
        rep.sup_gap = std::max(rep.sup_gap, rep.gap.back());
        if (rep.gap.back() > rep.bound.back() * (1.0 + slack) + slack)
            ++rep.bound_violations;
        if (rep.positive_gap.back() > rep.positive_bound.back() * (1.0 + slack) + slack)
            ++rep.positive_bound_violations;
        if (rep.data_ordered) {
            const double excess = dn.maxCoeff();
            rep.worst_order_excess = std::max(rep.worst_order_excess, excess);
            if (excess > order_slack)
                rep.order_preserved = false;
        }
        const Eigen::VectorXd df = f.forcing_nodal(t, basis) - fh.forcing_nodal(t, basis);
        forcing_integral += grid.dt * std::sqrt(basis.weights().dot(df.cwiseProduct(df)));
        forcing_pos_integral += grid.dt * detail::positive_part_norm(df, basis);
    }
    if (!rep.data_ordered)
        rep.order_preserved = false;
    return rep;
}

// ---------------------------------------------------------------------------
// Convergence ladders

struct LadderRow {
    double parameter = 0.0;
    double next_parameter = 0.0; // lambda ladder: the next rung; eps ladder: 0
    double distance = 0.0;
    double ratio = 0.0;          // distance / previous distance (0 on the first row)
};

/// Sup-time distances between solutions for consecutive Yosida parameters.
inline std::vector<LadderRow> lambda_convergence(const ModelConfig& config, const std::vector<double>& lambdas,
                                                 const SpectralField& u0, const SamplePath& path,
                                                 const LegendreBasis& basis)
{
    if (!is_budyko(config.coalbedo))
        throw VariantMismatch("lambda ladder needs the Budyko co-albedo");
    for (std::size_t i = 1; i < lambdas.size(); ++i)
        if (!(lambdas[i] < lambdas[i - 1]))
            throw InvalidArgument("lambda ladder must be strictly decreasing");
    std::vector<Trajectory> runs;
    for (double lambda : lambdas) {
        ModelConfig cfg = config;
        cfg.lambda = lambda;
        runs.push_back(solve_path(cfg, u0, path, basis, SolveOptions{1, false, false}));
    }
    std::vector<LadderRow> rows;
    for (std::size_t i = 0; i + 1 < runs.size(); ++i) {
        LadderRow row{lambdas[i], lambdas[i + 1], sup_distance(runs[i], runs[i + 1]), 0.0};
        if (!rows.empty() && rows.back().distance > 0.0)
            row.ratio = row.distance / rows.back().distance;
        rows.push_back(row);
    }
    return rows;
}

/// Sup-time distances ||u^eps - u^0|| with the shared path scaled by eps.
inline std::vector<LadderRow> eps_convergence(const ModelConfig& config, const std::vector<double>& epsilons,
                                              const SpectralField& u0, const SamplePath& path,
                                              const LegendreBasis& basis)
{
    const PathwiseSolver solver(config, basis);
    const SolveOptions opts{1, false, false};
    const Trajectory deterministic = solver.solve(u0, scaled(path, 0.0), opts);
    std::vector<LadderRow> rows;
    for (double eps : epsilons) {
        LadderRow row{eps, 0.0, 0.0, 0.0};
        if (eps != 0.0)
            row.distance = sup_distance(solver.solve(u0, scaled(path, eps), opts), deterministic);
        if (!rows.empty() && rows.back().distance > 0.0)
            row.ratio = row.distance / rows.back().distance;
        rows.push_back(row);
    }
    return rows;
}

/// Empirical order p from distance ~ C eps^p, fitted by least squares on log-log.
inline double empirical_order(const std::vector<LadderRow>& rows)
{
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& r : rows) {
        if (r.parameter <= 0.0 || r.distance <= 0.0)
            continue;
        const double x = std::log(r.parameter);
        const double y = std::log(r.distance);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 2)
        return 0.0;
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace ebm
