#pragma once

// Experiment drivers. Each kind turns a RunConfig into a RunResult: named
// tables (written as CSV) plus a summary with pass/fail checks, key scalars
// and provenance. Nothing here depends on wall-clock time or thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ebm/harness/config.hpp"
#include "ebm/legendre.hpp"
#include "ebm/noise.hpp"
#include "ebm/parallel.hpp"
#include "ebm/solver.hpp"
#include "ebm/stationary.hpp"

namespace ebm::harness {

using Cell = std::variant<std::monostate, double, long long, std::string, bool>;

struct Table {
    std::string name; // file stem, e.g. "isometry"
    std::vector<std::string> header;
    std::vector<std::vector<Cell>> rows;
};

struct Check {
    std::string name;
    bool passed = false;
    double value = 0.0;
    std::optional<double> lower;
    std::optional<double> upper;
};

struct Scalar {
    double value = 0.0;
    std::optional<double> std_error; // set for Monte Carlo quantities
};

struct RunSummary {
    ExperimentKind kind = ExperimentKind::Simulate;
    std::vector<Check> checks;
    std::vector<std::pair<std::string, Scalar>> scalars;
    json thresholds;                  // null unless the kind computes them
    json metadata = json::object();
    std::vector<std::string> warnings;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string version = kVersion;
    json config;

    bool passed() const
    {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
    }

    const Check* find_check(std::string_view name) const
    {
        for (const auto& c : checks)
            if (c.name == name)
                return &c;
        return nullptr;
    }

    std::optional<Scalar> scalar(std::string_view name) const
    {
        for (const auto& [k, v] : scalars)
            if (k == name)
                return v;
        return std::nullopt;
    }
};

struct RunResult {
    RunSummary summary;
    std::vector<Table> tables;

    const Table* table(std::string_view name) const
    {
        for (const auto& t : tables)
            if (t.name == name)
                return &t;
        return nullptr;
    }
};

namespace detail {

inline std::string fmt_g(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

inline void check_at_most(RunSummary& s, std::string name, double value, double upper)
{
    s.checks.push_back({std::move(name), value <= upper, value, std::nullopt, upper});
}

inline void check_below(RunSummary& s, std::string name, double value, double upper)
{
    s.checks.push_back({std::move(name), value < upper, value, std::nullopt, upper});
}

inline void check_at_least(RunSummary& s, std::string name, double value, double lower)
{
    s.checks.push_back({std::move(name), value >= lower, value, lower, std::nullopt});
}

inline void check_flag(RunSummary& s, std::string name, bool ok)
{
    s.checks.push_back({std::move(name), ok, ok ? 1.0 : 0.0, 1.0, std::nullopt});
}

inline void check_range(RunSummary& s, std::string name, double value, double lower, double upper)
{
    s.checks.push_back({std::move(name), value >= lower && value <= upper, value, lower, upper});
}

inline void add_scalar(RunSummary& s, std::string name, double value)
{
    s.scalars.emplace_back(std::move(name), Scalar{value, std::nullopt});
}

inline void add_mc(RunSummary& s, std::string name, const MonteCarloEstimate& e)
{
    s.scalars.emplace_back(std::move(name), Scalar{e.mean, e.std_error});
}

inline SpectralField initial_field(const PolyProfile& p, const LegendreBasis& basis)
{
    return project_function(p, basis);
}

inline LegendreBasis model_basis(const ModelConfig& m) { return LegendreBasis(m.modes, m.quad_order); }

/// Uniform [0, 1) number k of the stream `key`.
inline double uniform01(std::uint64_t key, std::uint64_t k)
{
    return static_cast<double>(splitmix64(key + k * kGolden) >> 11) * 0x1.0p-53;
}

inline void append_warnings(RunSummary& s, const std::vector<std::string>& w)
{
    for (const auto& x : w)
        if (std::find(s.warnings.begin(), s.warnings.end(), x) == s.warnings.end())
            s.warnings.push_back(x);
}

// ---------------------------------------------------------------------------

inline void run_simulate(const RunConfig& rc, RunResult& out)
{
    const auto& m = rc.model;
    const LegendreBasis basis = model_basis(m);
    const SpectralField u0 = initial_field(rc.experiment.initial, basis);
    const SamplePath path = gw_path(rc.noise, m.grid(), rc.seed, basis);
    const Trajectory traj = solve_path(m, u0, path, basis, SolveOptions{rc.experiment.store_every, false, true});
    append_warnings(out.summary, traj.warnings);

    Table modal{"trajectory", {"t"}, {}};
    Table nodal{"trajectory_nodal", {"t"}, {}};
    Table diag{"diagnostics", {"t", "l2", "min", "max"}, {}};
    Table nodes{"nodes", {"j", "x", "weight"}, {}};
    for (int n = 0; n < basis.size(); ++n)
        modal.header.push_back("c_" + std::to_string(n));
    for (int j = 0; j < basis.quadrature_order(); ++j) {
        nodal.header.push_back("u_" + std::to_string(j));
        nodes.rows.push_back({static_cast<long long>(j), basis.nodes()(j), basis.weights()(j)});
    }
    for (double eps : m.nondegeneracy_bands)
        diag.header.push_back("nondegeneracy_" + fmt_g(eps));

    bool finite = true;
    for (std::size_t k = 0; k < traj.u.size(); ++k) {
        const double t = traj.times[k];
        std::vector<Cell> row{t};
        for (int n = 0; n < basis.size(); ++n)
            row.emplace_back(traj.u[k][n]);
        modal.rows.push_back(std::move(row));
        const Eigen::VectorXd un = to_nodal(traj.u[k], basis);
        std::vector<Cell> nrow{t};
        for (Eigen::Index j = 0; j < un.size(); ++j)
            nrow.emplace_back(un(j));
        nodal.rows.push_back(std::move(nrow));
        const auto& d = traj.diagnostics[k];
        std::vector<Cell> drow{d.t, d.l2, d.min, d.max};
        for (double v : d.nondegeneracy)
            drow.emplace_back(v);
        diag.rows.push_back(std::move(drow));
        finite = finite && traj.u[k].coeffs().allFinite();
    }
    out.tables.push_back(std::move(modal));
    out.tables.push_back(std::move(nodal));
    out.tables.push_back(std::move(diag));
    out.tables.push_back(std::move(nodes));

    if (rc.experiment.export_increments && path.increments.cols() > 0) {
        Table inc{"increments", {"k", "t"}, {}};
        for (Eigen::Index j = 0; j < path.increments.cols(); ++j)
            inc.header.push_back("dB_" + std::to_string(j + static_cast<Eigen::Index>(first_stream(rc.noise))));
        for (Eigen::Index k = 0; k < path.increments.rows(); ++k) {
            std::vector<Cell> row{static_cast<long long>(k), path.grid.t(static_cast<int>(k))};
            for (Eigen::Index j = 0; j < path.increments.cols(); ++j)
                row.emplace_back(path.increments(k, j));
            inc.rows.push_back(std::move(row));
        }
        out.tables.push_back(std::move(inc));
    }

    check_flag(out.summary, "trajectory_finite", finite);
    const auto& last = traj.diagnostics.back();
    add_scalar(out.summary, "final_time", last.t);
    add_scalar(out.summary, "final_l2", last.l2);
    add_scalar(out.summary, "final_min", last.min);
    add_scalar(out.summary, "final_max", last.max);
    add_scalar(out.summary, "final_value_at_0", evaluate(traj.u.back(), 0.0));
}

inline void run_isometry(const RunConfig& rc, RunResult& out)
{
    const auto& e = rc.experiment;
    const auto& c = std::get<CylindricalNoise>(rc.noise);
    Table t{"isometry", {"t", "mc_mean", "target", "stderr", "rel_err"}, {}};
    for (double time : e.times) {
        const MonteCarloEstimate est = isometry_estimate(rc.noise, time, e.paths, rc.seed, e.mc_dt, rc.threads);
        t.rows.push_back({time, est.mean, est.target, est.std_error, est.rel_err});
        const std::string tag = "t=" + fmt_g(time);
        add_mc(out.summary, "mc_mean_" + tag, est);
        add_scalar(out.summary, "target_" + tag, est.target);
        check_at_most(out.summary, "isometry_z_score_" + tag, est.z_score(), e.z_max);
        const auto* k = std::get_if<ConstantModulation>(&c.psi);
        if (k != nullptr && c.gains.empty() && c.smoothing == 0.0) {
            const double n = c.truncation;
            const double closed = k->c * k->c * time * n / (n + 1.0);
            check_at_most(out.summary, "closed_form_" + tag, std::abs(est.target - closed) / closed, 1e-14);
        }
    }
    out.tables.push_back(std::move(t));
}

inline void run_convolution(const RunConfig& rc, RunResult& out)
{
    const auto& e = rc.experiment;
    const LegendreBasis basis = model_basis(rc.model);
    Table t{"convolution", {"t", "mc_mean", "target", "stderr", "rel_err"}, {}};
    for (double time : e.times) {
        const TimeGrid grid = TimeGrid::covering(time, std::min(e.mc_dt, time));
        const MonteCarloEstimate est = convolution_estimate(rc.noise, grid, e.paths, rc.seed, basis, rc.threads);
        t.rows.push_back({time, est.mean, est.target, est.std_error, est.rel_err});
        const std::string tag = "t=" + fmt_g(time);
        add_mc(out.summary, "mc_mean_" + tag, est);
        add_scalar(out.summary, "target_" + tag, est.target);
        check_below(out.summary, "convolution_rel_err_" + tag, est.rel_err, e.rel_tol);
    }
    out.tables.push_back(std::move(t));

    const double trace = convolution_trace(e.trace_time, e.trace_truncation);
    const double limit = 0.5 * (std::numbers::pi * std::numbers::pi / 3.0 - 3.0);
    add_scalar(out.summary, "trace_sanity_value", trace);
    add_scalar(out.summary, "trace_sanity_limit", limit);
    check_below(out.summary, "trace_sanity", std::abs(trace - limit), e.trace_tol);

    if (!e.sup_horizons.empty()) {
        Table s{"sup_moment", {"T", "p", "sup_moment", "stderr", "trace_power", "ratio"}, {}};
        for (double T : e.sup_horizons) {
            const TimeGrid grid = TimeGrid::covering(T, std::min(e.mc_dt, T));
            const auto d = sup_moment_diagnostic(rc.noise, grid, e.sup_p, e.paths, rc.seed, basis, rc.threads);
            s.rows.push_back({T, e.sup_p, d.sup_moment.mean, d.sup_moment.std_error, d.sup_moment.target, d.ratio});
            add_mc(out.summary, "sup_moment_T=" + fmt_g(T), d.sup_moment);
        }
        out.tables.push_back(std::move(s));
    }
}

inline ForcingData shifted_forcing(const ForcingData& f, const PolyProfile& shift)
{
    ForcingData out = f;
    for (auto& k : out.forcing) {
        std::vector<double> p = k.profile.p_coeffs;
        p.resize(std::max(p.size(), shift.p_coeffs.size()), 0.0);
        for (std::size_t i = 0; i < shift.p_coeffs.size(); ++i)
            p[i] += shift.p_coeffs[i];
        k.profile = PolyProfile{std::move(p)};
    }
    return out;
}

struct TrialOutcome {
    ModelConfig config;
    ComparisonReport report;
    double max_bound_ratio = 0.0;
};

/// Trial `i` of the randomized comparison suite: a Sellers config with constant
/// S and f, initial data c + sum_{n<=4} a_n P_n, and ordered perturbations
/// uh0 = u0 + s + b(1 - x^2), fh = f + d + e(1 - x^2) with s > 0 and b, d, e >= 0.
inline TrialOutcome comparison_trial(const RunConfig& rc, int i, const LegendreBasis& basis)
{
    const std::uint64_t key = stream_key(rc.seed, static_cast<std::uint64_t>(i), 0x436f6d70ULL);
    std::uint64_t k = 0;
    auto u = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(key, k++); };

    ModelConfig cfg = rc.model;
    const double m = u(0.1, 0.4);
    const double M = m + u(0.2, 0.5);
    cfg.coalbedo = Sellers{m, M, kIceTemperature, u(0.5, 1.5)};
    cfg.Q = u(2.0, 6.0);
    cfg.forcing.insolation = PolyProfile::constant(u(0.8, 1.2));
    cfg.forcing.forcing = {ForcingKnot{0.0, PolyProfile::constant(u(-13.0, -11.0))}};

    std::vector<double> p0{u(-12.0, -8.0)};
    for (int n = 1; n <= 4; ++n)
        p0.push_back(u(-0.5, 0.5));
    const PolyProfile init{p0};
    const double s = u(0.05, 1.0);
    const double b = u(0.0, 0.5);
    const double d = u(0.0, 0.5);
    const double e = u(0.0, 0.5);
    // 1 - x^2 = (2/3)(P0 - P2)
    const PolyProfile hat_shift{{s + 2.0 * b / 3.0, 0.0, -2.0 * b / 3.0}};
    const PolyProfile f_shift{{d + 2.0 * e / 3.0, 0.0, -2.0 * e / 3.0}};
    PolyProfile init_hat = init;
    for (std::size_t j = 0; j < hat_shift.p_coeffs.size(); ++j)
        init_hat.p_coeffs[j] += hat_shift.p_coeffs[j];

    const SamplePath path = gw_path(rc.noise, cfg.grid(), rc.seed, basis, static_cast<std::uint64_t>(i));
    TrialOutcome t;
    t.report = comparison_check(cfg, initial_field(init, basis), initial_field(init_hat, basis), cfg.forcing,
                                shifted_forcing(cfg.forcing, f_shift), path, basis, rc.experiment.order_slack);
    for (std::size_t j = 0; j < t.report.gap.size(); ++j)
        if (t.report.bound[j] > 0.0)
            t.max_bound_ratio = std::max(t.max_bound_ratio, t.report.gap[j] / t.report.bound[j]);
    t.config = std::move(cfg);
    return t;
}

inline void run_compare(const RunConfig& rc, RunResult& out)
{
    const auto& e = rc.experiment;
    const LegendreBasis basis = model_basis(rc.model);
    if (e.random_trials > 0) {
        std::vector<TrialOutcome> trials(static_cast<std::size_t>(e.random_trials));
        parallel_for(trials.size(), rc.threads,
                     [&](std::size_t i) { trials[i] = comparison_trial(rc, static_cast<int>(i), basis); });
        Table t{"comparison_trials",
                {"trial", "Q", "m", "M", "half_width", "S", "f", "sup_gap", "max_gap_over_bound", "bound_violations",
                 "positive_bound_violations", "data_ordered", "order_preserved", "worst_order_excess"},
                {}};
        int violations = 0, pos_violations = 0, unordered = 0, broken = 0;
        double worst_ratio = 0.0, worst_excess = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < trials.size(); ++i) {
            const auto& tr = trials[i];
            const auto& s = std::get<Sellers>(tr.config.coalbedo);
            const auto& r = tr.report;
            t.rows.push_back({static_cast<long long>(i), tr.config.Q, s.m, s.M, s.half_width,
                              tr.config.forcing.insolation.p_coeffs[0],
                              tr.config.forcing.forcing.front().profile.p_coeffs[0], r.sup_gap, tr.max_bound_ratio,
                              static_cast<long long>(r.bound_violations),
                              static_cast<long long>(r.positive_bound_violations), r.data_ordered, r.order_preserved,
                              r.worst_order_excess});
            violations += r.bound_violations;
            pos_violations += r.positive_bound_violations;
            unordered += r.data_ordered ? 0 : 1;
            broken += r.order_preserved ? 0 : 1;
            worst_ratio = std::max(worst_ratio, tr.max_bound_ratio);
            worst_excess = std::max(worst_excess, r.worst_order_excess);
        }
        out.tables.push_back(std::move(t));
        add_scalar(out.summary, "trials", e.random_trials);
        add_scalar(out.summary, "worst_gap_over_bound", worst_ratio);
        add_scalar(out.summary, "worst_order_excess", worst_excess);
        check_at_most(out.summary, "bound_violations", violations, 0);
        check_at_most(out.summary, "positive_bound_violations", pos_violations, 0);
        check_at_most(out.summary, "unordered_trials", unordered, 0);
        check_at_most(out.summary, "order_broken_trials", broken, 0);
        return;
    }

    const PolyProfile init_hat = e.initial_hat ? *e.initial_hat : e.initial + e.shift;
    const ForcingData fh = shifted_forcing(rc.model.forcing, PolyProfile::constant(e.forcing_shift));
    const SamplePath path = gw_path(rc.noise, rc.model.grid(), rc.seed, basis);
    const ComparisonReport rep =
        comparison_check(rc.model, initial_field(e.initial, basis), initial_field(init_hat, basis),
                         rc.model.forcing, fh, path, basis, e.order_slack);
    Table t{"comparison", {"t", "gap", "bound", "positive_gap", "positive_bound"}, {}};
    for (std::size_t k = 0; k < rep.times.size(); ++k)
        t.rows.push_back({rep.times[k], rep.gap[k], rep.bound[k], rep.positive_gap[k], rep.positive_bound[k]});
    out.tables.push_back(std::move(t));
    add_scalar(out.summary, "sup_gap", rep.sup_gap);
    add_scalar(out.summary, "worst_order_excess", rep.worst_order_excess);
    out.summary.metadata["data_ordered"] = rep.data_ordered;
    check_at_most(out.summary, "bound_violations", rep.bound_violations, 0);
    check_at_most(out.summary, "positive_bound_violations", rep.positive_bound_violations, 0);
    if (rep.data_ordered)
        check_flag(out.summary, "order_preserved", rep.order_preserved);
}

inline Table ladder_table(const std::string& name, const std::vector<LadderRow>& rows, bool with_next)
{
    Table t{name, {}, {}};
    t.header = with_next ? std::vector<std::string>{"lambda", "next_lambda", "distance", "ratio"}
                         : std::vector<std::string>{"eps", "distance", "ratio"};
    for (const auto& r : rows) {
        if (with_next)
            t.rows.push_back({r.parameter, r.next_parameter, r.distance, r.ratio});
        else
            t.rows.push_back({r.parameter, r.distance, r.ratio});
    }
    return t;
}

/// Distances strictly decrease, except that exact zeros may repeat.
inline bool decreasing(const std::vector<LadderRow>& rows)
{
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (!(rows[i].distance < rows[i - 1].distance || rows[i].distance == 0.0))
            return false;
    return true;
}

inline void run_converge_eps(const RunConfig& rc, RunResult& out)
{
    const auto& e = rc.experiment;
    const LegendreBasis basis = model_basis(rc.model);
    const SamplePath path = gw_path(rc.noise, rc.model.grid(), rc.seed, basis);
    const auto rows = eps_convergence(rc.model, e.eps_ladder, initial_field(e.initial, basis), path, basis);
    out.tables.push_back(ladder_table("eps_convergence", rows, false));
    add_scalar(out.summary, "empirical_order", empirical_order(rows));
    add_scalar(out.summary, "final_distance", rows.back().distance);
    const bool ladder_decreasing = std::is_sorted(e.eps_ladder.rbegin(), e.eps_ladder.rend()) &&
                                   std::adjacent_find(e.eps_ladder.begin(), e.eps_ladder.end()) == e.eps_ladder.end();
    if (ladder_decreasing)
        check_flag(out.summary, "distances_decrease", decreasing(rows));
    if (e.final_tol)
        check_below(out.summary, "final_distance", rows.back().distance, *e.final_tol);
}

inline void run_converge_lambda(const RunConfig& rc, RunResult& out)
{
    const auto& e = rc.experiment;
    const LegendreBasis basis = model_basis(rc.model);
    const SamplePath path = gw_path(rc.noise, rc.model.grid(), rc.seed, basis);
    const auto rows = lambda_convergence(rc.model, e.lambda_ladder, initial_field(e.initial, basis), path, basis);
    out.tables.push_back(ladder_table("lambda_convergence", rows, true));
    double worst = 0.0;
    for (const auto& r : rows)
        worst = std::max(worst, r.distance);
    add_scalar(out.summary, "max_distance", worst);
    add_scalar(out.summary, "final_distance", rows.empty() ? 0.0 : rows.back().distance);
    check_flag(out.summary, "cauchy_distances_decrease", decreasing(rows));
    if (e.exact_tol)
        check_below(out.summary, "max_distance", worst, *e.exact_tol);
}

inline json thresholds_json(const ModelConfig& model)
{
    try {
        const Thresholds t = q_thresholds(model);
        json j{{"Q1", t.Q1}, {"Q2", t.Q2}, {"Q3", t.Q3}, {"Q4", t.Q4}, {"hypothesis_ratio_holds", t.valid},
               {"interpretation", "thresholds use the emission law g; values from the primitive G appear under with_primitive when they differ"}};
        if (t.primitive_differs)
            j["with_primitive"] = {{"Q1", t.Q1_primitive}, {"Q2", t.Q2_primitive}, {"Q3", t.Q3_primitive},
                                   {"Q4", t.Q4_primitive}};
        return j;
    } catch (const HypothesisViolated& err) {
        return {{"error", err.what()}};
    }
}

inline json functional_note()
{
    return "J integrates over [-1, 1] with dx and uses the primitive G of g; j is anchored at j(u_c) = 0";
}

inline ScanOptions scan_options(const RunConfig& rc)
{
    ScanOptions o;
    o.solve.tol = rc.experiment.residual_tol;
    o.dedup_tol = rc.experiment.dedup_tol;
    o.threads = rc.threads;
    return o;
}

inline void run_stationary(const RunConfig& rc, RunResult& out)
{
    const auto& e = rc.experiment;
    const auto& m = rc.model;
    const LegendreBasis basis = model_basis(m);
    const StationaryBranch br = find_equilibria(m.Q, m, {initial_field(e.initial, basis)}, basis, scan_options(rc));
    const MinMaxResult mm = minimal_maximal(m.Q, m, basis);
    const SolutionBracket bracket = solution_bracket(m.Q, m);

    Table t{"equilibria", {"index", "u_at_0", "mean", "min", "max", "residual", "J", "branch", "in_bracket"}, {}};
    const Eigen::VectorXd lo = to_nodal(mm.u_min, basis);
    const Eigen::VectorXd hi = to_nodal(mm.u_max, basis);
    bool ordered = true;
    double worst_residual = 0.0;
    bool in_bracket = true;
    for (std::size_t i = 0; i < br.equilibria.size(); ++i) {
        const auto& q = br.equilibria[i];
        const Eigen::VectorXd un = to_nodal(q.field, basis);
        t.rows.push_back({static_cast<long long>(i), q.value_at_0, q.field[0] / std::sqrt(2.0), un.minCoeff(),
                          un.maxCoeff(), q.residual, q.J, std::string(to_string(q.tag)), q.in_bracket});
        ordered = ordered && (lo.array() <= un.array() + 1e-8).all() && (un.array() <= hi.array() + 1e-8).all();
        worst_residual = std::max(worst_residual, q.residual);
        in_bracket = in_bracket && q.in_bracket;
    }
    out.tables.push_back(std::move(t));

    add_scalar(out.summary, "Q", m.Q);
    add_scalar(out.summary, "count", static_cast<double>(br.equilibria.size()));
    add_scalar(out.summary, "failed_starts", br.failed_starts);
    add_scalar(out.summary, "bracket_lower", bracket.lower);
    add_scalar(out.summary, "bracket_upper", bracket.upper);
    add_scalar(out.summary, "u_min_at_0", evaluate(mm.u_min, 0.0));
    add_scalar(out.summary, "u_max_at_0", evaluate(mm.u_max, 0.0));
    out.summary.thresholds = thresholds_json(m);
    out.summary.metadata["functional"] = functional_note();

    check_at_least(out.summary, "equilibria_found", static_cast<double>(br.equilibria.size()), 1.0);
    check_below(out.summary, "max_residual", worst_residual, e.residual_tol);
    check_flag(out.summary, "all_in_bracket", in_bracket);
    check_flag(out.summary, "minmax_converged", mm.converged);
    check_flag(out.summary, "minmax_monotone", mm.monotone);
    check_flag(out.summary, "between_minimal_and_maximal", ordered);
}

inline void run_scan_q(const RunConfig& rc, RunResult& out)
{
    const auto& e = rc.experiment;
    const auto& m = rc.model;
    const LegendreBasis basis = model_basis(m);
    const auto branches = scan_q(m, e.q_grid, {initial_field(e.initial, basis)}, basis, scan_options(rc));

    std::size_t k = 0;
    for (const auto& b : branches)
        k = std::max(k, b.equilibria.size());
    Table t{"bifurcation", {"Q", "count"}, {}};
    for (std::size_t i = 1; i <= k; ++i)
        t.header.push_back("u_at_0_" + std::to_string(i));
    for (std::size_t i = 1; i <= k; ++i)
        t.header.push_back("residual_" + std::to_string(i));
    for (std::size_t i = 1; i <= k; ++i)
        t.header.push_back("J_" + std::to_string(i));

    double worst_residual = 0.0;
    for (const auto& b : branches) {
        std::vector<Cell> row{b.Q, static_cast<long long>(b.equilibria.size())};
        for (std::size_t i = 0; i < k; ++i)
            row.push_back(i < b.equilibria.size() ? Cell{b.equilibria[i].value_at_0} : Cell{});
        for (std::size_t i = 0; i < k; ++i)
            row.push_back(i < b.equilibria.size() ? Cell{b.equilibria[i].residual} : Cell{});
        for (std::size_t i = 0; i < k; ++i)
            row.push_back(i < b.equilibria.size() ? Cell{b.equilibria[i].J} : Cell{});
        t.rows.push_back(std::move(row));
        for (const auto& q : b.equilibria)
            worst_residual = std::max(worst_residual, q.residual);
    }
    out.tables.push_back(std::move(t));

    out.summary.thresholds = thresholds_json(m);
    out.summary.metadata["functional"] = functional_note();
    out.summary.metadata["intermediate_bands"] = "counts in (Q1,Q2) and (Q3,Q4) are reported without a check";
    add_scalar(out.summary, "max_residual", worst_residual);
    check_below(out.summary, "max_residual", worst_residual, e.residual_tol);

    std::optional<Thresholds> th;
    try {
        th = q_thresholds(m);
    } catch (const HypothesisViolated&) {
    }
    for (const auto& b : branches) {
        const std::string tag = "Q=" + fmt_g(b.Q);
        add_scalar(out.summary, "count_" + tag, static_cast<double>(b.equilibria.size()));
        if (!th)
            continue;
        const double n = static_cast<double>(b.equilibria.size());
        if (b.Q < th->Q1 || b.Q > th->Q4)
            check_range(out.summary, "unique_equilibrium_" + tag, n, 1.0, 1.0);
        else if (th->valid && b.Q > th->Q2 && b.Q < th->Q3)
            check_at_least(out.summary, "three_equilibria_" + tag, n, 3.0);
    }
}

inline void run_longtime(const RunConfig& rc, RunResult& out)
{
    const auto& e = rc.experiment;
    const auto& m = rc.model;
    const LegendreBasis basis = model_basis(m);
    const StationaryBranch br = find_equilibria(m.Q, m, {}, basis, scan_options(rc));
    std::vector<SpectralField> eq;
    for (const auto& q : br.equilibria)
        eq.push_back(q.field);

    LongtimeOptions o;
    o.paths = e.paths;
    o.seed = rc.seed;
    o.sample_every = e.sample_every;
    o.tol = e.distance_tol;
    o.threads = rc.threads;
    const LongtimeResult r = longtime_experiment(m, rc.noise, initial_field(e.initial, basis), eq, basis, o);

    Table series{"longtime", {"path", "t", "distance"}, {}};
    Table terminal{"longtime_terminal", {"path", "terminal_distance", "within_tol", "nearest_u_at_0"}, {}};
    for (std::size_t p = 0; p < r.distances.size(); ++p) {
        for (std::size_t s = 0; s < r.distances[p].size(); ++s)
            series.rows.push_back({static_cast<long long>(p), r.times[s], r.distances[p][s]});
        terminal.rows.push_back({static_cast<long long>(p), r.terminal[p], r.terminal[p] < e.distance_tol,
                                 br.equilibria[static_cast<std::size_t>(r.terminal_nearest[p])].value_at_0});
    }
    Table eqs{"longtime_equilibria", {"index", "u_at_0", "residual"}, {}};
    for (std::size_t i = 0; i < br.equilibria.size(); ++i)
        eqs.rows.push_back({static_cast<long long>(i), br.equilibria[i].value_at_0, br.equilibria[i].residual});
    out.tables.push_back(std::move(series));
    out.tables.push_back(std::move(terminal));
    out.tables.push_back(std::move(eqs));

    std::vector<double> samples = r.terminal;
    const MonteCarloEstimate mean = ebm::detail::summarize(samples, 0.0);
    const double fraction = static_cast<double>(r.within_tol) / e.paths;
    add_mc(out.summary, "mean_terminal_distance", mean);
    out.summary.scalars.emplace_back(
        "fraction_within_tol", Scalar{fraction, std::sqrt(fraction * (1.0 - fraction) / e.paths)});
    add_scalar(out.summary, "equilibria", static_cast<double>(eq.size()));
    check_at_least(out.summary, "fraction_within_tol", fraction, e.required_fraction);
}

inline void run_resolution(const RunConfig& rc, RunResult& out)
{
    const auto& e = rc.experiment;
    const auto& m = rc.model;
    const LegendreBasis basis = model_basis(m);
    const SpectralField u0 = initial_field(e.initial, basis);

    ModelConfig fine_cfg = m;
    fine_cfg.dt = e.dt_ladder.back() / e.reference_refinement;
    fine_cfg.form = SteppingForm::UForm;
    const SamplePath fine = gw_path(rc.noise, fine_cfg.grid(), rc.seed, basis);
    const SolveOptions quiet{1, false, false};
    const Trajectory ref = solve_path(fine_cfg, u0, fine, basis, quiet);

    Table dt_table{"resolution_dt", {"dt", "yu_discrepancy", "self_error", "discrepancy_ratio", "error_ratio"}, {}};
    double prev_d = 0.0, prev_e = 0.0, prev_dt = 0.0;
    for (std::size_t i = 0; i < e.dt_ladder.size(); ++i) {
        const double dt = e.dt_ladder[i];
        const int factor = static_cast<int>(std::llround(dt / fine_cfg.dt));
        const SamplePath path = coarsen(fine, rc.noise, factor, basis);
        ModelConfig cfg = m;
        cfg.dt = dt;
        cfg.form = SteppingForm::UForm;
        const Trajectory tu = solve_path(cfg, u0, path, basis, quiet);
        cfg.form = SteppingForm::YForm;
        const Trajectory ty = solve_path(cfg, u0, path, basis, quiet);
        append_warnings(out.summary, tu.warnings);
        const double d = sup_distance(tu, ty);
        double err = 0.0;
        for (std::size_t k = 0; k < tu.u.size(); ++k)
            err = std::max(err, (tu.u[k] - ref.u[k * static_cast<std::size_t>(factor)]).norm());
        std::vector<Cell> row{dt, d, err};
        if (i == 0) {
            row.emplace_back();
            row.emplace_back();
        } else {
            const double rd = d > 0.0 ? prev_d / d : 0.0;
            const double re = err > 0.0 ? prev_e / err : 0.0;
            row.emplace_back(rd);
            row.emplace_back(re);
            // First order: the error ratio should match the step ratio.
            const double scale = (prev_dt / dt) / 2.0;
            const std::string tag = "dt=" + fmt_g(prev_dt) + "->" + fmt_g(dt);
            check_range(out.summary, "discrepancy_ratio_" + tag, rd, e.ratio_min * scale, e.ratio_max * scale);
            check_range(out.summary, "self_error_ratio_" + tag, re, e.ratio_min * scale, e.ratio_max * scale);
        }
        dt_table.rows.push_back(std::move(row));
        add_scalar(out.summary, "yu_discrepancy_dt=" + fmt_g(dt), d);
        add_scalar(out.summary, "self_error_dt=" + fmt_g(dt), err);
        prev_d = d;
        prev_e = err;
        prev_dt = dt;
    }
    out.tables.push_back(std::move(dt_table));

    Table modes_table{"resolution_modes", {"modes", "max_norm", "terminal_norm", "norm_change"}, {}};
    std::vector<double> prev_norms;
    for (std::size_t i = 0; i < e.modes_ladder.size(); ++i) {
        const int n = e.modes_ladder[i];
        ModelConfig cfg = m;
        cfg.modes = n;
        cfg.quad_order = 2 * n;
        const LegendreBasis b(n, 2 * n);
        const SamplePath path = gw_path(rc.noise, cfg.grid(), rc.seed, b);
        const Trajectory traj = solve_path(cfg, initial_field(e.initial, b), path, b, quiet);
        std::vector<double> norms;
        for (const auto& u : traj.u)
            norms.push_back(u.norm());
        std::vector<Cell> row{static_cast<long long>(n), *std::max_element(norms.begin(), norms.end()), norms.back()};
        if (i == 0) {
            row.emplace_back();
        } else {
            double change = 0.0;
            for (std::size_t k = 0; k < norms.size(); ++k)
                change = std::max(change, std::abs(norms[k] - prev_norms[k]));
            row.emplace_back(change);
            check_below(out.summary, "norm_change_modes=" + std::to_string(e.modes_ladder[i - 1]) + "->" +
                                         std::to_string(n),
                        change, e.modes_tol);
        }
        modes_table.rows.push_back(std::move(row));
        prev_norms = std::move(norms);
    }
    out.tables.push_back(std::move(modes_table));
}

} // namespace detail

/// Runs the configured experiment. Deterministic in (config, seed).
inline RunResult run_experiment(const RunConfig& rc)
{
    RunResult out;
    out.summary.kind = rc.experiment.kind;
    out.summary.seed = rc.seed;
    out.summary.config_hash = config_hash(rc);
    out.summary.config = canonical_json(rc);
    switch (rc.experiment.kind) {
    case ExperimentKind::Simulate: detail::run_simulate(rc, out); break;
    case ExperimentKind::Isometry: detail::run_isometry(rc, out); break;
    case ExperimentKind::Convolution: detail::run_convolution(rc, out); break;
    case ExperimentKind::Compare: detail::run_compare(rc, out); break;
    case ExperimentKind::ConvergeEps: detail::run_converge_eps(rc, out); break;
    case ExperimentKind::ConvergeLambda: detail::run_converge_lambda(rc, out); break;
    case ExperimentKind::Stationary: detail::run_stationary(rc, out); break;
    case ExperimentKind::ScanQ: detail::run_scan_q(rc, out); break;
    case ExperimentKind::Longtime: detail::run_longtime(rc, out); break;
    case ExperimentKind::ResolutionStudy: detail::run_resolution(rc, out); break;
    }
    return out;
}

} // namespace ebm::harness
