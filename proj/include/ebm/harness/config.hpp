#pragma once

// Run configuration: one JSON document with a model block, a noise block, an
// experiment block, the seed and (optionally) the output directory and thread
// count. Every field has a dotted path used in error messages.

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ebm/constitutive.hpp"
#include "ebm/errors.hpp"
#include "ebm/noise.hpp"
#include "ebm/solver.hpp"

namespace ebm::harness {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentKind {
    Simulate,
    Isometry,
    Convolution,
    Compare,
    ConvergeEps,
    ConvergeLambda,
    Stationary,
    ScanQ,
    Longtime,
    ResolutionStudy,
};

inline constexpr std::pair<ExperimentKind, const char*> kKindNames[] = {
    {ExperimentKind::Simulate, "simulate"},
    {ExperimentKind::Isometry, "isometry"},
    {ExperimentKind::Convolution, "convolution"},
    {ExperimentKind::Compare, "compare"},
    {ExperimentKind::ConvergeEps, "converge-eps"},
    {ExperimentKind::ConvergeLambda, "converge-lambda"},
    {ExperimentKind::Stationary, "stationary"},
    {ExperimentKind::ScanQ, "scan-q"},
    {ExperimentKind::Longtime, "longtime"},
    {ExperimentKind::ResolutionStudy, "resolution-study"},
};

inline const char* to_string(ExperimentKind k)
{
    for (const auto& [kind, name] : kKindNames)
        if (kind == k)
            return name;
    return "unknown";
}

/// Accepts the CLI spelling and the underscore variant ("scan_q").
inline std::optional<ExperimentKind> parse_kind(std::string_view s)
{
    std::string norm(s);
    for (char& c : norm)
        if (c == '_')
            c = '-';
    for (const auto& [kind, name] : kKindNames)
        if (norm == name)
            return kind;
    return std::nullopt;
}

/// Parameters of all experiment kinds; each kind reads the fields it needs.
struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::Simulate;
    PolyProfile initial = PolyProfile::constant(-8.0);

    // simulate
    int store_every = 1;
    bool export_increments = false;

    // isometry, convolution, longtime
    int paths = 10000;
    std::vector<double> times{1.0};
    double mc_dt = 1e-2;
    double z_max = 4.0;
    double rel_tol = 0.05;
    double trace_time = 1e3;
    int trace_truncation = 10000;
    double trace_tol = 1e-6;
    std::vector<double> sup_horizons;
    double sup_p = 2.0;

    // compare
    std::optional<PolyProfile> initial_hat;
    double shift = 0.5;
    double forcing_shift = 0.0;
    int random_trials = 0;
    double order_slack = 1e-12;

    // ladders
    std::vector<double> eps_ladder{0.4, 0.2, 0.1, 0.05};
    std::optional<double> final_tol = 1e-2;
    std::vector<double> lambda_ladder{1e-1, 1e-2, 1e-3, 1e-4};
    std::optional<double> exact_tol;

    // stationary, scan-q
    std::vector<double> q_grid{1.0, 4.5, 16.0};
    double residual_tol = 1e-9;
    double dedup_tol = 1e-6;

    // longtime
    int sample_every = 1000;
    double distance_tol = 1e-2;
    double required_fraction = 0.9;

    // resolution-study
    std::vector<double> dt_ladder{2e-3, 1e-3};
    int reference_refinement = 16;
    std::vector<int> modes_ladder{16, 32};
    double ratio_min = 1.7;
    double ratio_max = 2.3;
    double modes_tol = 1e-6;
};

struct RunConfig {
    ModelConfig model;
    NoiseSpec noise = NoiseOff{};
    ExperimentSpec experiment;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    int threads = 1;
};

// ---------------------------------------------------------------------------
// Reading helpers

namespace detail {

inline std::string join(const std::string& path, std::string_view key)
{
    return path.empty() ? std::string(key) : path + "." + std::string(key);
}

inline std::string indexed(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

inline void require_object(const json& v, const std::string& path)
{
    if (!v.is_object())
        throw ValidationError(path.empty() ? "<root>" : path, "expected an object");
}

inline void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed)
{
    for (const auto& item : obj.items()) {
        bool ok = false;
        for (auto a : allowed)
            ok = ok || item.key() == a;
        if (!ok)
            throw ValidationError(join(path, item.key()), "unknown key");
    }
}

inline const json* find(const json& obj, std::string_view key)
{
    const auto it = obj.find(std::string(key));
    return it == obj.end() ? nullptr : &*it;
}

inline double number(const json& v, const std::string& path)
{
    if (!v.is_number())
        throw ValidationError(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x))
        throw ValidationError(path, "must be finite");
    return x;
}

inline double opt_number(const json& obj, std::string_view key, const std::string& path, double fallback)
{
    const json* v = find(obj, key);
    return v ? number(*v, join(path, key)) : fallback;
}

inline long long integer(const json& v, const std::string& path)
{
    if (!v.is_number_integer())
        throw ValidationError(path, "expected an integer");
    return v.get<long long>();
}

inline int opt_int(const json& obj, std::string_view key, const std::string& path, int fallback)
{
    const json* v = find(obj, key);
    return v ? static_cast<int>(integer(*v, join(path, key))) : fallback;
}

inline bool opt_bool(const json& obj, std::string_view key, const std::string& path, bool fallback)
{
    const json* v = find(obj, key);
    if (!v)
        return fallback;
    if (!v->is_boolean())
        throw ValidationError(join(path, key), "expected true or false");
    return v->get<bool>();
}

inline std::string opt_string(const json& obj, std::string_view key, const std::string& path, std::string fallback)
{
    const json* v = find(obj, key);
    if (!v)
        return fallback;
    if (!v->is_string())
        throw ValidationError(join(path, key), "expected a string");
    return v->get<std::string>();
}

inline std::vector<double> numbers(const json& v, const std::string& path)
{
    if (!v.is_array())
        throw ValidationError(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(number(v[i], indexed(path, i)));
    return out;
}

inline std::vector<double> opt_numbers(const json& obj, std::string_view key, const std::string& path,
                                       std::vector<double> fallback)
{
    const json* v = find(obj, key);
    return v ? numbers(*v, join(path, key)) : fallback;
}

inline std::optional<double> opt_nullable(const json& obj, std::string_view key, const std::string& path,
                                          std::optional<double> fallback)
{
    const json* v = find(obj, key);
    if (!v)
        return fallback;
    if (v->is_null())
        return std::nullopt;
    return number(*v, join(path, key));
}

/// A number (constant) or an array of Legendre coefficients a_k of sum a_k P_k.
inline PolyProfile profile(const json& v, const std::string& path)
{
    if (v.is_number())
        return PolyProfile::constant(number(v, path));
    if (v.is_array()) {
        auto c = numbers(v, path);
        if (c.empty())
            throw ValidationError(path, "profile needs at least one coefficient");
        return PolyProfile{std::move(c)};
    }
    throw ValidationError(path, "expected a number or an array of Legendre coefficients");
}

inline std::vector<ForcingKnot> forcing(const json& v, const std::string& path)
{
    if (v.is_array() && !v.empty() && v[0].is_object()) {
        std::vector<ForcingKnot> knots;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const std::string p = indexed(path, i);
            require_object(v[i], p);
            check_keys(v[i], p, {"t", "profile"});
            const json* t = find(v[i], "t");
            const json* prof = find(v[i], "profile");
            if (!t || !prof)
                throw ValidationError(p, "forcing knot needs t and profile");
            knots.push_back({number(*t, join(p, "t")), profile(*prof, join(p, "profile"))});
            if (i > 0 && !(knots[i].t > knots[i - 1].t))
                throw ValidationError(join(p, "t"), "forcing knot times must increase");
        }
        return knots;
    }
    return {ForcingKnot{0.0, profile(v, path)}};
}

inline std::uint64_t seed_value(const json& v, const std::string& path)
{
    if (!v.is_number_integer())
        throw ValidationError(path, "expected a non-negative integer");
    if (v.is_number_unsigned())
        return v.get<std::uint64_t>();
    const long long s = v.get<long long>();
    if (s < 0)
        throw ValidationError(path, "seed must be >= 0");
    return static_cast<std::uint64_t>(s);
}

inline void positive(double x, const std::string& path)
{
    if (!(x > 0.0))
        throw ValidationError(path, "must be > 0");
}

// ---------------------------------------------------------------------------
// Blocks

inline ModelConfig parse_model(const json& m, const std::string& path)
{
    require_object(m, path);
    check_keys(m, path,
               {"Q", "coalbedo", "lambda", "emission", "insolation", "forcing", "modes", "quad_order", "dt",
                "horizon", "form", "nondegeneracy_bands"});
    ModelConfig c;
    c.Q = opt_number(m, "Q", path, c.Q);
    positive(c.Q, join(path, "Q"));

    if (const json* cb = find(m, "coalbedo")) {
        const std::string p = join(path, "coalbedo");
        require_object(*cb, p);
        check_keys(*cb, p, {"type", "m", "M", "u_c", "half_width"});
        const std::string type = opt_string(*cb, "type", p, "sellers");
        const double lo = opt_number(*cb, "m", p, 0.2);
        const double hi = opt_number(*cb, "M", p, 0.8);
        const double uc = opt_number(*cb, "u_c", p, kIceTemperature);
        positive(lo, join(p, "m"));
        if (!(hi > lo))
            throw ValidationError(join(p, "M"), "must exceed m");
        if (type == "sellers") {
            const double hw = opt_number(*cb, "half_width", p, 1.0);
            positive(hw, join(p, "half_width"));
            c.coalbedo = Sellers{lo, hi, uc, hw};
        } else if (type == "budyko") {
            if (find(*cb, "half_width"))
                throw ValidationError(join(p, "half_width"), "only used by the sellers co-albedo");
            c.coalbedo = Budyko{lo, hi, uc};
        } else {
            throw ValidationError(join(p, "type"), "expected \"sellers\" or \"budyko\"");
        }
    }
    c.lambda = opt_number(m, "lambda", path, c.lambda);
    if (is_budyko(c.coalbedo) && !(c.lambda > 0.0))
        throw ValidationError(join(path, "lambda"), "Budyko dynamics need a Yosida parameter lambda > 0");

    if (const json* em = find(m, "emission")) {
        const std::string p = join(path, "emission");
        require_object(*em, p);
        check_keys(*em, p, {"type", "slope", "B", "offset"});
        const std::string type = opt_string(*em, "type", p, "linear");
        if (type == "linear") {
            const double s = opt_number(*em, "slope", p, 1.0);
            if (!(s > 0.0))
                throw ValidationError(join(p, "slope"), "emission law must be strictly increasing");
            c.emission = LinearEmission{s};
        } else if (type == "stefan_linearized") {
            const double B = opt_number(*em, "B", p, 2.1);
            if (!(B > 0.0))
                throw ValidationError(join(p, "B"), "emission law must be strictly increasing");
            c.emission = StefanLinearized{B, opt_number(*em, "offset", p, 203.3)};
        } else {
            throw ValidationError(join(p, "type"), "expected \"linear\" or \"stefan_linearized\"");
        }
    }

    if (const json* s = find(m, "insolation"))
        c.forcing.insolation = profile(*s, join(path, "insolation"));
    if (const json* f = find(m, "forcing"))
        c.forcing.forcing = forcing(*f, join(path, "forcing"));
    if (!(c.forcing.insolation_min() > 0.0))
        throw ValidationError(join(path, "insolation"), "insolation must be bounded below by S0 > 0");

    c.modes = opt_int(m, "modes", path, c.modes);
    if (c.modes < 2)
        throw ValidationError(join(path, "modes"), "need at least 2 modes");
    c.quad_order = opt_int(m, "quad_order", path, 2 * c.modes);
    if (c.quad_order < c.modes + 1)
        throw ValidationError(join(path, "quad_order"), "quadrature order must be >= modes + 1");
    c.dt = opt_number(m, "dt", path, c.dt);
    positive(c.dt, join(path, "dt"));
    c.horizon = opt_number(m, "horizon", path, c.horizon);
    if (c.horizon < 0.0)
        throw ValidationError(join(path, "horizon"), "must be >= 0");
    const std::string form = opt_string(m, "form", path, "u");
    if (form == "u")
        c.form = SteppingForm::UForm;
    else if (form == "y")
        c.form = SteppingForm::YForm;
    else
        throw ValidationError(join(path, "form"), "expected \"u\" or \"y\"");
    c.nondegeneracy_bands = opt_numbers(m, "nondegeneracy_bands", path, c.nondegeneracy_bands);
    for (std::size_t i = 0; i < c.nondegeneracy_bands.size(); ++i)
        positive(c.nondegeneracy_bands[i], indexed(join(path, "nondegeneracy_bands"), i));

    try {
        c.validate();
    } catch (const Error& e) {
        throw ValidationError(path, e.what());
    }
    return c;
}

inline Modulation parse_psi(const json& v, const std::string& path)
{
    require_object(v, path);
    check_keys(v, path, {"type", "c", "a", "alpha"});
    const std::string type = opt_string(v, "type", path, "constant");
    if (type == "constant")
        return ConstantModulation{opt_number(v, "c", path, 1.0)};
    if (type == "power_decay") {
        const double a = opt_number(v, "a", path, 1.0);
        const double alpha = opt_number(v, "alpha", path, 1.0);
        positive(a, join(path, "a"));
        if (!(2.0 * alpha > 1.0))
            throw ValidationError(join(path, "alpha"), "power decay psi(t) = (a + t)^(-alpha) is only admissible "
                                                       "with 2α>1 (2*alpha > 1), got alpha = " +
                                                           std::to_string(alpha));
        return PowerDecay{a, alpha};
    }
    throw ValidationError(join(path, "type"), "expected \"constant\" or \"power_decay\"");
}

inline NoiseSpec parse_noise(const json& v, const std::string& path, int modes)
{
    require_object(v, path);
    const std::string type = opt_string(v, "type", path, "off");
    if (type == "off") {
        check_keys(v, path, {"type"});
        return NoiseOff{};
    }
    if (type == "finite_dim") {
        check_keys(v, path, {"type", "directions"});
        const json* d = find(v, "directions");
        if (!d || !d->is_array() || d->empty())
            throw ValidationError(join(path, "directions"), "expected a non-empty array of profiles");
        FiniteDimNoise f;
        for (std::size_t i = 0; i < d->size(); ++i)
            f.directions.push_back(profile((*d)[i], indexed(join(path, "directions"), i)));
        return f;
    }
    if (type == "cylindrical") {
        check_keys(v, path, {"type", "truncation", "smoothing", "gains", "psi"});
        CylindricalNoise c;
        c.truncation = opt_int(v, "truncation", path, c.truncation);
        if (c.truncation < 1)
            throw ValidationError(join(path, "truncation"), "must be >= 1");
        if (c.truncation > modes - 1)
            throw ValidationError(join(path, "truncation"), "exceeds the basis: need truncation <= modes - 1 = " +
                                                                std::to_string(modes - 1));
        c.smoothing = opt_number(v, "smoothing", path, 0.0);
        if (c.smoothing < 0.0)
            throw ValidationError(join(path, "smoothing"), "must be >= 0");
        c.gains = opt_numbers(v, "gains", path, {});
        if (!c.gains.empty() && static_cast<int>(c.gains.size()) != c.truncation)
            throw ValidationError(join(path, "gains"), "need one gain per retained mode");
        for (std::size_t i = 0; i < c.gains.size(); ++i)
            if (c.gains[i] < 0.0)
                throw ValidationError(indexed(join(path, "gains"), i), "must be >= 0");
        if (const json* psi = find(v, "psi"))
            c.psi = parse_psi(*psi, join(path, "psi"));
        return c;
    }
    throw ValidationError(join(path, "type"), "expected \"off\", \"finite_dim\" or \"cylindrical\"");
}

inline void check_ladder(const std::vector<double>& v, const std::string& path, bool strictly_decreasing)
{
    if (v.empty())
        throw ValidationError(path, "ladder must not be empty");
    for (std::size_t i = 0; i < v.size(); ++i) {
        positive(v[i], indexed(path, i));
        if (strictly_decreasing && i > 0 && !(v[i] < v[i - 1]))
            throw ValidationError(indexed(path, i), "ladder must be strictly decreasing");
    }
}

inline ExperimentSpec parse_experiment(const json& v, const std::string& path, ExperimentKind kind,
                                       const ModelConfig& model)
{
    require_object(v, path);
    check_keys(v, path,
               {"kind", "initial", "store_every", "export_increments", "paths", "times", "mc_dt", "z_max", "rel_tol",
                "trace_time", "trace_truncation", "trace_tol", "sup_horizons", "sup_p", "initial_hat", "shift",
                "forcing_shift", "random_trials", "order_slack", "eps_ladder", "final_tol", "lambda_ladder",
                "exact_tol", "q_grid", "residual_tol", "dedup_tol", "sample_every", "distance_tol",
                "required_fraction", "dt_ladder", "reference_refinement", "modes_ladder", "ratio_min", "ratio_max",
                "modes_tol"});
    ExperimentSpec e;
    e.kind = kind;
    if (const json* k = find(v, "kind")) {
        if (!k->is_string())
            throw ValidationError(join(path, "kind"), "expected a string");
        const auto parsed = parse_kind(k->get<std::string>());
        if (!parsed)
            throw ValidationError(join(path, "kind"), "unknown experiment kind \"" + k->get<std::string>() + "\"");
        if (*parsed != kind)
            throw ValidationError(join(path, "kind"), std::string("config describes \"") + to_string(*parsed) +
                                                          "\" but \"" + to_string(kind) + "\" was requested");
    }
    if (const json* u = find(v, "initial"))
        e.initial = profile(*u, join(path, "initial"));

    e.store_every = opt_int(v, "store_every", path, e.store_every);
    if (e.store_every < 1)
        throw ValidationError(join(path, "store_every"), "must be >= 1");
    e.export_increments = opt_bool(v, "export_increments", path, e.export_increments);

    const int default_paths = kind == ExperimentKind::Longtime ? 100 : e.paths;
    e.paths = opt_int(v, "paths", path, default_paths);
    const int min_paths = (kind == ExperimentKind::Isometry || kind == ExperimentKind::Convolution) ? 100 : 1;
    if (e.paths < min_paths)
        throw ValidationError(join(path, "paths"), "need at least " + std::to_string(min_paths) + " paths");
    e.times = opt_numbers(v, "times", path, e.times);
    check_ladder(e.times, join(path, "times"), false);
    e.mc_dt = opt_number(v, "mc_dt", path, e.mc_dt);
    positive(e.mc_dt, join(path, "mc_dt"));
    e.z_max = opt_number(v, "z_max", path, e.z_max);
    positive(e.z_max, join(path, "z_max"));
    e.rel_tol = opt_number(v, "rel_tol", path, e.rel_tol);
    positive(e.rel_tol, join(path, "rel_tol"));
    e.trace_time = opt_number(v, "trace_time", path, e.trace_time);
    if (e.trace_time < 0.0)
        throw ValidationError(join(path, "trace_time"), "must be >= 0");
    e.trace_truncation = opt_int(v, "trace_truncation", path, e.trace_truncation);
    if (e.trace_truncation < 1)
        throw ValidationError(join(path, "trace_truncation"), "must be >= 1");
    e.trace_tol = opt_number(v, "trace_tol", path, e.trace_tol);
    positive(e.trace_tol, join(path, "trace_tol"));
    e.sup_horizons = opt_numbers(v, "sup_horizons", path, e.sup_horizons);
    for (std::size_t i = 0; i < e.sup_horizons.size(); ++i)
        positive(e.sup_horizons[i], indexed(join(path, "sup_horizons"), i));
    e.sup_p = opt_number(v, "sup_p", path, e.sup_p);
    if (!(e.sup_p >= 1.0))
        throw ValidationError(join(path, "sup_p"), "must be >= 1");

    if (const json* u = find(v, "initial_hat"))
        e.initial_hat = profile(*u, join(path, "initial_hat"));
    e.shift = opt_number(v, "shift", path, e.shift);
    e.forcing_shift = opt_number(v, "forcing_shift", path, e.forcing_shift);
    e.random_trials = opt_int(v, "random_trials", path, e.random_trials);
    if (e.random_trials < 0)
        throw ValidationError(join(path, "random_trials"), "must be >= 0");
    e.order_slack = opt_number(v, "order_slack", path, e.order_slack);
    if (e.order_slack < 0.0)
        throw ValidationError(join(path, "order_slack"), "must be >= 0");
    if (kind == ExperimentKind::Compare && is_budyko(model.coalbedo))
        throw ValidationError("model.coalbedo.type", "the comparison experiment needs the sellers co-albedo");

    e.eps_ladder = opt_numbers(v, "eps_ladder", path, e.eps_ladder);
    check_ladder(e.eps_ladder, join(path, "eps_ladder"), false);
    e.final_tol = opt_nullable(v, "final_tol", path, e.final_tol);
    e.lambda_ladder = opt_numbers(v, "lambda_ladder", path, e.lambda_ladder);
    check_ladder(e.lambda_ladder, join(path, "lambda_ladder"), true);
    e.exact_tol = opt_nullable(v, "exact_tol", path, e.exact_tol);
    if (kind == ExperimentKind::ConvergeLambda && !is_budyko(model.coalbedo))
        throw ValidationError("model.coalbedo.type", "the lambda ladder needs the budyko co-albedo");

    e.q_grid = opt_numbers(v, "q_grid", path, e.q_grid);
    check_ladder(e.q_grid, join(path, "q_grid"), false);
    for (std::size_t i = 1; i < e.q_grid.size(); ++i)
        if (!(e.q_grid[i] > e.q_grid[i - 1]))
            throw ValidationError(indexed(join(path, "q_grid"), i), "Q grid must be strictly increasing");
    e.residual_tol = opt_number(v, "residual_tol", path, e.residual_tol);
    positive(e.residual_tol, join(path, "residual_tol"));
    e.dedup_tol = opt_number(v, "dedup_tol", path, e.dedup_tol);
    positive(e.dedup_tol, join(path, "dedup_tol"));

    e.sample_every = opt_int(v, "sample_every", path, e.sample_every);
    if (e.sample_every < 1)
        throw ValidationError(join(path, "sample_every"), "must be >= 1");
    e.distance_tol = opt_number(v, "distance_tol", path, e.distance_tol);
    positive(e.distance_tol, join(path, "distance_tol"));
    e.required_fraction = opt_number(v, "required_fraction", path, e.required_fraction);
    if (!(e.required_fraction >= 0.0 && e.required_fraction <= 1.0))
        throw ValidationError(join(path, "required_fraction"), "must lie in [0, 1]");

    e.dt_ladder = opt_numbers(v, "dt_ladder", path, e.dt_ladder);
    check_ladder(e.dt_ladder, join(path, "dt_ladder"), true);
    e.reference_refinement = opt_int(v, "reference_refinement", path, e.reference_refinement);
    if (e.reference_refinement < 2)
        throw ValidationError(join(path, "reference_refinement"), "must be >= 2");
    const double dt_ref = e.dt_ladder.back() / e.reference_refinement;
    for (std::size_t i = 0; i < e.dt_ladder.size(); ++i) {
        const double r = e.dt_ladder[i] / dt_ref;
        if (std::abs(r - std::round(r)) > 1e-9 * r)
            throw ValidationError(indexed(join(path, "dt_ladder"), i),
                                  "every step must be an integer multiple of the reference step");
    }
    if (const json* ml = find(v, "modes_ladder")) {
        const std::string p = join(path, "modes_ladder");
        if (!ml->is_array() || ml->empty())
            throw ValidationError(p, "expected a non-empty array of integers");
        e.modes_ladder.clear();
        for (std::size_t i = 0; i < ml->size(); ++i) {
            const long long n = integer((*ml)[i], indexed(p, i));
            if (n < 2 || (i > 0 && n <= e.modes_ladder.back()))
                throw ValidationError(indexed(p, i), "mode counts must be >= 2 and increasing");
            e.modes_ladder.push_back(static_cast<int>(n));
        }
    }
    e.ratio_min = opt_number(v, "ratio_min", path, e.ratio_min);
    e.ratio_max = opt_number(v, "ratio_max", path, e.ratio_max);
    if (!(e.ratio_min > 0.0 && e.ratio_max >= e.ratio_min))
        throw ValidationError(join(path, "ratio_max"), "need 0 < ratio_min <= ratio_max");
    e.modes_tol = opt_number(v, "modes_tol", path, e.modes_tol);
    positive(e.modes_tol, join(path, "modes_tol"));
    return e;
}

} // namespace detail

/// Parses and validates a run configuration. The experiment kind comes from
/// `kind` (the CLI subcommand) or else from experiment.kind, defaulting to
/// simulate; the seed from `seed_override` or else the document.
inline RunConfig parse_config(std::string_view text, std::optional<ExperimentKind> requested = std::nullopt,
                              std::optional<std::uint64_t> seed_override = std::nullopt)
{
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ParseError("<root>", e.what());
    }
    detail::require_object(doc, "");
    detail::check_keys(doc, "", {"seed", "output_dir", "threads", "model", "noise", "experiment"});

    ExperimentKind kind = ExperimentKind::Simulate;
    if (requested) {
        kind = *requested;
    } else if (const json* ex = detail::find(doc, "experiment"); ex && ex->is_object()) {
        if (const json* k = detail::find(*ex, "kind"); k && k->is_string()) {
            const auto parsed = parse_kind(k->get<std::string>());
            if (!parsed)
                throw ValidationError("experiment.kind", "unknown experiment kind \"" + k->get<std::string>() + "\"");
            kind = *parsed;
        }
    }

    RunConfig rc;
    if (const json* m = detail::find(doc, "model"))
        rc.model = detail::parse_model(*m, "model");
    if (const json* n = detail::find(doc, "noise"))
        rc.noise = detail::parse_noise(*n, "noise", rc.model.modes);
    static const json empty = json::object();
    const json* ex = detail::find(doc, "experiment");
    rc.experiment = detail::parse_experiment(ex ? *ex : empty, "experiment", kind, rc.model);

    if (seed_override) {
        rc.seed = *seed_override;
    } else if (const json* s = detail::find(doc, "seed")) {
        rc.seed = detail::seed_value(*s, "seed");
    } else {
        throw ValidationError("seed", "a seed is required (in the config or via --seed)");
    }
    rc.output_dir = detail::opt_string(doc, "output_dir", "", rc.output_dir);
    rc.threads = detail::opt_int(doc, "threads", "", rc.threads);
    if (rc.threads < 1)
        throw ValidationError("threads", "must be >= 1");

    const bool needs_cylindrical = kind == ExperimentKind::Isometry || kind == ExperimentKind::Convolution;
    if (needs_cylindrical && !std::holds_alternative<CylindricalNoise>(rc.noise))
        throw ValidationError("noise.type", std::string(to_string(kind)) + " needs cylindrical noise");
    if (kind == ExperimentKind::Convolution) {
        const auto& c = std::get<CylindricalNoise>(rc.noise);
        if (!std::holds_alternative<ConstantModulation>(c.psi))
            throw ValidationError("noise.psi.type", "the convolution check needs a constant modulation");
    }
    if (kind == ExperimentKind::ResolutionStudy) {
        const int smallest = rc.experiment.modes_ladder.front();
        if (driver_count(rc.noise) > smallest - 1 && std::holds_alternative<CylindricalNoise>(rc.noise))
            throw ValidationError("noise.truncation", "exceeds the smallest basis of the modes ladder");
    }
    return rc;
}

inline RunConfig parse_config(std::string_view text, std::string_view kind,
                              std::optional<std::uint64_t> seed_override = std::nullopt)
{
    const auto k = parse_kind(kind);
    if (!k)
        throw ValidationError("experiment.kind", "unknown experiment kind \"" + std::string(kind) + "\"");
    return parse_config(text, std::optional<ExperimentKind>(*k), seed_override);
}

// ---------------------------------------------------------------------------
// Canonical form

inline json to_json(const PolyProfile& p)
{
    if (p.p_coeffs.size() == 1)
        return p.p_coeffs[0];
    return json(p.p_coeffs);
}

inline json to_json(const ModelConfig& c)
{
    json m;
    m["Q"] = c.Q;
    if (const auto* s = std::get_if<Sellers>(&c.coalbedo))
        m["coalbedo"] = {{"type", "sellers"}, {"m", s->m}, {"M", s->M}, {"u_c", s->u_c}, {"half_width", s->half_width}};
    else {
        const auto& b = std::get<Budyko>(c.coalbedo);
        m["coalbedo"] = {{"type", "budyko"}, {"m", b.m}, {"M", b.M}, {"u_c", b.u_c}};
    }
    m["lambda"] = c.lambda;
    if (const auto* l = std::get_if<LinearEmission>(&c.emission))
        m["emission"] = {{"type", "linear"}, {"slope", l->slope}};
    else {
        const auto& s = std::get<StefanLinearized>(c.emission);
        m["emission"] = {{"type", "stefan_linearized"}, {"B", s.B}, {"offset", s.offset}};
    }
    m["insolation"] = to_json(c.forcing.insolation);
    json knots = json::array();
    for (const auto& k : c.forcing.forcing)
        knots.push_back({{"t", k.t}, {"profile", to_json(k.profile)}});
    m["forcing"] = knots;
    m["modes"] = c.modes;
    m["quad_order"] = c.quad_order;
    m["dt"] = c.dt;
    m["horizon"] = c.horizon;
    m["form"] = c.form == SteppingForm::UForm ? "u" : "y";
    m["nondegeneracy_bands"] = c.nondegeneracy_bands;
    return m;
}

inline json to_json(const NoiseSpec& n)
{
    if (std::holds_alternative<NoiseOff>(n))
        return {{"type", "off"}};
    if (const auto* f = std::get_if<FiniteDimNoise>(&n)) {
        json d = json::array();
        for (const auto& p : f->directions)
            d.push_back(to_json(p));
        return {{"type", "finite_dim"}, {"directions", d}};
    }
    const auto& c = std::get<CylindricalNoise>(n);
    json j{{"type", "cylindrical"}, {"truncation", c.truncation}, {"smoothing", c.smoothing}, {"gains", c.gains}};
    if (const auto* k = std::get_if<ConstantModulation>(&c.psi))
        j["psi"] = {{"type", "constant"}, {"c", k->c}};
    else {
        const auto& p = std::get<PowerDecay>(c.psi);
        j["psi"] = {{"type", "power_decay"}, {"a", p.a}, {"alpha", p.alpha}};
    }
    return j;
}

inline json to_json(const ExperimentSpec& e)
{
    json j;
    j["kind"] = to_string(e.kind);
    j["initial"] = to_json(e.initial);
    j["store_every"] = e.store_every;
    j["export_increments"] = e.export_increments;
    j["paths"] = e.paths;
    j["times"] = e.times;
    j["mc_dt"] = e.mc_dt;
    j["z_max"] = e.z_max;
    j["rel_tol"] = e.rel_tol;
    j["trace_time"] = e.trace_time;
    j["trace_truncation"] = e.trace_truncation;
    j["trace_tol"] = e.trace_tol;
    j["sup_horizons"] = e.sup_horizons;
    j["sup_p"] = e.sup_p;
    j["initial_hat"] = e.initial_hat ? to_json(*e.initial_hat) : json(nullptr);
    j["shift"] = e.shift;
    j["forcing_shift"] = e.forcing_shift;
    j["random_trials"] = e.random_trials;
    j["order_slack"] = e.order_slack;
    j["eps_ladder"] = e.eps_ladder;
    j["final_tol"] = e.final_tol ? json(*e.final_tol) : json(nullptr);
    j["lambda_ladder"] = e.lambda_ladder;
    j["exact_tol"] = e.exact_tol ? json(*e.exact_tol) : json(nullptr);
    j["q_grid"] = e.q_grid;
    j["residual_tol"] = e.residual_tol;
    j["dedup_tol"] = e.dedup_tol;
    j["sample_every"] = e.sample_every;
    j["distance_tol"] = e.distance_tol;
    j["required_fraction"] = e.required_fraction;
    j["dt_ladder"] = e.dt_ladder;
    j["reference_refinement"] = e.reference_refinement;
    j["modes_ladder"] = e.modes_ladder;
    j["ratio_min"] = e.ratio_min;
    j["ratio_max"] = e.ratio_max;
    j["modes_tol"] = e.modes_tol;
    return j;
}

/// The effective configuration, defaults filled in. Seed, output directory and
/// thread count are left out so the hash only tracks what changes results
/// besides the seed.
inline json canonical_json(const RunConfig& rc)
{
    return {{"model", to_json(rc.model)}, {"noise", to_json(rc.noise)}, {"experiment", to_json(rc.experiment)}};
}

/// FNV-1a 64 of the canonical JSON text, as 16 hex digits.
inline std::string config_hash(const RunConfig& rc)
{
    const std::string text = canonical_json(rc).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4)
        out[static_cast<std::size_t>(i)] = hex[h & 0xf];
    return out;
}

} // namespace ebm::harness
