#pragma once

// Brownian increments, the stochastic integral (G.W)_t in spectral coordinates,
// the stochastic convolution W^{A,G}_t and Monte Carlo checks of the Wiener
// isometries.
//
// Cylindrical noise drives modes n = 1..N_w (never n = 0, where mu_0 = 0):
//   (G.W)_t = sum_n int_0^t psi(s) gamma_n / sqrt(mu_n) dB^n_s e_n.
//
// Randomness is counter based: the normal draw for (seed, path, stream, step)
// is a pure function of those four integers, so paths can be generated in any
// order, on any thread, and with any truncation without changing each other.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "ebm/constitutive.hpp"
#include "ebm/errors.hpp"
#include "ebm/legendre.hpp"
#include "ebm/parallel.hpp"

namespace ebm {

// ---------------------------------------------------------------------------
// Random numbers

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Key of one scalar Brownian motion.
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t path, std::uint64_t stream)
{
    return splitmix64(splitmix64(splitmix64(seed) ^ path) ^ (stream * kGolden));
}

/// Standard normal number `step` of the stream with the given key (Box-Muller, cosine branch).
inline double standard_normal(std::uint64_t key, std::uint64_t step)
{
    const std::uint64_t a = splitmix64(key + (2 * step) * kGolden);
    const std::uint64_t b = splitmix64(key + (2 * step + 1) * kGolden);
    const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53; // (0, 1]
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;         // [0, 1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// ---------------------------------------------------------------------------
// Noise description

struct ConstantModulation {
    double c = 1.0;
};

/// psi(t) = (t + 1/a)^(-alpha), square integrable on (0, inf) iff 2 alpha > 1.
struct PowerDecay {
    double a = 1.0;
    double alpha = 1.0;
};

using Modulation = std::variant<ConstantModulation, PowerDecay>;

inline double modulation_eval(const Modulation& psi, double t)
{
    if (const auto* c = std::get_if<ConstantModulation>(&psi))
        return c->c;
    const auto& p = std::get<PowerDecay>(psi);
    return std::pow(t + 1.0 / p.a, -p.alpha);
}

/// int_0^t psi(s)^2 ds; t = +inf allowed for PowerDecay.
inline double modulation_energy(const Modulation& psi, double t)
{
    if (const auto* c = std::get_if<ConstantModulation>(&psi))
        return c->c * c->c * t;
    const auto& p = std::get<PowerDecay>(psi);
    const double e = 2.0 * p.alpha - 1.0;
    const double head = std::pow(1.0 / p.a, -e);
    const double tail = std::isinf(t) ? 0.0 : std::pow(t + 1.0 / p.a, -e);
    return (head - tail) / e;
}

struct NoiseOff {};

/// Finitely many Brownian motions with fixed spatial profiles Phi_k.
struct FiniteDimNoise {
    std::vector<PolyProfile> directions;
};

struct CylindricalNoise {
    int truncation = 16; // modes n = 1..truncation
    double smoothing = 0.0; // gamma_n = mu_n^(-smoothing) unless `gains` is given
    std::vector<double> gains; // optional explicit gamma_1..gamma_truncation
    Modulation psi = ConstantModulation{};

    double gain(int n) const
    {
        if (!gains.empty())
            return gains.at(static_cast<std::size_t>(n - 1));
        const double mu = static_cast<double>(n) * (n + 1.0);
        return smoothing == 0.0 ? 1.0 : std::pow(mu, -smoothing);
    }

    /// Per-mode diffusion coefficient gamma_n / sqrt(mu_n), without psi.
    double amplitude(int n) const { return gain(n) / std::sqrt(static_cast<double>(n) * (n + 1.0)); }
};

using NoiseSpec = std::variant<NoiseOff, FiniteDimNoise, CylindricalNoise>;

inline void validate(const NoiseSpec& noise)
{
    if (const auto* c = std::get_if<CylindricalNoise>(&noise)) {
        if (c->truncation < 1)
            throw InvalidArgument("cylindrical truncation must be >= 1");
        if (!c->gains.empty() && static_cast<int>(c->gains.size()) != c->truncation)
            throw InvalidArgument("explicit gains must list one value per retained mode");
        for (double g : c->gains)
            if (g < 0.0)
                throw InvalidArgument("gains must be >= 0");
        if (const auto* p = std::get_if<PowerDecay>(&c->psi)) {
            if (!(p->a > 0.0))
                throw InvalidArgument("power decay needs a > 0");
            if (!(2.0 * p->alpha > 1.0))
                throw InvalidArgument("power decay needs 2 alpha > 1");
        }
    }
}

inline int driver_count(const NoiseSpec& noise)
{
    if (const auto* c = std::get_if<CylindricalNoise>(&noise))
        return c->truncation;
    if (const auto* f = std::get_if<FiniteDimNoise>(&noise))
        return static_cast<int>(f->directions.size());
    return 0;
}

/// Stream id of driver j: the physical mode n = j + 1 for cylindrical noise, so the
/// increments of mode n do not depend on the truncation.
inline std::uint64_t first_stream(const NoiseSpec& noise)
{
    return std::holds_alternative<CylindricalNoise>(noise) ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Paths

struct TimeGrid {
    double dt = 1e-3;
    int steps = 0;

    double t(int k) const { return k * dt; }
    double horizon() const { return steps * dt; }

    static TimeGrid covering(double horizon, double dt)
    {
        if (!(dt > 0.0))
            throw InvalidArgument("time step must be > 0");
        if (horizon < 0.0)
            throw InvalidArgument("horizon must be >= 0");
        return TimeGrid{dt, static_cast<int>(std::llround(horizon / dt))};
    }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

/// steps x streams matrix of i.i.d. Normal(0, dt) increments.
inline Eigen::MatrixXd sample_increments(std::uint64_t seed, double dt, int steps, int streams,
                                         std::uint64_t path_index = 0, std::uint64_t stream_offset = 0)
{
    if (!(dt > 0.0))
        throw InvalidArgument("time step must be > 0");
    if (steps < 1)
        throw InvalidArgument("need at least one step");
    Eigen::MatrixXd inc(steps, streams);
    const double sd = std::sqrt(dt);
    for (int j = 0; j < streams; ++j) {
        const std::uint64_t key = stream_key(seed, path_index, stream_offset + static_cast<std::uint64_t>(j));
        for (int k = 0; k < steps; ++k)
            inc(k, j) = sd * standard_normal(key, static_cast<std::uint64_t>(k));
    }
    return inc;
}

struct SamplePath {
    std::uint64_t seed = 0;
    std::uint64_t path_index = 0;
    TimeGrid grid;
    Eigen::MatrixXd increments;  // steps x drivers
    std::vector<SpectralField> z; // (G.W)_{t_k}, k = 0..steps
};

/// Builds (G.W)_{t_k} from given increments (left-point Ito sums).
inline SamplePath assemble_path(const NoiseSpec& noise, const TimeGrid& grid, Eigen::MatrixXd increments,
                                const LegendreBasis& basis, std::uint64_t seed = 0, std::uint64_t path_index = 0)
{
    validate(noise);
    const int modes = basis.size();
    if (const auto* c = std::get_if<CylindricalNoise>(&noise); c && c->truncation > modes - 1)
        throw ModeOverflow("cylindrical truncation " + std::to_string(c->truncation) + " needs at least " +
                           std::to_string(c->truncation + 1) + " basis modes, have " + std::to_string(modes));

    SamplePath path{seed, path_index, grid, std::move(increments), {}};
    path.z.assign(static_cast<std::size_t>(grid.steps) + 1, SpectralField(modes));
    if (std::holds_alternative<NoiseOff>(noise) || grid.steps == 0)
        return path;
    if (path.increments.rows() != grid.steps || path.increments.cols() != driver_count(noise))
        throw DimensionMismatch("increment matrix does not match grid/drivers");

    if (const auto* c = std::get_if<CylindricalNoise>(&noise)) {
        Eigen::VectorXd amp(c->truncation);
        for (int n = 1; n <= c->truncation; ++n)
            amp(n - 1) = c->amplitude(n);
        for (int k = 0; k < grid.steps; ++k) {
            const double psi = modulation_eval(c->psi, grid.t(k));
            path.z[k + 1] = path.z[k];
            path.z[k + 1].coeffs().segment(1, c->truncation) +=
                psi * amp.cwiseProduct(path.increments.row(k).transpose());
        }
        return path;
    }

    const auto& f = std::get<FiniteDimNoise>(noise);
    std::vector<SpectralField> dirs;
    for (const auto& d : f.directions)
        dirs.push_back(to_spectral(d.nodal(basis), basis));
    for (int k = 0; k < grid.steps; ++k) {
        path.z[k + 1] = path.z[k];
        for (std::size_t i = 0; i < dirs.size(); ++i)
            path.z[k + 1] += path.increments(k, static_cast<Eigen::Index>(i)) * dirs[i];
    }
    return path;
}

inline SamplePath gw_path(const NoiseSpec& noise, const TimeGrid& grid, std::uint64_t seed,
                          const LegendreBasis& basis, std::uint64_t path_index = 0)
{
    const int drivers = driver_count(noise);
    Eigen::MatrixXd inc = (drivers > 0 && grid.steps > 0)
                              ? sample_increments(seed, grid.dt, grid.steps, drivers, path_index, first_stream(noise))
                              : Eigen::MatrixXd(grid.steps, drivers);
    return assemble_path(noise, grid, std::move(inc), basis, seed, path_index);
}

/// Same Brownian path on a grid `factor` times coarser (block sums of increments).
inline SamplePath coarsen(const SamplePath& fine, const NoiseSpec& noise, int factor, const LegendreBasis& basis)
{
    if (factor < 1 || fine.grid.steps % factor != 0)
        throw GridMismatch("coarsening factor must divide the step count");
    const TimeGrid grid{fine.grid.dt * factor, fine.grid.steps / factor};
    Eigen::MatrixXd inc = Eigen::MatrixXd::Zero(grid.steps, fine.increments.cols());
    for (int k = 0; k < fine.grid.steps; ++k)
        inc.row(k / factor) += fine.increments.row(k);
    return assemble_path(noise, grid, std::move(inc), basis, fine.seed, fine.path_index);
}

/// The path of eps * G: increments and (G.W) scaled by eps.
inline SamplePath scaled(SamplePath path, double eps)
{
    path.increments *= eps;
    for (auto& zk : path.z)
        zk *= eps;
    return path;
}

// ---------------------------------------------------------------------------
// Isometries

/// sum_{n=1}^{N_w} gamma_n^2 / mu_n (squared Hilbert-Schmidt norm of G J).
inline double hilbert_schmidt_sq(const CylindricalNoise& noise)
{
    double s = 0.0;
    for (int n = noise.truncation; n >= 1; --n) {
        const double a = noise.amplitude(n);
        s += a * a;
    }
    return s;
}

/// E ||(G.W)_t||^2 = int_0^t psi^2 ds * sum gamma_n^2 / mu_n.
inline double isometry_target(const CylindricalNoise& noise, double t)
{
    return modulation_energy(noise.psi, t) * hilbert_schmidt_sq(noise);
}

struct MonteCarloEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    double target = 0.0;
    double rel_err = 0.0;
    int paths = 0;

    /// |mean - target| in units of the standard error.
    double z_score() const { return std_error > 0.0 ? std::abs(mean - target) / std_error : 0.0; }
};

namespace detail {
inline MonteCarloEstimate summarize(const std::vector<double>& samples, double target)
{
    MonteCarloEstimate est;
    est.paths = static_cast<int>(samples.size());
    double sum = 0.0;
    for (double s : samples)
        sum += s;
    est.mean = sum / est.paths;
    double ss = 0.0;
    for (double s : samples)
        ss += (s - est.mean) * (s - est.mean);
    est.std_error = est.paths > 1 ? std::sqrt(ss / (est.paths - 1) / est.paths) : 0.0;
    est.target = target;
    est.rel_err = target != 0.0 ? std::abs(est.mean - target) / std::abs(target) : std::abs(est.mean);
    return est;
}

inline const CylindricalNoise& require_cylindrical(const NoiseSpec& noise)
{
    const auto* c = std::get_if<CylindricalNoise>(&noise);
    if (c == nullptr)
        throw WrongVariant("operation needs cylindrical noise");
    return *c;
}
} // namespace detail

/// Monte Carlo estimate of E||(G.W)_t||^2 on a grid of step dt, against the
/// continuous-time target.
inline MonteCarloEstimate isometry_estimate(const NoiseSpec& noise, double t, int paths, std::uint64_t seed,
                                            double dt = 1e-2, int threads = 1)
{
    if (paths < 100)
        throw InvalidArgument("isometry_estimate needs at least 100 paths");
    const auto& c = detail::require_cylindrical(noise);
    validate(noise);
    const TimeGrid grid = TimeGrid::covering(t, std::min(dt, t));
    std::vector<double> psi(static_cast<std::size_t>(grid.steps));
    for (int k = 0; k < grid.steps; ++k)
        psi[k] = modulation_eval(c.psi, grid.t(k));

    std::vector<double> samples(static_cast<std::size_t>(paths));
    const double sd = std::sqrt(grid.dt);
    parallel_for(samples.size(), threads, [&](std::size_t p) {
        double norm_sq = 0.0;
        for (int n = 1; n <= c.truncation; ++n) {
            const std::uint64_t key = stream_key(seed, p, static_cast<std::uint64_t>(n));
            double acc = 0.0;
            for (int k = 0; k < grid.steps; ++k)
                acc += psi[k] * sd * standard_normal(key, static_cast<std::uint64_t>(k));
            const double zn = c.amplitude(n) * acc;
            norm_sq += zn * zn;
        }
        samples[p] = norm_sq;
    });
    return detail::summarize(samples, isometry_target(c, t));
}

/// 1/2 sum_{n=1}^{N_w} gamma_n^2 (1 - exp(-2 t mu_n)) / mu_n^2, i.e. E||W^{A,G}_t||^2.
inline double convolution_trace(double t, int truncation, const std::vector<double>& gains = {})
{
    if (t < 0.0)
        throw NegativeTime("trace time must be >= 0");
    double s = 0.0;
    for (int n = truncation; n >= 1; --n) {
        const double mu = static_cast<double>(n) * (n + 1.0);
        const double g = gains.empty() ? 1.0 : gains.at(static_cast<std::size_t>(n - 1));
        s += g * g * (-std::expm1(-2.0 * t * mu)) / (mu * mu);
    }
    return 0.5 * s;
}

inline double convolution_trace(double t, const CylindricalNoise& noise)
{
    std::vector<double> gains(static_cast<std::size_t>(noise.truncation));
    const double c = std::get<ConstantModulation>(noise.psi).c;
    for (int n = 1; n <= noise.truncation; ++n)
        gains[n - 1] = c * noise.gain(n);
    return convolution_trace(t, noise.truncation, gains);
}

/// W^{A,G}_{t_k} by the exact per-mode Ornstein-Uhlenbeck update
///   x_{k+1} = e^{-mu dt} x_k + amp sqrt((1 - e^{-2 mu dt}) / (2 mu)) xi_k,
/// with xi_k = dB_k / sqrt(dt) taken from the same streams as gw_path.
inline std::vector<SpectralField> stochastic_convolution(const NoiseSpec& noise, const TimeGrid& grid,
                                                         std::uint64_t seed, const LegendreBasis& basis,
                                                         std::uint64_t path_index = 0)
{
    const auto& c = detail::require_cylindrical(noise);
    validate(noise);
    const auto* psi = std::get_if<ConstantModulation>(&c.psi);
    if (psi == nullptr)
        throw RequiresConstantG("exact OU update needs time-constant G; use stochastic_convolution_ito");
    if (c.truncation > basis.size() - 1)
        throw ModeOverflow("cylindrical truncation exceeds basis");

    std::vector<SpectralField> traj(static_cast<std::size_t>(grid.steps) + 1, SpectralField(basis.size()));
    for (int n = 1; n <= c.truncation; ++n) {
        const double mu = basis.eigenvalue(n);
        const double decay = std::exp(-mu * grid.dt);
        const double spread = psi->c * c.amplitude(n) * std::sqrt(-std::expm1(-2.0 * mu * grid.dt) / (2.0 * mu));
        const std::uint64_t key = stream_key(seed, path_index, static_cast<std::uint64_t>(n));
        double x = 0.0;
        for (int k = 0; k < grid.steps; ++k) {
            x = decay * x + spread * standard_normal(key, static_cast<std::uint64_t>(k));
            traj[k + 1][n] = x;
        }
    }
    return traj;
}

/// Lower-order fallback for time-dependent psi: x_{k+1} = e^{-mu dt}(x_k + psi(t_k) amp dB_k).
inline std::vector<SpectralField> stochastic_convolution_ito(const NoiseSpec& noise, const TimeGrid& grid,
                                                             std::uint64_t seed, const LegendreBasis& basis,
                                                             std::uint64_t path_index = 0)
{
    const auto& c = detail::require_cylindrical(noise);
    validate(noise);
    if (c.truncation > basis.size() - 1)
        throw ModeOverflow("cylindrical truncation exceeds basis");
    std::vector<SpectralField> traj(static_cast<std::size_t>(grid.steps) + 1, SpectralField(basis.size()));
    const double sd = std::sqrt(grid.dt);
    for (int n = 1; n <= c.truncation; ++n) {
        const double decay = std::exp(-basis.eigenvalue(n) * grid.dt);
        const std::uint64_t key = stream_key(seed, path_index, static_cast<std::uint64_t>(n));
        double x = 0.0;
        for (int k = 0; k < grid.steps; ++k) {
            const double db = sd * standard_normal(key, static_cast<std::uint64_t>(k));
            x = decay * (x + modulation_eval(c.psi, grid.t(k)) * c.amplitude(n) * db);
            traj[k + 1][n] = x;
        }
    }
    return traj;
}

/// Monte Carlo E||W^{A,G}_t||^2 at t = grid horizon against convolution_trace.
inline MonteCarloEstimate convolution_estimate(const NoiseSpec& noise, const TimeGrid& grid, int paths,
                                               std::uint64_t seed, const LegendreBasis& basis, int threads = 1)
{
    const auto& c = detail::require_cylindrical(noise);
    std::vector<double> samples(static_cast<std::size_t>(paths));
    parallel_for(samples.size(), threads, [&](std::size_t p) {
        const auto traj = stochastic_convolution(noise, grid, seed, basis, p);
        samples[p] = traj.back().coeffs().squaredNorm();
    });
    return detail::summarize(samples, convolution_trace(grid.horizon(), c));
}

struct SupMomentDiagnostic {
    double horizon = 0.0;
    MonteCarloEstimate sup_moment; // target field holds the trace integral
    double ratio = 0.0;            // E sup ||W||^p / trace^(p/2)
};

/// E[sup_{t <= T} ||W^{A,G}_t||^p] over the grid, compared with the trace integral
/// raised to p/2. The ratio estimates the constant of a maximal inequality.
inline SupMomentDiagnostic sup_moment_diagnostic(const NoiseSpec& noise, const TimeGrid& grid, double p,
                                                 int paths, std::uint64_t seed, const LegendreBasis& basis,
                                                 int threads = 1)
{
    const auto& c = detail::require_cylindrical(noise);
    std::vector<double> samples(static_cast<std::size_t>(paths));
    parallel_for(samples.size(), threads, [&](std::size_t i) {
        const auto traj = stochastic_convolution(noise, grid, seed, basis, i);
        double sup = 0.0;
        for (const auto& w : traj)
            sup = std::max(sup, w.norm());
        samples[i] = std::pow(sup, p);
    });
    const double scale = std::pow(convolution_trace(grid.horizon(), c), 0.5 * p);
    SupMomentDiagnostic d;
    d.horizon = grid.horizon();
    d.sup_moment = detail::summarize(samples, scale);
    d.ratio = d.sup_moment.mean / scale;
    return d;
}

} // namespace ebm
