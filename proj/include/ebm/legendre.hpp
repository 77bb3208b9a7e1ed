#pragma once

// Legendre eigenbasis of the degenerate diffusion operator
//   A u = -d/dx((1 - x^2) du/dx)   on I = (-1, 1),
// Gauss-Legendre quadrature and nodal <-> spectral transforms.
//
// Basis functions are e_n(x) = sqrt((2n+1)/2) P_n(x), orthonormal in L2(I),
// with A e_n = n(n+1) e_n. Everything here is immutable after construction.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

#include "ebm/errors.hpp"

namespace ebm {

/// Legendre polynomial P_n(x) by the three-term recurrence.
inline double legendre_poly(int n, double x)
{
    if (n == 0)
        return 1.0;
    double p_prev = 1.0;
    double p = x;
    for (int k = 1; k < n; ++k) {
        const double p_next = ((2.0 * k + 1.0) * x * p - k * p_prev) / (k + 1.0);
        p_prev = p;
        p = p_next;
    }
    return p;
}

/// Flux (1 - x^2) P_n'(x) = n (P_{n-1}(x) - x P_n(x)). Valid on the closed interval.
inline double legendre_flux(int n, double x)
{
    if (n == 0)
        return 0.0;
    return n * (legendre_poly(n - 1, x) - x * legendre_poly(n, x));
}

/// P_n'(x). Uses the flux identity in the interior and the closed form at x = +-1.
inline double legendre_poly_derivative(int n, double x)
{
    if (n == 0)
        return 0.0;
    const double one_minus_x2 = 1.0 - x * x;
    if (one_minus_x2 == 0.0) {
        const double end = 0.5 * n * (n + 1.0);
        return (x > 0.0 || n % 2 == 1) ? end : -end;
    }
    return legendre_flux(n, x) / one_minus_x2;
}

inline double basis_normalization(int n)
{
    return std::sqrt((2.0 * n + 1.0) / 2.0);
}

/// Orthonormal basis function e_n(x).
inline double basis_eval(int n, double x)
{
    return basis_normalization(n) * legendre_poly(n, x);
}

/// A function on I stored by its coefficients in the orthonormal Legendre basis.
class SpectralField {
public:
    SpectralField() = default;
    explicit SpectralField(Eigen::Index modes) : coeffs_(Eigen::VectorXd::Zero(modes)) {}
    explicit SpectralField(Eigen::VectorXd coeffs) : coeffs_(std::move(coeffs)) {}

    static SpectralField unit(Eigen::Index modes, Eigen::Index n)
    {
        SpectralField f(modes);
        f.coeffs_(n) = 1.0;
        return f;
    }

    /// The constant function `value`; only mode 0 is nonzero.
    static SpectralField constant(Eigen::Index modes, double value)
    {
        SpectralField f(modes);
        f.coeffs_(0) = value * std::numbers::sqrt2;
        return f;
    }

    Eigen::Index size() const noexcept { return coeffs_.size(); }
    const Eigen::VectorXd& coeffs() const noexcept { return coeffs_; }
    Eigen::VectorXd& coeffs() noexcept { return coeffs_; }
    double operator[](Eigen::Index n) const { return coeffs_(n); }
    double& operator[](Eigen::Index n) { return coeffs_(n); }

    /// L2(I) norm; Parseval in the orthonormal basis.
    double norm() const { return coeffs_.norm(); }

    SpectralField& operator+=(const SpectralField& o)
    {
        coeffs_ += o.coeffs_;
        return *this;
    }
    SpectralField& operator-=(const SpectralField& o)
    {
        coeffs_ -= o.coeffs_;
        return *this;
    }
    SpectralField& operator*=(double s)
    {
        coeffs_ *= s;
        return *this;
    }
    friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
    friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
    friend SpectralField operator*(double s, SpectralField a) { return a *= s; }
    friend bool operator==(const SpectralField& a, const SpectralField& b)
    {
        return a.coeffs_.size() == b.coeffs_.size() && a.coeffs_ == b.coeffs_;
    }

private:
    Eigen::VectorXd coeffs_;
};

class LegendreBasis {
public:
    /// N modes (degrees 0..N-1) with a q-point Gauss-Legendre rule, q >= N + 1.
    LegendreBasis(int modes, int quad_order)
    {
        if (modes < 1)
            throw InvalidArgument("mode count must be >= 1, got " + std::to_string(modes));
        if (quad_order < modes + 1)
            throw QuadratureOrderTooLow("quadrature order " + std::to_string(quad_order) +
                                        " < modes + 1 = " + std::to_string(modes + 1));
        modes_ = modes;
        build_gauss_legendre(quad_order);

        eigenvalues_.resize(modes);
        for (int n = 0; n < modes; ++n)
            eigenvalues_(n) = static_cast<double>(n) * (n + 1.0);

        table_.resize(quad_order, modes);
        for (int j = 0; j < quad_order; ++j) {
            const double x = nodes_(j);
            double p_prev = 1.0;
            double p = x;
            table_(j, 0) = basis_normalization(0);
            if (modes > 1)
                table_(j, 1) = basis_normalization(1) * x;
            for (int k = 1; k + 1 < modes; ++k) {
                const double p_next = ((2.0 * k + 1.0) * x * p - k * p_prev) / (k + 1.0);
                p_prev = p;
                p = p_next;
                table_(j, k + 1) = basis_normalization(k + 1) * p;
            }
        }
        projection_ = table_.transpose() * weights_.asDiagonal();
    }

    int size() const noexcept { return modes_; }
    int quadrature_order() const noexcept { return static_cast<int>(nodes_.size()); }
    const Eigen::VectorXd& nodes() const noexcept { return nodes_; }
    const Eigen::VectorXd& weights() const noexcept { return weights_; }
    const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
    double eigenvalue(int n) const { return eigenvalues_(n); }

    /// table()(j, n) = e_n(x_j), shape q x N.
    const Eigen::MatrixXd& table() const noexcept { return table_; }
    /// projection()(n, j) = w_j e_n(x_j), shape N x q.
    const Eigen::MatrixXd& projection() const noexcept { return projection_; }

    /// Quadrature of nodal values over I.
    double integrate(const Eigen::VectorXd& nodal) const { return weights_.dot(nodal); }

private:
    void build_gauss_legendre(int q)
    {
        nodes_.resize(q);
        weights_.resize(q);
        const int half = (q + 1) / 2;
        for (int i = 0; i < half; ++i) {
            // Tricomi initial guess, then Newton on P_q.
            double x = std::cos(std::numbers::pi * (i + 0.75) / (q + 0.5));
            double dp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                const double p = legendre_poly(q, x);
                dp = q * (legendre_poly(q - 1, x) - x * p) / (1.0 - x * x);
                const double dx = p / dp;
                x -= dx;
                if (std::abs(dx) < 1e-16)
                    break;
            }
            dp = q * (legendre_poly(q - 1, x) - x * legendre_poly(q, x)) / (1.0 - x * x);
            const double w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes_(i) = -x;
            nodes_(q - 1 - i) = x;
            weights_(i) = w;
            weights_(q - 1 - i) = w;
        }
        if (q % 2 == 1)
            nodes_(q / 2) = 0.0;
    }

    int modes_ = 0;
    Eigen::VectorXd nodes_;
    Eigen::VectorXd weights_;
    Eigen::VectorXd eigenvalues_;
    Eigen::MatrixXd table_;
    Eigen::MatrixXd projection_;
};

inline LegendreBasis build_basis(int modes, int quad_order)
{
    return LegendreBasis(modes, quad_order);
}

inline Eigen::VectorXd to_nodal(const SpectralField& field, const LegendreBasis& basis)
{
    if (field.size() != basis.size())
        throw DimensionMismatch("field has " + std::to_string(field.size()) + " modes, basis has " +
                                std::to_string(basis.size()));
    return basis.table() * field.coeffs();
}

inline SpectralField to_spectral(const Eigen::VectorXd& nodal, const LegendreBasis& basis)
{
    if (nodal.size() != basis.quadrature_order())
        throw DimensionMismatch("got " + std::to_string(nodal.size()) + " nodal values, quadrature has " +
                                std::to_string(basis.quadrature_order()) + " nodes");
    return SpectralField(Eigen::VectorXd(basis.projection() * nodal));
}

/// Samples an arbitrary function at the nodes and projects it.
template <class Fn>
SpectralField project_function(Fn&& fn, const LegendreBasis& basis)
{
    Eigen::VectorXd nodal(basis.quadrature_order());
    for (int j = 0; j < nodal.size(); ++j)
        nodal(j) = fn(basis.nodes()(j));
    return to_spectral(nodal, basis);
}

/// Evaluates a field at an arbitrary point of [-1, 1].
inline double evaluate(const SpectralField& field, double x)
{
    double value = 0.0;
    double p_prev = 1.0;
    double p = x;
    for (Eigen::Index n = 0; n < field.size(); ++n) {
        if (n == 0) {
            value += field[0] * basis_normalization(0);
            continue;
        }
        if (n >= 2) {
            const double k = static_cast<double>(n - 1);
            const double p_next = ((2.0 * k + 1.0) * x * p - k * p_prev) / (k + 1.0);
            p_prev = p;
            p = p_next;
        }
        value += field[n] * basis_normalization(static_cast<int>(n)) * p;
    }
    return value;
}

/// A u, diagonal in the eigenbasis.
inline SpectralField apply_operator(const SpectralField& field, const LegendreBasis& basis)
{
    if (field.size() != basis.size())
        throw DimensionMismatch("field/basis size mismatch");
    return SpectralField(Eigen::VectorXd(field.coeffs().cwiseProduct(basis.eigenvalues())));
}

/// exp(-t A) applied coefficient-wise.
inline SpectralField semigroup_apply(const SpectralField& field, double t, const LegendreBasis& basis)
{
    if (t < 0.0)
        throw NegativeTime("semigroup time must be >= 0, got " + std::to_string(t));
    if (field.size() != basis.size())
        throw DimensionMismatch("field/basis size mismatch");
    return SpectralField(Eigen::VectorXd(field.coeffs().cwiseProduct((-t * basis.eigenvalues()).array().exp().matrix())));
}

/// Dirichlet energy 1/2 int (1 - x^2) |u'|^2 dx = 1/2 sum mu_n c_n^2.
inline double dirichlet_energy(const SpectralField& field, const LegendreBasis& basis)
{
    return 0.5 * field.coeffs().cwiseProduct(field.coeffs()).dot(basis.eigenvalues());
}

} // namespace ebm
