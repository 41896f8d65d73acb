// Copyright 2026 The bqpe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <unsupported/Eigen/MatrixFunctions>
#include <utility>
#include <vector>

#include "bqpe/error.hpp"

namespace bqpe {

using cplx = std::complex<double>;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Operator = Eigen::MatrixXcd;

inline constexpr double pi = std::numbers::pi;
inline constexpr double state_tol = 1e-10;
inline constexpr double unitary_tol = 1e-9;

/// Number of retained Fock levels |0>..|dim-1>.
class FockDim {
   public:
    explicit FockDim(long d) : dim_(static_cast<int>(d)) {
        if (d < 2) {
            throw InvalidDimension("Fock dimension must be at least 2, got " + std::to_string(d));
        }
    }
    int value() const noexcept {
        return dim_;
    }
    operator int() const noexcept {
        return dim_;
    }
    bool operator==(const FockDim &) const = default;

   private:
    int dim_;
};

inline void require_same_dim(long a, long b, const char *where) {
    if (a != b) {
        throw InvalidDimension(std::string(where) + ": dimension mismatch " + std::to_string(a) + " vs " +
                               std::to_string(b));
    }
}

inline bool all_finite(const Operator &m) {
    return m.allFinite();
}

/// A pure ket or a density operator on a truncated Fock space.
class QuantumState {
   public:
    enum class Kind { pure, density };

    static QuantumState pure(Vector psi, bool normalize = true) {
        FockDim d(psi.size());
        if (!psi.allFinite()) {
            throw NumericError("state amplitudes are not finite");
        }
        double nrm = psi.norm();
        if (normalize) {
            if (nrm < 1e-300) {
                throw InvalidState("cannot normalize a zero vector");
            }
            psi /= nrm;
        } else if (std::abs(nrm - 1.0) > state_tol) {
            throw InvalidState("pure state norm is " + std::to_string(nrm));
        }
        return QuantumState(Kind::pure, std::move(psi), Operator(), d);
    }

    /// Takes ownership of rho, symmetrizes it and rescales to unit trace when
    /// `normalize` is set. Positivity is only checked by validate().
    static QuantumState density(Operator rho, bool normalize = true) {
        if (rho.rows() != rho.cols()) {
            throw InvalidDimension("density matrix must be square");
        }
        FockDim d(rho.rows());
        if (!rho.allFinite()) {
            throw NumericError("density matrix is not finite");
        }
        if (normalize) {
            Operator h = 0.5 * (rho + rho.adjoint());
            double tr = h.trace().real();
            if (tr < 1e-300) {
                throw InvalidState("cannot normalize a zero-trace operator");
            }
            rho = h / tr;
        }
        return QuantumState(Kind::density, Vector(), std::move(rho), d);
    }

    static QuantumState fock(int n, FockDim dim) {
        if (n < 0 || n >= dim.value()) {
            throw InvalidDimension("Fock level " + std::to_string(n) + " outside dimension " +
                                   std::to_string(dim.value()));
        }
        Vector v = Vector::Zero(dim.value());
        v(n) = 1.0;
        return pure(std::move(v), false);
    }

    Kind kind() const noexcept {
        return kind_;
    }
    bool is_pure() const noexcept {
        return kind_ == Kind::pure;
    }
    FockDim dim() const noexcept {
        return dim_;
    }
    const Vector &vector() const {
        if (kind_ != Kind::pure) {
            throw InvalidState("vector() requested on a density state");
        }
        return psi_;
    }
    const Operator &matrix() const {
        if (kind_ != Kind::density) {
            throw InvalidState("matrix() requested on a pure state");
        }
        return rho_;
    }
    Operator density_matrix() const {
        if (kind_ == Kind::pure) {
            return psi_ * psi_.adjoint();
        }
        return rho_;
    }
    QuantumState as_density() const {
        return is_pure() ? QuantumState(Kind::density, Vector(), density_matrix(), dim_) : *this;
    }

    /// Fock-basis populations.
    RealVector populations() const {
        if (is_pure()) {
            return psi_.cwiseAbs2();
        }
        return rho_.diagonal().real();
    }

    cplx expectation(const Operator &op) const {
        require_same_dim(op.rows(), dim_.value(), "expectation");
        if (is_pure()) {
            return psi_.dot(op * psi_);
        }
        return (op * rho_).trace();
    }

    double purity() const {
        if (is_pure()) {
            return 1.0;
        }
        return (rho_ * rho_).trace().real();
    }

    void validate(double tol = state_tol) const {
        if (is_pure()) {
            double nrm = psi_.norm();
            if (std::abs(nrm - 1.0) > tol) {
                throw InvalidState("pure state norm deviates from 1 by " + std::to_string(nrm - 1.0));
            }
            return;
        }
        double herm = (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff();
        if (herm > tol) {
            throw InvalidState("density matrix is not Hermitian (" + std::to_string(herm) + ")");
        }
        double tr = rho_.trace().real();
        if (std::abs(tr - 1.0) > tol) {
            throw InvalidState("density matrix trace is " + std::to_string(tr));
        }
        Eigen::SelfAdjointEigenSolver<Operator> es(rho_, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-9) {
            throw InvalidState("density matrix has negative eigenvalue " +
                               std::to_string(es.eigenvalues().minCoeff()));
        }
    }

   private:
    QuantumState(Kind k, Vector psi, Operator rho, FockDim d)
        : kind_(k), psi_(std::move(psi)), rho_(std::move(rho)), dim_(d) {
    }

    Kind kind_;
    Vector psi_;
    Operator rho_;
    FockDim dim_;
};

inline Operator annihilation(FockDim dim) {
    int d = dim.value();
    Operator a = Operator::Zero(d, d);
    for (int n = 1; n < d; ++n) {
        a(n - 1, n) = std::sqrt(static_cast<double>(n));
    }
    return a;
}

inline std::pair<Operator, Operator> ladder_operators(FockDim dim) {
    Operator a = annihilation(dim);
    Operator ad = a.adjoint();
    return {std::move(a), std::move(ad)};
}

inline RealVector number_diagonal(FockDim dim) {
    return RealVector::LinSpaced(dim.value(), 0.0, dim.value() - 1.0);
}

inline Operator number_operator(FockDim dim) {
    return number_diagonal(dim).cast<cplx>().asDiagonal();
}

/// Q = (a + a^dag)/sqrt(2).
inline Operator position_operator(FockDim dim) {
    Operator a = annihilation(dim);
    return (a + a.adjoint()) / std::sqrt(2.0);
}

/// P = -i (a - a^dag)/sqrt(2).
inline Operator momentum_operator(FockDim dim) {
    Operator a = annihilation(dim);
    return cplx(0.0, -1.0) * (a - a.adjoint()) / std::sqrt(2.0);
}

/// a e^{-i theta} + a^dag e^{i theta}, divided by sqrt(2); theta = 0 gives Q and
/// theta = pi/2 gives P.
inline Operator quadrature_operator(double theta, FockDim dim) {
    Operator a = annihilation(dim);
    cplx ph = std::polar(1.0, theta);
    return (a * std::conj(ph) + a.adjoint() * ph) / std::sqrt(2.0);
}

/// Projector onto Fock levels n with n mod modulus == residue.
inline RealVector residue_mask(FockDim dim, int modulus, int residue) {
    RealVector m(dim.value());
    for (int n = 0; n < dim.value(); ++n) {
        m(n) = (n % modulus == ((residue % modulus) + modulus) % modulus) ? 1.0 : 0.0;
    }
    return m;
}

/// Number of levels counted as interior for unitarity and commutator checks.
inline int interior_size(int d) {
    int edge = static_cast<int>(std::ceil(0.05 * d));
    return std::max(1, d - edge);
}

inline bool is_hermitian(const Operator &op, double tol = state_tol) {
    if (op.rows() != op.cols()) {
        return false;
    }
    return (op - op.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

/// Unitarity on the interior block; the top 5% of levels are excluded because
/// truncated generators are not unitary near the edge.
inline bool is_unitary(const Operator &op, double tol = unitary_tol, bool interior_only = false) {
    if (op.rows() != op.cols()) {
        return false;
    }
    Operator prod = op.adjoint() * op;
    long k = interior_only ? interior_size(static_cast<int>(op.rows())) : op.rows();
    Operator block = prod.topLeftCorner(k, k) - Operator::Identity(k, k);
    return block.cwiseAbs().maxCoeff() <= tol;
}

inline bool is_diagonal(const Operator &op) {
    for (long j = 0; j < op.cols(); ++j) {
        for (long i = 0; i < op.rows(); ++i) {
            if (i != j && op(i, j) != cplx(0.0)) {
                return false;
            }
        }
    }
    return true;
}

/// Eigen-decomposition of a Hermitian operator, reusable for exp(s H) at many s.
class HermitianSpectrum {
   public:
    explicit HermitianSpectrum(const Operator &h) {
        if (!h.allFinite()) {
            throw NumericError("Hermitian spectrum of non-finite operator");
        }
        Eigen::SelfAdjointEigenSolver<Operator> es(0.5 * (h + h.adjoint()));
        if (es.info() != Eigen::Success) {
            throw NumericError("eigen-decomposition failed");
        }
        values_ = es.eigenvalues();
        vectors_ = es.eigenvectors();
    }
    HermitianSpectrum(RealVector values, Operator vectors) : values_(std::move(values)), vectors_(std::move(vectors)) {
    }

    const RealVector &values() const noexcept {
        return values_;
    }
    const Operator &vectors() const noexcept {
        return vectors_;
    }
    long size() const noexcept {
        return values_.size();
    }

    Operator exp(cplx scale) const {
        Vector d = (scale * values_.cast<cplx>()).array().exp().matrix();
        Operator out = vectors_ * d.asDiagonal() * vectors_.adjoint();
        if (!out.allFinite()) {
            throw NumericError("matrix exponential overflowed");
        }
        return out;
    }

    Operator function(const Vector &diag) const {
        return vectors_ * diag.asDiagonal() * vectors_.adjoint();
    }

   private:
    RealVector values_;
    Operator vectors_;
};

/// exp(scale * H). Diagonal inputs are exponentiated entrywise, Hermitian
/// inputs through their eigen-decomposition, anything else by Pade scaling and
/// squaring.
inline Operator matrix_exp(const Operator &h, cplx scale) {
    if (h.rows() != h.cols()) {
        throw InvalidDimension("matrix_exp needs a square operator");
    }
    if (!h.allFinite() || !std::isfinite(scale.real()) || !std::isfinite(scale.imag())) {
        throw NumericError("matrix_exp input is not finite");
    }
    Operator out;
    if (is_diagonal(h)) {
        out = Operator::Zero(h.rows(), h.cols());
        for (long i = 0; i < h.rows(); ++i) {
            out(i, i) = std::exp(scale * h(i, i));
        }
    } else if (is_hermitian(h, 1e-13)) {
        out = HermitianSpectrum(h).exp(scale);
    } else {
        Operator s = scale * h;
        out = s.exp();
    }
    if (!out.allFinite()) {
        throw NumericError("matrix exponential is not finite");
    }
    return out;
}

/// D(alpha) = exp(alpha a^dag - alpha* a), built from the Hermitian generator
/// i(alpha a^dag - alpha* a).
inline Operator displacement(cplx alpha, FockDim dim) {
    if (!std::isfinite(alpha.real()) || !std::isfinite(alpha.imag())) {
        throw NumericError("displacement amplitude is not finite");
    }
    if (alpha == cplx(0.0)) {
        return Operator::Identity(dim.value(), dim.value());
    }
    Operator a = annihilation(dim);
    Operator g = alpha * a.adjoint() - std::conj(alpha) * a;
    return matrix_exp(cplx(0.0, 1.0) * g, cplx(0.0, -1.0));
}

/// Harmonic-oscillator wavefunctions psi_n(q) for n < dim, delta normalized.
/// The recursion runs on a rescaled vector and the Gaussian factor is applied
/// in log space at the end, so large |q| does not underflow early terms.
inline Vector position_eigenvector(double q, FockDim dim) {
    if (!std::isfinite(q)) {
        throw NumericError("position eigenvector at non-finite q");
    }
    int d = dim.value();
    std::vector<double> u(d, 0.0);
    std::vector<double> ls(d, 0.0);
    double s = 0.0;
    u[0] = 1.0;
    if (d > 1) {
        u[1] = std::sqrt(2.0) * q;
    }
    for (int n = 1; n + 1 < d; ++n) {
        u[n + 1] = std::sqrt(2.0 / (n + 1)) * q * u[n] - std::sqrt(static_cast<double>(n) / (n + 1)) * u[n - 1];
        if (std::abs(u[n + 1]) > 1e150) {
            u[n] *= 1e-150;
            u[n + 1] *= 1e-150;
            s += std::log(1e150);
            ls[n] = s;
        }
        ls[n + 1] = s;
    }
    Vector out(d);
    double base = -0.25 * std::log(pi) - 0.5 * q * q;
    for (int n = 0; n < d; ++n) {
        if (u[n] == 0.0) {
            out(n) = 0.0;
            continue;
        }
        double lg = std::log(std::abs(u[n])) + ls[n] + base;
        out(n) = std::copysign(std::exp(lg), u[n]);
    }
    return out;
}

/// Wigner function W(x, p) with beta = (x + i p)/sqrt(2), evaluated by the
/// Laguerre recursion over the matrix elements |m><n|.
inline std::vector<double> wigner(const QuantumState &state, const std::vector<std::pair<double, double>> &grid) {
    Operator rho = state.density_matrix();
    int d = static_cast<int>(rho.rows());
    std::vector<double> out(grid.size(), 0.0);
    std::vector<cplx> wl(d);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double x = grid[g].first;
        double p = grid[g].second;
        if (!std::isfinite(x) || !std::isfinite(p)) {
            throw NumericError("wigner grid point is not finite");
        }
        cplx a(x / std::sqrt(2.0), p / std::sqrt(2.0));
        wl[0] = std::exp(-2.0 * std::norm(a)) / pi;
        double w = rho(0, 0).real() * wl[0].real();
        for (int n = 1; n < d; ++n) {
            wl[n] = 2.0 * a * wl[n - 1] / std::sqrt(static_cast<double>(n));
            w += 2.0 * (rho(0, n) * wl[n]).real();
        }
        for (int m = 1; m < d; ++m) {
            cplx temp = wl[m];
            wl[m] = (2.0 * std::conj(a) * temp - std::sqrt(static_cast<double>(m)) * wl[m - 1]) /
                    std::sqrt(static_cast<double>(m));
            w += (rho(m, m) * wl[m]).real();
            for (int n = m + 1; n < d; ++n) {
                cplx temp2 = (2.0 * a * wl[n - 1] - std::sqrt(static_cast<double>(m)) * temp) /
                             std::sqrt(static_cast<double>(n));
                temp = wl[n];
                wl[n] = temp2;
                w += 2.0 * (rho(m, n) * wl[n]).real();
            }
        }
        out[g] = w;
    }
    return out;
}

/// Square grid helper for Wigner tables: x and p each in [-extent, extent].
inline std::vector<std::pair<double, double>> square_grid(double extent, int points) {
    std::vector<std::pair<double, double>> g;
    g.reserve(static_cast<std::size_t>(points) * points);
    for (int i = 0; i < points; ++i) {
        double x = points == 1 ? 0.0 : -extent + 2.0 * extent * i / (points - 1);
        for (int j = 0; j < points; ++j) {
            double p = points == 1 ? 0.0 : -extent + 2.0 * extent * j / (points - 1);
            g.emplace_back(x, p);
        }
    }
    return g;
}

}  // namespace bqpe
