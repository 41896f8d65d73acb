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

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bqpe/fock.hpp"
#include "bqpe/parallel.hpp"
#include "bqpe/rng.hpp"

namespace bqpe {

/// Per-cell branch probabilities below this are treated as exactly zero.
inline constexpr double unreachable_tol = 1e-14;

/// [sin(n pi x) / (n sin(pi x))]^2, with the limit 1 at integers.
inline double fejer_kernel(long n, double x) {
    if (n < 1) {
        throw InvalidArgument("Fejer kernel order must be positive");
    }
    double r = x - std::round(x);
    if (std::abs(r) < 1e-13) {
        return 1.0;
    }
    double num = std::sin(static_cast<double>(n) * pi * r);
    double den = static_cast<double>(n) * std::sin(pi * r);
    double v = num / den;
    return v * v;
}

/// phi_i = pi - 2 pi 0.0 a_{i-1} ... a_1 for the register a_1..a_{i-1}.
inline double feedback_phase(const std::vector<int> &bits) {
    int i = static_cast<int>(bits.size()) + 1;
    double frac = 0.0;
    for (int j = 1; j < i; ++j) {
        if (bits[j - 1] != 0) {
            frac += std::ldexp(1.0, -(i - j + 1));
        }
    }
    return pi - 2.0 * pi * frac;
}

/// theta = 0.a_m ... a_1, so bit a_1 is the least significant.
inline double dyadic_theta(const std::vector<int> &bits) {
    int m = static_cast<int>(bits.size());
    double t = 0.0;
    for (int i = 1; i <= m; ++i) {
        if (bits[i - 1] != 0) {
            t += std::ldexp(1.0, -(m - i + 1));
        }
    }
    return t;
}

inline std::uint64_t dyadic_index(const std::vector<int> &bits) {
    std::uint64_t j = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] != 0) {
            j |= std::uint64_t{1} << i;
        }
    }
    return j;
}

inline std::vector<int> bits_from_index(std::uint64_t j, int m) {
    std::vector<int> bits(m);
    for (int i = 0; i < m; ++i) {
        bits[i] = static_cast<int>((j >> i) & 1u);
    }
    return bits;
}

enum class QuadratureAxis { Q, P };

class QpeSchedule {
   public:
    enum class Kind { rotation, quadrature, custom };

    /// t_i = 2 * 2^{m-i} pi / (chi N) for a dispersive chi in rad/us.
    static QpeSchedule rotation(int m, int N, double chi) {
        if (N < 1 || !(chi > 0.0)) {
            throw InvalidArgument("rotation schedule needs N >= 1 and chi > 0");
        }
        QpeSchedule s(m, Kind::rotation, 0.5 * chi * N);
        s.modulus_ = N;
        s.coupling_ = chi;
        return s;
    }
    /// Code preparation reads n mod 2N.
    static QpeSchedule preparation(int m, int N, double chi) {
        return rotation(m, 2 * N, chi);
    }
    /// t_i = 2^{m-i} pi / (g sqrt(2 pi)); outcomes estimate q/sqrt(pi).
    static QpeSchedule quadrature(int m, QuadratureAxis axis, double g) {
        if (!(g > 0.0)) {
            throw InvalidArgument("quadrature schedule needs g > 0");
        }
        QpeSchedule s(m, Kind::quadrature, g * std::sqrt(2.0 * pi));
        s.axis_ = axis;
        s.coupling_ = g;
        return s;
    }
    static QpeSchedule custom(int m, double kappa) {
        if (!(kappa > 0.0)) {
            throw InvalidArgument("custom schedule needs kappa > 0");
        }
        return QpeSchedule(m, Kind::custom, kappa);
    }

    int m() const noexcept {
        return m_;
    }
    Kind kind() const noexcept {
        return kind_;
    }
    int modulus() const noexcept {
        return modulus_;
    }
    QuadratureAxis axis() const noexcept {
        return axis_;
    }
    double coupling() const noexcept {
        return coupling_;
    }
    double kappa() const noexcept {
        return kappa_;
    }
    /// t_i = 2^{m-i} pi / kappa, i = 1..m, in microseconds.
    std::vector<double> times() const {
        std::vector<double> t(m_);
        for (int i = 1; i <= m_; ++i) {
            t[i - 1] = std::ldexp(pi, m_ - i) / kappa_;
        }
        return t;
    }
    double total_time() const {
        return (std::ldexp(1.0, m_) - 1.0) * pi / kappa_;
    }

   private:
    QpeSchedule(int m, Kind k, double kappa) : m_(m), kind_(k), kappa_(kappa) {
        if (m < 1 || m > 30) {
            throw InvalidArgument("round count m must be in [1, 30]");
        }
    }
    int m_;
    Kind kind_;
    double kappa_;
    int modulus_ = 0;
    QuadratureAxis axis_ = QuadratureAxis::Q;
    double coupling_ = 0.0;
};

/// The mode operator of the coupling in its eigenbasis: eigenvectors, and
/// eigenvalues divided by kappa (x_k). One-sided couplings use U0 = I and
/// U1 = exp(2 i pi 2^{m-i} x); symmetric ones split the phase evenly.
struct SpectralCoupling {
    bool fock_diagonal = true;
    Operator basis;
    RealVector x;
    bool one_sided = false;

    long size() const {
        return x.size();
    }

    /// Dispersive coupling with x_n = n / N.
    static SpectralCoupling rotation(int N, FockDim dim) {
        SpectralCoupling c;
        c.fock_diagonal = true;
        c.x = number_diagonal(dim) / static_cast<double>(N);
        c.one_sided = true;
        return c;
    }

    /// x = q / sqrt(pi) for Q, or p / sqrt(pi) for P. P = D Q D^dag with
    /// D = diag(i^n), so both registers share one eigen-decomposition.
    static SpectralCoupling quadrature(QuadratureAxis axis, const HermitianSpectrum &q_spectrum) {
        SpectralCoupling c;
        c.fock_diagonal = false;
        c.x = q_spectrum.values() / std::sqrt(pi);
        c.one_sided = false;
        if (axis == QuadratureAxis::Q) {
            c.basis = q_spectrum.vectors();
        } else {
            long d = q_spectrum.size();
            Vector ph(d);
            const cplx powers[4] = {cplx(1, 0), cplx(0, 1), cplx(-1, 0), cplx(0, -1)};
            for (long n = 0; n < d; ++n) {
                ph(n) = powers[n % 4];
            }
            c.basis = ph.asDiagonal() * q_spectrum.vectors();
        }
        return c;
    }
    static SpectralCoupling quadrature(QuadratureAxis axis, FockDim dim) {
        return quadrature(axis, HermitianSpectrum(position_operator(dim)));
    }

    /// Symmetric coupling sigma_z (x) V with outcomes estimating v / kappa.
    static SpectralCoupling custom(const Operator &V, double kappa, bool one_sided = false) {
        if (!is_hermitian(V, 1e-10)) {
            throw InvalidArgument("custom coupling operator must be Hermitian");
        }
        SpectralCoupling c;
        if (is_diagonal(V)) {
            c.fock_diagonal = true;
            c.x = V.diagonal().real() / kappa;
        } else {
            HermitianSpectrum s(V);
            c.fock_diagonal = false;
            c.basis = s.vectors();
            c.x = s.values() / kappa;
        }
        c.one_sided = one_sided;
        return c;
    }

    static SpectralCoupling for_schedule(const QpeSchedule &s, FockDim dim) {
        switch (s.kind()) {
            case QpeSchedule::Kind::rotation:
                return rotation(s.modulus(), dim);
            case QpeSchedule::Kind::quadrature:
                return quadrature(s.axis(), dim);
            case QpeSchedule::Kind::custom:
                break;
        }
        throw InvalidArgument("custom schedules need an explicit coupling operator");
    }

    Vector to_eigen(const Vector &psi) const {
        return fock_diagonal ? psi : Vector(basis.adjoint() * psi);
    }
    Operator to_eigen(const Operator &rho) const {
        return fock_diagonal ? rho : Operator(basis.adjoint() * rho * basis);
    }
    Vector from_eigen(const Vector &psi) const {
        return fock_diagonal ? psi : Vector(basis * psi);
    }
    Operator from_eigen(const Operator &rho) const {
        return fock_diagonal ? rho : Operator(basis * rho * basis.adjoint());
    }

    /// Phase angles pi 2^{m-i} x_k with the power of two reduced mod 2 first.
    RealVector angles(int m, int i) const {
        RealVector a(x.size());
        for (long k = 0; k < x.size(); ++k) {
            a(k) = pi * std::fmod(std::ldexp(x(k), m - i), 2.0);
        }
        return a;
    }

    /// Diagonals of U_0 and U_1 for cell i of m.
    std::pair<Vector, Vector> cell_unitaries(int m, int i) const {
        RealVector a = angles(m, i);
        Vector u0(a.size());
        Vector u1(a.size());
        for (long k = 0; k < a.size(); ++k) {
            if (one_sided) {
                u0(k) = 1.0;
                u1(k) = std::polar(1.0, 2.0 * a(k));
            } else {
                u0(k) = std::polar(1.0, -a(k));
                u1(k) = std::polar(1.0, a(k));
            }
        }
        return {std::move(u0), std::move(u1)};
    }

    /// Eigenbasis diagonal of M_alpha = [U_0 - (-1)^alpha e^{i phi} U_1] / 2.
    Vector kraus_diagonal(int m, int i, double phi, int alpha) const {
        auto [u0, u1] = cell_unitaries(m, i);
        cplx s = (alpha == 0 ? -1.0 : 1.0) * std::polar(1.0, phi);
        return 0.5 * (u0 + s * u1);
    }

    /// Dense Fock-basis U_0 and U_1, for the generic rim_cell path and tests.
    std::pair<Operator, Operator> dense_unitaries(int m, int i) const {
        auto [u0, u1] = cell_unitaries(m, i);
        return {from_eigen(Operator(u0.asDiagonal())), from_eigen(Operator(u1.asDiagonal()))};
    }
};

/// A state held in the coupling eigenbasis, pure or mixed.
struct EigenState {
    bool pure = true;
    Vector v;
    Operator r;

    static EigenState from(const QuantumState &s, const SpectralCoupling &c) {
        require_same_dim(s.dim().value(), c.size(), "coupling");
        EigenState e;
        e.pure = s.is_pure();
        if (e.pure) {
            e.v = c.to_eigen(s.vector());
        } else {
            e.r = c.to_eigen(s.matrix());
        }
        return e;
    }

    double norm2() const {
        return pure ? v.squaredNorm() : r.trace().real();
    }

    /// Applies a diagonal Kraus operator in place.
    void apply(const Vector &k) {
        if (pure) {
            v = v.cwiseProduct(k);
        } else {
            r = k.asDiagonal() * r * k.conjugate().asDiagonal();
        }
    }

    EigenState applied(const Vector &k) const {
        EigenState e = *this;
        e.apply(k);
        return e;
    }

    /// Branch weight tr(M rho M^dag) without forming the branch.
    double weight(const Vector &k) const {
        if (pure) {
            return (v.cwiseProduct(k)).squaredNorm();
        }
        return (r.diagonal().real().array() * k.cwiseAbs2().array()).sum();
    }

    void scale(double s) {
        if (pure) {
            v *= std::sqrt(s);
        } else {
            r *= s;
        }
    }

    RealVector populations() const {
        return pure ? RealVector(v.cwiseAbs2()) : RealVector(r.diagonal().real());
    }

    QuantumState to_state(const SpectralCoupling &c) const {
        if (pure) {
            return QuantumState::pure(c.from_eigen(v));
        }
        return QuantumState::density(c.from_eigen(r));
    }
};

struct CellResult {
    double p[2];
    std::optional<QuantumState> state[2];
};

/// One Ramsey cell with Kraus pair M_alpha = [U0 - (-1)^alpha e^{i phi} U1]/2.
inline CellResult rim_cell(const QuantumState &state, const Operator &U0, const Operator &U1, double phi) {
    int d = state.dim().value();
    require_same_dim(U0.rows(), d, "rim_cell");
    require_same_dim(U1.rows(), d, "rim_cell");
    if (!is_unitary(U0, unitary_tol) || !is_unitary(U1, unitary_tol)) {
        throw InvalidArgument("rim_cell needs unitary U0 and U1");
    }
    CellResult out;
    for (int alpha = 0; alpha < 2; ++alpha) {
        cplx s = (alpha == 0 ? -1.0 : 1.0) * std::polar(1.0, phi);
        Operator M = 0.5 * (U0 + s * U1);
        if (state.is_pure()) {
            Vector w = M * state.vector();
            out.p[alpha] = w.squaredNorm();
            if (out.p[alpha] >= unreachable_tol) {
                out.state[alpha] = QuantumState::pure(std::move(w));
            }
        } else {
            Operator w = M * state.matrix() * M.adjoint();
            out.p[alpha] = w.trace().real();
            if (out.p[alpha] >= unreachable_tol) {
                out.state[alpha] = QuantumState::density(std::move(w));
            }
        }
    }
    return out;
}

struct Trajectory {
    std::vector<int> bits;
    double theta = 0.0;
    double probability = 1.0;
    QuantumState state;
};

/// Samples one adaptive run of m cells.
inline Trajectory run_trajectory(const QuantumState &state, const SpectralCoupling &coupling, int m,
                                 PhiloxStream &rng) {
    EigenState e = EigenState::from(state, coupling);
    std::vector<int> bits;
    bits.reserve(m);
    double prob = 1.0;
    for (int i = 1; i <= m; ++i) {
        double phi = feedback_phase(bits);
        Vector k0 = coupling.kraus_diagonal(m, i, phi, 0);
        Vector k1 = coupling.kraus_diagonal(m, i, phi, 1);
        double n2 = e.norm2();
        double p0 = e.weight(k0) / n2;
        double p1 = e.weight(k1) / n2;
        int alpha;
        if (p0 < unreachable_tol) {
            alpha = 1;
        } else if (p1 < unreachable_tol) {
            alpha = 0;
        } else {
            alpha = rng.uniform() < p0 / (p0 + p1) ? 0 : 1;
        }
        double pa = alpha == 0 ? p0 : p1;
        e.apply(alpha == 0 ? k0 : k1);
        e.scale(1.0 / e.norm2());
        prob *= pa;
        bits.push_back(alpha);
    }
    double theta = dyadic_theta(bits);
    return Trajectory{std::move(bits), theta, prob, e.to_state(coupling)};
}

inline Trajectory run_trajectory(const QuantumState &state, const QpeSchedule &schedule, PhiloxStream &rng) {
    return run_trajectory(state, SpectralCoupling::for_schedule(schedule, state.dim()), schedule.m(), rng);
}

struct Branch {
    double probability = 0.0;
    std::optional<QuantumState> state;
};

enum class SuperoperatorMethod { sequential, closed_form };

/// Closed-form branch amplitudes (-1)^{floor(xi) + floor(2^m xi)} sqrt(F(xi)),
/// xi = theta - x_k, times exp(i pi x_k (2^m - 1)) for one-sided coupling.
/// Equal to the sequential product up to a phase common to the whole branch.
inline Vector closed_form_coefficients(const SpectralCoupling &c, int m, double theta) {
    long n = c.size();
    Vector out(n);
    double two_m = std::ldexp(1.0, m);
    long order = static_cast<long>(two_m);
    for (long k = 0; k < n; ++k) {
        double xi = theta - c.x(k);
        double f = fejer_kernel(order, xi);
        double fl = std::floor(xi) + std::floor(two_m * xi);
        double sign = std::fmod(std::abs(fl), 2.0) == 1.0 ? -1.0 : 1.0;
        cplx v = sign * std::sqrt(f);
        if (c.one_sided) {
            v *= std::polar(1.0, pi * std::fmod(c.x(k) * (two_m - 1.0), 2.0));
        }
        out(k) = v;
    }
    return out;
}

/// Unnormalized branch M_{a_m} ... M_{a_1} applied in the eigenbasis.
inline EigenState branch_unnormalized(const EigenState &e, const SpectralCoupling &c, int m,
                                      const std::vector<int> &bits, SuperoperatorMethod method) {
    if (static_cast<int>(bits.size()) != m) {
        throw InvalidArgument("bit string length must equal m");
    }
    EigenState out = e;
    if (method == SuperoperatorMethod::closed_form) {
        out.apply(closed_form_coefficients(c, m, dyadic_theta(bits)));
        return out;
    }
    std::vector<int> reg;
    reg.reserve(m);
    for (int i = 1; i <= m; ++i) {
        out.apply(c.kraus_diagonal(m, i, feedback_phase(reg), bits[i - 1]));
        reg.push_back(bits[i - 1]);
    }
    return out;
}

inline Branch trajectory_superoperator(const QuantumState &state, const SpectralCoupling &c, int m,
                                       const std::vector<int> &bits,
                                       SuperoperatorMethod method = SuperoperatorMethod::sequential) {
    for (int b : bits) {
        if (b != 0 && b != 1) {
            throw InvalidArgument("outcome bits must be 0 or 1");
        }
    }
    EigenState e = EigenState::from(state, c);
    EigenState out = branch_unnormalized(e, c, m, bits, method);
    Branch b;
    b.probability = out.norm2();
    if (b.probability >= unreachable_tol) {
        b.state = out.to_state(c);
    }
    return b;
}

/// All 2^m branches indexed by j = 2^m theta, by depth-first sequential
/// application so shared prefixes are computed once.
inline std::vector<Branch> enumerate_trajectories(const QuantumState &state, const SpectralCoupling &c, int m,
                                                  bool keep_states = true) {
    if (m > 20) {
        throw InvalidArgument("enumeration limited to m <= 20");
    }
    std::vector<Branch> out(std::size_t{1} << m);
    EigenState root = EigenState::from(state, c);
    std::vector<int> reg;
    auto recurse = [&](auto &&self, const EigenState &e, int i) -> void {
        if (i > m) {
            std::uint64_t j = dyadic_index(reg);
            out[j].probability = e.norm2();
            if (keep_states && out[j].probability >= unreachable_tol) {
                out[j].state = e.to_state(c);
            }
            return;
        }
        double phi = feedback_phase(reg);
        for (int a = 0; a < 2; ++a) {
            EigenState child = e.applied(c.kraus_diagonal(m, i, phi, a));
            reg.push_back(a);
            // Leaves under a vanishing prefix stay at probability zero.
            if (child.norm2() >= unreachable_tol * 1e-6) {
                self(self, child, i + 1);
            }
            reg.pop_back();
        }
    };
    recurse(recurse, root, 1);
    return out;
}

struct OutcomeDistribution {
    int m = 0;
    std::vector<double> p;

    double theta(std::size_t j) const {
        return std::ldexp(static_cast<double>(j), -m);
    }
    double total() const {
        double s = 0.0;
        for (double v : p) {
            s += v;
        }
        return s;
    }
};

/// p(theta) = sum_k tr(rho Pi_k) F_{2^m}(theta - x_k).
inline OutcomeDistribution outcome_distribution(const QuantumState &state, const SpectralCoupling &c, int m) {
    EigenState e = EigenState::from(state, c);
    RealVector w = e.populations();
    OutcomeDistribution out{m, std::vector<double>(std::size_t{1} << m, 0.0)};
    long order = 1L << m;
    for (std::size_t j = 0; j < out.p.size(); ++j) {
        double th = out.theta(j);
        double s = 0.0;
        for (long k = 0; k < w.size(); ++k) {
            if (w(k) != 0.0) {
                s += w(k) * fejer_kernel(order, th - c.x(k));
            }
        }
        out.p[j] = s;
    }
    return out;
}

/// Rotation-code statistics grouped by residue: sum_l tr(rho Pi_N^l) F(theta - l/N).
inline OutcomeDistribution outcome_distribution(const QuantumState &state, const QpeSchedule &schedule) {
    if (schedule.kind() != QpeSchedule::Kind::rotation) {
        throw InvalidArgument("residue statistics need a rotation schedule");
    }
    int N = schedule.modulus();
    int m = schedule.m();
    RealVector pop = state.populations();
    std::vector<double> w(N, 0.0);
    for (long n = 0; n < pop.size(); ++n) {
        w[n % N] += pop(n);
    }
    OutcomeDistribution out{m, std::vector<double>(std::size_t{1} << m, 0.0)};
    long order = 1L << m;
    for (std::size_t j = 0; j < out.p.size(); ++j) {
        double s = 0.0;
        for (int l = 0; l < N; ++l) {
            s += w[l] * fejer_kernel(order, out.theta(j) - static_cast<double>(l) / N);
        }
        out.p[j] = s;
    }
    return out;
}

struct RotationError {
    int residue;
    int loss_count;
};

/// Half-open bins [l/N - 1/2N, l/N + 1/2N).
inline int rotation_bin(double theta, int N) {
    long l = static_cast<long>(std::floor(theta * N + 0.5));
    return static_cast<int>(((l % N) + N) % N);
}

inline RotationError deduce_rotation_error(double theta, int N) {
    if (N < 1) {
        throw InvalidArgument("modulus must be positive");
    }
    int l = rotation_bin(theta, N);
    return RotationError{l, (N - l) % N};
}

/// Histogram of sampled outcomes; trajectory s uses stream (seed, s).
inline std::vector<std::uint64_t> sample_outcome_counts(const QuantumState &state, const SpectralCoupling &c, int m,
                                                        std::size_t samples, std::uint64_t seed, int workers) {
    workers = std::max(1, workers);
    std::vector<std::vector<std::uint64_t>> local(workers, std::vector<std::uint64_t>(std::size_t{1} << m, 0));
    parallel_for(samples, workers, [&](std::size_t s, int w) {
        PhiloxStream rng(seed, s);
        Trajectory t = run_trajectory(state, c, m, rng);
        ++local[w][dyadic_index(t.bits)];
    });
    std::vector<std::uint64_t> counts(std::size_t{1} << m, 0);
    for (const auto &l : local) {
        for (std::size_t j = 0; j < counts.size(); ++j) {
            counts[j] += l[j];
        }
    }
    return counts;
}

struct Preparation {
    QuantumState state;
    double probability;
    double theta;
    double total_time;
};

/// Post-selects theta = 0.mu on a 2N-modulus rotation schedule.
inline Preparation prepare_by_projection(const QuantumState &primitive, int N, int mu, int m, double chi) {
    if (mu != 0 && mu != 1) {
        throw InvalidArgument("mu must be 0 or 1");
    }
    QpeSchedule s = QpeSchedule::preparation(m, N, chi);
    SpectralCoupling c = SpectralCoupling::rotation(2 * N, primitive.dim());
    std::vector<int> bits(m, 0);
    bits[m - 1] = mu;
    Branch b = trajectory_superoperator(primitive, c, m, bits);
    if (b.probability < 1e-12 || !b.state) {
        throw UnreachableTrajectory("preparation trajectory has probability " + std::to_string(b.probability),
                                    b.probability);
    }
    return Preparation{*b.state, b.probability, dyadic_theta(bits), s.total_time()};
}

}  // namespace bqpe
