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

#include <array>
#include <cmath>
#include <vector>

#include "bqpe/fock.hpp"
#include "bqpe/gkp.hpp"
#include "bqpe/noise.hpp"
#include "bqpe/qpe.hpp"

namespace bqpe {

/// Ancilla blocks X^{ab} of a qubit (x) mode operator, each dim x dim.
using AncillaBlocks = std::array<std::array<Operator, 2>, 2>;

/// R_0|0> = (|0> - i|1>)/sqrt(2).
inline std::array<cplx, 2> ancilla_prep() {
    return {cplx(1.0 / std::sqrt(2.0), 0.0), cplx(0.0, -1.0 / std::sqrt(2.0))};
}

/// Rows <alpha| R_{-phi} |beta> of the readout rotation. With this sign the
/// two outcomes realize [U0 -+ e^{i phi} U1]/2 up to a phase.
inline std::array<std::array<cplx, 2>, 2> ancilla_readout(double phi) {
    const double s = 1.0 / std::sqrt(2.0);
    cplx mi(0.0, -1.0);
    return {{{cplx(s), s * mi * std::polar(1.0, phi)}, {s * mi * std::polar(1.0, -phi), cplx(s)}}};
}

inline AncillaBlocks prepare_blocks(const Operator &rho) {
    auto c = ancilla_prep();
    AncillaBlocks x;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            x[a][b] = c[a] * std::conj(c[b]) * rho;
        }
    }
    return x;
}

/// Unnormalized mode operator for outcome alpha; the ancilla is then reset.
inline Operator measure_blocks(const AncillaBlocks &x, double phi, int alpha) {
    auto w = ancilla_readout(phi);
    Operator out = Operator::Zero(x[0][0].rows(), x[0][0].cols());
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            out += w[alpha][a] * std::conj(w[alpha][b]) * x[a][b];
        }
    }
    return out;
}

/// sum_k beta^k/k! a^k X a^dag^k, elementwise.
inline Operator jump_series(const Operator &x, cplx beta) {
    int d = static_cast<int>(x.rows());
    Operator out = x;
    if (beta == cplx(0.0)) {
        return out;
    }
    double lb = std::log(std::abs(beta));
    double ab = std::arg(beta);
    std::vector<double> lf(d);
    for (int k = 1; k < d; ++k) {
        for (int n = 0; n + k < d; ++n) {
            lf[n] = 0.5 * (std::lgamma(n + k + 1.0) - std::lgamma(n + 1.0));
        }
        double lk = k * lb - std::lgamma(k + 1.0);
        if (lk < -80.0) {
            break;
        }
        cplx ph = std::polar(1.0, k * ab);
        for (int j = 0; j + k < d; ++j) {
            for (int i = 0; i + k < d; ++i) {
                out(i, j) += ph * std::exp(lk + lf[i] + lf[j]) * x(i + k, j + k);
            }
        }
    }
    return out;
}

/// Exact solution over one free-evolution window for H = -chi |1><1| (x) n
/// with sigma_- relaxation at gamma1 and photon loss at gamma2.
inline AncillaBlocks dispersive_window(const Operator &rho, const HardwareParams &p, double t) {
    int d = static_cast<int>(rho.rows());
    auto c = ancilla_prep();
    double g2 = p.gamma2;
    double g1 = p.gamma1;
    double chi = p.chi;
    double gamma = -std::expm1(-g2 * t);
    Operator y = loss_map(rho, gamma, d - 1);
    AncillaBlocks x;
    Operator y11(d, d);
    Operator feed(d, d);
    for (int j = 0; j < d; ++j) {
        for (int i = 0; i < d; ++i) {
            double delta = static_cast<double>(i - j);
            y11(i, j) = std::exp(-g1 * t) * std::polar(1.0, chi * delta * t) * y(i, j);
            cplx z(g1, -chi * delta);
            cplx f;
            if (std::abs(z) * t < 1e-12) {
                f = g1 * t;
            } else {
                f = g1 * (1.0 - std::exp(-z * t)) / z;
            }
            feed(i, j) = f * y(i, j);
        }
    }
    double c0 = std::norm(c[0]);
    double c1 = std::norm(c[1]);
    x[1][1] = c1 * y11;
    x[0][0] = c0 * y + c1 * feed;
    cplx zb(g2, chi);
    cplx beta = (g2 == 0.0) ? cplx(0.0) : g2 * (1.0 - std::exp(-zb * t)) / zb;
    Operator s = jump_series(rho, beta);
    Vector left(d);
    Vector right(d);
    for (int n = 0; n < d; ++n) {
        left(n) = std::exp(-0.5 * g2 * n * t);
        right(n) = std::exp(-0.5 * g2 * n * t) * std::polar(1.0, -chi * n * t);
    }
    x[0][1] = c[0] * std::conj(c[1]) * std::exp(-0.5 * g1 * t) * (left.asDiagonal() * s * right.asDiagonal());
    x[1][0] = x[0][1].adjoint();
    return x;
}

/// Generic window through the RK4 master-equation integrator.
inline AncillaBlocks lindblad_window(const Operator &rho, const LindbladModel &model, double t) {
    auto c = ancilla_prep();
    Operator q(2, 2);
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            q(a, b) = c[a] * std::conj(c[b]);
        }
    }
    double tr = rho.trace().real();
    CompositeState s = CompositeState::product(q, QuantumState::density(rho / tr, false));
    CompositeState e = lindblad_evolve(s, model, t);
    AncillaBlocks x;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            x[a][b] = tr * e.block(a, b);
        }
    }
    return x;
}

/// Strang split-step window for H = sigma_z (x) V with V diagonal in the
/// coupling basis (eigenvalues kappa * x) and the two dissipators, which
/// commute with each other and are applied exactly.
inline AncillaBlocks quadrature_window(const Operator &rho, const SpectralCoupling &c, double kappa,
                                       const HardwareParams &p, double t, int substeps) {
    int d = static_cast<int>(rho.rows());
    AncillaBlocks x = prepare_blocks(rho);
    double tau = t / substeps;
    auto dissipate = [&](double h) {
        double gamma = -std::expm1(-p.gamma2 * h);
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
                if (gamma > 0.0) {
                    x[a][b] = loss_map(x[a][b], gamma, d - 1);
                }
            }
        }
        double keep = std::exp(-p.gamma1 * h);
        x[0][0] += (1.0 - keep) * x[1][1];
        x[1][1] *= keep;
        x[0][1] *= std::sqrt(keep);
        x[1][0] *= std::sqrt(keep);
    };
    Vector ph(c.size());
    for (long k = 0; k < c.size(); ++k) {
        ph(k) = std::polar(1.0, -kappa * c.x(k) * tau);
    }
    const double sgn[2] = {1.0, -1.0};
    for (int s = 0; s < substeps; ++s) {
        dissipate(0.5 * tau);
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
                Operator e = c.to_eigen(x[a][b]);
                for (long j = 0; j < e.cols(); ++j) {
                    for (long i = 0; i < e.rows(); ++i) {
                        cplx ua = sgn[a] > 0 ? ph(i) : std::conj(ph(i));
                        cplx ub = sgn[b] > 0 ? ph(j) : std::conj(ph(j));
                        e(i, j) *= ua * std::conj(ub);
                    }
                }
                x[a][b] = c.from_eigen(e);
            }
        }
        dissipate(0.5 * tau);
    }
    return x;
}

enum class NoisyIntegrator { exact, rk4 };

struct NoisyOptions {
    NoisyIntegrator integrator = NoisyIntegrator::exact;
    int substeps = 4;
};

/// Window propagator for a schedule kind: dispersive windows are exact, the
/// quadrature ones split-step, and rk4 defers to lindblad_evolve.
class NoisyWindow {
   public:
    NoisyWindow(const QpeSchedule &s, const SpectralCoupling &c, const LindbladModel &model, NoisyOptions opt = {})
        : sched_(s), coupling_(c), model_(model), opt_(opt) {
        if (s.kind() == QpeSchedule::Kind::rotation && model.kind && *model.kind != CouplingKind::dispersive) {
            throw InvalidArgument("rotation schedule needs a dispersive noise model");
        }
        if (s.kind() == QpeSchedule::Kind::quadrature && model.kind && *model.kind != CouplingKind::quadrature) {
            throw InvalidArgument("quadrature schedule needs a quadrature noise model");
        }
        if (s.kind() == QpeSchedule::Kind::custom && opt.integrator == NoisyIntegrator::exact) {
            throw InvalidArgument("custom schedules only support the rk4 integrator");
        }
        if (s.kind() == QpeSchedule::Kind::rotation && opt.integrator == NoisyIntegrator::exact &&
            std::abs(model.params.chi - s.coupling()) > 1e-12 * s.coupling()) {
            throw InvalidArgument("noise model chi differs from the schedule coupling");
        }
        if (s.kind() == QpeSchedule::Kind::quadrature && opt.integrator == NoisyIntegrator::exact &&
            std::abs(model.params.g - s.coupling()) > 1e-12 * s.coupling()) {
            throw InvalidArgument("noise model g differs from the schedule coupling");
        }
    }

    AncillaBlocks operator()(const Operator &rho, double t) const {
        if (opt_.integrator == NoisyIntegrator::rk4) {
            return lindblad_window(rho, model_, t);
        }
        if (sched_.kind() == QpeSchedule::Kind::rotation) {
            return dispersive_window(rho, model_.params, t);
        }
        return quadrature_window(rho, coupling_, sched_.kappa(), model_.params, t, opt_.substeps);
    }

    const QpeSchedule &schedule() const {
        return sched_;
    }

   private:
    QpeSchedule sched_;
    SpectralCoupling coupling_;
    LindbladModel model_;
    NoisyOptions opt_;
};

/// One sampled adaptive run with noisy windows; the mode carries a density
/// operator throughout.
inline Trajectory run_noisy_trajectory(const QuantumState &state, const NoisyWindow &window, PhiloxStream &rng) {
    const QpeSchedule &s = window.schedule();
    int m = s.m();
    std::vector<double> t = s.times();
    Operator rho = state.density_matrix();
    std::vector<int> bits;
    double prob = 1.0;
    for (int i = 1; i <= m; ++i) {
        double phi = feedback_phase(bits);
        AncillaBlocks x = window(rho, t[i - 1]);
        Operator b0 = measure_blocks(x, phi, 0);
        Operator b1 = measure_blocks(x, phi, 1);
        double p0 = b0.trace().real();
        double p1 = b1.trace().real();
        double tot = p0 + p1;
        int alpha;
        if (p0 / tot < unreachable_tol) {
            alpha = 1;
        } else if (p1 / tot < unreachable_tol) {
            alpha = 0;
        } else {
            alpha = rng.uniform() < p0 / tot ? 0 : 1;
        }
        Operator &chosen = alpha == 0 ? b0 : b1;
        double pa = (alpha == 0 ? p0 : p1) / tot;
        rho = chosen / chosen.trace().real();
        prob *= pa;
        bits.push_back(alpha);
    }
    double theta = dyadic_theta(bits);
    return Trajectory{std::move(bits), theta, prob, QuantumState::density(std::move(rho))};
}

/// All 2^m noisy branches by tree enumeration. Each window is evaluated once
/// per node and split by the two readout rows.
inline std::vector<Branch> enumerate_noisy_trajectories(const QuantumState &state, const NoisyWindow &window,
                                                        bool keep_states = true) {
    const QpeSchedule &s = window.schedule();
    int m = s.m();
    if (m > 16) {
        throw InvalidArgument("noisy enumeration limited to m <= 16");
    }
    std::vector<double> t = s.times();
    std::vector<Branch> out(std::size_t{1} << m);
    std::vector<int> reg;
    auto recurse = [&](auto &&self, const Operator &rho, int i) -> void {
        if (i > m) {
            std::uint64_t j = dyadic_index(reg);
            out[j].probability = rho.trace().real();
            if (keep_states && out[j].probability >= unreachable_tol) {
                out[j].state = QuantumState::density(rho);
            }
            return;
        }
        double phi = feedback_phase(reg);
        AncillaBlocks x = window(rho, t[i - 1]);
        for (int a = 0; a < 2; ++a) {
            Operator child = measure_blocks(x, phi, a);
            reg.push_back(a);
            if (child.trace().real() >= unreachable_tol * 1e-6) {
                self(self, child, i + 1);
            }
            reg.pop_back();
        }
    };
    recurse(recurse, state.density_matrix(), 1);
    return out;
}

/// Interleaved noisy Q/P detection. The models carry the quadrature coupling
/// for theta = 0 and theta = pi/2.
inline GkpOutcome run_noisy_gkp_detection(const QuantumState &state, const GkpCouplings &c, int m,
                                          const HardwareParams &p, PhiloxStream &rng, int substeps = 4) {
    QpeSchedule sq = QpeSchedule::quadrature(m, QuadratureAxis::Q, p.g);
    std::vector<double> t = sq.times();
    Operator rho = state.density_matrix();
    GkpOutcome o{{}, {}, 0, 0, 0, 0, 1.0, state};
    for (int i = 1; i <= m; ++i) {
        for (int reg = 0; reg < 2; ++reg) {
            const SpectralCoupling &sc = reg == 0 ? c.q : c.p;
            std::vector<int> &bits = reg == 0 ? o.bits_x : o.bits_p;
            double phi = feedback_phase(bits);
            AncillaBlocks x = quadrature_window(rho, sc, sq.kappa(), p, t[i - 1], substeps);
            Operator b[2] = {measure_blocks(x, phi, 0), measure_blocks(x, phi, 1)};
            double pr[2] = {b[0].trace().real(), b[1].trace().real()};
            double tot = pr[0] + pr[1];
            int alpha;
            if (pr[0] / tot < unreachable_tol) {
                alpha = 1;
            } else if (pr[1] / tot < unreachable_tol) {
                alpha = 0;
            } else {
                alpha = rng.uniform() < pr[0] / tot ? 0 : 1;
            }
            rho = b[alpha] / pr[alpha];
            o.probability *= pr[alpha] / tot;
            bits.push_back(alpha);
        }
    }
    fill_thetas(o);
    o.state = QuantumState::density(std::move(rho));
    return o;
}

}  // namespace bqpe
