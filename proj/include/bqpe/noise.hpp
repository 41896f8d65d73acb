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

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bqpe/fock.hpp"

namespace bqpe {

/// Pure-loss channel with E_k = sqrt(gamma^k/k!) (1-gamma)^{n/2} a^k and
/// gamma = 1 - exp(-chi). kmax < 0 keeps every term the truncation allows.
struct LossChannel {
    double chi = 0.0;
    int kmax = -1;

    static LossChannel from_gamma(double gamma, int kmax = -1) {
        if (!(gamma >= 0.0 && gamma < 1.0)) {
            throw InvalidArgument("loss probability must lie in [0, 1)");
        }
        return LossChannel{-std::log1p(-gamma), kmax};
    }
    double gamma() const {
        return -std::expm1(-chi);
    }
    int effective_kmax(int d) const {
        return kmax < 0 ? d - 1 : std::min(kmax, d - 1);
    }
};

/// log of the coefficient of rho_{n+k, n'+k} in (E_k rho E_k^dag)_{n n'} split
/// per index: c_k(n) with the product c_k(n) c_k(n').
inline double loss_log_coefficient(double log_gamma, double log_keep, int k, int n) {
    return 0.5 * (k * log_gamma - std::lgamma(k + 1.0) + std::lgamma(n + k + 1.0) - std::lgamma(n + 1.0)) +
           0.5 * n * log_keep;
}

inline Operator loss_kraus(const LossChannel &ch, FockDim dim, int k) {
    int d = dim.value();
    Operator e = Operator::Zero(d, d);
    double g = ch.gamma();
    if (k == 0) {
        for (int n = 0; n < d; ++n) {
            e(n, n) = std::pow(1.0 - g, 0.5 * n);
        }
        return e;
    }
    if (g == 0.0) {
        return e;
    }
    double lg = std::log(g);
    double lk = std::log1p(-g);
    for (int n = 0; n + k < d; ++n) {
        e(n, n + k) = std::exp(loss_log_coefficient(lg, lk, k, n));
    }
    return e;
}

/// Completeness defect of the truncated Kraus set on the interior block.
inline double loss_completeness_error(const LossChannel &ch, FockDim dim) {
    int d = dim.value();
    Operator sum = Operator::Zero(d, d);
    for (int k = 0; k <= ch.effective_kmax(d); ++k) {
        Operator e = loss_kraus(ch, dim, k);
        sum += e.adjoint() * e;
    }
    int in = interior_size(d);
    return (sum.topLeftCorner(in, in) - Operator::Identity(in, in)).cwiseAbs().maxCoeff();
}

/// Elementwise application of the loss channel to an operator (not
/// necessarily Hermitian). Optional per-term weights multiply the k-th term;
/// used for the complex jump series of off-diagonal ancilla blocks.
inline Operator loss_map(const Operator &x, double gamma, int kmax, const std::vector<cplx> *weights = nullptr) {
    int d = static_cast<int>(x.rows());
    Operator out = Operator::Zero(d, d);
    if (gamma == 0.0 && weights == nullptr) {
        return x;
    }
    double lg = gamma > 0.0 ? std::log(gamma) : 0.0;
    double lk = std::log1p(-gamma);
    std::vector<double> c(d);
    for (int k = 0; k <= kmax; ++k) {
        if (k > 0 && gamma == 0.0 && weights == nullptr) {
            break;
        }
        cplx w = weights != nullptr ? (*weights)[k] : cplx(1.0);
        if (w == cplx(0.0)) {
            continue;
        }
        for (int n = 0; n + k < d; ++n) {
            c[n] = (k == 0) ? std::exp(0.5 * n * lk) : std::exp(loss_log_coefficient(lg, lk, k, n));
        }
        for (int j = 0; j + k < d; ++j) {
            for (int i = 0; i + k < d; ++i) {
                out(i, j) += w * c[i] * c[j] * x(i + k, j + k);
            }
        }
    }
    return out;
}

inline QuantumState apply_loss(const QuantumState &state, const LossChannel &ch) {
    int d = state.dim().value();
    double g = ch.gamma();
    if (!(g >= 0.0 && g < 1.0)) {
        throw InvalidArgument("loss probability must lie in [0, 1)");
    }
    Operator rho = state.density_matrix();
    if (g == 0.0) {
        return QuantumState::density(std::move(rho));
    }
    int kmax = ch.effective_kmax(d);
    if (kmax < d - 1) {
        Operator e = loss_kraus(ch, state.dim(), kmax);
        double w = (e * rho * e.adjoint()).trace().real();
        if (w > 1e-8) {
            throw CutoffError("loss channel kmax " + std::to_string(kmax) + " drops weight " + std::to_string(w));
        }
    }
    return QuantumState::density(loss_map(rho, g, kmax));
}

/// rho on qubit (x) mode; the composite index is q * dim + n.
class CompositeState {
   public:
    CompositeState(Operator rho, FockDim dim) : rho_(std::move(rho)), dim_(dim) {
        if (rho_.rows() != 2 * dim.value() || rho_.cols() != 2 * dim.value()) {
            throw InvalidDimension("composite state must be 2*dim square");
        }
    }
    static CompositeState product(const Operator &qubit, const QuantumState &mode) {
        Operator m = mode.density_matrix();
        int d = mode.dim().value();
        Operator r(2 * d, 2 * d);
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
                r.block(a * d, b * d, d, d) = qubit(a, b) * m;
            }
        }
        return CompositeState(std::move(r), mode.dim());
    }
    const Operator &matrix() const noexcept {
        return rho_;
    }
    FockDim dim() const noexcept {
        return dim_;
    }
    Operator block(int a, int b) const {
        int d = dim_.value();
        return rho_.block(a * d, b * d, d, d);
    }
    Operator mode_reduced() const {
        return block(0, 0) + block(1, 1);
    }
    double qubit_population(int q) const {
        return block(q, q).trace().real();
    }

   private:
    Operator rho_;
    FockDim dim_;
};

inline Operator kron(const Operator &a, const Operator &b) {
    Operator out(a.rows() * b.rows(), a.cols() * b.cols());
    for (long i = 0; i < a.rows(); ++i) {
        for (long j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

struct JumpOperator {
    Operator L;
    double rate;
};

/// Physical rates and couplings in rad/us and 1/us. Also carried by models
/// built from hardware tables so the engine can use exact window propagators.
struct HardwareParams {
    double chi = 2.0 * pi * 2.0;
    double g = 2.0 * pi * 21.5;
    double gamma1 = 0.02;
    double gamma2 = 0.001;

    static HardwareParams from_table(double chi_mhz, double g_mhz, double gamma1, double gamma2) {
        return HardwareParams{2.0 * pi * chi_mhz, 2.0 * pi * g_mhz, gamma1, gamma2};
    }
    HardwareParams noiseless() const {
        HardwareParams p = *this;
        p.gamma1 = 0.0;
        p.gamma2 = 0.0;
        return p;
    }
};

enum class CouplingKind { dispersive, quadrature };

struct LindbladModel {
    Operator H;
    std::vector<JumpOperator> jumps;
    double step = 0.0;
    std::optional<CouplingKind> kind;
    double theta = 0.0;
    HardwareParams params;
};

/// Generic fixed-step RK4 propagation of drho/dt = -i[H, rho] + sum_k G_k D[L_k].
inline CompositeState lindblad_evolve(const CompositeState &state, const LindbladModel &model, double t) {
    if (t < 0.0 || !std::isfinite(t)) {
        throw InvalidArgument("evolution time must be non-negative");
    }
    long n = state.matrix().rows();
    require_same_dim(model.H.rows(), n, "lindblad_evolve");
    for (const auto &j : model.jumps) {
        require_same_dim(j.L.rows(), n, "lindblad_evolve");
        if (j.rate < 0.0) {
            throw InvalidArgument("jump rates must be non-negative");
        }
    }
    if (t == 0.0) {
        return state;
    }
    if (!(model.step > 0.0)) {
        throw InvalidArgument("integration step must be positive");
    }
    Operator heff = model.H;
    std::vector<std::pair<Operator, double>> active;
    for (const auto &j : model.jumps) {
        if (j.rate > 0.0) {
            heff -= cplx(0.0, 0.5 * j.rate) * (j.L.adjoint() * j.L);
            active.emplace_back(j.L, j.rate);
        }
    }
    Operator heff_dag = heff.adjoint();
    const cplx mi(0.0, -1.0);
    auto deriv = [&](const Operator &r) {
        Operator out = mi * (heff * r - r * heff_dag);
        for (const auto &[L, rate] : active) {
            out += rate * (L * r * L.adjoint());
        }
        return out;
    };
    Operator rho = state.matrix();
    double elapsed = 0.0;
    while (elapsed < t) {
        double h = std::min(model.step, t - elapsed);
        if (h <= 1e-15 * t) {
            break;
        }
        double tr0 = rho.trace().real();
        Operator k1 = deriv(rho);
        Operator k2 = deriv(rho + 0.5 * h * k1);
        Operator k3 = deriv(rho + 0.5 * h * k2);
        Operator k4 = deriv(rho + h * k3);
        rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        rho = 0.5 * (rho + rho.adjoint()).eval();
        if (!rho.allFinite()) {
            throw IntegratorError("master equation integration diverged; reduce the step");
        }
        double drift = std::abs(rho.trace().real() - tr0);
        if (drift > 1e-6) {
            throw IntegratorError("trace drift " + std::to_string(drift) + " in one step of " + std::to_string(h) +
                                  " us; reduce the step");
        }
        elapsed += h;
    }
    return CompositeState(std::move(rho), state.dim());
}

inline double default_step(const HardwareParams &p) {
    double s = std::min(0.01 / p.chi, 0.01 / p.g);
    double gmax = std::max(p.gamma1, p.gamma2);
    if (gmax > 0.0) {
        s = std::min(s, 1.0 / (100.0 * gmax));
    }
    return s;
}

/// Dispersive: H = -chi |1><1| (x) n. Quadrature: H = g sigma_z (x)
/// (a e^{-i theta} + a^dag e^{i theta}). Jumps sigma_- (x) I at gamma1 and
/// I (x) a at gamma2.
inline LindbladModel default_hardware_model(CouplingKind kind, FockDim dim, const HardwareParams &p = {},
                                            double theta = 0.0) {
    int d = dim.value();
    Operator a = annihilation(dim);
    Operator id_mode = Operator::Identity(d, d);
    Operator p1 = Operator::Zero(2, 2);
    p1(1, 1) = 1.0;
    Operator sz = Operator::Zero(2, 2);
    sz(0, 0) = 1.0;
    sz(1, 1) = -1.0;
    Operator sm = Operator::Zero(2, 2);
    sm(0, 1) = 1.0;
    LindbladModel m;
    if (kind == CouplingKind::dispersive) {
        m.H = kron(p1, -p.chi * number_operator(dim));
    } else {
        m.H = kron(sz, p.g * std::sqrt(2.0) * quadrature_operator(theta, dim));
    }
    m.jumps.push_back({kron(sm, id_mode), p.gamma1});
    m.jumps.push_back({kron(Operator::Identity(2, 2), a), p.gamma2});
    m.step = default_step(p);
    m.kind = kind;
    m.theta = theta;
    m.params = p;
    return m;
}

}  // namespace bqpe
