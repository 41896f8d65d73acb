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
#include <map>
#include <utility>
#include <vector>

#include "bqpe/fock.hpp"
#include "bqpe/qpe.hpp"

namespace bqpe {

/// Q and P registers over one shared eigen-decomposition of Q.
struct GkpCouplings {
    SpectralCoupling q;
    SpectralCoupling p;

    static GkpCouplings make(FockDim dim) {
        HermitianSpectrum s(position_operator(dim));
        return GkpCouplings{SpectralCoupling::quadrature(QuadratureAxis::Q, s),
                            SpectralCoupling::quadrature(QuadratureAxis::P, s)};
    }
    long size() const {
        return q.size();
    }
};

/// theta - round(theta) in [-0.5, 0.5).
inline double gkp_delta(double theta) {
    return theta - std::floor(theta + 0.5);
}

/// A state in the Fock basis that moves between the two quadrature bases.
struct FockState {
    bool pure = true;
    Vector v;
    Operator r;

    static FockState from(const QuantumState &s) {
        FockState f;
        f.pure = s.is_pure();
        if (f.pure) {
            f.v = s.vector();
        } else {
            f.r = s.matrix();
        }
        return f;
    }
    double norm2() const {
        return pure ? v.squaredNorm() : r.trace().real();
    }
    /// W diag(k) W^dag applied from the left (and its adjoint from the right).
    void apply(const SpectralCoupling &c, const Vector &k) {
        if (pure) {
            v = c.basis * k.cwiseProduct(c.basis.adjoint() * v);
        } else {
            Operator e = c.basis.adjoint() * r * c.basis;
            e = k.asDiagonal() * e * k.conjugate().asDiagonal();
            r = c.basis * e * c.basis.adjoint();
        }
    }
    void scale(double s) {
        if (pure) {
            v *= std::sqrt(s);
        } else {
            r *= s;
        }
    }
    QuantumState to_state() const {
        return pure ? QuantumState::pure(v) : QuantumState::density(r);
    }
};

/// Diagonal of the deterministic sign frame (-1)^{round(theta - x)} left by a
/// symmetric coupling on the register that produced theta.
inline Vector gkp_frame_diagonal(const SpectralCoupling &c, double theta) {
    Vector s(c.size());
    for (long k = 0; k < c.size(); ++k) {
        long r = std::lround(theta - c.x(k));
        s(k) = (r % 2 == 0) ? 1.0 : -1.0;
    }
    return s;
}

inline Operator gkp_frame_operator(const SpectralCoupling &c, double theta) {
    return c.from_eigen(Operator(gkp_frame_diagonal(c, theta).asDiagonal()));
}

/// Undo both register frames: S_Q(theta_x) S_P(theta_p).
inline QuantumState gkp_frame_correct(const QuantumState &s, const GkpCouplings &c, double theta_x,
                                      double theta_p) {
    FockState f = FockState::from(s);
    f.apply(c.p, gkp_frame_diagonal(c.p, theta_p));
    f.apply(c.q, gkp_frame_diagonal(c.q, theta_x));
    return f.to_state();
}

struct GkpOutcome {
    std::vector<int> bits_x;
    std::vector<int> bits_p;
    double theta_x = 0.0;
    double theta_p = 0.0;
    double delta_x = 0.0;
    double delta_p = 0.0;
    double probability = 1.0;
    QuantumState state;
};

inline void fill_thetas(GkpOutcome &o) {
    o.theta_x = dyadic_theta(o.bits_x);
    o.theta_p = dyadic_theta(o.bits_p);
    o.delta_x = gkp_delta(o.theta_x);
    o.delta_p = gkp_delta(o.theta_p);
}

/// Samples interleaved Q then P cells for i = 1..m with separate registers.
inline GkpOutcome run_gkp_detection(const QuantumState &state, const GkpCouplings &c, int m, PhiloxStream &rng) {
    require_same_dim(state.dim().value(), c.size(), "run_gkp_detection");
    FockState f = FockState::from(state);
    GkpOutcome o{{}, {}, 0, 0, 0, 0, 1.0, state};
    for (int i = 1; i <= m; ++i) {
        for (int reg = 0; reg < 2; ++reg) {
            const SpectralCoupling &sc = reg == 0 ? c.q : c.p;
            std::vector<int> &bits = reg == 0 ? o.bits_x : o.bits_p;
            double phi = feedback_phase(bits);
            Vector k[2] = {sc.kraus_diagonal(m, i, phi, 0), sc.kraus_diagonal(m, i, phi, 1)};
            FockState br[2] = {f, f};
            double p[2];
            double n2 = f.norm2();
            for (int a = 0; a < 2; ++a) {
                br[a].apply(sc, k[a]);
                p[a] = br[a].norm2() / n2;
            }
            int alpha;
            if (p[0] < unreachable_tol) {
                alpha = 1;
            } else if (p[1] < unreachable_tol) {
                alpha = 0;
            } else {
                alpha = rng.uniform() < p[0] / (p[0] + p[1]) ? 0 : 1;
            }
            f = std::move(br[alpha]);
            f.scale(1.0 / f.norm2());
            o.probability *= p[alpha];
            bits.push_back(alpha);
        }
    }
    fill_thetas(o);
    o.state = f.to_state();
    return o;
}

/// Every (theta_x, theta_p) branch with its unnormalized weight, depth-first.
inline std::vector<GkpOutcome> enumerate_gkp(const QuantumState &state, const GkpCouplings &c, int m) {
    require_same_dim(state.dim().value(), c.size(), "enumerate_gkp");
    std::vector<GkpOutcome> out;
    GkpOutcome cur{{}, {}, 0, 0, 0, 0, 1.0, state};
    auto recurse = [&](auto &&self, const FockState &f, int step) -> void {
        if (step == 2 * m) {
            double p = f.norm2();
            if (p < unreachable_tol) {
                return;
            }
            GkpOutcome o = cur;
            o.probability = p;
            FockState g = f;
            g.scale(1.0 / p);
            o.state = g.to_state();
            fill_thetas(o);
            out.push_back(std::move(o));
            return;
        }
        int i = step / 2 + 1;
        bool xreg = step % 2 == 0;
        const SpectralCoupling &sc = xreg ? c.q : c.p;
        std::vector<int> &bits = xreg ? cur.bits_x : cur.bits_p;
        double phi = feedback_phase(bits);
        for (int a = 0; a < 2; ++a) {
            FockState child = f;
            child.apply(sc, sc.kraus_diagonal(m, i, phi, a));
            if (child.norm2() < unreachable_tol * 1e-6) {
                continue;
            }
            bits.push_back(a);
            self(self, child, step + 1);
            bits.pop_back();
        }
    };
    recurse(recurse, FockState::from(state), 0);
    return out;
}

/// D((dx + i dp) sqrt(pi/2)) up to a global phase, as exp(-i sqrt(pi) dx P)
/// exp(i sqrt(pi) dp Q) evaluated in the shared quadrature eigenbases.
inline Operator gkp_displacement(const GkpCouplings &c, double dx, double dp) {
    long d = c.size();
    Vector ep(d);
    Vector eq(d);
    for (long k = 0; k < d; ++k) {
        // x = eigenvalue / sqrt(pi), so sqrt(pi) * eigenvalue = pi x.
        ep(k) = std::polar(1.0, -pi * dx * c.p.x(k));
        eq(k) = std::polar(1.0, pi * dp * c.q.x(k));
    }
    Operator dpx = c.p.basis * ep.asDiagonal() * c.p.basis.adjoint();
    Operator dqp = c.q.basis * eq.asDiagonal() * c.q.basis.adjoint();
    return dpx * dqp;
}

/// Marginal probability of delta_x over dyadic outcomes.
inline std::map<double, double> gkp_delta_x_histogram(const std::vector<GkpOutcome> &outcomes) {
    std::map<double, double> h;
    for (const auto &o : outcomes) {
        h[o.delta_x] += o.probability;
    }
    return h;
}

inline double histogram_peak(const std::map<double, double> &h) {
    double best = 0.0;
    double arg = 0.0;
    for (const auto &[k, v] : h) {
        if (v > best) {
            best = v;
            arg = k;
        }
    }
    return arg;
}

}  // namespace bqpe
