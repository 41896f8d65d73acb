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
#include <complex>
#include <string>
#include <variant>

#include "bqpe/fock.hpp"

namespace bqpe {

inline constexpr double truncation_tail_tol = 1e-8;

struct CatFamily {
    cplx alpha;
};

struct BinomialFamily {
    int K;
};

struct RotationCodeSpec {
    int N;
    std::variant<CatFamily, BinomialFamily> family;
    int mu;
    FockDim dim;
};

struct GkpSpec {
    double delta;
    int mu;
    /// 0 selects the default range.
    int k_range;
    FockDim dim;
};

inline double log_binomial(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

inline double binomial_coefficient(int n, int k) {
    if (k < 0 || k > n) {
        return 0.0;
    }
    return std::round(std::exp(log_binomial(n, k)));
}

/// Default truncations: 100 for cat, 4KN for binomial, 701 for GKP.
inline int default_cat_dim() {
    return 100;
}
inline int default_binomial_dim(int N, int K) {
    return 4 * K * N;
}
inline int default_gkp_dim() {
    return 701;
}

/// Coherent amplitudes exp(-|a|^2/2) a^n / sqrt(n!) evaluated in log space.
inline Vector coherent_amplitudes(cplx alpha, int d) {
    Vector c = Vector::Zero(d);
    double r = std::abs(alpha);
    if (r == 0.0) {
        c(0) = 1.0;
        return c;
    }
    double phase = std::arg(alpha);
    double lr = std::log(r);
    for (int n = 0; n < d; ++n) {
        double lg = -0.5 * r * r + n * lr - 0.5 * std::lgamma(n + 1.0);
        c(n) = std::polar(std::exp(lg), n * phase);
    }
    return c;
}

inline QuantumState coherent_state(cplx alpha, FockDim dim) {
    if (!std::isfinite(alpha.real()) || !std::isfinite(alpha.imag())) {
        throw NumericError("coherent amplitude is not finite");
    }
    Vector c = coherent_amplitudes(alpha, dim.value());
    double leaked = std::max(0.0, 1.0 - c.squaredNorm());
    if (leaked > truncation_tail_tol) {
        throw InsufficientDimension("coherent state |" + std::to_string(std::abs(alpha)) +
                                        "> leaks weight beyond dimension " + std::to_string(dim.value()),
                                    leaked);
    }
    return QuantumState::pure(std::move(c));
}

/// Cat codeword as the residue class n = mu N (mod 2N) of |alpha>. The sum of
/// 2N rotated coherent states has exactly this support and these relative
/// amplitudes.
inline QuantumState cat_state(const RotationCodeSpec &spec) {
    const auto *cat = std::get_if<CatFamily>(&spec.family);
    if (cat == nullptr) {
        throw InvalidArgument("cat_state needs a cat family spec");
    }
    if (spec.N < 1 || (spec.mu != 0 && spec.mu != 1)) {
        throw InvalidArgument("cat spec needs N >= 1 and mu in {0, 1}");
    }
    Vector c = coherent_state(cat->alpha, spec.dim).vector();
    RealVector mask = residue_mask(spec.dim, 2 * spec.N, spec.mu * spec.N);
    c = c.cwiseProduct(mask.cast<cplx>());
    if (c.norm() < 1e-150) {
        throw InvalidState("cat codeword vanishes for this amplitude");
    }
    return QuantumState::pure(std::move(c));
}

inline QuantumState binomial_state(const RotationCodeSpec &spec) {
    const auto *bin = std::get_if<BinomialFamily>(&spec.family);
    if (bin == nullptr) {
        throw InvalidArgument("binomial_state needs a binomial family spec");
    }
    int N = spec.N;
    int K = bin->K;
    if (N < 1 || K < 1 || (spec.mu != 0 && spec.mu != 1)) {
        throw InvalidArgument("binomial spec needs N >= 1, K >= 1 and mu in {0, 1}");
    }
    if (spec.dim.value() <= K * N) {
        throw InsufficientDimension("binomial code needs dimension above K*N = " + std::to_string(K * N), 0.0);
    }
    Vector c = Vector::Zero(spec.dim.value());
    for (int j = spec.mu; j <= K; j += 2) {
        c(j * N) = std::sqrt(binomial_coefficient(K, j) / std::pow(2.0, K - 1));
    }
    return QuantumState::pure(std::move(c));
}

inline QuantumState code_state(const RotationCodeSpec &spec) {
    if (std::holds_alternative<CatFamily>(spec.family)) {
        return cat_state(spec);
    }
    return binomial_state(spec);
}

/// (|0_L> + |1_L>)/sqrt(2) from the normalized codewords.
inline QuantumState logical_plus(RotationCodeSpec spec) {
    spec.mu = 0;
    Vector z = code_state(spec).vector();
    spec.mu = 1;
    Vector o = code_state(spec).vector();
    return QuantumState::pure((z + o) / std::sqrt(2.0));
}

/// sum_{n=0}^{KN} sqrt(2^{1-K} C(K, floor(n/N))) |n>, normalized.
inline QuantumState binomial_primitive(int N, int K, FockDim dim) {
    if (N < 1 || K < 1) {
        throw InvalidArgument("binomial primitive needs N >= 1 and K >= 1");
    }
    if (dim.value() <= K * N) {
        throw InsufficientDimension("binomial primitive needs dimension above K*N = " + std::to_string(K * N),
                                    0.0);
    }
    Vector c = Vector::Zero(dim.value());
    for (int n = 0; n <= K * N; ++n) {
        c(n) = std::sqrt(binomial_coefficient(K, n / N) / std::pow(2.0, K - 1));
    }
    return QuantumState::pure(std::move(c));
}

/// S(r)|0> with S(r) = exp(r (a^2 - a^dag^2)/2), so Var(Q) = exp(-2r)/2 and
/// r < 0 squeezes momentum.
inline QuantumState squeezed_vacuum(double r, FockDim dim) {
    if (!std::isfinite(r) || std::abs(r) > 3.0) {
        throw InvalidArgument("squeezing parameter must satisfy |r| <= 3");
    }
    int d = dim.value();
    Vector c = Vector::Zero(d);
    if (r == 0.0) {
        c(0) = 1.0;
        return QuantumState::pure(std::move(c), false);
    }
    double t = std::tanh(r);
    double lt = std::log(std::abs(t));
    double pref = -0.5 * std::log(std::cosh(r));
    for (int n = 0; 2 * n < d; ++n) {
        double lg = pref + n * lt + 0.5 * std::lgamma(2.0 * n + 1.0) - n * std::log(2.0) - std::lgamma(n + 1.0);
        double sign = (n % 2 == 1 && t > 0) ? -1.0 : 1.0;
        c(2 * n) = sign * std::exp(lg);
    }
    double leaked = std::max(0.0, 1.0 - c.squaredNorm());
    if (leaked > truncation_tail_tol) {
        throw InsufficientDimension("squeezed vacuum leaks weight beyond dimension " + std::to_string(d), leaked);
    }
    return QuantumState::pure(std::move(c));
}

/// max(ceil(4/(sqrt(pi) delta)), smallest k with exp(-delta^2 pi (2k)^2) < 1e-8).
inline int default_gkp_k_range(double delta) {
    int k_min = static_cast<int>(std::ceil(4.0 / (std::sqrt(pi) * delta)));
    int k = 0;
    while (std::exp(-delta * delta * pi * (2.0 * k) * (2.0 * k)) >= 1e-8) {
        ++k;
    }
    return std::max(k_min, k);
}

/// Normalized exp(-delta^2 n) applied to a comb of position eigenvectors at
/// (2k + mu) sqrt(pi).
inline QuantumState gkp_state(const GkpSpec &spec) {
    if (!(spec.delta > 0.0) || !std::isfinite(spec.delta)) {
        throw InvalidArgument("GKP envelope delta must be positive");
    }
    if (spec.mu != 0 && spec.mu != 1) {
        throw InvalidArgument("GKP mu must be 0 or 1");
    }
    int k_range = spec.k_range > 0 ? spec.k_range : default_gkp_k_range(spec.delta);
    int d = spec.dim.value();
    Vector comb = Vector::Zero(d);
    for (int k = -k_range; k <= k_range; ++k) {
        comb += position_eigenvector((2.0 * k + spec.mu) * std::sqrt(pi), spec.dim);
    }
    for (int n = 0; n < d; ++n) {
        comb(n) *= std::exp(-spec.delta * spec.delta * n);
    }
    double nrm2 = comb.squaredNorm();
    int edge = d - interior_size(d);
    double tail = comb.tail(edge).squaredNorm() / nrm2;
    if (tail > truncation_tail_tol) {
        throw InsufficientDimension("GKP state with delta " + std::to_string(spec.delta) +
                                        " needs more than " + std::to_string(d) + " levels",
                                    tail);
    }
    return QuantumState::pure(std::move(comb));
}

}  // namespace bqpe
