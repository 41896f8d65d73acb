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
#include <numeric>
#include <string>
#include <vector>

#include "bqpe/qpe.hpp"

namespace bqpe {

struct CrtPlan {
    std::vector<int> moduli;
    int m = 8;

    CrtPlan(std::vector<int> mods, int rounds) : moduli(std::move(mods)), m(rounds) {
        if (moduli.empty()) {
            throw PlanError("CRT plan needs at least one modulus");
        }
        for (std::size_t i = 0; i < moduli.size(); ++i) {
            if (moduli[i] < 1) {
                throw PlanError("moduli must be positive");
            }
            for (std::size_t j = i + 1; j < moduli.size(); ++j) {
                if (std::gcd(moduli[i], moduli[j]) != 1) {
                    throw PlanError("moduli " + std::to_string(moduli[i]) + " and " + std::to_string(moduli[j]) +
                                    " are not coprime");
                }
            }
        }
        if (rounds < 1) {
            throw PlanError("rounds per stage must be positive");
        }
    }

    std::int64_t M() const {
        std::int64_t p = 1;
        for (int n : moduli) {
            p *= n;
        }
        return p;
    }
};

/// Returns (g, x) with a x = g (mod b) by extended Euclid.
inline std::pair<std::int64_t, std::int64_t> extended_gcd(std::int64_t a, std::int64_t b) {
    std::int64_t old_r = a, r = b, old_s = 1, s = 0;
    while (r != 0) {
        std::int64_t q = old_r / r;
        std::int64_t t = old_r - q * r;
        old_r = r;
        r = t;
        t = old_s - q * s;
        old_s = s;
        s = t;
    }
    return {old_r, old_s};
}

/// x = sum_i l_i M_i y_i mod M with M_i = M / N_i and y_i = M_i^{-1} mod N_i.
inline std::int64_t crt_solve(const std::vector<int> &residues, const std::vector<int> &moduli) {
    if (residues.size() != moduli.size()) {
        throw PlanError("residue and modulus lists differ in length");
    }
    CrtPlan plan(moduli, 1);
    std::int64_t M = plan.M();
    std::int64_t x = 0;
    for (std::size_t i = 0; i < moduli.size(); ++i) {
        std::int64_t n = moduli[i];
        if (residues[i] < 0 || residues[i] >= n) {
            throw PlanError("residue " + std::to_string(residues[i]) + " outside [0, " + std::to_string(n) + ")");
        }
        std::int64_t mi = M / n;
        auto [g, y] = extended_gcd(mi % n, n);
        (void)g;
        y = ((y % n) + n) % n;
        x = (x + static_cast<std::int64_t>(residues[i]) * ((mi * y) % M)) % M;
    }
    return x;
}

struct CrtDetection {
    std::int64_t n;
    std::vector<int> residues;
    std::vector<double> thetas;
    QuantumState state;
};

/// Circular distance from theta to l / N.
inline double residue_distance(double theta, int N, int l) {
    double d = std::abs(theta - static_cast<double>(l) / N);
    d = std::fmod(d, 1.0);
    return std::min(d, 1.0 - d);
}

/// One staged run: every modulus in order, each stage fed the previous
/// conditioned state.
inline CrtDetection run_crt_stages(const QuantumState &state, const CrtPlan &plan, PhiloxStream &rng) {
    QuantumState cur = state;
    std::vector<int> residues;
    std::vector<double> thetas;
    for (int N : plan.moduli) {
        Trajectory t = run_trajectory(cur, SpectralCoupling::rotation(N, cur.dim()), plan.m, rng);
        residues.push_back(rotation_bin(t.theta, N));
        thetas.push_back(t.theta);
        cur = t.state;
    }
    return CrtDetection{-1, std::move(residues), std::move(thetas), std::move(cur)};
}

inline CrtDetection detect_photon_number(const QuantumState &state, const CrtPlan &plan, PhiloxStream &rng) {
    CrtDetection d = run_crt_stages(state, plan, rng);
    for (std::size_t i = 0; i < plan.moduli.size(); ++i) {
        int N = plan.moduli[i];
        if (residue_distance(d.thetas[i], N, d.residues[i]) > 1.0 / (4.0 * N)) {
            throw LowConfidence("stage " + std::to_string(i) + " outcome " + std::to_string(d.thetas[i]) +
                                    " is not within 1/(4N) of a residue of " + std::to_string(N),
                                d.thetas);
        }
    }
    d.n = crt_solve(d.residues, plan.moduli);
    return d;
}

struct FockGeneration {
    QuantumState state;
    std::size_t attempts;
    double acceptance_rate;
    std::vector<double> thetas;
};

/// Repeats staged runs with streams (seed, attempt) until every stage lands
/// in the bin of target mod N_i.
inline FockGeneration generate_fock(const QuantumState &state, std::int64_t target, const CrtPlan &plan,
                                    std::uint64_t seed, std::size_t max_attempts) {
    if (target < 0 || target >= plan.M()) {
        throw PlanError("target " + std::to_string(target) + " outside [0, " + std::to_string(plan.M()) + ")");
    }
    if (target >= state.dim().value() || state.populations()(target) < 1e-14) {
        throw UnreachableTrajectory("input has no weight on the target Fock level", 0.0);
    }
    for (std::size_t a = 0; a < max_attempts; ++a) {
        PhiloxStream rng(seed, a);
        CrtDetection d = run_crt_stages(state, plan, rng);
        bool ok = true;
        for (std::size_t i = 0; i < plan.moduli.size(); ++i) {
            if (d.residues[i] != static_cast<int>(target % plan.moduli[i])) {
                ok = false;
                break;
            }
        }
        if (ok) {
            return FockGeneration{std::move(d.state), a + 1, 1.0 / static_cast<double>(a + 1), d.thetas};
        }
    }
    throw SelectionFailure("no accepted run in " + std::to_string(max_attempts) + " attempts", max_attempts, 0);
}

/// Exact post-selection onto the target bins. Each stage maps rho to the sum
/// of its in-bin branches, which is linear, so later stages act on the
/// unnormalized mixture. Returns the accepted state and its probability.
inline std::pair<QuantumState, double> postselect_fock_exact(const QuantumState &state, std::int64_t target,
                                                             const CrtPlan &plan) {
    int d = state.dim().value();
    Operator rho = state.density_matrix();
    for (int N : plan.moduli) {
        SpectralCoupling c = SpectralCoupling::rotation(N, state.dim());
        int want = static_cast<int>(target % N);
        Operator sum = Operator::Zero(d, d);
        std::size_t count = std::size_t{1} << plan.m;
        for (std::size_t j = 0; j < count; ++j) {
            double theta = std::ldexp(static_cast<double>(j), -plan.m);
            if (rotation_bin(theta, N) != want) {
                continue;
            }
            Vector cf = closed_form_coefficients(c, plan.m, theta);
            sum += cf.asDiagonal() * rho * cf.conjugate().asDiagonal();
        }
        rho = std::move(sum);
    }
    double p = rho.trace().real();
    if (p < 1e-14) {
        throw UnreachableTrajectory("target bins have vanishing probability", p);
    }
    return {QuantumState::density(rho / p), p};
}

}  // namespace bqpe
