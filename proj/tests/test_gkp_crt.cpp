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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "bqpe/codes.hpp"
#include "bqpe/crt.hpp"
#include "bqpe/gkp.hpp"
#include "bqpe/metrics.hpp"

using namespace bqpe;

namespace {

// Comb projection sum_k |q_k><q_k| psi with q_k = (theta + k) sqrt(pi).
QuantumState comb_projection(const QuantumState &s, double theta, int k_max) {
    Vector out = Vector::Zero(s.dim().value());
    for (int k = -k_max; k <= k_max; ++k) {
        Vector q = position_eigenvector((theta + k) * std::sqrt(pi), s.dim());
        out += q * q.dot(s.vector());
    }
    return QuantumState::pure(out);
}

std::int64_t brute_force_crt(const std::vector<int> &res, const std::vector<int> &mods) {
    std::int64_t M = 1;
    for (int n : mods) {
        M *= n;
    }
    for (std::int64_t x = 0; x < M; ++x) {
        bool ok = true;
        for (std::size_t i = 0; i < mods.size(); ++i) {
            ok = ok && x % mods[i] == res[i];
        }
        if (ok) {
            return x;
        }
    }
    return -1;
}

}  // namespace

TEST(Gkp, DeltaWrapsToHalfOpenInterval) {
    EXPECT_DOUBLE_EQ(gkp_delta(0.0), 0.0);
    EXPECT_DOUBLE_EQ(gkp_delta(0.125), 0.125);
    EXPECT_DOUBLE_EQ(gkp_delta(0.875), -0.125);
    EXPECT_DOUBLE_EQ(gkp_delta(0.5), -0.5);
}

TEST(Gkp, EnumerationIsNormalized) {
    FockDim d(150);
    QuantumState s = gkp_state({0.4, 0, 0, d});
    auto outcomes = enumerate_gkp(s, GkpCouplings::make(d), 2);
    EXPECT_EQ(outcomes.size(), 16u);
    double total = 0.0;
    for (const auto &o : outcomes) {
        total += o.probability;
    }
    EXPECT_NEAR(total, 1.0, 1e-10);
}

TEST(Gkp, UndisplacedPeaksAtZero) {
    FockDim d(150);
    GkpCouplings c = GkpCouplings::make(d);
    QuantumState s = gkp_state({0.4, 0, 0, d});
    auto outcomes = enumerate_gkp(s, c, 3);
    EXPECT_DOUBLE_EQ(histogram_peak(gkp_delta_x_histogram(outcomes)), 0.0);
    std::map<double, double> hp;
    for (const auto &o : outcomes) {
        hp[o.delta_p] += o.probability;
    }
    EXPECT_DOUBLE_EQ(histogram_peak(hp), 0.0);
}

TEST(Gkp, InjectedDisplacementRecovered) {
    FockDim d(200);
    GkpCouplings c = GkpCouplings::make(d);
    int m = 3;
    QuantumState s = gkp_state({0.35, 0, 0, d});
    QuantumState shifted = QuantumState::pure(displacement(cplx(0.1 * std::sqrt(pi / 2.0), 0.0), d) * s.vector());
    double peak = histogram_peak(gkp_delta_x_histogram(enumerate_gkp(shifted, c, m)));
    EXPECT_NEAR(peak, 0.1, std::ldexp(1.0, -m));
}

TEST(Gkp, DisplacementHelperMatchesFockDisplacement) {
    FockDim d(120);
    GkpCouplings c = GkpCouplings::make(d);
    QuantumState s = gkp_state({0.4, 0, 0, d});
    Vector a = gkp_displacement(c, 0.1, -0.05) * s.vector();
    Vector b = displacement(cplx(0.1, -0.05) * std::sqrt(pi / 2.0), d) * s.vector();
    EXPECT_NEAR(std::abs(a.dot(b)), 1.0, 1e-6);
}

TEST(Gkp, SampledMatchesEnumeratedFidelity) {
    FockDim d(120);
    GkpCouplings c = GkpCouplings::make(d);
    QuantumState s = gkp_state({0.4, 0, 0, d});
    GkpFidelityReport exact = gkp_detection_fidelity(s, s, c, 2, std::nullopt, 0);
    GkpFidelityReport sampled = gkp_detection_fidelity(s, s, c, 2, std::nullopt, 400, 3, 2);
    EXPECT_NEAR(sampled.average, exact.average, 4.0 * sampled.standard_error + 1e-3);
    GkpFidelityReport again = gkp_detection_fidelity(s, s, c, 2, std::nullopt, 400, 3, 1);
    EXPECT_EQ(sampled.average, again.average);
}

void expect_ideal_limit(int dim) {
    FockDim d(dim);
    QuantumState s = gkp_state({0.4, 0, 0, d});
    SpectralCoupling q = SpectralCoupling::quadrature(QuadratureAxis::Q, d);
    QuantumState oracle = comb_projection(s, 0.0, 10);
    double prev = 0.0;
    for (int m : {2, 3, 4}) {
        Branch b = trajectory_superoperator(s, q, m, std::vector<int>(m, 0));
        ASSERT_TRUE(b.state.has_value());
        double f = fidelity(*b.state, oracle);
        EXPECT_GT(f, prev) << "dim=" << dim << " m=" << m;
        prev = f;
    }
}

TEST(Gkp, IdealLimitApproachesCombProjection) {
    expect_ideal_limit(150);
}

// The truncated position spectrum must resolve the 2^-m window.
TEST(Gkp, IdealLimitApproachesCombProjectionResolved) {
    expect_ideal_limit(300);
}

TEST(Crt, SolveExamples) {
    EXPECT_EQ(crt_solve({3, 12}, {7, 15}), 87);
    EXPECT_EQ(crt_solve({0, 0}, {7, 15}), 0);
    EXPECT_EQ(crt_solve({1}, {4}), 1);
    EXPECT_THROW(crt_solve({7, 0}, {7, 15}), PlanError);
    EXPECT_THROW(crt_solve({1}, {7, 15}), PlanError);
}

TEST(Crt, SolveExhaustive357) {
    std::vector<int> mods{3, 5, 7};
    for (int x = 0; x < 105; ++x) {
        EXPECT_EQ(crt_solve({x % 3, x % 5, x % 7}, mods), x);
    }
}

TEST(Crt, SolveMatchesBruteForce) {
    std::mt19937_64 gen(5);
    std::uniform_int_distribution<int> pick(2, 40);
    int sets = 0;
    while (sets < 5) {
        std::vector<int> mods{pick(gen), pick(gen), pick(gen)};
        if (std::gcd(mods[0], mods[1]) != 1 || std::gcd(mods[0], mods[2]) != 1 || std::gcd(mods[1], mods[2]) != 1) {
            continue;
        }
        ++sets;
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<int> res;
            for (int n : mods) {
                res.push_back(std::uniform_int_distribution<int>(0, n - 1)(gen));
            }
            EXPECT_EQ(crt_solve(res, mods), brute_force_crt(res, mods));
        }
    }
}

TEST(Crt, PlanValidation) {
    EXPECT_THROW(CrtPlan({6, 9}, 8), PlanError);
    EXPECT_THROW(CrtPlan({}, 8), PlanError);
    EXPECT_THROW(CrtPlan({7, 15}, 0), PlanError);
    EXPECT_EQ(CrtPlan({7, 15}, 8).M(), 105);
}

TEST(Crt, DetectsVacuum) {
    FockDim d(20);
    CrtPlan plan({7, 15}, 8);
    PhiloxStream rng(1, 0);
    CrtDetection r = detect_photon_number(QuantumState::fock(0, d), plan, rng);
    EXPECT_EQ(r.n, 0);
}

TEST(Crt, DetectsTwelve) {
    FockDim d(20);
    CrtPlan plan({7, 15}, 8);
    int ok = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        PhiloxStream rng(2, s);
        try {
            CrtDetection r = detect_photon_number(QuantumState::fock(12, d), plan, rng);
            EXPECT_EQ(r.n, 12);
            EXPECT_EQ(r.residues, (std::vector<int>{5, 12}));
            ++ok;
        } catch (const LowConfidence &) {
        }
    }
    EXPECT_GE(ok, 9);
}

TEST(Crt, GenerateFockFromCoherent) {
    FockDim d(40);
    CrtPlan plan({5, 7}, 6);
    FockGeneration g = generate_fock(coherent_state(3.0, d), 9, plan, 1, 10000);
    EXPECT_GT(g.state.populations()(9), 0.9);
    EXPECT_GE(g.attempts, 1u);
    EXPECT_DOUBLE_EQ(g.acceptance_rate, 1.0 / static_cast<double>(g.attempts));
    FockGeneration again = generate_fock(coherent_state(3.0, d), 9, plan, 1, 10000);
    EXPECT_EQ(g.attempts, again.attempts);
}

TEST(Crt, GenerateFockErrors) {
    FockDim d(40);
    CrtPlan plan({5, 7}, 6);
    EXPECT_THROW(generate_fock(coherent_state(3.0, d), 35, plan, 1, 10), PlanError);
    EXPECT_THROW(generate_fock(QuantumState::fock(2, d), 9, plan, 1, 10), UnreachableTrajectory);
    EXPECT_THROW(generate_fock(coherent_state(3.0, d), 9, plan, 1, 0), SelectionFailure);
}

TEST(Crt, ExactPostselection) {
    FockDim d(30);
    CrtPlan plan({3, 5}, 8);
    auto [state, p] = postselect_fock_exact(coherent_state(2.0, d), 5, plan);
    EXPECT_GT(state.populations()(5), 0.98);
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
}

TEST(Crt, ExactPostselectionSmallModuli) {
    FockDim d(40);
    CrtPlan plan({2, 3}, 8);
    auto [state, p] = postselect_fock_exact(coherent_state(2.0, d), 5, plan);
    EXPECT_GT(state.populations()(5), 0.99);
    EXPECT_GT(p, 0.0);
}

TEST(Crt, ExactPostselectionMatchesSampledAcceptance) {
    FockDim d(30);
    CrtPlan plan({3, 5}, 4);
    QuantumState s = coherent_state(2.0, d);
    double p = postselect_fock_exact(s, 4, plan).second;
    int accepted = 0;
    int n = 4000;
    for (int k = 0; k < n; ++k) {
        PhiloxStream rng(8, k);
        CrtDetection r = run_crt_stages(s, plan, rng);
        accepted += r.residues[0] == 1 && r.residues[1] == 4;
    }
    double est = static_cast<double>(accepted) / n;
    EXPECT_NEAR(est, p, 4.0 * std::sqrt(p * (1.0 - p) / n));
}
