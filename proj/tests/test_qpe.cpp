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
#include <random>

#include "bqpe/codes.hpp"
#include "bqpe/metrics.hpp"
#include "bqpe/noise.hpp"
#include "bqpe/noisy.hpp"
#include "bqpe/qpe.hpp"
#include "bqpe/rng.hpp"

using namespace bqpe;

namespace {

Operator random_hermitian(int d, std::mt19937_64 &gen) {
    std::normal_distribution<double> nd;
    Operator a(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            a(i, j) = cplx(nd(gen), nd(gen));
        }
    }
    return 0.5 * (a + a.adjoint());
}

QuantumState random_pure(int d, std::mt19937_64 &gen) {
    std::normal_distribution<double> nd;
    Vector v(d);
    for (int i = 0; i < d; ++i) {
        v(i) = cplx(nd(gen), nd(gen));
    }
    return QuantumState::pure(v);
}

// Direct geometric sum |(1/n) sum_k exp(2 pi i k x)|^2.
double fejer_oracle(long n, double x) {
    cplx s = 0.0;
    for (long k = 0; k < n; ++k) {
        s += std::polar(1.0, 2.0 * pi * k * x);
    }
    return std::norm(s) / static_cast<double>(n * n);
}

QuantumState lossy_cat(int N, double alpha, double gamma, int dim) {
    return apply_loss(logical_plus({N, CatFamily{alpha}, 0, FockDim(dim)}), LossChannel::from_gamma(gamma));
}

}  // namespace

TEST(Fejer, ValuesAndOracle) {
    EXPECT_EQ(fejer_kernel(16, 0.0), 1.0);
    EXPECT_EQ(fejer_kernel(16, 3.0), 1.0);
    EXPECT_NEAR(fejer_kernel(4, 0.5), 0.0, 1e-15);
    for (double x : {0.013, 0.1, 0.37, 0.5, 0.77, -0.2}) {
        EXPECT_NEAR(fejer_kernel(64, x), fejer_oracle(64, x), 1e-12) << x;
    }
    EXPECT_THROW(fejer_kernel(0, 0.1), InvalidArgument);
}

TEST(Fejer, DyadicSumIsOne) {
    int m = 6;
    double s = 0.0;
    for (int j = 0; j < (1 << m); ++j) {
        s += fejer_kernel(1L << m, std::ldexp(j, -m) - 0.3);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Feedback, PhaseExamples) {
    EXPECT_DOUBLE_EQ(feedback_phase({}), pi);
    EXPECT_DOUBLE_EQ(feedback_phase({0}), pi);
    EXPECT_DOUBLE_EQ(feedback_phase({1}), pi / 2.0);
    EXPECT_DOUBLE_EQ(feedback_phase({1, 1}), pi / 4.0);
    EXPECT_DOUBLE_EQ(feedback_phase({0, 1}), pi / 2.0);
}

TEST(Dyadic, ThetaAndIndexRoundTrip) {
    EXPECT_DOUBLE_EQ(dyadic_theta({1, 0, 1}), 0.625);
    EXPECT_DOUBLE_EQ(dyadic_theta({1, 0, 0}), 0.125);
    for (std::uint64_t j = 0; j < 64; ++j) {
        auto bits = bits_from_index(j, 6);
        EXPECT_EQ(dyadic_index(bits), j);
        EXPECT_DOUBLE_EQ(dyadic_theta(bits), std::ldexp(static_cast<double>(j), -6));
    }
}

TEST(Schedule, RotationTimes) {
    QpeSchedule s = QpeSchedule::rotation(4, 2, 2.0 * pi * 2.0);
    EXPECT_NEAR(s.total_time(), 3.75, 1e-12);
    auto t = s.times();
    ASSERT_EQ(t.size(), 4u);
    EXPECT_NEAR(t[0], 2.0, 1e-12);
    EXPECT_NEAR(t[3], 0.25, 1e-12);
    double sum = 0.0;
    for (double v : t) {
        sum += v;
    }
    EXPECT_NEAR(sum, s.total_time(), 1e-12);
}

TEST(Schedule, Validation) {
    EXPECT_THROW(QpeSchedule::rotation(0, 2, 1.0), InvalidArgument);
    EXPECT_THROW(QpeSchedule::rotation(31, 2, 1.0), InvalidArgument);
    EXPECT_THROW(QpeSchedule::rotation(3, 0, 1.0), InvalidArgument);
    EXPECT_THROW(QpeSchedule::quadrature(3, QuadratureAxis::Q, -1.0), InvalidArgument);
    EXPECT_NEAR(QpeSchedule::quadrature(2, QuadratureAxis::Q, 1.0).kappa(), std::sqrt(2.0 * pi), 1e-15);
}

TEST(RimCell, IdentityUnitaries) {
    FockDim d(6);
    Operator I = Operator::Identity(6, 6);
    CellResult r = rim_cell(QuantumState::fock(3, d), I, I, pi);
    EXPECT_NEAR(r.p[0], 1.0, 1e-15);
    EXPECT_NEAR(r.p[1], 0.0, 1e-15);
    EXPECT_FALSE(r.state[1].has_value());
}

TEST(RimCell, ParityOnEvenCat) {
    FockDim d(40);
    Operator parity = Operator::Zero(40, 40);
    for (int n = 0; n < 40; ++n) {
        parity(n, n) = n % 2 == 0 ? 1.0 : -1.0;
    }
    QuantumState cat = logical_plus({2, CatFamily{2.0}, 0, d});
    CellResult r = rim_cell(cat, Operator::Identity(40, 40), parity, pi);
    EXPECT_NEAR(r.p[0], 1.0, 1e-12);
    EXPECT_NEAR(fidelity(*r.state[0], cat), 1.0, 1e-12);
}

TEST(RimCell, CompletenessForRandomTriples) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> ud(0.0, 2.0 * pi);
    int d = 6;
    for (int trial = 0; trial < 100; ++trial) {
        Operator U0 = matrix_exp(random_hermitian(d, gen), cplx(0.0, 1.0));
        Operator U1 = matrix_exp(random_hermitian(d, gen), cplx(0.0, 1.0));
        double phi = ud(gen);
        Operator sum = Operator::Zero(d, d);
        for (int a = 0; a < 2; ++a) {
            cplx s = (a == 0 ? -1.0 : 1.0) * std::polar(1.0, phi);
            Operator M = 0.5 * (U0 + s * U1);
            sum += M.adjoint() * M;
        }
        EXPECT_LT((sum - Operator::Identity(d, d)).cwiseAbs().maxCoeff(), 1e-12);
        QuantumState psi = random_pure(d, gen);
        CellResult r = rim_cell(psi, U0, U1, phi);
        EXPECT_NEAR(r.p[0] + r.p[1], 1.0, 1e-12);
    }
}

TEST(RimCell, RejectsNonUnitary) {
    Operator I = Operator::Identity(3, 3);
    EXPECT_THROW(rim_cell(QuantumState::fock(0, FockDim(3)), 2.0 * I, I, 0.0), InvalidArgument);
    EXPECT_THROW(rim_cell(QuantumState::fock(0, FockDim(3)), Operator::Identity(4, 4), I, 0.0), InvalidDimension);
}

TEST(RimCell, DenseCellMatchesDiagonalKraus) {
    FockDim d(12);
    SpectralCoupling c = SpectralCoupling::rotation(3, d);
    QuantumState s = coherent_state(1.1, d);
    auto [U0, U1] = c.dense_unitaries(4, 2);
    double phi = feedback_phase({1});
    CellResult r = rim_cell(s, U0, U1, phi);
    EigenState e = EigenState::from(s, c);
    for (int a = 0; a < 2; ++a) {
        EXPECT_NEAR(r.p[a], e.weight(c.kraus_diagonal(4, 2, phi, a)), 1e-13);
    }
}

TEST(Engine, FockSixWithModulusFour) {
    FockDim d(10);
    SpectralCoupling c = SpectralCoupling::rotation(4, d);
    OutcomeDistribution dist = outcome_distribution(QuantumState::fock(6, d), c, 3);
    EXPECT_NEAR(dist.p[4], 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(dist.theta(4), 0.5);
    PhiloxStream rng(3, 0);
    Trajectory t = run_trajectory(QuantumState::fock(6, d), c, 3, rng);
    EXPECT_DOUBLE_EQ(t.theta, 0.5);
    EXPECT_NEAR(t.probability, 1.0, 1e-12);
}

TEST(Engine, EvenCatSingleRound) {
    FockDim d(40);
    QuantumState cat = logical_plus({2, CatFamily{2.0}, 0, d});
    auto branches = enumerate_trajectories(cat, SpectralCoupling::rotation(2, d), 1);
    EXPECT_NEAR(branches[0].probability, 1.0, 1e-12);
    EXPECT_NEAR(branches[1].probability, 0.0, 1e-14);
}

TEST(Engine, ClosedFormMatchesSequentialRotation) {
    std::mt19937_64 gen(11);
    FockDim d(20);
    SpectralCoupling c = SpectralCoupling::rotation(3, d);
    QuantumState psi = random_pure(20, gen);
    EigenState e = EigenState::from(psi, c);
    int m = 5;
    for (std::uint64_t j = 0; j < (1u << m); ++j) {
        auto bits = bits_from_index(j, m);
        EigenState a = branch_unnormalized(e, c, m, bits, SuperoperatorMethod::sequential);
        EigenState b = branch_unnormalized(e, c, m, bits, SuperoperatorMethod::closed_form);
        Operator pa = a.v * a.v.adjoint();
        Operator pb = b.v * b.v.adjoint();
        EXPECT_LT((pa - pb).cwiseAbs().maxCoeff(), 1e-12) << j;
    }
}

TEST(Engine, ClosedFormMatchesSequentialQuadrature) {
    FockDim d(40);
    SpectralCoupling c = SpectralCoupling::quadrature(QuadratureAxis::P, d);
    QuantumState rho = apply_loss(coherent_state(cplx(0.7, -0.4), d), LossChannel::from_gamma(0.2));
    EigenState e = EigenState::from(rho, c);
    int m = 4;
    for (std::uint64_t j = 0; j < (1u << m); ++j) {
        auto bits = bits_from_index(j, m);
        EigenState a = branch_unnormalized(e, c, m, bits, SuperoperatorMethod::sequential);
        EigenState b = branch_unnormalized(e, c, m, bits, SuperoperatorMethod::closed_form);
        EXPECT_LT((a.r - b.r).cwiseAbs().maxCoeff(), 1e-9) << j;
    }
}

TEST(Engine, TrajectoryProbabilityIsChainRuleProduct) {
    FockDim d(50);
    QuantumState s = lossy_cat(3, 2.5, 0.1, 50);
    SpectralCoupling c = SpectralCoupling::rotation(3, d);
    for (std::uint64_t k = 0; k < 20; ++k) {
        PhiloxStream rng(5, k);
        Trajectory t = run_trajectory(s, c, 5, rng);
        Branch b = trajectory_superoperator(s, c, 5, t.bits);
        EXPECT_NEAR(t.probability, b.probability, 1e-12);
        EXPECT_NEAR(fidelity(t.state, *b.state), 1.0, 1e-10);
    }
}

TEST(Engine, OutcomeDistributionMatchesEnumeration) {
    FockDim d(50);
    QuantumState s = lossy_cat(3, 2.5, 0.1, 50);
    SpectralCoupling c = SpectralCoupling::rotation(3, d);
    int m = 6;
    auto branches = enumerate_trajectories(s, c, m, false);
    OutcomeDistribution dist = outcome_distribution(s, c, m);
    OutcomeDistribution grouped = outcome_distribution(s, QpeSchedule::rotation(m, 3, 1.0));
    double total = 0.0;
    for (std::size_t j = 0; j < branches.size(); ++j) {
        EXPECT_NEAR(branches[j].probability, dist.p[j], 1e-12);
        EXPECT_NEAR(grouped.p[j], dist.p[j], 1e-12);
        total += branches[j].probability;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Engine, UniformFockMixture) {
    FockDim d(40);
    QuantumState mix = QuantumState::density(Operator::Identity(40, 40));
    OutcomeDistribution dist = outcome_distribution(mix, SpectralCoupling::rotation(4, d), 3);
    for (std::size_t j = 0; j < 8; ++j) {
        EXPECT_NEAR(dist.p[j], j % 2 == 0 ? 0.25 : 0.0, 1e-12) << j;
    }
}

TEST(Engine, NoOffPeakWeightForModulusFour) {
    QuantumState s = lossy_cat(4, 3.0, 0.05, 60);
    for (int m : {2, 3, 5}) {
        OutcomeDistribution dist = outcome_distribution(s, SpectralCoupling::rotation(4, FockDim(60)), m);
        double off = 0.0;
        for (std::size_t j = 0; j < dist.p.size(); ++j) {
            if (j % (std::size_t{1} << (m - 2)) != 0) {
                off += dist.p[j];
            }
        }
        EXPECT_LT(off, 1e-12) << m;
    }
}

TEST(Deduction, Examples) {
    RotationError a = deduce_rotation_error(0.6875, 3);
    EXPECT_EQ(a.residue, 2);
    EXPECT_EQ(a.loss_count, 1);
    RotationError b = deduce_rotation_error(0.59, 5);
    EXPECT_EQ(b.residue, 3);
    EXPECT_EQ(b.loss_count, 2);
    EXPECT_EQ(deduce_rotation_error(0.0, 4).loss_count, 0);
    EXPECT_EQ(deduce_rotation_error(0.95, 5).residue, 0);
    EXPECT_EQ(rotation_bin(0.1, 5), 1);
    EXPECT_EQ(rotation_bin(0.0999, 5), 0);
    EXPECT_THROW(deduce_rotation_error(0.2, 0), InvalidArgument);
}

TEST(Sampling, MatchesExactDistribution) {
    FockDim d(60);
    QuantumState s = lossy_cat(3, 3.0, 0.1, 60);
    SpectralCoupling c = SpectralCoupling::rotation(3, d);
    int m = 4;
    std::size_t n = 10000;
    auto counts = sample_outcome_counts(s, c, m, n, 42, 2);
    OutcomeDistribution dist = outcome_distribution(s, c, m);
    double tv = 0.0;
    std::uint64_t total = 0;
    for (std::size_t j = 0; j < counts.size(); ++j) {
        tv += std::abs(static_cast<double>(counts[j]) / n - dist.p[j]);
        total += counts[j];
    }
    EXPECT_EQ(total, n);
    EXPECT_LT(0.5 * tv, 0.03);
}

TEST(Sampling, DyadicEigenvaluesAreDeterministic) {
    FockDim d(8);
    auto counts = sample_outcome_counts(QuantumState::fock(3, d), SpectralCoupling::rotation(4, d), 2, 500, 9, 1);
    EXPECT_EQ(counts[3], 500u);
}

TEST(Sampling, IndependentOfWorkerCount) {
    FockDim d(50);
    QuantumState s = lossy_cat(5, 3.0, 0.03, 50);
    SpectralCoupling c = SpectralCoupling::rotation(5, d);
    auto a = sample_outcome_counts(s, c, 5, 3000, 17, 1);
    auto b = sample_outcome_counts(s, c, 5, 3000, 17, 2);
    auto e = sample_outcome_counts(s, c, 5, 3000, 17, 3);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, e);
}

TEST(Projection, ConditionalStateConcentratesOnResidue) {
    FockDim d(80);
    int N = 5;
    int m = 8;
    QuantumState s = lossy_cat(N, 3.0, 0.1, 80);
    SpectralCoupling c = SpectralCoupling::rotation(N, d);
    auto branches = enumerate_trajectories(s, c, m);
    double avg = 0.0;
    for (std::size_t j = 0; j < branches.size(); ++j) {
        if (!branches[j].state) {
            continue;
        }
        int l = rotation_bin(std::ldexp(static_cast<double>(j), -m), N);
        RealVector pop = branches[j].state->populations();
        avg += branches[j].probability * pop.dot(residue_mask(d, N, l));
    }
    EXPECT_GT(avg, 0.97);
}

TEST(Preparation, CatFromCoherentState) {
    FockDim d(100);
    Preparation p = prepare_by_projection(coherent_state(3.0, d), 3, 0, 6, 2.0 * pi * 2.0);
    QuantumState target = code_state({3, CatFamily{3.0}, 0, d});
    EXPECT_GE(fidelity(p.state, target), 0.99);
    EXPECT_NEAR(p.theta, 0.0, 0.0);
    EXPECT_GT(p.probability, 0.0);
    EXPECT_NEAR(p.total_time, 63.0 * pi / (2.0 * pi * 2.0 * 3.0), 1e-12);
}

TEST(Preparation, OddCodeword) {
    FockDim d(100);
    Preparation p = prepare_by_projection(coherent_state(3.0, d), 3, 1, 6, 2.0 * pi * 2.0);
    QuantumState target = code_state({3, CatFamily{3.0}, 1, d});
    EXPECT_GE(fidelity(p.state, target), 0.99);
    EXPECT_DOUBLE_EQ(p.theta, 0.5);
    EXPECT_THROW(prepare_by_projection(coherent_state(3.0, d), 3, 2, 6, 1.0), InvalidArgument);
}

TEST(Preparation, BinomialFromPrimitive) {
    FockDim d(72);
    Preparation p = prepare_by_projection(binomial_primitive(3, 6, d), 3, 0, 6, 2.0 * pi * 2.0);
    EXPECT_GE(fidelity(p.state, code_state({3, BinomialFamily{6}, 0, d})), 0.99);
}

TEST(NoisyEngine, NoiselessMatchesIdealEngine) {
    FockDim d(40);
    int N = 3;
    int m = 5;
    QuantumState s = lossy_cat(N, 2.5, 0.05, 40);
    HardwareParams hw = HardwareParams{}.noiseless();
    LindbladModel model = default_hardware_model(CouplingKind::dispersive, d, hw);
    QpeSchedule sched = QpeSchedule::rotation(m, N, hw.chi);
    SpectralCoupling c = SpectralCoupling::rotation(N, d);
    NoisyWindow window(sched, c, model);
    auto noisy = enumerate_noisy_trajectories(s, window, false);
    OutcomeDistribution ideal = outcome_distribution(s, c, m);
    double tv = 0.0;
    for (std::size_t j = 0; j < noisy.size(); ++j) {
        tv += std::abs(noisy[j].probability - ideal.p[j]);
    }
    EXPECT_LT(0.5 * tv, 1e-6);
}

TEST(NoisyEngine, ProbabilitiesSumToOneWithNoise) {
    FockDim d(40);
    QuantumState s = lossy_cat(3, 2.5, 0.05, 40);
    HardwareParams hw;
    LindbladModel model = default_hardware_model(CouplingKind::dispersive, d, hw);
    NoisyWindow window(QpeSchedule::rotation(4, 3, hw.chi), SpectralCoupling::rotation(3, d), model);
    double total = 0.0;
    for (const auto &b : enumerate_noisy_trajectories(s, window, false)) {
        EXPECT_GE(b.probability, -1e-12);
        total += b.probability;
    }
    EXPECT_NEAR(total, 1.0, 1e-10);
}

TEST(NoisyEngine, ValidatesModelAgainstSchedule) {
    FockDim d(10);
    HardwareParams hw;
    QpeSchedule rot = QpeSchedule::rotation(3, 3, hw.chi);
    SpectralCoupling c = SpectralCoupling::rotation(3, d);
    EXPECT_THROW(NoisyWindow(rot, c, default_hardware_model(CouplingKind::quadrature, d, hw)), InvalidArgument);
    QpeSchedule other = QpeSchedule::rotation(3, 3, 2.0 * hw.chi);
    EXPECT_THROW(NoisyWindow(other, c, default_hardware_model(CouplingKind::dispersive, d, hw)), InvalidArgument);
}

TEST(Philox, KnownAnswers) {
    auto a = philox4x32({0u, 0u, 0u, 0u}, {0u, 0u});
    EXPECT_EQ(a, (std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
    auto b = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(b, (std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
    auto c = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(c, (std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, StreamsAreReproducibleAndDistinct) {
    PhiloxStream a(1, 0);
    PhiloxStream b(1, 0);
    PhiloxStream c(1, 1);
    PhiloxStream e(2, 0);
    int same_c = 0;
    int same_e = 0;
    for (int i = 0; i < 100; ++i) {
        std::uint32_t x = a.next_u32();
        EXPECT_EQ(x, b.next_u32());
        same_c += x == c.next_u32();
        same_e += x == e.next_u32();
    }
    EXPECT_LT(same_c, 2);
    EXPECT_LT(same_e, 2);
}

TEST(Philox, UniformMoments) {
    PhiloxStream rng(123, 4);
    double s = 0.0;
    double s2 = 0.0;
    int n = 100000;
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        s += u;
        s2 += u * u;
    }
    EXPECT_NEAR(s / n, 0.5, 0.005);
    EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12.0, 0.002);
}
