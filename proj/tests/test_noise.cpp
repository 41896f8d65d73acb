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

#include "bqpe/codes.hpp"
#include "bqpe/metrics.hpp"
#include "bqpe/noise.hpp"
#include "bqpe/noisy.hpp"

using namespace bqpe;

namespace {

Operator qubit_state(int q) {
    Operator r = Operator::Zero(2, 2);
    r(q, q) = 1.0;
    return r;
}

LindbladModel loss_only_model(FockDim d, double gamma2, double step) {
    LindbladModel m;
    int n = 2 * d.value();
    m.H = Operator::Zero(n, n);
    m.jumps.push_back({kron(Operator::Identity(2, 2), annihilation(d)), gamma2});
    m.step = step;
    return m;
}

}  // namespace

TEST(Loss, ZeroIsIdentity) {
    QuantumState s = logical_plus({3, CatFamily{2.0}, 0, FockDim(40)});
    QuantumState out = apply_loss(s, LossChannel{0.0, -1});
    EXPECT_LT((out.density_matrix() - s.density_matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Loss, CoherentStaysCoherent) {
    FockDim d(50);
    double g = 0.1;
    QuantumState out = apply_loss(coherent_state(2.0, d), LossChannel::from_gamma(g));
    EXPECT_NEAR(fidelity(out, coherent_state(2.0 * std::sqrt(1.0 - g), d)), 1.0, 1e-7);
}

TEST(Loss, KrausMatchesClosedForm) {
    FockDim d(12);
    LossChannel ch = LossChannel::from_gamma(0.2);
    Operator a = annihilation(d);
    Operator ak = Operator::Identity(12, 12);
    for (int k = 0; k < 4; ++k) {
        Operator keep = Operator::Zero(12, 12);
        for (int n = 0; n < 12; ++n) {
            keep(n, n) = std::pow(0.8, 0.5 * n);
        }
        Operator oracle = std::sqrt(std::pow(0.2, k) / std::tgamma(k + 1.0)) * keep * ak;
        EXPECT_LT((loss_kraus(ch, d, k) - oracle).cwiseAbs().maxCoeff(), 1e-13) << k;
        ak = ak * a;
    }
}

TEST(Loss, CompletenessOnInteriorBlock) {
    FockDim d(100);
    for (double g : {0.01, 0.03, 0.1}) {
        EXPECT_LT(loss_completeness_error(LossChannel::from_gamma(g, 20), d), 1e-8) << "gamma=" << g;
    }
}

TEST(Loss, CompletenessWithDefaultCutoff) {
    FockDim d(100);
    for (double g : {0.01, 0.03, 0.1, 0.5}) {
        EXPECT_LT(loss_completeness_error(LossChannel::from_gamma(g), d), 1e-12) << "gamma=" << g;
    }
}

TEST(Loss, Semigroup) {
    FockDim d(60);
    QuantumState s = logical_plus({4, CatFamily{2.5}, 0, d});
    double g1 = 0.05, g2 = 0.08;
    QuantumState twice = apply_loss(apply_loss(s, LossChannel::from_gamma(g1)), LossChannel::from_gamma(g2));
    QuantumState once = apply_loss(s, LossChannel::from_gamma(1.0 - (1.0 - g1) * (1.0 - g2)));
    EXPECT_NEAR(fidelity(twice, once), 1.0, 1e-8);
}

TEST(Loss, CutoffErrorWhenTailIsDropped) {
    FockDim d(60);
    QuantumState s = coherent_state(4.0, d);
    EXPECT_THROW(apply_loss(s, LossChannel{std::log(2.0), 2}), CutoffError);
}

TEST(Lindblad, NoRatesNoHamiltonianIsIdentity) {
    FockDim d(10);
    CompositeState c = CompositeState::product(qubit_state(1), coherent_state(0.5, d));
    LindbladModel m = loss_only_model(d, 0.0, 0.01);
    CompositeState out = lindblad_evolve(c, m, 3.0);
    EXPECT_LT((out.matrix() - c.matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Lindblad, QubitRelaxation) {
    FockDim d(4);
    HardwareParams p;
    p.gamma2 = 0.0;
    LindbladModel m = default_hardware_model(CouplingKind::dispersive, d, p);
    CompositeState c = CompositeState::product(qubit_state(1), QuantumState::fock(2, d));
    CompositeState out = lindblad_evolve(c, m, 10.0);
    EXPECT_NEAR(out.qubit_population(1), std::exp(-0.2), 1e-4);
    EXPECT_NEAR(out.qubit_population(1), 0.8187, 1e-4);
}

TEST(Lindblad, ModeLossMeanPhotonDecay) {
    FockDim d(30);
    double g2 = 0.001, t = 50.0;
    LindbladModel m = loss_only_model(d, g2, 0.5);
    QuantumState mode = coherent_state(2.0, d);
    CompositeState out = lindblad_evolve(CompositeState::product(qubit_state(0), mode), m, t);
    QuantumState red = QuantumState::density(out.mode_reduced());
    EXPECT_NEAR(red.expectation(number_operator(d)).real(), 4.0 * std::exp(-g2 * t), 1e-8);
}

TEST(Lindblad, AgreesWithKrausLossChannel) {
    FockDim d(40);
    double g2 = 0.05, t = 2.0;
    QuantumState mode = logical_plus({3, CatFamily{2.0}, 0, d});
    LindbladModel m = loss_only_model(d, g2, 0.002);
    CompositeState out = lindblad_evolve(CompositeState::product(qubit_state(0), mode), m, t);
    QuantumState me = QuantumState::density(out.mode_reduced());
    QuantumState kraus = apply_loss(mode, LossChannel{g2 * t, -1});
    EXPECT_NEAR(fidelity(me, kraus), 1.0, 1e-5);
}

TEST(Lindblad, PositivityOfEvolvedState) {
    FockDim d(12);
    HardwareParams p{2.0 * pi * 2.0, 2.0 * pi * 21.5, 0.5, 0.3};
    LindbladModel m = default_hardware_model(CouplingKind::dispersive, d, p);
    Operator q = Operator::Constant(2, 2, 0.5);
    CompositeState out = lindblad_evolve(CompositeState::product(q, coherent_state(0.8, d)), m, 1.0);
    Eigen::SelfAdjointEigenSolver<Operator> es(out.matrix(), Eigen::EigenvaluesOnly);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-7);
    EXPECT_NEAR(out.matrix().trace().real(), 1.0, 1e-9);
}

TEST(Lindblad, RejectsBadInputs) {
    FockDim d(4);
    LindbladModel m = default_hardware_model(CouplingKind::dispersive, d);
    CompositeState c = CompositeState::product(qubit_state(0), QuantumState::fock(0, d));
    EXPECT_THROW(lindblad_evolve(c, m, -1.0), InvalidArgument);
    LindbladModel wrong = default_hardware_model(CouplingKind::dispersive, FockDim(5));
    EXPECT_THROW(lindblad_evolve(c, wrong, 1.0), InvalidDimension);
    LindbladModel coarse = m;
    coarse.jumps[0].rate = 1e4;
    coarse.step = 1.0;
    CompositeState excited = CompositeState::product(qubit_state(1), QuantumState::fock(0, d));
    EXPECT_THROW(lindblad_evolve(excited, coarse, 2.0), IntegratorError);
}

TEST(HardwareModel, DispersiveHamiltonianBlocks) {
    FockDim d(6);
    LindbladModel m = default_hardware_model(CouplingKind::dispersive, d);
    EXPECT_NEAR(m.params.chi, 2.0 * pi * 2.0, 1e-12);
    for (int n = 0; n < 6; ++n) {
        EXPECT_EQ(m.H(n, n), cplx(0.0));
        EXPECT_NEAR(m.H(6 + n, 6 + n).real(), -2.0 * pi * 2.0 * n, 1e-12);
    }
    EXPECT_TRUE(is_diagonal(m.H));
}

TEST(HardwareModel, QuadratureModePart) {
    FockDim d(6);
    LindbladModel m = default_hardware_model(CouplingKind::quadrature, d, HardwareParams{}, 0.0);
    Operator expect = std::sqrt(2.0) * 2.0 * pi * 21.5 * position_operator(d);
    EXPECT_LT((m.H.topLeftCorner(6, 6) - expect).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((m.H.bottomRightCorner(6, 6) + expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(HardwareModel, TableUnitsAndStep) {
    HardwareParams p = HardwareParams::from_table(2.0, 21.5, 0.02, 0.001);
    EXPECT_NEAR(p.chi, 2.0 * pi * 2.0, 1e-12);
    EXPECT_NEAR(p.g, 2.0 * pi * 21.5, 1e-12);
    double step = default_step(p);
    EXPECT_NEAR(step, std::min({0.01 / p.chi, 0.01 / p.g, 1.0 / (100.0 * 0.02)}), 1e-15);
}

TEST(NoisyWindow, DispersiveClosedFormMatchesIntegrator) {
    FockDim d(10);
    HardwareParams p{2.0 * pi * 2.0, 2.0 * pi * 21.5, 0.3, 0.2};
    LindbladModel model = default_hardware_model(CouplingKind::dispersive, d, p);
    model.step = 1e-4;
    Operator rho = apply_loss(logical_plus({2, CatFamily{0.6}, 0, d}), LossChannel{0.2, -1}).density_matrix();
    AncillaBlocks a = dispersive_window(rho, p, 0.37);
    AncillaBlocks b = lindblad_window(rho, model, 0.37);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            EXPECT_LT((a[i][j] - b[i][j]).cwiseAbs().maxCoeff(), 1e-9);
        }
    }
}

TEST(NoisyWindow, QuadratureSplitStepMatchesIntegrator) {
    FockDim d(8);
    HardwareParams p{2.0 * pi * 2.0, 2.0 * pi * 21.5, 0.3, 0.2};
    LindbladModel model = default_hardware_model(CouplingKind::quadrature, d, p, 0.0);
    model.step = 1e-5;
    SpectralCoupling c = SpectralCoupling::quadrature(QuadratureAxis::Q, d);
    Operator rho = coherent_state(cplx(0.4, 0.2), d).density_matrix();
    AncillaBlocks a = quadrature_window(rho, c, p.g * std::sqrt(2.0 * pi), p, 0.01, 40);
    AncillaBlocks b = lindblad_window(rho, model, 0.01);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            EXPECT_LT((a[i][j] - b[i][j]).cwiseAbs().maxCoeff(), 1e-5);
        }
    }
}
