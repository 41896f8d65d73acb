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
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "bqpe/codes.hpp"
#include "bqpe/fock.hpp"
#include "bqpe/gkp.hpp"
#include "bqpe/noise.hpp"
#include "bqpe/noisy.hpp"
#include "bqpe/parallel.hpp"
#include "bqpe/qpe.hpp"

namespace bqpe {

/// Relative eigenvalue cutoff when factoring density operators.
inline constexpr double rank_cutoff = 1e-13;

/// A with A A^dag = rho, keeping eigenvalues above rank_cutoff * max.
inline Operator psd_factor(const Operator &rho) {
    Eigen::SelfAdjointEigenSolver<Operator> es(0.5 * (rho + rho.adjoint()));
    const RealVector &w = es.eigenvalues();
    double top = std::max(w.maxCoeff(), 0.0);
    std::vector<long> keep;
    for (long k = 0; k < w.size(); ++k) {
        if (w(k) > rank_cutoff * top && w(k) > 0.0) {
            keep.push_back(k);
        }
    }
    Operator a(rho.rows(), static_cast<long>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
        a.col(static_cast<long>(j)) = es.eigenvectors().col(keep[j]) * std::sqrt(w(keep[j]));
    }
    return a;
}

/// (||A^dag B||_*)^2 for rho = A A^dag and sigma = B B^dag.
inline double fidelity_from_factors(const Operator &a, const Operator &b) {
    if (a.cols() == 0 || b.cols() == 0) {
        return 0.0;
    }
    Operator m = a.adjoint() * b;
    Eigen::JacobiSVD<Operator> svd(m);
    double s = svd.singularValues().sum();
    return s * s;
}

/// Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
inline double fidelity(const QuantumState &rho, const QuantumState &sigma) {
    require_same_dim(rho.dim().value(), sigma.dim().value(), "fidelity");
    double f;
    if (rho.is_pure() && sigma.is_pure()) {
        f = std::norm(rho.vector().dot(sigma.vector()));
    } else if (rho.is_pure()) {
        f = rho.vector().dot(sigma.matrix() * rho.vector()).real();
    } else if (sigma.is_pure()) {
        f = sigma.vector().dot(rho.matrix() * sigma.vector()).real();
    } else {
        f = fidelity_from_factors(psd_factor(rho.matrix()), psd_factor(sigma.matrix()));
    }
    return std::max(0.0, f);
}

/// Pi_N^l rho Pi_N^l, normalized.
inline QuantumState reference_error_state(const QuantumState &rho_in, int N, int l) {
    RealVector mask = residue_mask(rho_in.dim(), N, l);
    double w = (rho_in.populations().array() * mask.array()).sum();
    if (w <= 1e-12) {
        throw UndefinedReference("residue class " + std::to_string(l) + " mod " + std::to_string(N) +
                                 " carries no weight");
    }
    if (rho_in.is_pure()) {
        return QuantumState::pure(rho_in.vector().cwiseProduct(mask.cast<cplx>()));
    }
    Vector mk = mask.cast<cplx>();
    return QuantumState::density(mk.asDiagonal() * rho_in.matrix() * mk.asDiagonal());
}

/// Lossy logical-plus cat state exp(xi D)(rho_+), i.e. a loss channel with
/// chi = xi.
inline QuantumState lossy_cat_input(int N, double alpha, double xi, FockDim dim) {
    QuantumState plus = logical_plus(RotationCodeSpec{N, CatFamily{alpha}, 0, dim});
    return apply_loss(plus, LossChannel{xi, -1});
}

struct BinStats {
    double probability = 0.0;
    double mean_infidelity = 0.0;
};

struct InfidelityReport {
    double total = 0.0;
    double standard_error = 0.0;
    std::map<int, BinStats> per_bin;
    int m = 0;
    int N = 0;
    double t_tot = 0.0;
    std::size_t samples = 0;
};

/// Accumulates p-weighted infidelities per bin.
class InfidelityAccumulator {
   public:
    void add(int bin, double p, double infidelity) {
        auto &b = bins_[bin];
        b.first += p;
        b.second += p * infidelity;
        total_ += p * infidelity;
    }
    void finish(InfidelityReport &r) const {
        r.total = total_;
        for (const auto &[l, b] : bins_) {
            r.per_bin[l] = BinStats{b.first, b.first > 0.0 ? b.second / b.first : 0.0};
        }
    }

   private:
    std::map<int, std::pair<double, double>> bins_;
    double total_ = 0.0;
};

/// Exact noiseless delta(m, N) from all 2^m closed-form branches. rho_in is
/// factored once so each branch fidelity is a small SVD.
inline InfidelityReport deduction_report(const QuantumState &rho_in, int N, int m, double chi = 2.0 * pi * 2.0) {
    if (m > 12) {
        throw EnumerationCost("exact enumeration over 2^" + std::to_string(m) +
                              " outcomes is too costly; use the sampling estimator");
    }
    FockDim dim = rho_in.dim();
    Operator f0 = rho_in.is_pure() ? Operator(rho_in.vector()) : psd_factor(rho_in.matrix());
    std::vector<std::optional<Operator>> refs(N);
    for (int l = 0; l < N; ++l) {
        Vector mk = residue_mask(dim, N, l).cast<cplx>();
        Operator a = mk.asDiagonal() * f0;
        double t = a.squaredNorm();
        if (t > 1e-12) {
            refs[l] = a / std::sqrt(t);
        }
    }
    SpectralCoupling c = SpectralCoupling::rotation(N, dim);
    InfidelityAccumulator acc;
    std::size_t count = std::size_t{1} << m;
    for (std::size_t j = 0; j < count; ++j) {
        double theta = std::ldexp(static_cast<double>(j), -m);
        Vector cf = closed_form_coefficients(c, m, theta);
        Operator b = cf.asDiagonal() * f0;
        double p = b.squaredNorm();
        int l = rotation_bin(theta, N);
        if (p < unreachable_tol) {
            acc.add(l, p, 0.0);
            continue;
        }
        double inf = 1.0;
        if (refs[l]) {
            inf = 1.0 - fidelity_from_factors(*refs[l], b / std::sqrt(p));
        }
        acc.add(l, p, inf);
    }
    InfidelityReport r;
    acc.finish(r);
    r.m = m;
    r.N = N;
    r.t_tot = QpeSchedule::rotation(m, N, chi).total_time();
    return r;
}

inline double deduction_infidelity(const QuantumState &rho_in, int N, int m) {
    return deduction_report(rho_in, N, m).total;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double> &x, const std::vector<double> &y) {
    std::size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double lx = std::log(x[i]);
        double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// delta(m, N) under the noisy engine. samples == 0 enumerates all 2^m
/// branches exactly; otherwise a Monte Carlo mean with its standard error.
inline InfidelityReport total_infidelity_noisy(const QuantumState &rho_in, int N, int m, const LindbladModel &model,
                                               std::size_t samples, std::uint64_t seed = 1, int workers = 1,
                                               NoisyOptions opt = {}) {
    FockDim dim = rho_in.dim();
    std::vector<std::optional<QuantumState>> refs(N);
    for (int l = 0; l < N; ++l) {
        try {
            refs[l] = reference_error_state(rho_in, N, l).as_density();
        } catch (const UndefinedReference &) {
        }
    }
    QpeSchedule s = QpeSchedule::rotation(m, N, model.params.chi);
    SpectralCoupling c = SpectralCoupling::rotation(N, dim);
    NoisyWindow window(s, c, model, opt);
    InfidelityReport r;
    r.m = m;
    r.N = N;
    r.t_tot = s.total_time();
    r.samples = samples;
    auto branch_infidelity = [&](int l, const QuantumState &st) {
        return refs[l] ? 1.0 - fidelity(st, *refs[l]) : 1.0;
    };
    if (samples == 0) {
        if (m > 12) {
            throw EnumerationCost("noisy enumeration over 2^" + std::to_string(m) + " outcomes is too costly");
        }
        std::vector<Branch> br = enumerate_noisy_trajectories(rho_in, window);
        InfidelityAccumulator acc;
        for (std::size_t j = 0; j < br.size(); ++j) {
            double theta = std::ldexp(static_cast<double>(j), -m);
            int l = rotation_bin(theta, N);
            if (!br[j].state) {
                acc.add(l, br[j].probability, 0.0);
                continue;
            }
            acc.add(l, br[j].probability, branch_infidelity(l, *br[j].state));
        }
        acc.finish(r);
        return r;
    }
    std::vector<double> inf(samples);
    std::vector<int> bin(samples);
    parallel_for(samples, workers, [&](std::size_t k, int) {
        PhiloxStream rng(seed, k);
        Trajectory t = run_noisy_trajectory(rho_in, window, rng);
        bin[k] = rotation_bin(t.theta, N);
        inf[k] = branch_infidelity(bin[k], t.state);
    });
    InfidelityAccumulator acc;
    double w = 1.0 / static_cast<double>(samples);
    double mean = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
        acc.add(bin[k], w, inf[k]);
        mean += w * inf[k];
    }
    double var = 0.0;
    for (double v : inf) {
        var += (v - mean) * (v - mean);
    }
    acc.finish(r);
    r.standard_error = samples > 1 ? std::sqrt(var / (samples - 1) / samples) : 0.0;
    return r;
}

/// Sampling estimator of the noiseless deduction infidelity.
inline InfidelityReport sampled_deduction_infidelity(const QuantumState &rho_in, int N, int m, std::size_t samples,
                                                     std::uint64_t seed, int workers = 1) {
    FockDim dim = rho_in.dim();
    std::vector<std::optional<QuantumState>> refs(N);
    for (int l = 0; l < N; ++l) {
        try {
            refs[l] = reference_error_state(rho_in, N, l);
        } catch (const UndefinedReference &) {
        }
    }
    SpectralCoupling c = SpectralCoupling::rotation(N, dim);
    std::vector<double> inf(samples);
    std::vector<int> bin(samples);
    parallel_for(samples, workers, [&](std::size_t k, int) {
        PhiloxStream rng(seed, k);
        Trajectory t = run_trajectory(rho_in, c, m, rng);
        bin[k] = rotation_bin(t.theta, N);
        inf[k] = refs[bin[k]] ? 1.0 - fidelity(t.state, *refs[bin[k]]) : 1.0;
    });
    InfidelityReport r;
    r.m = m;
    r.N = N;
    r.samples = samples;
    r.t_tot = QpeSchedule::rotation(m, N, 2.0 * pi * 2.0).total_time();
    InfidelityAccumulator acc;
    double w = 1.0 / static_cast<double>(samples);
    double mean = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
        acc.add(bin[k], w, inf[k]);
        mean += w * inf[k];
    }
    double var = 0.0;
    for (double v : inf) {
        var += (v - mean) * (v - mean);
    }
    acc.finish(r);
    r.standard_error = samples > 1 ? std::sqrt(var / (samples - 1) / samples) : 0.0;
    return r;
}

struct GkpFidelityEntry {
    double probability = 0.0;
    double fidelity = 0.0;
    double delta_x = 0.0;
    double delta_p = 0.0;
};

struct GkpFidelityReport {
    double average = 0.0;
    double standard_error = 0.0;
    /// Keyed by (2^m theta_x, 2^m theta_p).
    std::map<std::pair<int, int>, GkpFidelityEntry> per_outcome;
    std::map<double, double> delta_x_histogram;
    std::map<double, double> delta_p_histogram;
};

/// Fidelity of the frame-corrected conditioned state to D rho_ideal D^dag
/// with D = D((delta_x + i delta_p) sqrt(pi/2)).
inline double gkp_outcome_fidelity(const GkpOutcome &o, const QuantumState &ideal, const GkpCouplings &c) {
    QuantumState corrected = gkp_frame_correct(o.state, c, o.theta_x, o.theta_p);
    Operator D = gkp_displacement(c, o.delta_x, o.delta_p);
    QuantumState ref = ideal.is_pure() ? QuantumState::pure(D * ideal.vector())
                                       : QuantumState::density(D * ideal.matrix() * D.adjoint());
    return fidelity(corrected, ref);
}

/// Average detection fidelity. Noiseless runs with samples == 0 enumerate all
/// 4^m outcome pairs; otherwise trajectories are sampled, unravelling mixed
/// noiseless inputs into their eigen-components.
inline GkpFidelityReport gkp_detection_fidelity(const QuantumState &input, const QuantumState &ideal,
                                                const GkpCouplings &c, int m,
                                                const std::optional<HardwareParams> &noise, std::size_t samples,
                                                std::uint64_t seed = 1, int workers = 1) {
    GkpFidelityReport r;
    int scale = 1 << m;
    auto key = [&](const GkpOutcome &o) {
        return std::make_pair(static_cast<int>(std::lround(o.theta_x * scale)),
                              static_cast<int>(std::lround(o.theta_p * scale)));
    };
    if (samples == 0) {
        if (noise) {
            throw InvalidArgument("noisy GKP fidelity needs a positive sample count");
        }
        for (const auto &o : enumerate_gkp(input, c, m)) {
            double f = gkp_outcome_fidelity(o, ideal, c);
            auto &e = r.per_outcome[key(o)];
            e.probability += o.probability;
            e.fidelity = f;
            e.delta_x = o.delta_x;
            e.delta_p = o.delta_p;
            r.average += o.probability * f;
            r.delta_x_histogram[o.delta_x] += o.probability;
            r.delta_p_histogram[o.delta_p] += o.probability;
        }
        return r;
    }
    std::optional<Eigen::SelfAdjointEigenSolver<Operator>> es;
    if (!input.is_pure() && !noise) {
        es.emplace(input.matrix());
    }
    std::vector<double> fs(samples);
    std::vector<std::pair<int, int>> keys(samples);
    std::vector<std::pair<double, double>> deltas(samples);
    parallel_for(samples, workers, [&](std::size_t k, int) {
        PhiloxStream rng(seed, k);
        QuantumState start = input;
        if (es) {
            double u = rng.uniform();
            const RealVector &w = es->eigenvalues();
            long pick = w.size() - 1;
            double acc = 0.0;
            for (long j = w.size() - 1; j >= 0; --j) {
                acc += std::max(0.0, w(j));
                if (u < acc) {
                    pick = j;
                    break;
                }
            }
            start = QuantumState::pure(es->eigenvectors().col(pick));
        }
        GkpOutcome o = noise ? run_noisy_gkp_detection(start, c, m, *noise, rng) : run_gkp_detection(start, c, m, rng);
        fs[k] = gkp_outcome_fidelity(o, ideal, c);
        keys[k] = key(o);
        deltas[k] = {o.delta_x, o.delta_p};
    });
    double w = 1.0 / static_cast<double>(samples);
    for (std::size_t k = 0; k < samples; ++k) {
        auto &e = r.per_outcome[keys[k]];
        e.fidelity = (e.fidelity * e.probability + w * fs[k]) / (e.probability + w);
        e.probability += w;
        e.delta_x = deltas[k].first;
        e.delta_p = deltas[k].second;
        r.average += w * fs[k];
        r.delta_x_histogram[deltas[k].first] += w;
        r.delta_p_histogram[deltas[k].second] += w;
    }
    double var = 0.0;
    for (double f : fs) {
        var += (f - r.average) * (f - r.average);
    }
    r.standard_error = samples > 1 ? std::sqrt(var / (samples - 1) / samples) : 0.0;
    return r;
}

}  // namespace bqpe
