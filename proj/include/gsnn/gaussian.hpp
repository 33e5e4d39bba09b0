#pragma once

// Gaussian states on phase space. Convention: the covariance C is the
// Born-rule covariance, i.e. measuring the position block of |m, C> yields
// samples from N(m^1, C^11), and the vacuum is (0, 1). Valid quantum states
// satisfy C + iJ >= 0 (uncertainty) and hence det(C) >= 1; classically valid
// covariances below that bound are still representable and are diagnosed by
// check_uncertainty rather than rejected.

#include "gsnn/symplectic.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace gsnn {

struct GaussianState {
    VectorXd mean;  // length 2M, position block first
    MatrixXd cov;   // 2M x 2M

    int modes() const { return static_cast<int>(mean.size()) / 2; }
};

// Noisy position observations at distinct sites (indices into the position
// sector). noise_variance is sigma_n^2 >= 0.
struct MeasurementRecord {
    std::vector<int> sites;
    std::vector<double> values;
    double noise_variance = 0.0;
};

GaussianState vacuum(int modes);

// Validates dimensions and symmetry of a hand-built state.
GaussianState make_state(VectorXd mean, MatrixXd cov, double sym_tol = 1e-10);

GaussianState displace(const GaussianState& state, const VectorXd& xi);

// m -> S m, C -> S C S^T. Rejects non-symplectic S.
GaussianState apply_symplectic(const GaussianState& state, const MatrixXd& s,
                               double tol = 1e-8);

struct UncertaintyCheck {
    bool ok;
    double min_eigenvalue;  // smallest eigenvalue of C + iJ
};

UncertaintyCheck check_uncertainty(const GaussianState& state, double tol = 1e-8);

// Exact Gaussian conditioning of the full 2M-dimensional Gaussian on the
// observed position coordinates, with sigma_n^2 added to the observed block.
// The position sector reproduces the closed-form GP posterior; momentum and
// cross blocks follow the same conditioning rule. Note that the observed
// registers keep their classically conditioned covariance, which is below
// the quantum bound; the reduced state on unobserved registers stays valid.
GaussianState condition(const GaussianState& state, const MeasurementRecord& rec);

// Keeps only the listed modes (both position and momentum rows/columns).
GaussianState reduce_state(const GaussianState& state, const std::vector<int>& keep);

// Position-sector marginal (m^1, C^11): the classical distribution of
// position measurement outcomes.
std::pair<VectorXd, MatrixXd> born_marginal(const GaussianState& state);

// n x M matrix of i.i.d. draws from N(m^1, C^11) via Cholesky
// reparametrization; deterministic per seed.
MatrixXd sample_born(const GaussianState& state, int n, std::uint64_t seed);

double det_cov(const GaussianState& state);

}  // namespace gsnn
