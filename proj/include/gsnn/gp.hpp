#pragma once

// Classical GP interpolation of irregularly sampled signals and the embedding
// of the posterior into a Gaussian state.

#include "gsnn/gaussian.hpp"

#include <cstdint>
#include <vector>

namespace gsnn {

enum class KernelFamily { matern_half, rbf };

struct KernelSpec {
    KernelFamily family = KernelFamily::matern_half;
    double lengthscale = 0.2;
    double variance = 1.0;
};

struct IrregularSeries {
    std::vector<double> locations;  // strictly increasing, in [0, 1]
    std::vector<double> values;
    int label = -1;
};

void validate_series(const IrregularSeries& s);

// Posterior over a fixed query grid, with the two Cholesky factors used by
// the sampler: chol_cov * chol_cov^T = cov and chol_prec * chol_prec^T =
// cov^{-1} (both after the shared jitter policy).
struct GpPosterior {
    std::vector<double> grid;
    VectorXd mean;
    MatrixXd cov;
    MatrixXd chol_cov;
    MatrixXd chol_prec;
};

MatrixXd kernel_matrix(const KernelSpec& spec, const std::vector<double>& xs,
                       const std::vector<double>& ys);

GpPosterior gp_posterior(const KernelSpec& spec, const IrregularSeries& data,
                         double noise_variance, const std::vector<double>& grid);

double log_marginal_likelihood(const KernelSpec& spec, const IrregularSeries& data,
                               double noise_variance);

struct GpFitOptions {
    int epochs = 20;
    double rate = 0.1;
    int batch_size = 50;
    bool use_adam = true;   // plain gradient ascent otherwise
    double fd_step = 1e-5;  // central differences on log-parameters
};

// Maximizes the mean log marginal likelihood over (log lengthscale,
// log variance). Returns the best iterate seen on the full data, so the
// result is never worse than the initial spec. Aborts at the last finite
// iterate if the objective becomes non-finite.
KernelSpec fit_gp(const std::vector<IrregularSeries>& data, const KernelSpec& init,
                  double noise_variance, const GpFitOptions& opts = {});

double mean_log_marginal_likelihood(const KernelSpec& spec,
                                    const std::vector<IrregularSeries>& data,
                                    double noise_variance);

// Prepares the posterior state: omega(L + (L^{-1})^T) followed by a
// displacement by (mu', 0) acting on the vacuum. The result is pure
// (det C = 1) with position block cov and momentum block cov^{-1}.
GaussianState embed_posterior_state(const GpPosterior& post);

// The symplectic state-preparation matrix L + (L^{-1})^T itself.
MatrixXd posterior_symplectic(const GpPosterior& post);

// |X| uniformly spaced points covering [0, 1].
std::vector<double> uniform_grid(int n);

}  // namespace gsnn
