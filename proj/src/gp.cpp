#include "gsnn/gp.hpp"

#include "gsnn/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gsnn {

namespace {

void validate_spec(const KernelSpec& spec) {
    if (!(spec.lengthscale > 0.0) || !(spec.variance > 0.0))
        throw std::invalid_argument("kernel: hyperparameters must be positive");
}

double kernel_value(const KernelSpec& spec, double x, double y) {
    const double d = std::abs(x - y);
    switch (spec.family) {
        case KernelFamily::matern_half:
            return spec.variance * std::exp(-d / spec.lengthscale);
        case KernelFamily::rbf:
            return spec.variance *
                   std::exp(-0.5 * d * d / (spec.lengthscale * spec.lengthscale));
    }
    throw std::invalid_argument("kernel: unknown family");
}

}  // namespace

void validate_series(const IrregularSeries& s) {
    if (s.locations.size() != s.values.size())
        throw std::invalid_argument("series: locations/values length mismatch");
    for (std::size_t i = 1; i < s.locations.size(); ++i)
        if (!(s.locations[i] > s.locations[i - 1]))
            throw std::invalid_argument("series: locations must be strictly increasing");
}

MatrixXd kernel_matrix(const KernelSpec& spec, const std::vector<double>& xs,
                       const std::vector<double>& ys) {
    validate_spec(spec);
    MatrixXd k(xs.size(), ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = 0; j < ys.size(); ++j)
            k(i, j) = kernel_value(spec, xs[i], ys[j]);
    return k;
}

GpPosterior gp_posterior(const KernelSpec& spec, const IrregularSeries& data,
                         double noise_variance, const std::vector<double>& grid) {
    validate_spec(spec);
    validate_series(data);
    if (noise_variance < 0.0)
        throw std::invalid_argument("gp_posterior: negative noise variance");

    GpPosterior post;
    post.grid = grid;
    const auto g = static_cast<Eigen::Index>(grid.size());
    MatrixXd prior = kernel_matrix(spec, grid, grid);

    if (data.locations.empty()) {
        post.mean = VectorXd::Zero(g);
        post.cov = std::move(prior);
    } else {
        const MatrixXd k_obs = kernel_matrix(spec, data.locations, data.locations);
        MatrixXd a = k_obs;
        a.diagonal().array() += noise_variance;
        Eigen::LLT<MatrixXd> llt(a);
        if (llt.info() != Eigen::Success)
            throw FactorizationError("gp_posterior: observation matrix singular", -1);

        const MatrixXd k_cross = kernel_matrix(spec, grid, data.locations);
        VectorXd y = Eigen::Map<const VectorXd>(data.values.data(),
                                                static_cast<Eigen::Index>(data.values.size()));
        post.mean = k_cross * llt.solve(y);
        post.cov = prior - k_cross * llt.solve(k_cross.transpose());
        post.cov = 0.5 * (post.cov + post.cov.transpose()).eval();
    }

    post.chol_cov = cholesky(post.cov);
    // cov^{-1} from the jittered factor, then its own Cholesky factor.
    const MatrixXd inv = post.chol_cov.transpose().triangularView<Eigen::Upper>().solve(
        MatrixXd(post.chol_cov.triangularView<Eigen::Lower>().solve(
            MatrixXd::Identity(g, g))));
    post.chol_prec = cholesky(0.5 * (inv + inv.transpose()));
    return post;
}

double log_marginal_likelihood(const KernelSpec& spec, const IrregularSeries& data,
                               double noise_variance) {
    validate_spec(spec);
    validate_series(data);
    const auto n = static_cast<Eigen::Index>(data.locations.size());
    if (n == 0) return 0.0;

    MatrixXd a = kernel_matrix(spec, data.locations, data.locations);
    a.diagonal().array() += noise_variance;
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() != Eigen::Success)
        throw FactorizationError("log_marginal_likelihood: observation matrix singular", -1);

    const VectorXd y = Eigen::Map<const VectorXd>(data.values.data(), n);
    const VectorXd alpha = llt.solve(y);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) log_det += std::log(llt.matrixL()(i, i));
    return -0.5 * y.dot(alpha) - log_det -
           0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

double mean_log_marginal_likelihood(const KernelSpec& spec,
                                    const std::vector<IrregularSeries>& data,
                                    double noise_variance) {
    double total = 0.0;
    for (const auto& s : data) total += log_marginal_likelihood(spec, s, noise_variance);
    return total / static_cast<double>(data.size());
}

namespace {

double batch_objective(const KernelSpec& spec,
                       const std::vector<IrregularSeries>& data, std::size_t begin,
                       std::size_t end, double noise) {
    double total = 0.0;
    for (std::size_t i = begin; i < end; ++i)
        total += log_marginal_likelihood(spec, data[i], noise);
    return total / static_cast<double>(end - begin);
}

KernelSpec from_log(const Eigen::Vector2d& theta, KernelFamily family) {
    return {family, std::exp(theta[0]), std::exp(theta[1])};
}

}  // namespace

KernelSpec fit_gp(const std::vector<IrregularSeries>& data, const KernelSpec& init,
                  double noise_variance, const GpFitOptions& opts) {
    if (data.empty()) throw std::invalid_argument("fit_gp: no data");
    validate_spec(init);
    if (opts.epochs == 0) return init;

    Eigen::Vector2d theta(std::log(init.lengthscale), std::log(init.variance));
    Eigen::Vector2d adam_m = Eigen::Vector2d::Zero();
    Eigen::Vector2d adam_v = Eigen::Vector2d::Zero();
    int step_count = 0;

    KernelSpec best = init;
    double best_obj = mean_log_marginal_likelihood(init, data, noise_variance);

    const std::size_t batch = std::max<std::size_t>(
        1, std::min<std::size_t>(opts.batch_size, data.size()));

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        for (std::size_t begin = 0; begin < data.size(); begin += batch) {
            const std::size_t end = std::min(begin + batch, data.size());
            Eigen::Vector2d grad;
            bool finite = true;
            for (int p = 0; p < 2 && finite; ++p) {
                Eigen::Vector2d up = theta, down = theta;
                up[p] += opts.fd_step;
                down[p] -= opts.fd_step;
                const double f_up =
                    batch_objective(from_log(up, init.family), data, begin, end, noise_variance);
                const double f_down =
                    batch_objective(from_log(down, init.family), data, begin, end, noise_variance);
                grad[p] = (f_up - f_down) / (2.0 * opts.fd_step);
                finite = std::isfinite(f_up) && std::isfinite(f_down);
            }
            if (!finite) return best;  // divergence: stop at last finite iterate

            if (opts.use_adam) {
                ++step_count;
                adam_m = 0.9 * adam_m + 0.1 * grad;
                adam_v = 0.999 * adam_v.array() + 0.001 * grad.array().square();
                const double bc1 = 1.0 - std::pow(0.9, step_count);
                const double bc2 = 1.0 - std::pow(0.999, step_count);
                theta.array() += opts.rate * (adam_m.array() / bc1) /
                                 ((adam_v.array() / bc2).sqrt() + 1e-8);
            } else {
                theta += opts.rate * grad;
            }
        }
        const KernelSpec current = from_log(theta, init.family);
        const double obj = mean_log_marginal_likelihood(current, data, noise_variance);
        if (!std::isfinite(obj)) return best;
        if (obj > best_obj) {
            best_obj = obj;
            best = current;
        }
    }
    return best;
}

MatrixXd posterior_symplectic(const GpPosterior& post) {
    const auto g = post.chol_cov.rows();
    MatrixXd s = MatrixXd::Zero(2 * g, 2 * g);
    s.topLeftCorner(g, g) = post.chol_cov;
    // (L^{-1})^T completes the position factor to a symplectic matrix.
    s.bottomRightCorner(g, g) =
        post.chol_cov.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(g, g))
            .transpose();
    return s;
}

GaussianState embed_posterior_state(const GpPosterior& post) {
    const auto g = post.chol_cov.rows();
    const GaussianState base = vacuum(static_cast<int>(g));
    GaussianState out = apply_symplectic(base, posterior_symplectic(post), 1e-6);
    VectorXd xi = VectorXd::Zero(2 * g);
    xi.head(g) = post.mean;
    return displace(out, xi);
}

std::vector<double> uniform_grid(int n) {
    if (n < 1) throw std::invalid_argument("uniform_grid: n must be >= 1");
    std::vector<double> grid(n);
    if (n == 1) {
        grid[0] = 0.0;
        return grid;
    }
    for (int i = 0; i < n; ++i)
        grid[i] = static_cast<double>(i) / static_cast<double>(n - 1);
    return grid;
}

}  // namespace gsnn
