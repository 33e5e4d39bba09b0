#include "gsnn/gaussian.hpp"

#include "gsnn/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <complex>
#include <stdexcept>
#include <unordered_set>

namespace gsnn {

GaussianState vacuum(int modes) {
    if (modes < 1) throw std::invalid_argument("vacuum: modes must be >= 1");
    return {VectorXd::Zero(2 * modes), MatrixXd::Identity(2 * modes, 2 * modes)};
}

GaussianState make_state(VectorXd mean, MatrixXd cov, double sym_tol) {
    if (mean.size() % 2 != 0 || mean.size() == 0)
        throw std::invalid_argument("make_state: mean length must be even and positive");
    if (cov.rows() != mean.size() || cov.cols() != mean.size())
        throw std::invalid_argument("make_state: covariance shape mismatch");
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > sym_tol * scale)
        throw std::invalid_argument("make_state: covariance not symmetric");
    cov = 0.5 * (cov + cov.transpose()).eval();
    return {std::move(mean), std::move(cov)};
}

GaussianState displace(const GaussianState& state, const VectorXd& xi) {
    if (xi.size() != state.mean.size())
        throw std::invalid_argument("displace: displacement length mismatch");
    return {state.mean + xi, state.cov};
}

GaussianState apply_symplectic(const GaussianState& state, const MatrixXd& s,
                               double tol) {
    if (s.rows() != state.mean.size())
        throw std::invalid_argument("apply_symplectic: dimension mismatch");
    const auto check = is_symplectic(s, tol);
    if (!check.ok)
        throw std::invalid_argument(
            "apply_symplectic: matrix is not symplectic (residual " +
            std::to_string(check.residual) + ")");
    MatrixXd cov = s * state.cov * s.transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
    return {s * state.mean, std::move(cov)};
}

UncertaintyCheck check_uncertainty(const GaussianState& state, double tol) {
    const int m = state.modes();
    const MatrixXd j = symplectic_form(m);
    MatrixXcd h = state.cov.cast<std::complex<double>>() +
                  std::complex<double>(0.0, 1.0) * j.cast<std::complex<double>>();
    const double min_eig = hermitian_min_eigenvalue(h, 1e-9);
    return {min_eig >= -tol, min_eig};
}

GaussianState condition(const GaussianState& state, const MeasurementRecord& rec) {
    if (rec.sites.size() != rec.values.size())
        throw std::invalid_argument("condition: sites/values length mismatch");
    if (rec.noise_variance < 0.0)
        throw std::invalid_argument("condition: negative noise variance");
    if (rec.sites.empty()) return state;

    const int m = state.modes();
    std::unordered_set<int> seen;
    for (int site : rec.sites) {
        if (site < 0 || site >= m)
            throw std::invalid_argument("condition: site index out of range");
        if (!seen.insert(site).second)
            throw std::invalid_argument("condition: duplicate site index");
    }

    const auto n_obs = static_cast<Eigen::Index>(rec.sites.size());
    const auto dim = state.mean.size();

    // Gather covariance columns of the observed position coordinates.
    MatrixXd cross(dim, n_obs);  // C[:, obs]
    MatrixXd obs_block(n_obs, n_obs);
    VectorXd innovation(n_obs);
    for (Eigen::Index i = 0; i < n_obs; ++i) {
        cross.col(i) = state.cov.col(rec.sites[i]);
        innovation(i) = rec.values[i] - state.mean(rec.sites[i]);
    }
    for (Eigen::Index i = 0; i < n_obs; ++i)
        for (Eigen::Index k = 0; k < n_obs; ++k)
            obs_block(i, k) = state.cov(rec.sites[i], rec.sites[k]);
    obs_block.diagonal().array() += rec.noise_variance;

    Eigen::LLT<MatrixXd> llt(obs_block);
    if (llt.info() != Eigen::Success)
        throw FactorizationError("condition: observation matrix singular", -1);

    const MatrixXd gain = llt.solve(cross.transpose());  // A^{-1} C[obs, :]
    VectorXd mean = state.mean + gain.transpose() * innovation;
    MatrixXd cov = state.cov - cross * gain;
    cov = 0.5 * (cov + cov.transpose()).eval();
    return {std::move(mean), std::move(cov)};
}

GaussianState reduce_state(const GaussianState& state, const std::vector<int>& keep) {
    const int m = state.modes();
    const auto k = static_cast<Eigen::Index>(keep.size());
    if (k == 0) throw std::invalid_argument("reduce_state: empty mode list");
    std::vector<int> idx;
    idx.reserve(2 * keep.size());
    for (int mode : keep) {
        if (mode < 0 || mode >= m)
            throw std::invalid_argument("reduce_state: mode index out of range");
        idx.push_back(mode);
    }
    for (int mode : keep) idx.push_back(m + mode);

    VectorXd mean(2 * k);
    MatrixXd cov(2 * k, 2 * k);
    for (Eigen::Index i = 0; i < 2 * k; ++i) {
        mean(i) = state.mean(idx[i]);
        for (Eigen::Index j = 0; j < 2 * k; ++j) cov(i, j) = state.cov(idx[i], idx[j]);
    }
    return {std::move(mean), std::move(cov)};
}

std::pair<VectorXd, MatrixXd> born_marginal(const GaussianState& state) {
    const int m = state.modes();
    return {state.mean.head(m), state.cov.topLeftCorner(m, m)};
}

MatrixXd sample_born(const GaussianState& state, int n, std::uint64_t seed) {
    if (n < 0) throw std::invalid_argument("sample_born: negative sample count");
    const int m = state.modes();
    if (n == 0) return MatrixXd(0, m);
    const MatrixXd l = cholesky(state.cov.topLeftCorner(m, m));
    const MatrixXd eps = standard_normal(m, n, seed);
    MatrixXd samples = (l * eps).transpose();
    samples.rowwise() += state.mean.head(m).transpose();
    return samples;
}

double det_cov(const GaussianState& state) {
    return state.cov.determinant();
}

}  // namespace gsnn
