#include "gsnn/symplectic.hpp"

#include "gsnn/errors.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>
#include <stdexcept>

namespace gsnn {

MatrixXd symplectic_form(int modes) {
    if (modes < 1) throw std::invalid_argument("symplectic_form: modes must be >= 1");
    MatrixXd j = MatrixXd::Zero(2 * modes, 2 * modes);
    j.topRightCorner(modes, modes).setIdentity();
    j.bottomLeftCorner(modes, modes) = -MatrixXd::Identity(modes, modes);
    return j;
}

SymplecticCheck is_symplectic(const MatrixXd& s, double tol) {
    if (s.rows() != s.cols())
        throw std::invalid_argument("is_symplectic: matrix must be square");
    if (s.rows() % 2 != 0)
        throw std::invalid_argument("is_symplectic: dimension must be even");
    const int modes = static_cast<int>(s.rows()) / 2;
    const MatrixXd j = symplectic_form(modes);
    const double residual = (s * j * s.transpose() - j).cwiseAbs().maxCoeff();
    return {residual <= tol, residual};
}

MatrixXd matrix_exp(const MatrixXd& x) {
    if (!x.allFinite())
        throw std::invalid_argument("matrix_exp: non-finite entries");
    if (x.rows() != x.cols())
        throw std::invalid_argument("matrix_exp: matrix must be square");
    return x.exp();
}

MatrixXd matrix_exp_adjoint(const MatrixXd& x, const MatrixXd& grad) {
    const auto n = x.rows();
    MatrixXd block = MatrixXd::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = x.transpose();
    block.bottomRightCorner(n, n) = x.transpose();
    block.topRightCorner(n, n) = grad;
    return block.exp().topRightCorner(n, n);
}

MatrixXd generator_matrix(const BlockGenerator& g) {
    const auto m = g.a.rows();
    if (g.a.cols() != m || g.b.rows() != m || g.b.cols() != m ||
        g.c.rows() != m || g.c.cols() != m)
        throw std::invalid_argument("generator_matrix: blocks must be square and equally sized");
    MatrixXd x(2 * m, 2 * m);
    x.topLeftCorner(m, m) = g.a;
    x.topRightCorner(m, m) = 0.5 * (g.b + g.b.transpose());
    x.bottomLeftCorner(m, m) = 0.5 * (g.c + g.c.transpose());
    x.bottomRightCorner(m, m) = -g.a.transpose();
    return x;
}

MatrixXd symplectic_from_generator(const BlockGenerator& g) {
    return matrix_exp(generator_matrix(g));
}

namespace {

// Unblocked lower Cholesky. Returns the failing pivot index or -1 on success.
int cholesky_in_place(MatrixXd& a) {
    const auto n = a.rows();
    for (Eigen::Index k = 0; k < n; ++k) {
        double pivot = a(k, k);
        for (Eigen::Index j = 0; j < k; ++j) pivot -= a(k, j) * a(k, j);
        if (!(pivot > 0.0) || !std::isfinite(pivot)) return static_cast<int>(k);
        const double lkk = std::sqrt(pivot);
        a(k, k) = lkk;
        for (Eigen::Index i = k + 1; i < n; ++i) {
            double v = a(i, k);
            for (Eigen::Index j = 0; j < k; ++j) v -= a(i, j) * a(k, j);
            a(i, k) = v / lkk;
        }
    }
    a.triangularView<Eigen::StrictlyUpper>().setZero();
    return -1;
}

}  // namespace

MatrixXd cholesky(const MatrixXd& p, double jitter, double sym_tol) {
    if (p.rows() != p.cols())
        throw std::invalid_argument("cholesky: matrix must be square");
    const double asym = (p - p.transpose()).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
    if (asym > sym_tol * scale)
        throw std::invalid_argument("cholesky: matrix not symmetric within tolerance");

    MatrixXd l = 0.5 * (p + p.transpose());
    int pivot = cholesky_in_place(l);
    if (pivot < 0) return l;

    l = 0.5 * (p + p.transpose());
    l.diagonal().array() += jitter;
    pivot = cholesky_in_place(l);
    if (pivot < 0) return l;
    throw FactorizationError(
        "cholesky: matrix not positive definite (pivot " + std::to_string(pivot) + ")",
        pivot);
}

double hermitian_min_eigenvalue(const MatrixXcd& h, double herm_tol) {
    if (h.rows() != h.cols())
        throw std::invalid_argument("hermitian_min_eigenvalue: matrix must be square");
    const double dev = (h - h.adjoint()).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
    if (dev > herm_tol * scale)
        throw std::invalid_argument("hermitian_min_eigenvalue: matrix not Hermitian");
    Eigen::SelfAdjointEigenSolver<MatrixXcd> solver(0.5 * (h + h.adjoint()),
                                                    Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

MatrixXd standard_normal(int rows, int cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    MatrixXd z(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) z(r, c) = normal(rng);
    return z;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace gsnn
