#pragma once

// Dense linear algebra specialized to symplectic phase space. All matrices
// over M modes are 2M x 2M and ordered with the full position block first:
// R = (phi_1..phi_M, pi_1..pi_M).

#include <Eigen/Core>

#include <cstdint>

namespace gsnn {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// J = [[0, 1],[-1, 0]] in M x M blocks. J^T = -J, J^2 = -1.
MatrixXd symplectic_form(int modes);

struct SymplecticCheck {
    bool ok;
    double residual;  // max-abs entry of S J S^T - J
};

// Checks S J S^T = J. Throws std::invalid_argument for non-square or
// odd-dimensional input.
SymplecticCheck is_symplectic(const MatrixXd& s, double tol = 1e-9);

// Backward-stable dense matrix exponential (scaling and squaring).
// Throws std::invalid_argument on non-finite entries.
MatrixXd matrix_exp(const MatrixXd& x);

// Adjoint of the matrix exponential: given X and the gradient G of a scalar
// loss w.r.t. exp(X), returns the gradient w.r.t. X. Computed through the
// block identity exp([[X^T, G],[0, X^T]]) whose upper-right block is the
// Frechet derivative of exp at X^T in direction G.
MatrixXd matrix_exp_adjoint(const MatrixXd& x, const MatrixXd& grad);

// Learnable generator blocks of a symplectic layer. The derived generator
//   X = [[A, sym(B)], [sym(C), -A^T]],  sym(Z) = (Z + Z^T)/2
// satisfies J X = (J X)^T exactly, so exp(X) is symplectic.
struct BlockGenerator {
    MatrixXd a;
    MatrixXd b;
    MatrixXd c;

    int modes() const { return static_cast<int>(a.rows()); }
};

MatrixXd generator_matrix(const BlockGenerator& g);
MatrixXd symplectic_from_generator(const BlockGenerator& g);

// Lower-triangular Cholesky factor with L L^T = p. Requires symmetry within
// `sym_tol`; on a non-positive pivot retries once with `jitter` added to the
// diagonal, then throws FactorizationError carrying the failing pivot.
MatrixXd cholesky(const MatrixXd& p, double jitter = 1e-8,
                  double sym_tol = 1e-10);

// Smallest eigenvalue of a complex Hermitian matrix. Throws
// std::invalid_argument if h deviates from Hermitian by more than `herm_tol`
// in max-abs norm.
double hermitian_min_eigenvalue(const MatrixXcd& h, double herm_tol = 1e-10);

// Seeded standard-normal draws, used everywhere randomness is needed so that
// every result is a pure function of its seed.
MatrixXd standard_normal(int rows, int cols, std::uint64_t seed);

// Derives independent seeds from a base seed and a stream tag (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

}  // namespace gsnn
