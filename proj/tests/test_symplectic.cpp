#include "gsnn/symplectic.hpp"

#include "gsnn/errors.hpp"

#include <doctest.h>

#include <random>

using namespace gsnn;

namespace {

// Independent oracle: order-30 truncated Taylor series, Horner evaluation.
MatrixXd taylor_exp(const MatrixXd& x, int order = 30) {
    MatrixXd acc = MatrixXd::Identity(x.rows(), x.cols());
    for (int k = order; k >= 1; --k)
        acc = MatrixXd::Identity(x.rows(), x.cols()) + (x / k) * acc;
    return acc;
}

MatrixXd random_matrix(int n, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-scale, scale);
    MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = uniform(rng);
    return m;
}

// Blocks with induced infinity norm at most `max_norm`.
BlockGenerator random_generator(int modes, std::uint64_t seed, double max_norm = 2.0) {
    BlockGenerator g{random_matrix(modes, seed), random_matrix(modes, seed + 1),
                     random_matrix(modes, seed + 2)};
    for (auto* block : {&g.a, &g.b, &g.c}) {
        const double norm = block->cwiseAbs().rowwise().sum().maxCoeff();
        if (norm > max_norm) *block *= max_norm / norm;
    }
    return g;
}

}  // namespace

TEST_CASE("symplectic form") {
    const MatrixXd j1 = symplectic_form(1);
    CHECK(j1(0, 1) == 1.0);
    CHECK(j1(1, 0) == -1.0);
    CHECK(j1(0, 0) == 0.0);

    const MatrixXd j2 = symplectic_form(2);
    CHECK(j2.topRightCorner(2, 2).isApprox(MatrixXd::Identity(2, 2)));
    CHECK(j2.bottomLeftCorner(2, 2).isApprox(-MatrixXd::Identity(2, 2)));

    for (int m : {1, 2, 5}) {
        const MatrixXd j = symplectic_form(m);
        CHECK((j * j + MatrixXd::Identity(2 * m, 2 * m)).cwiseAbs().maxCoeff() == 0.0);
        CHECK((j.transpose() + j).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("is_symplectic") {
    CHECK(is_symplectic(MatrixXd::Identity(4, 4)).ok);
    CHECK(is_symplectic(MatrixXd::Identity(4, 4)).residual == 0.0);

    MatrixXd squeeze(2, 2);
    squeeze << 2.0, 0.0, 0.0, 0.5;
    CHECK(is_symplectic(squeeze).ok);

    MatrixXd stretched(2, 2);
    stretched << 2.0, 0.0, 0.0, 2.0;
    const auto check = is_symplectic(stretched);
    CHECK_FALSE(check.ok);
    CHECK(check.residual == doctest::Approx(3.0).epsilon(1e-12));

    CHECK_THROWS_AS((void)is_symplectic(MatrixXd::Identity(3, 3)), std::invalid_argument);
}

TEST_CASE("matrix_exp basics") {
    CHECK(matrix_exp(MatrixXd::Zero(3, 3)).isIdentity(1e-15));

    MatrixXd rot(2, 2);
    const double theta = M_PI / 2.0;
    rot << 0.0, theta, -theta, 0.0;
    MatrixXd expected(2, 2);
    expected << 0.0, 1.0, -1.0, 0.0;
    CHECK((matrix_exp(rot) - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((matrix_exp(rot) - taylor_exp(rot)).cwiseAbs().maxCoeff() < 1e-12);

    MatrixXd bad = MatrixXd::Zero(2, 2);
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS((void)matrix_exp(bad), std::invalid_argument);
}

TEST_CASE("matrix_exp inverse identity and Taylor oracle") {
    const MatrixXd x = random_matrix(6, 42, 0.5);
    const MatrixXd prod = matrix_exp(x) * matrix_exp(-x);
    CHECK((prod - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        MatrixXd y = random_matrix(5, 100 + seed, 1.0);
        const double norm = y.cwiseAbs().rowwise().sum().maxCoeff();
        if (norm > 1.0) y /= norm;  // keep within the oracle's comfort zone
        CHECK((matrix_exp(y) - taylor_exp(y)).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("generator matrix is Hamiltonian") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto g = random_generator(4, 7 * seed + 1);
        const MatrixXd x = generator_matrix(g);
        const MatrixXd j = symplectic_form(4);
        const MatrixXd jx = j * x;
        CHECK((jx - jx.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("symplectic_from_generator") {
    BlockGenerator zero{MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 2)};
    CHECK(symplectic_from_generator(zero).isIdentity(1e-15));

    const double r = 0.7;
    BlockGenerator scalar{MatrixXd::Constant(1, 1, r), MatrixXd::Zero(1, 1),
                          MatrixXd::Zero(1, 1)};
    const MatrixXd s = symplectic_from_generator(scalar);
    CHECK(s(0, 0) == doctest::Approx(std::exp(r)).epsilon(1e-14));
    CHECK(s(1, 1) == doctest::Approx(std::exp(-r)).epsilon(1e-14));
    CHECK(s(0, 1) == 0.0);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const int modes = 1 + static_cast<int>(seed % 16);
        const auto g = random_generator(modes, 997 * seed + 3);
        CHECK(is_symplectic(symplectic_from_generator(g), 1e-9).ok);
    }

    BlockGenerator mismatched{MatrixXd::Zero(2, 2), MatrixXd::Zero(3, 3),
                              MatrixXd::Zero(2, 2)};
    CHECK_THROWS_AS((void)symplectic_from_generator(mismatched), std::invalid_argument);
}

TEST_CASE("cholesky") {
    CHECK(cholesky(MatrixXd::Identity(3, 3)).isIdentity(1e-15));

    MatrixXd p(2, 2);
    p << 4.0, 2.0, 2.0, 5.0;
    MatrixXd expected(2, 2);
    expected << 2.0, 0.0, 1.0, 2.0;
    CHECK((cholesky(p) - expected).cwiseAbs().maxCoeff() < 1e-14);

    // Round trip on random SPD matrices.
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const MatrixXd a = random_matrix(8, 31 * seed + 5);
        const MatrixXd spd = a * a.transpose() + 0.1 * MatrixXd::Identity(8, 8);
        const MatrixXd l = cholesky(spd);
        const double rel = (l * l.transpose() - spd).norm() / spd.norm();
        CHECK(rel < 1e-9);
        CHECK(l.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseAbs().maxCoeff() ==
              0.0);
    }

    // Rank-deficient PSD succeeds through the jitter retry.
    MatrixXd psd = MatrixXd::Zero(3, 3);
    psd(0, 0) = 1.0;
    const MatrixXd l = cholesky(psd);
    CHECK((l * l.transpose() - psd).cwiseAbs().maxCoeff() < 1e-7);

    // Indefinite fails with the pivot index.
    MatrixXd indefinite = MatrixXd::Identity(3, 3);
    indefinite(2, 2) = -1.0;
    try {
        (void)cholesky(indefinite);
        CHECK(false);
    } catch (const FactorizationError& e) {
        CHECK(e.pivot() == 2);
    }

    MatrixXd asym(2, 2);
    asym << 1.0, 0.5, -0.5, 1.0;
    CHECK_THROWS_AS((void)cholesky(asym), std::invalid_argument);
}

TEST_CASE("hermitian_min_eigenvalue") {
    CHECK(hermitian_min_eigenvalue(MatrixXcd::Identity(3, 3)) ==
          doctest::Approx(1.0).epsilon(1e-12));

    // 1 + iJ for one mode has eigenvalues {0, 2}.
    MatrixXcd h = MatrixXcd::Identity(2, 2);
    h(0, 1) = std::complex<double>(0.0, 1.0);
    h(1, 0) = std::complex<double>(0.0, -1.0);
    CHECK(hermitian_min_eigenvalue(h) == doctest::Approx(0.0).epsilon(1e-12));

    MatrixXcd diag = MatrixXcd::Zero(2, 2);
    diag(0, 0) = 3.0;
    diag(1, 1) = 1.0;
    CHECK(hermitian_min_eigenvalue(diag) == doctest::Approx(1.0));

    MatrixXcd not_hermitian = MatrixXcd::Zero(2, 2);
    not_hermitian(0, 1) = 1.0;
    CHECK_THROWS_AS((void)hermitian_min_eigenvalue(not_hermitian), std::invalid_argument);
}

TEST_CASE("matrix_exp_adjoint matches finite differences") {
    const MatrixXd x = random_matrix(4, 11, 0.4);
    const MatrixXd g = random_matrix(4, 12, 1.0);
    const MatrixXd adj = matrix_exp_adjoint(x, g);
    const double h = 1e-6;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            MatrixXd up = x, down = x;
            up(i, j) += h;
            down(i, j) -= h;
            const double fd =
                ((matrix_exp(up) - matrix_exp(down)).array() * g.array()).sum() / (2 * h);
            CHECK(adj(i, j) == doctest::Approx(fd).epsilon(1e-5));
        }
}

TEST_CASE("seeded normals are reproducible") {
    const MatrixXd a = standard_normal(3, 5, 123);
    const MatrixXd b = standard_normal(3, 5, 123);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    const MatrixXd c = standard_normal(3, 5, 124);
    CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}
