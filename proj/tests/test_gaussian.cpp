#include "gsnn/gaussian.hpp"

#include "gsnn/errors.hpp"
#include "gsnn/gp.hpp"
#include "gsnn/serialize.hpp"

#include <doctest.h>

#include <Eigen/LU>

#include <random>

using namespace gsnn;

namespace {

MatrixXd random_layer(int modes, std::uint64_t seed, double scale = 0.3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-scale, scale);
    BlockGenerator g{MatrixXd(modes, modes), MatrixXd(modes, modes),
                     MatrixXd(modes, modes)};
    for (auto* block : {&g.a, &g.b, &g.c})
        for (Eigen::Index i = 0; i < block->size(); ++i) (*block)(i) = uniform(rng);
    return symplectic_from_generator(g);
}

}  // namespace

TEST_CASE("vacuum") {
    const GaussianState v = vacuum(1);
    CHECK(v.mean.cwiseAbs().maxCoeff() == 0.0);
    CHECK(v.cov.isIdentity(1e-15));
    CHECK(det_cov(v) == doctest::Approx(1.0).epsilon(1e-14));
    const auto check = check_uncertainty(v);
    CHECK(check.ok);
    CHECK(check.min_eigenvalue == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("displace") {
    const GaussianState v = vacuum(1);
    VectorXd xi(2);
    xi << 1.0, 0.0;
    const GaussianState d = displace(v, xi);
    CHECK(d.mean(0) == 1.0);
    CHECK(d.mean(1) == 0.0);
    CHECK(d.cov.isIdentity(1e-15));

    CHECK((displace(v, VectorXd::Zero(2)).mean - v.mean).cwiseAbs().maxCoeff() == 0.0);

    VectorXd xi2(2);
    xi2 << -0.25, 2.0;
    const GaussianState both = displace(displace(v, xi), xi2);
    CHECK((both.mean - (xi + xi2)).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS((void)displace(v, VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("apply_symplectic") {
    const GaussianState v = vacuum(1);
    CHECK((apply_symplectic(v, MatrixXd::Identity(2, 2)).cov - v.cov).cwiseAbs().maxCoeff() ==
          0.0);

    const double r = std::log(2.0);
    MatrixXd squeeze(2, 2);
    squeeze << std::exp(r), 0.0, 0.0, std::exp(-r);
    const GaussianState s = apply_symplectic(v, squeeze);
    CHECK(s.cov(0, 0) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(s.cov(1, 1) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(det_cov(s) == doctest::Approx(1.0).epsilon(1e-12));

    // Chains of layers preserve the uncertainty bound.
    GaussianState state = vacuum(6);
    for (std::uint64_t i = 0; i < 5; ++i)
        state = apply_symplectic(state, random_layer(6, 17 * i + 3));
    CHECK(check_uncertainty(state).ok);

    MatrixXd not_symplectic = 2.0 * MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS((void)apply_symplectic(v, not_symplectic), std::invalid_argument);
}

TEST_CASE("check_uncertainty distinguishes quantum from classical covariances") {
    CHECK(check_uncertainty(vacuum(2)).ok);

    GaussianState narrow = vacuum(1);
    narrow.cov = 0.5 * MatrixXd::Identity(2, 2);
    const auto below = check_uncertainty(narrow);
    CHECK_FALSE(below.ok);
    CHECK(below.min_eigenvalue == doctest::Approx(-0.5).epsilon(1e-12));

    GaussianState wide = vacuum(1);
    wide.cov = 2.0 * MatrixXd::Identity(2, 2);
    const auto above = check_uncertainty(wide);
    CHECK(above.ok);
    CHECK(above.min_eigenvalue == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("condition: closed form on one mode") {
    const GaussianState prior = vacuum(1);

    // Empty record: posterior equals prior.
    const GaussianState same = condition(prior, {});
    CHECK((same.mean - prior.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((same.cov - prior.cov).cwiseAbs().maxCoeff() == 0.0);

    // Observe y = 2 at the single site with unit noise.
    const GaussianState post = condition(prior, {{0}, {2.0}, 1.0});
    CHECK(post.mean(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(post.cov(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(post.cov(1, 1) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("condition matches the GP posterior on the position sector") {
    const KernelSpec spec{KernelFamily::matern_half, 0.3, 1.2};
    const auto grid = uniform_grid(3);
    IrregularSeries data;
    data.locations = {grid[0], grid[2]};
    data.values = {0.8, -0.4};
    const double noise = 1e-2;

    const GpPosterior gp = gp_posterior(spec, data, noise, grid);

    // Prior state with position covariance k and momenta at k^{-1}.
    const MatrixXd k = kernel_matrix(spec, grid, grid);
    const MatrixXd l = cholesky(k);
    GpPosterior prior_factors;
    prior_factors.grid = grid;
    prior_factors.mean = VectorXd::Zero(3);
    prior_factors.cov = k;
    prior_factors.chol_cov = l;
    const MatrixXd inv =
        l.transpose().triangularView<Eigen::Upper>().solve(MatrixXd(
            l.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(3, 3))));
    prior_factors.chol_prec = cholesky(0.5 * (inv + inv.transpose()));
    const GaussianState prior = embed_posterior_state(prior_factors);

    const GaussianState post = condition(prior, {{0, 2}, {0.8, -0.4}, noise});
    const auto [mean, cov] = born_marginal(post);
    CHECK((mean - gp.mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((cov - gp.cov).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("condition composes like Bayes") {
    // Correlated 4-mode prior from a random layer acting on the vacuum.
    GaussianState prior = apply_symplectic(vacuum(4), random_layer(4, 99));
    const double noise = 0.05;

    const GaussianState once =
        condition(prior, {{0, 2, 3}, {0.5, -0.2, 0.9}, noise});
    const GaussianState stepwise = condition(
        condition(prior, {{0}, {0.5}, noise}), {{2, 3}, {-0.2, 0.9}, noise});
    CHECK((once.mean - stepwise.mean).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((once.cov - stepwise.cov).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("condition keeps the reduced state quantum") {
    // The registers that were measured drop below the uncertainty bound, but
    // the state reduced to the unobserved modes must stay valid.
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        GaussianState prior = apply_symplectic(vacuum(5), random_layer(5, 1000 + seed));
        const double noise = seed % 2 == 0 ? 0.0 : 1e-2;
        const GaussianState post = condition(prior, {{1, 3}, {0.3, -0.7}, noise});
        const GaussianState reduced = reduce_state(post, {0, 2, 4});
        CHECK(check_uncertainty(reduced).min_eigenvalue >= -1e-8);
    }
}

TEST_CASE("condition rejects a singular observation block") {
    GaussianState flat = vacuum(2);
    flat.cov(0, 0) = 0.0;  // no prior variance at site 0
    CHECK_THROWS_AS((void)condition(flat, {{0}, {1.0}, 0.0}), FactorizationError);
    CHECK_THROWS_AS((void)condition(vacuum(2), {{0, 0}, {1.0, 1.0}, 0.0}),
                    std::invalid_argument);
}

TEST_CASE("born_marginal") {
    const auto [mean, cov] = born_marginal(vacuum(3));
    CHECK(mean.cwiseAbs().maxCoeff() == 0.0);
    CHECK(cov.isIdentity(1e-15));

    VectorXd xi(2);
    xi << 0.7, -1.3;
    const auto [dm, dc] = born_marginal(displace(vacuum(1), xi));
    CHECK(dm(0) == 0.7);  // momentum displacement is invisible

    // Block-diagonal S acts on the position marginal through its A block only.
    MatrixXd a(2, 2);
    a << 1.0, 0.5, 0.0, 2.0;
    MatrixXd s = MatrixXd::Zero(4, 4);
    s.topLeftCorner(2, 2) = a;
    s.bottomRightCorner(2, 2) = a.inverse().transpose();
    GaussianState state = apply_symplectic(vacuum(2), random_layer(2, 5));
    const auto [m0, c0] = born_marginal(state);
    const auto [m1, c1] = born_marginal(apply_symplectic(state, s));
    CHECK((m1 - a * m0).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((c1 - a * c0 * a.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sample_born statistics") {
    const int n = 100000;

    // Vacuum sample mean within 5 sigma / sqrt(n).
    const MatrixXd vac_samples = sample_born(vacuum(2), n, 7);
    CHECK(vac_samples.colwise().mean().cwiseAbs().maxCoeff() < 0.02);

    GaussianState stretched = vacuum(2);
    stretched.cov.topLeftCorner(2, 2) = Eigen::Vector2d(1.0, 4.0).asDiagonal();
    const MatrixXd samples = sample_born(stretched, n, 8);
    const MatrixXd centered = samples.rowwise() - samples.colwise().mean();
    const MatrixXd emp = centered.transpose() * centered / double(n);
    CHECK((emp - stretched.cov.topLeftCorner(2, 2)).cwiseAbs().maxCoeff() < 0.1);

    CHECK(sample_born(vacuum(2), 0, 1).rows() == 0);
    const MatrixXd a = sample_born(vacuum(2), 5, 3);
    const MatrixXd b = sample_born(vacuum(2), 5, 3);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("state json round trip") {
    GaussianState state = apply_symplectic(vacuum(2), random_layer(2, 44));
    VectorXd xi(4);
    xi << 0.1, -0.2, 0.3, -0.4;
    state = displace(state, xi);
    const GaussianState back = state_from_json(state_to_json(state));
    CHECK((back.mean - state.mean).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((back.cov - state.cov).cwiseAbs().maxCoeff() < 1e-15);
}
