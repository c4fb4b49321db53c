#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "curvemix/numerics.hpp"

using namespace curvemix;

namespace {

Eigen::MatrixXd random_spd(int n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = nd(rng);
    return m * m.transpose() + Eigen::MatrixXd::Identity(n, n);
}

}  // namespace

TEST_CASE("cholesky of the identity is the identity with zero jitter") {
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(3, 3);
    const SpdFactorization f = cholesky_factor(eye, 1e-3);
    CHECK(f.jitter_used == 0.0);
    CHECK((f.lower_factor - eye).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("cholesky of diag(4, 9) is diag(2, 3)") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
    a(0, 0) = 4.0;
    a(1, 1) = 9.0;
    const SpdFactorization f = cholesky_factor(a, 1e-3);
    CHECK(f.lower_factor(0, 0) == doctest::Approx(2.0));
    CHECK(f.lower_factor(1, 1) == doctest::Approx(3.0));
    CHECK(f.lower_factor(0, 1) == 0.0);
    CHECK(f.lower_factor(1, 0) == 0.0);
}

TEST_CASE("cholesky reconstructs a random SPD matrix") {
    const Eigen::MatrixXd a = random_spd(5, 17);
    const SpdFactorization f = cholesky_factor(a, 1e-3);
    CHECK(f.jitter_used == 0.0);
    const Eigen::MatrixXd rebuilt = f.lower_factor * f.lower_factor.transpose();
    CHECK((rebuilt - a).cwiseAbs().maxCoeff() < 1e-10 * a.cwiseAbs().maxCoeff());
    CHECK((f.lower_factor.diagonal().array() > 0.0).all());
}

TEST_CASE("cholesky escalates jitter on a singular matrix and records it") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Ones(3, 3);  // rank 1
    const SpdFactorization f = cholesky_factor(a, 1.0);
    CHECK(f.jitter_used > 0.0);
    const Eigen::MatrixXd rebuilt = f.lower_factor * f.lower_factor.transpose();
    const Eigen::MatrixXd target = a + f.jitter_used * Eigen::MatrixXd::Identity(3, 3);
    CHECK((rebuilt - target).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("cholesky throws NotPositiveDefinite when the jitter budget is exhausted") {
    Eigen::MatrixXd a = -Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(cholesky_factor(a, 1e-8), NotPositiveDefinite);
}

TEST_CASE("cholesky rejects non-square and asymmetric inputs") {
    CHECK_THROWS_AS(cholesky_factor(Eigen::MatrixXd::Zero(2, 3), 1.0), DimensionMismatch);
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
    a(0, 1) = 0.5;
    CHECK_THROWS_AS(cholesky_factor(a, 1.0), NotPositiveDefinite);
}

TEST_CASE("solve_spd with identity factorization returns the rhs") {
    const SpdFactorization f = cholesky_factor(Eigen::MatrixXd::Identity(4, 4), 1e-3);
    Eigen::MatrixXd b(4, 2);
    b << 1, 2, 3, 4, 5, 6, 7, 8;
    CHECK((solve_spd(f, b) - b).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("solve_spd on diag(4) solves 4x = 8") {
    Eigen::MatrixXd a(1, 1);
    a << 4.0;
    Eigen::VectorXd b(1);
    b << 8.0;
    CHECK(solve_spd(cholesky_factor(a, 1e-3), b)[0] == doctest::Approx(2.0));
}

TEST_CASE("solve_spd residual is tiny on a random system") {
    const Eigen::MatrixXd a = random_spd(6, 3);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd b(6, 3);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 3; ++j) b(i, j) = nd(rng);
    const Eigen::MatrixXd x = solve_spd(cholesky_factor(a, 1e-3), b);
    CHECK((a * x - b).norm() / b.norm() < 1e-10);
}

TEST_CASE("solve_spd checks dimensions") {
    const SpdFactorization f = cholesky_factor(Eigen::MatrixXd::Identity(3, 3), 1e-3);
    CHECK_THROWS_AS(solve_spd(f, Eigen::MatrixXd::Zero(4, 1)), DimensionMismatch);
}

TEST_CASE("solve of A against its own factorization gives the identity") {
    for (unsigned seed : {1u, 2u, 3u}) {
        const Eigen::MatrixXd a = random_spd(7, seed);
        const Eigen::MatrixXd eye = solve_spd(cholesky_factor(a, 1e-3), a);
        CHECK((eye - Eigen::MatrixXd::Identity(7, 7)).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("log_det matches direct determinants") {
    CHECK(log_det(cholesky_factor(Eigen::MatrixXd::Identity(3, 3), 1e-3)) == doctest::Approx(0.0));

    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
    d(0, 0) = 4.0;
    d(1, 1) = 9.0;
    CHECK(log_det(cholesky_factor(d, 1e-3)) == doctest::Approx(std::log(36.0)));

    const Eigen::MatrixXd a = random_spd(5, 11);
    const double direct = std::log(a.determinant());
    CHECK(log_det(cholesky_factor(a, 1e-3)) == doctest::Approx(direct).epsilon(1e-9));
}

TEST_CASE("log_sum_exp basics and stability") {
    Eigen::VectorXd v(2);
    v << 0.0, 0.0;
    CHECK(log_sum_exp(v) == doctest::Approx(std::log(2.0)));

    v << 1000.0, 1000.0;
    CHECK(log_sum_exp(v) == doctest::Approx(1000.0 + std::log(2.0)));

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    Eigen::VectorXd w(10);
    for (int i = 0; i < 10; ++i) w[i] = u(rng);
    double naive = 0.0;
    for (int i = 0; i < 10; ++i) naive += std::exp(w[i]);
    CHECK(log_sum_exp(w) == doctest::Approx(std::log(naive)).epsilon(1e-12));
}

TEST_CASE("log_sum_exp shift invariance") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    Eigen::VectorXd v(6);
    for (int i = 0; i < 6; ++i) v[i] = u(rng);
    for (double c : {-7.5, 0.25, 40.0}) {
        CHECK(log_sum_exp((v.array() + c).matrix()) ==
              doctest::Approx(log_sum_exp(v) + c).epsilon(1e-12));
    }
}

TEST_CASE("log_sum_exp rejects empty input and survives -inf entries") {
    CHECK_THROWS_AS(log_sum_exp(Eigen::VectorXd()), EmptyInput);
    Eigen::VectorXd v(3);
    v << -std::numeric_limits<double>::infinity(), 1.0, -std::numeric_limits<double>::infinity();
    CHECK(log_sum_exp(v) == doctest::Approx(1.0));
}
