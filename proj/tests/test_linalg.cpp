#include <catch2/catch_amalgamated.hpp>

#include "stabilis/linalg.hpp"

using namespace stabilis;

TEST_CASE("svec is an isometry", "[linalg]") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int p = 1 + rng.uniform_int(6);
        Mat A0 = rng.gaussian_mat(p, p);
        Mat A = 0.5 * (A0 + A0.transpose());
        Mat B0 = rng.gaussian_mat(p, p);
        Mat B = 0.5 * (B0 + B0.transpose());
        REQUIRE(svec(A).dot(svec(B)) == Catch::Approx((A.transpose() * B).trace()).margin(1e-12));
        REQUIRE((smat(svec(A)) - A).norm() < 1e-14);
    }
    REQUIRE(svec_dim(2) == 3);
    REQUIRE(svec_dim(8) == 36);
}

TEST_CASE("vec round trip", "[linalg]") {
    Rng rng(3);
    Mat A = rng.gaussian_mat(3, 5);
    REQUIRE((vec_mat(mat_vec(A), 3, 5) - A).norm() == 0.0);
}

TEST_CASE("nullspace and rank", "[linalg]") {
    Mat A(2, 3);
    A << 1, 0, 0,
         0, 1, 0;
    Mat N = nullspace(A);
    REQUIRE(N.cols() == 1);
    REQUIRE((A * N).norm() < 1e-12);
    REQUIRE(numeric_rank(A) == 2);
}

TEST_CASE("pinv on retained eigenspace", "[linalg]") {
    Mat W(2, 2);
    W << 1, 0,
         0, 0;
    Mat P = pinv_psd(W);
    REQUIRE(P(0, 0) == Catch::Approx(1.0));
    REQUIRE(P(1, 1) == Catch::Approx(0.0));
    Mat Pr = range_projector_psd(W);
    REQUIRE(Pr(0, 0) == Catch::Approx(1.0));
    REQUIRE(Pr(1, 1) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("rng determinism and orthogonality", "[linalg]") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.uniform() == b.uniform());
    Rng c(1);
    Mat Q = c.orthogonal(5);
    REQUIRE((Q * Q.transpose() - Mat::Identity(5, 5)).norm() < 1e-12);
}
