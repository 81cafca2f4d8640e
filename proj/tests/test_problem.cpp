#include <catch2/catch_amalgamated.hpp>

#include "stabilis/problem.hpp"

using namespace stabilis;

namespace {

ProblemSpec identity_orthant(int n, const Vec& c) {
    ProblemSpecInput in;
    in.n = n;
    in.h.Q = Mat::Identity(n, n);
    in.h.c = c;
    in.F.A = Mat::Identity(n, n);
    in.F.f0 = Vec::Zero(n);
    in.g = {CatalogKind::orthant, n, 0, 1.0};
    return assemble_problem(in);
}

}  // namespace

TEST_CASE("assemble_problem validates shapes", "[problem]") {
    SECTION("identity data is accepted") {
        ProblemSpec spec = identity_orthant(2, Vec::Zero(2));
        REQUIRE(spec.n == 2);
        REQUIRE(spec.m == 2);
    }
    SECTION("A of shape 3x2 against orthant(2) is rejected") {
        ProblemSpecInput in;
        in.n = 2;
        in.h.Q = Mat::Identity(2, 2);
        in.h.c = Vec::Zero(2);
        in.F.A = Mat::Zero(3, 2);
        in.F.f0 = Vec::Zero(3);
        in.g = {CatalogKind::orthant, 2, 0, 1.0};
        REQUIRE_THROWS_AS(assemble_problem(in), DimensionMismatch);
    }
    SECTION("psd(2) has svec image dimension 3") {
        ProblemSpecInput in;
        in.n = 3;
        in.h.Q = Mat::Identity(3, 3);
        in.h.c = Vec::Zero(3);
        in.F.A = Mat::Identity(3, 3);
        in.F.f0 = Vec::Zero(3);
        in.g = {CatalogKind::psd, 2, 0, 1.0};
        ProblemSpec spec = assemble_problem(in);
        REQUIRE(spec.m == 3);
    }
    SECTION("asymmetric Q is rejected") {
        ProblemSpecInput in;
        in.n = 2;
        in.h.Q = Mat::Zero(2, 2);
        in.h.Q(0, 1) = 1.0;
        in.h.c = Vec::Zero(2);
        in.F.A = Mat::Identity(2, 2);
        in.F.f0 = Vec::Zero(2);
        in.g = {CatalogKind::orthant, 2, 0, 1.0};
        REQUIRE_THROWS_AS(assemble_problem(in), AsymmetricQ);
    }
}

TEST_CASE("lagrangian gradient", "[problem]") {
    SECTION("all-zero data") {
        ProblemSpec spec = identity_orthant(2, Vec::Zero(2));
        REQUIRE(lagrangian_grad(spec, Vec::Zero(2), Vec::Zero(2)).norm() == 0.0);
    }
    SECTION("Q=I, c=-e, A=I at x=0, u=e") {
        ProblemSpec spec = identity_orthant(2, -Vec::Ones(2));
        REQUIRE(lagrangian_grad(spec, Vec::Zero(2), Vec::Ones(2)).norm() < 1e-15);
    }
    SECTION("scalar: Q=0, c=-1, A=1 at x=0, u=1") {
        ProblemSpecInput in;
        in.n = 1;
        in.h.Q = Mat::Zero(1, 1);
        in.h.c = -Vec::Ones(1);
        in.F.A = Mat::Identity(1, 1);
        in.F.f0 = Vec::Zero(1);
        in.g = {CatalogKind::orthant, 1, 0, 1.0};
        ProblemSpec spec = assemble_problem(in);
        REQUIRE(lagrangian_grad(spec, Vec::Zero(1), Vec::Ones(1)).norm() < 1e-15);
    }
}

TEST_CASE("lagrangian hessian", "[problem]") {
    SECTION("quadratic h, affine F gives Q") {
        ProblemSpec spec = identity_orthant(2, Vec::Zero(2));
        Rng rng(5);
        Mat H = lagrangian_hessian(spec, rng.gaussian_vec(2), rng.gaussian_vec(2));
        REQUIRE((H - Mat::Identity(2, 2)).norm() < 1e-15);
    }
    SECTION("builtin quadratic F(x) = (x^2/2, x) with u=(2,0)") {
        ProblemSpecInput in;
        in.n = 1;
        in.h.Q = Mat::Zero(1, 1);
        in.h.c = Vec::Zero(1);
        in.F.A = Mat::Zero(2, 1);
        in.F.A(1, 0) = 1.0;
        in.F.f0 = Vec::Zero(2);
        in.F.P = {Mat::Identity(1, 1), Mat::Zero(1, 1)};
        in.g = {CatalogKind::orthant, 2, 0, 1.0};
        ProblemSpec spec = assemble_problem(in);
        Vec u(2);
        u << 2.0, 0.0;
        Mat H = lagrangian_hessian(spec, Vec::Zero(1), u);
        REQUIRE(H(0, 0) == Catch::Approx(2.0));
        Vec F0 = spec.F_value(Vec::Ones(1));
        REQUIRE(F0[0] == Catch::Approx(0.5));
        REQUIRE(F0[1] == Catch::Approx(1.0));
    }
    SECTION("indefinite diagonal Q passes through") {
        ProblemSpecInput in;
        in.n = 2;
        in.h.Q = Mat::Zero(2, 2);
        in.h.Q(0, 0) = 1.0;
        in.h.Q(1, 1) = -1.0;
        in.h.c = Vec::Zero(2);
        in.F.A = Mat::Identity(2, 2);
        in.F.f0 = Vec::Zero(2);
        in.g = {CatalogKind::orthant, 2, 0, 1.0};
        ProblemSpec spec = assemble_problem(in);
        Mat H = lagrangian_hessian(spec, Vec::Zero(2), Vec::Zero(2));
        REQUIRE(H(0, 0) == 1.0);
        REQUIRE(H(1, 1) == -1.0);
    }
}

TEST_CASE("objective value", "[problem]") {
    ProblemSpec spec = identity_orthant(2, Vec::Zero(2));
    Vec x(2);
    x << -1.0, 0.0;
    REQUIRE(objective_value(spec, x) == Catch::Approx(0.5));
    x << 1.0, 0.0;
    REQUIRE(objective_value(spec, x) == kInf);

    ProblemSpecInput in;
    in.n = 3;
    in.h.Q = Mat::Zero(3, 3);
    in.h.c = Vec::Zero(3);
    in.F.A = Mat::Identity(3, 3);
    in.F.f0 = Vec::Zero(3);
    in.g = {CatalogKind::l1, 3, 0, 1.0};
    ProblemSpec l1spec = assemble_problem(in);
    Vec z(3);
    z << 2.0, -0.5, 0.0;
    REQUIRE(objective_value(l1spec, z) == Catch::Approx(2.5));
}

TEST_CASE("lagrangian consistency properties", "[problem]") {
    Rng rng(11);
    ProblemSpec spec = identity_orthant(4, rng.gaussian_vec(4));
    SECTION("gradient differences match the hessian exactly for affine F") {
        for (int trial = 0; trial < 25; ++trial) {
            Vec x = rng.gaussian_vec(4), d = rng.gaussian_vec(4), u = rng.gaussian_vec(4);
            Vec lhs = lagrangian_grad(spec, x + d, u) - lagrangian_grad(spec, x, u);
            Vec rhs = lagrangian_hessian(spec, x, u) * d;
            REQUIRE((lhs - rhs).norm() < 1e-12 * (1.0 + rhs.norm()));
        }
    }
    SECTION("hessian symmetry") {
        Mat H = lagrangian_hessian(spec, rng.gaussian_vec(4), rng.gaussian_vec(4));
        REQUIRE((H - H.transpose()).norm() < 1e-12);
    }
    SECTION("finite-difference gradient check on builtin quadratic F") {
        ProblemSpecInput in;
        in.n = 2;
        in.h.Q = Mat::Identity(2, 2);
        in.h.c = Vec::Zero(2);
        in.F.A = rng.gaussian_mat(3, 2);
        in.F.f0 = rng.gaussian_vec(3);
        in.F.P.resize(3);
        for (auto& P : in.F.P) {
            Mat G = rng.gaussian_mat(2, 2);
            P = 0.5 * (G + G.transpose());
        }
        in.g = {CatalogKind::orthant, 3, 0, 1.0};
        ProblemSpec qspec = assemble_problem(in);
        Vec x = rng.gaussian_vec(2), u = rng.gaussian_vec(3), d = rng.gaussian_vec(2);
        d /= d.norm();
        double prev_err = kInf;
        for (double tau : {1e-2, 1e-3}) {
            const double fd =
                (lagrangian_value(qspec, x + tau * d, u) - lagrangian_value(qspec, x - tau * d, u)) /
                (2 * tau);
            const double err = std::abs(fd - lagrangian_grad(qspec, x, u).dot(d));
            REQUIRE(err < 10.0 * tau * tau * (1.0 + u.norm()) * 10.0);
            REQUIRE(err <= prev_err + 1e-12);
            prev_err = err;
        }
    }
}
