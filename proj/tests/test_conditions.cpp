#include <catch2/catch_amalgamated.hpp>

#include "stabilis/conditions.hpp"
#include "stabilis/instances.hpp"
#include "stabilis/spectral_analysis.hpp"

using namespace stabilis;

namespace {

ProblemSpec make_problem(const Mat& Q, const Vec& c, const Mat& A, CatalogFunction g) {
    ProblemSpecInput in;
    in.n = static_cast<int>(Q.rows());
    in.h.Q = Q;
    in.h.c = c;
    in.F.A = A;
    in.F.f0 = Vec::Zero(A.rows());
    in.g = g;
    return assemble_problem(in);
}

}  // namespace

TEST_CASE("robinson constraint qualification", "[conditions]") {
    SECTION("invertible map holds with unit margin") {
        Instance inst = orthant_degenerate(2);
        ConditionVerdict v = check_rcq(inst.spec, inst.xbar);
        REQUIRE(v.status == Status::holds);
        REQUIRE(v.margin >= 1.0 - 1e-9);
    }
    SECTION("full-domain kinds hold trivially") {
        ProblemSpec spec = make_problem(Mat::Identity(3, 3), Vec::Zero(3), Mat::Zero(3, 3),
                                        {CatalogKind::l1, 3, 0, 1.0});
        ConditionVerdict v = check_rcq(spec, Vec::Zero(3));
        REQUIRE(v.status == Status::holds);
        REQUIRE(v.detail == "trivial normal cone");
    }
    SECTION("duplicated rows still satisfy RCQ at the orthant") {
        Mat A(2, 1);
        A << 1.0, 1.0;
        ProblemSpec spec = make_problem(Mat::Identity(1, 1), Vec::Zero(1), A,
                                        {CatalogKind::orthant, 2, 0, 1.0});
        ConditionVerdict v = check_rcq(spec, Vec::Zero(1));
        REQUIRE(v.status == Status::holds);
    }
    SECTION("constant map onto the boundary fails") {
        Mat A = Mat::Zero(1, 1);
        ProblemSpec spec = make_problem(Mat::Identity(1, 1), Vec::Zero(1), A,
                                        {CatalogKind::orthant, 1, 0, 1.0});
        ConditionVerdict v = check_rcq(spec, Vec::Zero(1));
        REQUIRE(v.status == Status::fails);
    }
}

TEST_CASE("strong robinson constraint qualification", "[conditions]") {
    SECTION("invertible map holds") {
        Instance inst = orthant_strict(2);
        ConditionVerdict v = check_srcq(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(v.status == Status::holds);
    }
    SECTION("duplicated rows with zero multiplier hold") {
        Mat A(2, 1);
        A << 1.0, 1.0;
        ProblemSpec spec = make_problem(Mat::Identity(1, 1), Vec::Zero(1), A,
                                        {CatalogKind::orthant, 2, 0, 1.0});
        ConditionVerdict v = check_srcq(spec, Vec::Zero(1), Vec::Zero(2));
        REQUIRE(v.status == Status::holds);
    }
    SECTION("a dead image row gives an explicit witness") {
        Mat A(2, 1);
        A << 1.0, 0.0;
        ProblemSpec spec = make_problem(Mat::Identity(1, 1), Vec::Zero(1), A,
                                        {CatalogKind::orthant, 2, 0, 1.0});
        ConditionVerdict v = check_srcq(spec, Vec::Zero(1), Vec::Zero(2));
        REQUIRE(v.status == Status::fails);
    }
}

TEST_CASE("constraint nondegeneracy", "[conditions]") {
    SECTION("identity map margin is one") {
        Instance inst = orthant_degenerate(2);
        ConditionVerdict v = check_nondegeneracy(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(v.status == Status::holds);
        REQUIRE(v.margin >= 1.0 - 1e-12);
    }
    SECTION("rank-one image with strict complementarity fails") {
        Instance inst = rank_deficient();
        ConditionVerdict v = check_nondegeneracy(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(v.status == Status::fails);
    }
    SECTION("inactive constraints make the lineality space full") {
        // F(x) = (x, 0x) - 1 maps into the interior
        Mat A(2, 1);
        A << 1.0, 0.0;
        ProblemSpecInput in;
        in.n = 1;
        in.h.Q = Mat::Identity(1, 1);
        in.h.c = Vec::Ones(1);
        in.F.A = A;
        in.F.f0 = -Vec::Ones(2);
        in.g = {CatalogKind::orthant, 2, 0, 1.0};
        ProblemSpec spec = assemble_problem(in);
        ConditionVerdict v = check_nondegeneracy(spec, -Vec::Ones(1), Vec::Zero(2));
        REQUIRE(v.status == Status::holds);
    }
    SECTION("exact reproducibility") {
        Instance inst = rank_deficient();
        ConditionVerdict a = check_nondegeneracy(inst.spec, inst.xbar, inst.ubar);
        ConditionVerdict b = check_nondegeneracy(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(a.margin == b.margin);
    }
}

TEST_CASE("soqc reduces to nondegeneracy with a kernel cross-check", "[conditions]") {
    for (Instance inst : {orthant_degenerate(2), orthant_strict(3), rank_deficient()}) {
        ConditionVerdict nd = check_nondegeneracy(inst.spec, inst.xbar, inst.ubar);
        ConditionVerdict sq = check_soqc(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(nd.status == sq.status);
        REQUIRE(sq.detail.find("cross-check") != std::string::npos);
    }
    // scalar strict-complementarity: U = 0, ker JF^T = {0}: consistent
    Instance lin = orthant_strict(1);
    ProblemSpec linear = make_problem(Mat::Zero(1, 1), -Vec::Ones(1), Mat::Identity(1, 1),
                                      {CatalogKind::orthant, 1, 0, 1.0});
    ConditionVerdict v = check_soqc(linear, Vec::Zero(1), Vec::Ones(1));
    REQUIRE(v.status == Status::holds);
    REQUIRE(v.detail.find("0/32") != std::string::npos);
}

TEST_CASE("second-order sufficient condition", "[conditions]") {
    SECTION("strictly convex degenerate orthant holds with margin one") {
        Instance inst = orthant_degenerate(2);
        ConditionVerdict v = check_sosc(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(v.status == Status::holds);
        REQUIRE(v.margin == Catch::Approx(1.0).margin(1e-6));
    }
    SECTION("saddle fails with margin -1") {
        Instance inst = saddle_scalar();
        ConditionVerdict v = check_sosc(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(v.status == Status::fails);
        REQUIRE(v.margin == Catch::Approx(-1.0).margin(1e-6));
    }
    SECTION("empty critical cone holds vacuously at the margin cap") {
        ProblemSpec linear = make_problem(Mat::Zero(1, 1), -Vec::Ones(1), Mat::Identity(1, 1),
                                          {CatalogKind::orthant, 1, 0, 1.0});
        ConditionVerdict v = check_sosc(linear, Vec::Zero(1), Vec::Ones(1));
        REQUIRE(v.status == Status::holds);
        REQUIRE(v.margin == kMarginCap);
    }
}

TEST_CASE("strong second-order sufficient condition", "[conditions]") {
    SECTION("degenerate orthant holds with margin one") {
        Instance inst = orthant_degenerate(2);
        ConditionVerdict v = check_ssosc(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(v.status == Status::holds);
        REQUIRE(v.margin == Catch::Approx(1.0));
    }
    SECTION("saddle fails with margin -1") {
        Instance inst = saddle_scalar();
        ConditionVerdict v = check_ssosc(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(v.status == Status::fails);
        REQUIRE(v.margin == Catch::Approx(-1.0));
    }
    SECTION("spectral instance inside the dual ball holds trivially") {
        Instance inst = spectral_instance(0, 3);
        ConditionVerdict v = check_ssosc(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(v.status == Status::holds);
    }
}

TEST_CASE("generalized jacobian nonsingularity", "[conditions]") {
    SECTION("strict complementarity scalar: E = [[0,1],[-1,0]]") {
        ProblemSpec linear = make_problem(Mat::Zero(1, 1), -Vec::Ones(1), Mat::Identity(1, 1),
                                          {CatalogKind::orthant, 1, 0, 1.0});
        ConditionVerdict v = check_jz_nonsingular(linear, Vec::Zero(1), Vec::Ones(1));
        REQUIRE(v.status == Status::holds);
        REQUIRE(v.margin == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("degenerate orthant: all vertex elements nonsingular") {
        Instance inst = orthant_degenerate(2);
        ConditionVerdict v = check_jz_nonsingular(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(v.status == Status::holds);
    }
    SECTION("saddle: the interior singular element is located by bisection") {
        Instance inst = saddle_scalar();
        ConditionVerdict v = check_jz_nonsingular(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(v.status == Status::fails);
        REQUIRE(v.detail.find("bisection") != std::string::npos);
    }
}

TEST_CASE("certificate and consistency matrix", "[conditions]") {
    SECTION("all-holds instance passes every implication") {
        Instance inst = orthant_degenerate(2);
        Certificate cert = certify(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(cert.rcq.status == Status::holds);
        REQUIRE(cert.srcq.status == Status::holds);
        REQUIRE(cert.nondegeneracy.status == Status::holds);
        REQUIRE(cert.soqc.status == Status::holds);
        REQUIRE(cert.sosc.status == Status::holds);
        REQUIRE(cert.ssosc.status == Status::holds);
        REQUIRE(cert.jz_nonsingular.status == Status::holds);
        REQUIRE(cert.multiplier_unique);
        REQUIRE(!consistency_violated(cert));
        REQUIRE(cert.consistency.at("nondegeneracy_iff_soqc") == "pass");
        REQUIRE(cert.consistency.at("soqc_ssosc_iff_jz") == "pass");
        REQUIRE(cert.consistency.at("strong_implies_isolated") == "pass");
    }
    SECTION("rank-deficient instance: nondegeneracy and soqc fail together") {
        Instance inst = rank_deficient();
        Certificate cert = certify(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(cert.nondegeneracy.status == Status::fails);
        REQUIRE(cert.soqc.status == Status::fails);
        REQUIRE(!consistency_violated(cert));
    }
    SECTION("saddle: equivalences stay consistent on the failing side") {
        Instance inst = saddle_scalar();
        Certificate cert = certify(inst.spec, inst.xbar, inst.ubar);
        REQUIRE(cert.ssosc.status == Status::fails);
        REQUIRE(cert.jz_nonsingular.status == Status::fails);
        REQUIRE(cert.consistency.at("soqc_ssosc_iff_jz") == "pass");
        REQUIRE(!consistency_violated(cert));
    }
    SECTION("non-KKT pair throws") {
        Instance inst = orthant_degenerate(2);
        REQUIRE_THROWS_AS(certify(inst.spec, Vec::Ones(2), inst.ubar), NotKKT);
    }
}

TEST_CASE("soqc status equals nondegeneracy status across random instances", "[conditions]") {
    int checked = 0;
    for (int s = 0; s < 12; ++s) {
        for (auto cls : {StabilityClass::stable, StabilityClass::nondeg_fails}) {
            Instance inst = random_instance(
                static_cast<CatalogKind>(s % 6), cls, 4000 + s);
            ConditionVerdict nd = check_nondegeneracy(inst.spec, inst.xbar, inst.ubar);
            ConditionVerdict sq = check_soqc(inst.spec, inst.xbar, inst.ubar);
            REQUIRE(nd.status == sq.status);
            ++checked;
        }
    }
    REQUIRE(checked == 24);
}

TEST_CASE("scale invariance of verdicts", "[conditions]") {
    for (double t : {0.1, 10.0}) {
        Instance inst = orthant_degenerate(3);
        Certificate base = certify(inst.spec, inst.xbar, inst.ubar);
        ProblemSpecInput in;
        in.n = 3;
        in.h.Q = t * Mat::Identity(3, 3);
        in.h.c = Vec::Zero(3);
        in.F.A = Mat::Identity(3, 3);
        in.F.f0 = Vec::Zero(3);
        in.g = inst.spec.g;
        ProblemSpec scaled = assemble_problem(in);
        Certificate cert = certify(scaled, inst.xbar, Vec(t * inst.ubar));
        REQUIRE(cert.rcq.status == base.rcq.status);
        REQUIRE(cert.srcq.status == base.srcq.status);
        REQUIRE(cert.nondegeneracy.status == base.nondegeneracy.status);
        REQUIRE(cert.soqc.status == base.soqc.status);
        REQUIRE(cert.sosc.status == base.sosc.status);
        REQUIRE(cert.ssosc.status == base.ssosc.status);
        REQUIRE(cert.jz_nonsingular.status == base.jz_nonsingular.status);
        REQUIRE(cert.ssosc.margin == Catch::Approx(t * base.ssosc.margin));
    }
}

TEST_CASE("lemma 5.5 direction over certified instances", "[conditions]") {
    // soqc and ssosc holding with real margins forces nonsingular samples
    for (int s = 0; s < 6; ++s) {
        Instance inst = random_instance(static_cast<CatalogKind>(s), StabilityClass::stable,
                                        9100 + s);
        Certificate cert = certify(inst.spec, inst.xbar, inst.ubar);
        if (cert.soqc.status == Status::holds && cert.ssosc.status == Status::holds &&
            cert.soqc.margin > 1e-6 && cert.ssosc.margin > 1e-6) {
            REQUIRE(cert.jz_nonsingular.status == Status::holds);
            REQUIRE(cert.jz_nonsingular.margin > 1e-9);
        }
    }
}

TEST_CASE("specialized spectral quadratic form matches the generic route", "[conditions]") {
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
        Instance inst = spectral_instance(2, seed);
        const Vec y = inst.spec.F_value(inst.xbar);
        Mat Zm = vec_mat(y + inst.ubar, inst.spec.g.p, inst.spec.g.q);
        REQUIRE(spectral_case_classify(Zm) == SpectralCase::outside);
        CriticalCone cone = critical_cone(inst.spec, inst.xbar, inst.ubar);
        const int k = static_cast<int>(cone.basis.cols());
        if (k == 0) continue;
        Mat J = inst.spec.F_jacobian(inst.xbar);
        Mat H = lagrangian_hessian(inst.spec, inst.xbar, inst.ubar);
        // quadratic form via the explicit display, polarized into a matrix
        auto qform = [&](const Vec& d) {
            Mat Y = vec_mat(Vec(J * d), inst.spec.g.p, inst.spec.g.q);
            return d.dot(H * d) + spectral_ssosc_quadratic(Zm, Y);
        };
        Mat Hs(k, k);
        for (int i = 0; i < k; ++i) {
            for (int j = i; j < k; ++j) {
                const double qpp = qform(cone.basis.col(i) + cone.basis.col(j));
                const double qmm = qform(cone.basis.col(i) - cone.basis.col(j));
                Hs(i, j) = Hs(j, i) = 0.25 * (qpp - qmm);
            }
        }
        auto [B, Hr] = reduced_ssosc_matrix(inst.spec, inst.xbar, inst.ubar);
        Vec l1v, l2v;
        Mat V1, V2;
        sym_eig(Hs, l1v, V1);
        sym_eig(Hr, l2v, V2);
        REQUIRE(l1v.size() == l2v.size());
        REQUIRE((l1v - l2v).cwiseAbs().maxCoeff() <=
                1e-8 * (1.0 + l2v.cwiseAbs().maxCoeff()));
    }
}
