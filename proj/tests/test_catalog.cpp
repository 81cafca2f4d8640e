#include <catch2/catch_amalgamated.hpp>

#include "stabilis/catalog.hpp"
#include "stabilis/catalog_cones.hpp"

using namespace stabilis;

namespace {

/// Independent l1-ball projection oracle: bisection on the threshold theta
/// with Sum max(|v_i|-theta,0) = radius.
Vec l1_ball_project_oracle(const Vec& v, double radius) {
    if (v.lpNorm<1>() <= radius) return v;
    double lo = 0.0, hi = v.cwiseAbs().maxCoeff();
    for (int it = 0; it < 200; ++it) {
        const double theta = 0.5 * (lo + hi);
        const double s = (v.cwiseAbs().array() - theta).max(0.0).sum();
        (s > radius ? lo : hi) = theta;
    }
    const double theta = 0.5 * (lo + hi);
    Vec out(v.size());
    for (int i = 0; i < v.size(); ++i) {
        const double m = std::max(std::abs(v[i]) - theta, 0.0);
        out[i] = v[i] >= 0 ? m : -m;
    }
    return out;
}

Vec random_point(CatalogKind kind, int dim_or_p, int q, Rng& rng) {
    CatalogFunction g{kind, dim_or_p, q, 1.0};
    return rng.gaussian_vec(g.dim());
}

std::vector<CatalogFunction> all_kinds() {
    return {
        {CatalogKind::orthant, 4, 0, 1.0},  {CatalogKind::soc, 4, 0, 1.0},
        {CatalogKind::psd, 3, 0, 1.0},      {CatalogKind::l1, 4, 0, 1.0},
        {CatalogKind::nuclear, 2, 3, 1.0},  {CatalogKind::spectral, 2, 3, 1.0},
    };
}

}  // namespace

TEST_CASE("prox closed forms", "[catalog]") {
    SECTION("orthant projection") {
        CatalogFunction g{CatalogKind::orthant, 2, 0, 1.0};
        Vec z(2);
        z << 1.0, -2.0;
        Vec p = prox(g, z, 1.0);
        REQUIRE(p[0] == 0.0);
        REQUIRE(p[1] == -2.0);
    }
    SECTION("l1 soft threshold") {
        CatalogFunction g{CatalogKind::l1, 3, 0, 1.0};
        Vec z(3);
        z << 2.0, -0.5, 0.0;
        Vec p = prox(g, z, 1.0);
        REQUIRE(p[0] == Catch::Approx(1.0));
        REQUIRE(p[1] == 0.0);
        REQUIRE(p[2] == 0.0);
    }
    SECTION("spectral prox subtracts the l1-ball projection of singular values") {
        CatalogFunction g{CatalogKind::spectral, 2, 2, 1.0};
        Mat Z = Vec(Vec::Zero(2)).asDiagonal();
        Z(0, 0) = 2.0;
        Z(1, 1) = 1.0;
        Vec p = prox(g, mat_vec(Z), 1.0);
        Mat P = vec_mat(p, 2, 2);
        // oracle: sigma=(2,1), Pi_B(sigma)=(1,0) by sort-and-threshold
        Vec pb = l1_ball_project_oracle((Vec(2) << 2.0, 1.0).finished(), 1.0);
        REQUIRE(pb[0] == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(pb[1] == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(P(0, 0) == Catch::Approx(1.0).margin(1e-10));
        REQUIRE(P(1, 1) == Catch::Approx(1.0).margin(1e-10));
        REQUIRE(std::abs(P(0, 1)) + std::abs(P(1, 0)) < 1e-12);
    }
}

TEST_CASE("spectral thresholds", "[catalog]") {
    SECTION("sigma=(2,1,0)") {
        SpectralThresholds th = spectral_thresholds((Vec(3) << 2, 1, 0).finished());
        REQUIRE(th.k1 == 1);
        REQUIRE(th.k2 == 2);
        REQUIRE((th.p - (Vec(3) << 1, 0, 0).finished()).norm() < 1e-12);
    }
    SECTION("scalar shrink") {
        SpectralThresholds th = spectral_thresholds((Vec(1) << 3).finished());
        REQUIRE(th.k1 == 1);
        REQUIRE(th.k2 == 1);
        REQUIRE(th.p[0] == Catch::Approx(1.0));
    }
    SECTION("sigma=(0.6,0.5) is case three with k1=k2=2") {
        SpectralThresholds th = spectral_thresholds((Vec(2) << 0.6, 0.5).finished());
        REQUIRE(th.k1 == 2);
        REQUIRE(th.k2 == 2);
        REQUIRE(th.p[0] == Catch::Approx(0.55));
        REQUIRE(th.p[1] == Catch::Approx(0.45));
    }
    SECTION("inside the ball throws NotCaseThree") {
        REQUIRE_THROWS_AS(spectral_thresholds((Vec(2) << 0.3, 0.2).finished()), NotCaseThree);
    }
    SECTION("projection matches the bisection oracle, k1<=k2") {
        Rng rng(17);
        for (int trial = 0; trial < 200; ++trial) {
            const int n = 1 + rng.uniform_int(6);
            Vec s(n);
            for (int i = 0; i < n; ++i) s[i] = std::abs(rng.gaussian()) + 0.01;
            std::sort(s.data(), s.data() + n, std::greater<double>());
            if (s.lpNorm<1>() <= 1.0) continue;
            SpectralThresholds th = spectral_thresholds(s);
            REQUIRE(th.k1 <= th.k2);
            REQUIRE((th.p - l1_ball_project_oracle(s, 1.0)).norm() < 1e-12);
            REQUIRE(th.p.lpNorm<1>() <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("moreau decomposition and firm nonexpansiveness", "[catalog]") {
    Rng rng(23);
    for (const auto& g : all_kinds()) {
        for (int trial = 0; trial < 100; ++trial) {
            Vec z = 2.0 * rng.gaussian_vec(g.dim());
            Vec sum = prox(g, z, 1.0) + prox_conjugate(g, z, 1.0);
            REQUIRE((sum - z).norm() < 1e-10 * (1.0 + z.norm()));

            Vec z2 = 2.0 * rng.gaussian_vec(g.dim());
            Vec dp = prox(g, z, 1.0) - prox(g, z2, 1.0);
            REQUIRE(dp.dot(z - z2) >= dp.squaredNorm() - 1e-10 * (1.0 + dp.norm()));
        }
    }
}

TEST_CASE("basic jacobian scalar examples", "[catalog]") {
    CatalogFunction g{CatalogKind::orthant, 1, 0, 1.0};
    REQUIRE(prox_jacobian_basic(g, Vec::Ones(1))(0, 0) == 0.0);
    REQUIRE(prox_jacobian_basic(g, -Vec::Ones(1))(0, 0) == 1.0);
    // at the kink the maximal-range element is the identity side
    REQUIRE(prox_jacobian_basic(g, Vec::Zero(1))(0, 0) == 1.0);
}

TEST_CASE("jacobian elements are symmetric with spectrum in [0,1]", "[catalog]") {
    Rng rng(31);
    for (const auto& g : all_kinds()) {
        for (int trial = 0; trial < 40; ++trial) {
            Vec z = 1.5 * rng.gaussian_vec(g.dim());
            if (trial % 3 == 1) {
                // engineered kink structure: project then perturb tangentially
                z = prox(g, z, 1.0);
            }
            Mat W = trial % 2 == 0 ? prox_jacobian_basic(g, z)
                                   : prox_jacobian_sample(g, z, 1000 + trial);
            REQUIRE((W - W.transpose()).norm() < 1e-9);
            Vec lam;
            Mat Q;
            sym_eig(W, lam, Q);
            REQUIRE(lam.minCoeff() >= -1e-9);
            REQUIRE(lam.maxCoeff() <= 1.0 + 1e-9);
        }
    }
}

TEST_CASE("sampler hits both scalar endpoints at a kink", "[catalog]") {
    CatalogFunction g{CatalogKind::orthant, 1, 0, 1.0};
    bool saw_zero = false, saw_one = false;
    for (int seed = 0; seed < 64; ++seed) {
        const double v = prox_jacobian_sample(g, Vec::Zero(1), seed)(0, 0);
        REQUIRE(v >= -1e-12);
        REQUIRE(v <= 1.0 + 1e-12);
        if (v < 1e-12) saw_zero = true;
        if (v > 1.0 - 1e-12) saw_one = true;
    }
    REQUIRE(saw_zero);
    REQUIRE(saw_one);
    // differentiable point: unique value regardless of seed
    for (int seed = 0; seed < 8; ++seed)
        REQUIRE(prox_jacobian_sample(g, Vec::Ones(1), seed)(0, 0) == 0.0);
    CatalogFunction l1{CatalogKind::l1, 2, 0, 1.0};
    Vec z(2);
    z << 3.0, 0.2;
    Mat W0 = prox_jacobian_sample(l1, z, 1);
    for (int seed = 2; seed < 10; ++seed)
        REQUIRE((prox_jacobian_sample(l1, z, seed) - W0).norm() < 1e-14);
}

TEST_CASE("sampled ranges stay inside the basic element range", "[catalog]") {
    Rng rng(57);
    for (const auto& g : all_kinds()) {
        for (int pt = 0; pt < 4; ++pt) {
            Vec z = rng.gaussian_vec(g.dim());
            if (pt % 2 == 0) z = prox(g, z, 1.0);  // land on kinks
            Mat Wbar = prox_jacobian_basic(g, z);
            Mat Pr = range_projector_psd(Wbar);
            const int mm = g.dim();
            for (int seed = 0; seed < 64; ++seed) {
                Mat U = prox_jacobian_sample(g, z, seed);
                REQUIRE(((Mat::Identity(mm, mm) - Pr) * U).norm() < 1e-7 * (1.0 + U.norm()));
            }
        }
    }
}

TEST_CASE("directional consistency of the basic jacobian", "[catalog]") {
    // along structure-stable directions the finite-difference slope matches W d
    Rng rng(71);
    for (const auto& g : all_kinds()) {
        for (int trial = 0; trial < 10; ++trial) {
            Vec z = rng.gaussian_vec(g.dim());
            Mat W = prox_jacobian_basic(g, z);
            Vec d = rng.gaussian_vec(g.dim());
            d /= d.norm();
            // skip points too close to a kink for the direction to be stable
            const double tau0 = 1e-5;
            Vec slope0 = (prox(g, z + tau0 * d, 1.0) - prox(g, z, 1.0)) / tau0;
            Vec slope1 = (prox(g, z + 0.5 * tau0 * d, 1.0) - prox(g, z, 1.0)) / (0.5 * tau0);
            if ((slope0 - slope1).norm() > 1e-6) continue;  // structure unstable
            REQUIRE((slope1 - W * d).norm() < 5e-4 * (1.0 + d.norm()));
        }
    }
}

TEST_CASE("subdifferential membership via the prox fixed point", "[catalog]") {
    CatalogFunction g{CatalogKind::orthant, 1, 0, 1.0};
    REQUIRE(subdifferential_contains(g, Vec::Zero(1), Vec::Ones(1)));
    REQUIRE(!subdifferential_contains(g, -Vec::Ones(1), Vec::Ones(1)));
    CatalogFunction l1{CatalogKind::l1, 1, 0, 1.0};
    REQUIRE(subdifferential_contains(l1, Vec::Zero(1), 0.5 * Vec::Ones(1)));
}

TEST_CASE("directional derivative closed forms", "[catalog]") {
    CatalogFunction g{CatalogKind::orthant, 1, 0, 1.0};
    REQUIRE(directional_deriv(g, Vec::Zero(1), -Vec::Ones(1)) == 0.0);
    REQUIRE(directional_deriv(g, Vec::Zero(1), Vec::Ones(1)) == kInf);
    CatalogFunction l1{CatalogKind::l1, 1, 0, 1.0};
    REQUIRE(directional_deriv(l1, Vec::Zero(1), 3.0 * Vec::Ones(1)) == Catch::Approx(3.0));
    REQUIRE_THROWS_AS(directional_deriv(g, Vec::Ones(1), Vec::Ones(1)), DomainViolation);
}

TEST_CASE("directional derivative agrees with difference quotients", "[catalog]") {
    Rng rng(91);
    for (const auto& g : all_kinds()) {
        if (g.indicator()) continue;  // norms only: value-based quotient
        for (int trial = 0; trial < 20; ++trial) {
            Vec x = rng.gaussian_vec(g.dim());
            Vec d = rng.gaussian_vec(g.dim());
            const double dd = directional_deriv(g, x, d);
            const double tau = 1e-7;
            const double fd = (catalog_value(g, x + tau * d) - catalog_value(g, x)) / tau;
            REQUIRE(dd == Catch::Approx(fd).margin(1e-5 * (1.0 + std::abs(dd))));
        }
    }
}

TEST_CASE("critical set of the orthant", "[catalog][cones]") {
    CatalogFunction g{CatalogKind::orthant, 2, 0, 1.0};
    Vec x = Vec::Zero(2);
    Vec u(2);
    u << 1.0, 0.0;
    ConeDescription K = critical_set(g, x, u);
    // K = {d | d1 = 0, d2 <= 0}: aff = {d1=0}, lin = {0}
    REQUIRE(K.affine_basis.cols() == 1);
    REQUIRE(std::abs(K.affine_basis(0, 0)) < 1e-14);
    REQUIRE(K.lineality_basis.cols() == 0);
    REQUIRE(K.membership((Vec(2) << 0, -1).finished(), 1e-9));
    REQUIRE(!K.membership((Vec(2) << 0, 1).finished(), 1e-9));
    REQUIRE(!K.membership((Vec(2) << 1, 0).finished(), 1e-9));
    Vec pr = (*K.projector)((Vec(2) << 2.0, 3.0).finished());
    REQUIRE(pr.norm() < 1e-14);

    // interior point: K is everything
    ConeDescription Ki = critical_set(g, -Vec::Ones(2), Vec::Zero(2));
    REQUIRE(Ki.lineality_basis.cols() == 2);
}

TEST_CASE("critical set of the spectral norm inside the dual ball", "[catalog][cones]") {
    CatalogFunction g{CatalogKind::spectral, 2, 2, 1.0};
    Vec x = Vec::Zero(4);
    Mat U = Mat::Zero(2, 2);
    U(0, 0) = 0.4;  // nuclear norm 0.4 < 1
    ConeDescription K = critical_set(g, x, mat_vec(U));
    REQUIRE(K.affine_basis.cols() == 0);
    REQUIRE(K.lineality_basis.cols() == 0);
    REQUIRE(K.membership(Vec::Zero(4), 1e-9));
    REQUIRE(!K.membership(mat_vec(Mat::Identity(2, 2)), 1e-9));
}

TEST_CASE("critical set membership matches the derivative equality", "[catalog][cones]") {
    // d in K(x,u) iff dg(x)(d) = <u,d>, checked numerically across kinds
    Rng rng(101);
    for (const auto& g : all_kinds()) {
        int checked = 0;
        for (int trial = 0; trial < 60 && checked < 25; ++trial) {
            Vec z = rng.gaussian_vec(g.dim());
            Vec x = prox(g, z, 1.0);
            Vec u = z - x;
            ConeDescription K = critical_set(g, x, u);
            Vec d = sample_critical_direction(g, x, u, rng);
            if (!K.membership(d, 1e-7)) continue;
            const double dd = directional_deriv(g, x, d);
            if (dd == kInf) continue;
            REQUIRE(dd == Catch::Approx(u.dot(d)).margin(1e-6 * (1.0 + std::abs(dd))));
            ++checked;

            Vec w = rng.gaussian_vec(g.dim());
            if (!K.membership(w, 1e-7)) {
                const double dw = directional_deriv(g, x, w);
                REQUIRE((dw == kInf || std::abs(dw - u.dot(w)) > 1e-9));
            }
        }
        REQUIRE(checked > 0);
    }
}

TEST_CASE("cone description invariants", "[catalog][cones]") {
    Rng rng(113);
    for (const auto& g : all_kinds()) {
        for (int trial = 0; trial < 12; ++trial) {
            Vec z = rng.gaussian_vec(g.dim());
            Vec x = prox(g, z, 1.0);
            Vec u = z - x;
            ConeDescription K = critical_set(g, x, u);
            REQUIRE(K.membership(Vec::Zero(g.dim()), 1e-9));
            // lineality lies inside the affine hull
            if (K.lineality_basis.cols() > 0) {
                Mat A = K.affine_basis;
                Mat P = A.cols() > 0 ? Mat(A * A.transpose()) : Mat::Zero(g.dim(), g.dim());
                REQUIRE(((Mat::Identity(g.dim(), g.dim()) - P) * K.lineality_basis).norm() < 1e-8);
                // plus-minus membership of lineality directions
                Vec l = K.lineality_basis * rng.gaussian_vec(K.lineality_basis.cols());
                REQUIRE(K.membership(l, 1e-7));
                REQUIRE(K.membership(-l, 1e-7));
            }
            if (K.projector) {
                Vec v = rng.gaussian_vec(g.dim());
                Vec pv = (*K.projector)(v);
                REQUIRE(K.membership(pv, 2e-7));
                Vec ppv = (*K.projector)(pv);
                REQUIRE((ppv - pv).norm() < 1e-9 * (1.0 + pv.norm()));
            }
        }
    }
}

TEST_CASE("domain normal cone projection", "[catalog]") {
    CatalogFunction g{CatalogKind::orthant, 1, 0, 1.0};
    REQUIRE(domain_normal_project(g, Vec::Zero(1), 2.0 * Vec::Ones(1))[0] == Catch::Approx(2.0));
    REQUIRE(domain_normal_project(g, -Vec::Ones(1), 2.0 * Vec::Ones(1))[0] == 0.0);
    CatalogFunction l1{CatalogKind::l1, 3, 0, 1.0};
    Rng rng(5);
    REQUIRE(domain_normal_project(l1, rng.gaussian_vec(3), rng.gaussian_vec(3)).norm() == 0.0);

    // oracle: projection onto N must be idempotent and N-membered (<=0 pairing
    // with tangent directions)
    for (const auto& g2 : all_kinds()) {
        if (!g2.indicator()) continue;
        for (int trial = 0; trial < 20; ++trial) {
            Vec z = rng.gaussian_vec(g2.dim());
            Vec x = prox(g2, z, 1.0);
            Vec v = rng.gaussian_vec(g2.dim());
            Vec nv = domain_normal_project(g2, x, v);
            Vec nnv = domain_normal_project(g2, x, nv);
            REQUIRE((nnv - nv).norm() < 1e-8 * (1.0 + nv.norm()));
            // normal vectors pair nonpositively with feasible differences
            Vec y = prox(g2, x + rng.gaussian_vec(g2.dim()), 1.0);
            REQUIRE(nv.dot(y - x) <= 1e-7 * (1.0 + nv.norm()) * (1.0 + y.norm()));
        }
    }
}

TEST_CASE("prox_eval aggregates value, jacobian and rank", "[catalog]") {
    CatalogFunction g{CatalogKind::orthant, 2, 0, 1.0};
    Vec z(2);
    z << 1.0, -1.0;
    ProxEval pe = prox_eval(g, z);
    REQUIRE(pe.point[0] == 0.0);
    REQUIRE(pe.point[1] == -1.0);
    REQUIRE(pe.jacobian_rank == 1);
    // prox idempotence at the evaluated point
    Vec z2 = pe.point + (z - pe.point);
    REQUIRE((prox(g, z2, 1.0) - pe.point).norm() < 1e-12);
}
