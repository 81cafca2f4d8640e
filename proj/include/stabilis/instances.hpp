#pragma once

#include <string>
#include <vector>

#include "stabilis/conditions.hpp"
#include "stabilis/problem.hpp"
#include "stabilis/second_order.hpp"

namespace stabilis {

// ---------------------------------------------------------------------------
// Built-in instance families with known KKT pairs: the regression fixtures,
// the spectral-norm demo cases, and the random suites used by the acceptance
// tests. All constructions manufacture the KKT pair exactly: pick the image
// point and multiplier from a prox decomposition, then close the stationarity
// equation through the linear term of h.
// ---------------------------------------------------------------------------

struct Instance {
    std::string name;
    ProblemSpec spec;
    Vec xbar;
    Vec ubar;
};

namespace detail {

inline ProblemSpec build(int n, const Mat& Q, const Vec& c, const Mat& A, const Vec& f0,
                         CatalogFunction g) {
    ProblemSpecInput in;
    in.n = n;
    in.h.Q = Q;
    in.h.c = c;
    in.F.A = A;
    in.F.f0 = f0;
    in.g = g;
    return assemble_problem(in);
}

/// Image-space point with an interesting kink structure for each kind,
/// produced from a prox decomposition z = y + u.
inline Vec structured_z(const CatalogFunction& g, Rng& rng) {
    const int m = g.dim();
    switch (g.kind) {
        case CatalogKind::orthant: {
            Vec z = rng.gaussian_vec(m);
            for (int i = 0; i < m; i += 3) z[i] = 0.0;  // kink coordinates
            return z;
        }
        case CatalogKind::l1: {
            Vec z = 2.0 * rng.gaussian_vec(m);
            for (int i = 1; i < m; i += 3) z[i] = g.sigma;  // threshold kinks
            return z;
        }
        case CatalogKind::soc: {
            Vec z = rng.gaussian_vec(m);
            if (rng.uniform() < 0.5) z[0] = z.tail(m - 1).norm();  // boundary of K
            return z;
        }
        case CatalogKind::psd: {
            Mat B = rng.gaussian_mat(g.p, g.p);
            Mat Zs = B + B.transpose();
            detail::EigFactor f = detail::sym_eig_desc(Zs);
            Vec lam = f.lam;
            if (g.p >= 2) lam[g.p - 1] = 0.0;  // kernel eigenvalue
            Mat Zr = f.Q * lam.asDiagonal() * f.Q.transpose();
            return svec(Zr);
        }
        case CatalogKind::nuclear: {
            Mat Z = rng.gaussian_mat(g.p, g.q);
            detail::SvdFactor f = detail::full_svd(Z);
            Vec s = f.sigma;
            s[0] = std::max(s.maxCoeff() + 0.5, 1.5 * g.sigma);
            if (f.pp >= 2 && rng.uniform() < 0.5) s[1] = g.sigma;  // at the threshold
            Mat Zr = f.R * s.asDiagonal() * f.S.leftCols(f.pp).transpose();
            return mat_vec(f.to_original(Zr));
        }
        case CatalogKind::spectral: {
            Mat Z = rng.gaussian_mat(g.p, g.q);
            detail::SvdFactor f = detail::full_svd(Z);
            Vec s = f.sigma;
            const double target = g.sigma * (1.2 + rng.uniform());
            s *= target / s.lpNorm<1>();  // case three
            Mat Zr = f.R * s.asDiagonal() * f.S.leftCols(f.pp).transpose();
            return mat_vec(f.to_original(Zr));
        }
    }
    return rng.gaussian_vec(m);
}

inline CatalogFunction kind_fixture(CatalogKind k) {
    switch (k) {
        case CatalogKind::orthant: return {CatalogKind::orthant, 4, 0, 1.0};
        case CatalogKind::soc: return {CatalogKind::soc, 4, 0, 1.0};
        case CatalogKind::psd: return {CatalogKind::psd, 3, 0, 1.0};
        case CatalogKind::l1: return {CatalogKind::l1, 4, 0, 1.0};
        case CatalogKind::nuclear: return {CatalogKind::nuclear, 2, 3, 1.0};
        case CatalogKind::spectral: return {CatalogKind::spectral, 2, 3, 1.0};
    }
    return {CatalogKind::orthant, 2, 0, 1.0};
}

}  // namespace detail

/// min 1/2||x||^2 s.t. x <= 0 at (0,0): every condition holds, full
/// degeneracy of the complementarity structure.
inline Instance orthant_degenerate(int n = 2) {
    Instance inst;
    inst.name = "orthant-degenerate";
    inst.spec = detail::build(n, Mat::Identity(n, n), Vec::Zero(n), Mat::Identity(n, n),
                              Vec::Zero(n), {CatalogKind::orthant, n, 0, 1.0});
    inst.xbar = Vec::Zero(n);
    inst.ubar = Vec::Zero(n);
    return inst;
}

/// min 1/2||x||^2 - e.x s.t. x <= 0 at (0, e): strict complementarity.
inline Instance orthant_strict(int n = 2) {
    Instance inst;
    inst.name = "orthant-strict";
    inst.spec = detail::build(n, Mat::Identity(n, n), -Vec::Ones(n), Mat::Identity(n, n),
                              Vec::Zero(n), {CatalogKind::orthant, n, 0, 1.0});
    inst.xbar = Vec::Zero(n);
    inst.ubar = Vec::Ones(n);
    return inst;
}

/// min -1/2 x^2 s.t. x <= 0 at (0,0): a KKT saddle; SSOSC fails while the
/// qualification conditions hold.
inline Instance saddle_scalar() {
    Instance inst;
    inst.name = "saddle-scalar";
    inst.spec = detail::build(1, -Mat::Identity(1, 1), Vec::Zero(1), Mat::Identity(1, 1),
                              Vec::Zero(1), {CatalogKind::orthant, 1, 0, 1.0});
    inst.xbar = Vec::Zero(1);
    inst.ubar = Vec::Zero(1);
    return inst;
}

/// F(x) = (x,x) with a strictly complementary multiplier segment:
/// nondegeneracy fails, the multiplier set is a segment.
inline Instance rank_deficient() {
    Instance inst;
    inst.name = "rank-deficient";
    Mat A(2, 1);
    A << 1.0, 1.0;
    inst.spec = detail::build(1, Mat::Identity(1, 1), -2.0 * Vec::Ones(1), A, Vec::Zero(2),
                              {CatalogKind::orthant, 2, 0, 1.0});
    inst.xbar = Vec::Zero(1);
    inst.ubar = Vec::Ones(2);
    return inst;
}

/// Spectral-norm composite with F a bijection; `regime` 0/1/2 selects
/// ||F(x)+u||_* less than / equal to / greater than one.
inline Instance spectral_instance(int regime, std::uint64_t seed, int p = 2, int q = 3) {
    Rng rng(Rng::derive(seed, 0x5bec7fULL + regime));
    CatalogFunction g{CatalogKind::spectral, p, q, 1.0};
    const int m = g.dim();
    Mat Z0 = rng.gaussian_mat(p, q);
    detail::SvdFactor f = detail::full_svd(Z0);
    Vec s = f.sigma;
    double target = regime == 0 ? 0.3 + 0.5 * rng.uniform()
                    : regime == 1 ? 1.0
                                  : 1.3 + 1.5 * rng.uniform();
    s *= target / s.lpNorm<1>();
    Mat Z = f.R * s.asDiagonal() * f.S.leftCols(f.pp).transpose();
    Vec z = mat_vec(f.to_original(Z));
    Vec y = prox(g, z, 1.0);
    Vec u = z - y;
    // invertible well-conditioned map
    Mat A = Mat::Identity(m, m) + 0.2 * rng.gaussian_mat(m, m);
    Vec xbar = rng.gaussian_vec(m);
    Vec f0 = y - A * xbar;
    Mat G = rng.gaussian_mat(m, m);
    Mat Q = G * G.transpose() / m + Mat::Identity(m, m);
    Vec c = -(Q * xbar + A.transpose() * u);
    Instance inst;
    inst.name = "spectral-" + std::string(regime == 0 ? "inside" : regime == 1 ? "boundary" : "outside");
    inst.spec = detail::build(m, Q, c, A, f0, g);
    inst.xbar = xbar;
    inst.ubar = u;
    return inst;
}

/// Random instance with a manufactured KKT pair whose certificate lands in
/// the requested class.
enum class StabilityClass { stable, ssosc_fails, nondeg_fails };

inline Instance random_instance(CatalogKind kind, StabilityClass cls, std::uint64_t seed) {
    Rng rng(Rng::derive(seed, 0x1257aceULL + static_cast<int>(kind) * 977 +
                                  static_cast<int>(cls) * 131071));
    CatalogFunction g = detail::kind_fixture(kind);
    const int m = g.dim();
    Instance inst;
    inst.name = to_string(kind) + (cls == StabilityClass::stable          ? "-stable-"
                                   : cls == StabilityClass::ssosc_fails   ? "-ssoscfail-"
                                                                          : "-nondegfail-") +
                std::to_string(seed);

    if (cls == StabilityClass::nondeg_fails) {
        // y = 0 with the multiplier strictly inside the dual object; a tall
        // injective map leaves a multiplier continuum while the lineality
        // space is trivial
        const int n = std::max(1, m - 1 - rng.uniform_int(2));
        Vec y = Vec::Zero(m);
        Vec u;
        switch (kind) {
            case CatalogKind::orthant:
                u = Vec::Ones(m) + rng.gaussian_vec(m).cwiseAbs();
                break;
            case CatalogKind::l1:
                u = 0.5 * rng.gaussian_vec(m).cwiseMin(0.8).cwiseMax(-0.8);
                break;
            case CatalogKind::soc: {
                u = Vec::Zero(m);
                u[0] = -1.0;
                u.tail(m - 1) = 0.3 * rng.gaussian_vec(m - 1);
                u.tail(m - 1) *= 0.5 / std::max(u.tail(m - 1).norm(), 1.0);
                break;
            }
            case CatalogKind::psd: {
                Mat B = rng.gaussian_mat(g.p, g.p);
                Mat N = -(B * B.transpose()) - 0.5 * Mat::Identity(g.p, g.p);
                u = svec(N);
                break;
            }
            case CatalogKind::nuclear: {
                Mat G0 = rng.gaussian_mat(g.p, g.q);
                u = mat_vec(Mat(0.5 * G0 / std::max(1.0, 2.0 * G0.norm())));
                break;
            }
            case CatalogKind::spectral: {
                Mat G0 = rng.gaussian_mat(g.p, g.q);
                detail::SvdFactor f = detail::full_svd(G0);
                Vec s = f.sigma * (0.5 / f.sigma.lpNorm<1>());
                Mat Gs = f.R * s.asDiagonal() * f.S.leftCols(f.pp).transpose();
                u = mat_vec(f.to_original(Gs));
                break;
            }
        }
        Mat A = rng.gaussian_mat(m, n);
        // full column rank so tilts stay solvable
        A += Mat::Identity(m, n);
        Vec xbar = rng.gaussian_vec(n);
        Vec f0 = y - A * xbar;
        Mat G = rng.gaussian_mat(n, n);
        Mat Q = G * G.transpose() / n + Mat::Identity(n, n);
        Vec c = -(Q * xbar + A.transpose() * u);
        inst.spec = detail::build(n, Q, c, A, f0, g);
        inst.xbar = xbar;
        inst.ubar = u;
        return inst;
    }

    // stable / ssosc_fails: kinked image structure, full row rank map
    Vec z = detail::structured_z(g, rng);
    Vec y = prox(g, z, 1.0);
    Vec u = z - y;
    const int n = m + 1 + rng.uniform_int(2);
    Mat A = rng.gaussian_mat(m, n);
    A.leftCols(m) += 2.0 * Mat::Identity(m, m);  // comfortably full row rank
    Vec xbar = rng.gaussian_vec(n);
    Vec f0 = y - A * xbar;
    Mat G = rng.gaussian_mat(n, n);
    Mat Q = G * G.transpose() / n + Mat::Identity(n, n);
    if (cls == StabilityClass::ssosc_fails) {
        // negative curvature along a direction where Gamma stays finite
        Mat W = prox_jacobian_basic(g, z);
        Mat Pr = range_projector_psd(W);
        Mat B = nullspace(Mat((Mat::Identity(m, m) - Pr) * A));
        if (B.cols() > 0) {
            Vec d = B.col(0);
            GammaValue gv = gamma(g, y, u, Vec(A * d));
            const double curve = gv.in_domain ? gv.value : 0.0;
            const double dQd = d.dot(Q * d);
            const double lift = dQd + curve + 0.5 * (1.0 + std::abs(curve));
            Q -= (lift / std::pow(d.squaredNorm(), 2)) * (d * d.transpose());
        }
    }
    Vec c = -(Q * xbar + A.transpose() * u);
    inst.spec = detail::build(n, Q, c, A, f0, g);
    inst.xbar = xbar;
    inst.ubar = u;
    return inst;
}

/// The 30-instance fixture suite: ten certified-stable, ten SSOSC-failing,
/// ten nondegeneracy-failing, rotating through the catalog kinds.
inline std::vector<Instance> fixture_suite(std::uint64_t seed = 0) {
    std::vector<Instance> out;
    const CatalogKind kinds[6] = {CatalogKind::orthant, CatalogKind::soc, CatalogKind::psd,
                                  CatalogKind::l1, CatalogKind::nuclear, CatalogKind::spectral};
    for (int i = 0; i < 10; ++i)
        out.push_back(random_instance(kinds[i % 6], StabilityClass::stable, seed + i));
    for (int i = 0; i < 10; ++i)
        out.push_back(random_instance(kinds[i % 6], StabilityClass::ssosc_fails, seed + 100 + i));
    for (int i = 0; i < 10; ++i)
        out.push_back(random_instance(kinds[i % 6], StabilityClass::nondeg_fails, seed + 200 + i));
    return out;
}

}  // namespace stabilis
