#pragma once

#include "stabilis/catalog.hpp"
#include "stabilis/second_order.hpp"

namespace stabilis {

// ---------------------------------------------------------------------------
// Closed-form curvature of the spectral-norm composite term. With
// Z = F(x) + u and sigma its singular values, the three regimes are
// classified by the nuclear norm of Z against 1; in the regime ||Z||_* > 1
// the curvature of Gamma along an image direction Y has an explicit
// divided-difference expansion in the rotated entries of Y.
// ---------------------------------------------------------------------------

enum class SpectralCase { inside, boundary, outside };

inline SpectralCase spectral_case_classify(const Mat& Z, double tol = 1e-9) {
    detail::SvdFactor f = detail::full_svd(Z);
    const double s1 = f.sigma.lpNorm<1>();
    const double band = tol * (1.0 + s1);
    if (s1 < 1.0 - band) return SpectralCase::inside;
    if (s1 > 1.0 + band) return SpectralCase::outside;
    return SpectralCase::boundary;
}

/// Explicit quadratic form of the spectral-norm curvature term in the
/// ||Z||_* > 1 regime, evaluated at the image direction Y. Components of Y
/// that leave the finite domain (threshold-tied pairs and directions killed
/// by the projection structure) return +infinity.
inline double spectral_ssosc_quadratic(const Mat& Z, const Mat& Y, double dom_tol = 1e-7) {
    detail::SvdFactor f = detail::full_svd(Z);
    const int p = f.pp, q = f.qq;
    if (f.sigma.lpNorm<1>() <= 1.0)
        throw NotCaseThree("spectral_ssosc_quadratic: ||Z||_* <= 1");
    SpectralThresholds th = spectral_thresholds(f.sigma);
    const int k1 = th.k1;
    const double tol = detail::kTieTol * (1.0 + f.sigma[0]);
    int r = 0;
    while (r < p && f.sigma[r] > tol) ++r;
    Mat Yt = f.R.transpose() * f.to_internal(Y) * f.S;  // p x q rotated entries
    const double ynorm = 1.0 + Yt.norm();

    auto sym = [&](int i, int j) { return 0.5 * (Yt(i, j) + Yt(j, i)); };
    auto asym = [&](int i, int j) { return 0.5 * (Yt(i, j) - Yt(j, i)); };

    double val = 0.0;
    // active-active pairs: only the antisymmetric component carries curvature;
    // the symmetric component must vanish (otherwise outside the domain)
    for (int i = 0; i < k1; ++i) {
        for (int j = i + 1; j < k1; ++j) {
            const double den = f.sigma[i] + f.sigma[j] - th.p[i] - th.p[j];
            val += 2.0 * (th.p[i] + th.p[j]) / den * asym(i, j) * asym(i, j);
        }
    }
    // active-inactive pairs with positive sigma_j
    for (int i = 0; i < k1; ++i) {
        for (int j = k1; j < r; ++j) {
            const double den_s = f.sigma[i] - f.sigma[j] - th.p[i];
            const double den_a = f.sigma[i] + f.sigma[j] - th.p[i];
            if (std::abs(den_s) <= tol) {
                // threshold tie: the symmetric component leaves the domain
                if (std::abs(sym(i, j)) > dom_tol * ynorm) return kInf;
            } else {
                val += 2.0 * th.p[i] / den_s * sym(i, j) * sym(i, j);
            }
            val += 2.0 * th.p[i] / den_a * asym(i, j) * asym(i, j);
        }
    }
    // active against the kernel block of Z
    for (int i = 0; i < k1; ++i) {
        const double den = f.sigma[i] - th.p[i];
        for (int j = r; j < p; ++j)
            val += 2.0 * th.p[i] / den * (sym(i, j) * sym(i, j) + asym(i, j) * asym(i, j));
        for (int j = p; j < q; ++j)
            val += th.p[i] / den * Yt(i, j) * Yt(i, j);
    }
    return val;
}

}  // namespace stabilis
