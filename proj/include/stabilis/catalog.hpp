#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stabilis/linalg.hpp"

namespace stabilis {

// ---------------------------------------------------------------------------
// Catalog of nonsmooth functions g. Six kinds:
//   orthant   delta of the nonpositive orthant R^p_-
//   soc       delta of the second-order cone {x | x_0 >= ||x_1..p-1||}
//   psd       delta of the PSD cone, svec encoding (off-diagonals * sqrt2)
//   l1        sigma * ||.||_1
//   nuclear   sigma * sum of singular values, column-major vec encoding
//   spectral  sigma * largest singular value, column-major vec encoding
// ---------------------------------------------------------------------------

enum class CatalogKind { orthant, soc, psd, l1, nuclear, spectral };

inline std::string to_string(CatalogKind k) {
    switch (k) {
        case CatalogKind::orthant: return "orthant";
        case CatalogKind::soc: return "soc";
        case CatalogKind::psd: return "psd";
        case CatalogKind::l1: return "l1";
        case CatalogKind::nuclear: return "nuclear";
        case CatalogKind::spectral: return "spectral";
    }
    return "?";
}

inline CatalogKind catalog_kind_from_string(const std::string& s) {
    if (s == "orthant") return CatalogKind::orthant;
    if (s == "soc") return CatalogKind::soc;
    if (s == "psd") return CatalogKind::psd;
    if (s == "l1") return CatalogKind::l1;
    if (s == "nuclear") return CatalogKind::nuclear;
    if (s == "spectral") return CatalogKind::spectral;
    throw UnknownCatalogKind("unknown catalog kind: " + s);
}

struct CatalogFunction {
    CatalogKind kind;
    int p = 0;           ///< vector dim (orthant,soc,l1), matrix rows (psd,nuclear,spectral)
    int q = 0;           ///< matrix cols (nuclear,spectral); ignored otherwise
    double sigma = 1.0;  ///< multiplicative scale of the base function; no-op for indicators

    /// Encoded image-space dimension.
    int dim() const {
        switch (kind) {
            case CatalogKind::orthant:
            case CatalogKind::soc:
            case CatalogKind::l1: return p;
            case CatalogKind::psd: return svec_dim(p);
            case CatalogKind::nuclear:
            case CatalogKind::spectral: return p * q;
        }
        return 0;
    }

    bool matrix_valued() const {
        return kind == CatalogKind::psd || kind == CatalogKind::nuclear ||
               kind == CatalogKind::spectral;
    }

    bool indicator() const {
        return kind == CatalogKind::orthant || kind == CatalogKind::soc ||
               kind == CatalogKind::psd;
    }

    void validate() const {
        if (sigma <= 0.0) throw ValidationError("catalog sigma must be positive");
        switch (kind) {
            case CatalogKind::orthant:
            case CatalogKind::l1:
                if (p < 1) throw ValidationError("dimension must be positive");
                break;
            case CatalogKind::soc:
                if (p < 2) throw ValidationError("soc dimension must be at least 2");
                break;
            case CatalogKind::psd:
                if (p < 1) throw ValidationError("psd order must be positive");
                break;
            case CatalogKind::nuclear:
            case CatalogKind::spectral:
                if (p < 1 || q < 1) throw ValidationError("matrix shape must be positive");
                break;
        }
    }
};

namespace detail {

inline constexpr double kTieTol = 1e-8;     // spectral tie-grouping threshold
inline constexpr double kRangeTol = 1e-8;   // rank cutoff for range tests
inline constexpr double kMemberTol = 1e-9;  // domain membership tolerance

/// Projection of a nonneg sorted-descending vector onto the l1 ball of the
/// given radius by sort-and-threshold water filling. Input need not be sorted.
inline Vec l1_ball_project(const Vec& v, double radius) {
    const int n = static_cast<int>(v.size());
    Vec a = v.cwiseAbs();
    double l1 = a.sum();
    if (l1 <= radius) return v;
    std::vector<double> s(a.data(), a.data() + n);
    std::sort(s.begin(), s.end(), std::greater<double>());
    // theta from the largest k with s_k > (sum_{j<=k} s_j - radius)/k
    double csum = 0.0, theta = 0.0;
    for (int i = 0; i < n; ++i) {
        csum += s[i];
        const double cand = (csum - radius) / (i + 1);
        if (s[i] > cand) theta = cand;
    }
    Vec out(n);
    for (int i = 0; i < n; ++i) {
        const double m = std::max(a[i] - theta, 0.0);
        out[i] = v[i] >= 0 ? m : -m;
    }
    return out;
}

/// Full SVD factor with descending singular values; original shape may have
/// p > q, in which case we work on the transpose internally.
struct SvdFactor {
    Mat R;       ///< pp x pp
    Mat S;       ///< qq x qq
    Vec sigma;   ///< pp, descending
    int p, q;    ///< original shape
    int pp, qq;  ///< internal shape, pp <= qq
    bool transposed;

    Mat to_internal(const Mat& H) const { return transposed ? Mat(H.transpose()) : H; }
    Mat to_original(const Mat& H) const { return transposed ? Mat(H.transpose()) : H; }
};

inline SvdFactor full_svd(const Mat& Z) {
    SvdFactor f;
    f.p = static_cast<int>(Z.rows());
    f.q = static_cast<int>(Z.cols());
    f.transposed = f.p > f.q;
    Mat W = f.transposed ? Mat(Z.transpose()) : Z;
    f.pp = static_cast<int>(W.rows());
    f.qq = static_cast<int>(W.cols());
    Eigen::JacobiSVD<Mat> svd(W, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.info() != Eigen::Success)
        throw SpectralDecompositionFailure("SVD failed");
    f.R = svd.matrixU();
    f.S = svd.matrixV();
    f.sigma = svd.singularValues();
    return f;
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
struct EigFactor {
    Mat Q;
    Vec lam;  ///< descending
};

inline EigFactor sym_eig_desc(const Mat& A) {
    Vec lam; Mat Q;
    sym_eig(A, lam, Q);
    EigFactor f;
    const int p = static_cast<int>(lam.size());
    f.lam = lam.reverse();
    f.Q = Q.rowwise().reverse();
    (void)p;
    return f;
}

/// Indices grouped by ties: values within tol*(1+max|v|) of each other.
inline std::vector<std::vector<int>> tie_groups(const Vec& v, double tol) {
    std::vector<std::vector<int>> groups;
    const double scale = 1.0 + (v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0);
    for (int i = 0; i < v.size(); ++i) {
        if (!groups.empty() && std::abs(v[groups.back().back()] - v[i]) <= tol * scale)
            groups.back().push_back(i);
        else
            groups.push_back({i});
    }
    return groups;
}

inline Mat psd_clip(const Mat& A, bool positive_part = true) {
    EigFactor f = sym_eig_desc(0.5 * (A + A.transpose()));
    Mat out = Mat::Zero(A.rows(), A.cols());
    for (int i = 0; i < f.lam.size(); ++i) {
        const double l = positive_part ? std::max(f.lam[i], 0.0) : std::min(f.lam[i], 0.0);
        if (l != 0.0) out += l * f.Q.col(i) * f.Q.col(i).transpose();
    }
    return out;
}

inline Vec soc_project(const Vec& z) {
    const int p = static_cast<int>(z.size());
    const double z0 = z[0];
    const double r = z.tail(p - 1).norm();
    if (r <= z0) return z;
    if (r <= -z0) return Vec::Zero(p);
    Vec out(p);
    const double a = 0.5 * (z0 + r);
    out[0] = a;
    out.tail(p - 1) = (a / r) * z.tail(p - 1);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Values and domain membership
// ---------------------------------------------------------------------------

/// g(y); +infinity outside dom g (membership tested with relative tolerance).
inline double catalog_value(const CatalogFunction& g, const Vec& y) {
    if (static_cast<int>(y.size()) != g.dim())
        throw DimensionMismatch("catalog_value: wrong image dimension");
    const double scale = 1.0 + y.norm();
    const double tol = detail::kMemberTol * scale;
    switch (g.kind) {
        case CatalogKind::orthant:
            return y.maxCoeff() <= tol ? 0.0 : kInf;
        case CatalogKind::soc: {
            const double r = y.tail(y.size() - 1).norm();
            return r - y[0] <= tol ? 0.0 : kInf;
        }
        case CatalogKind::psd: {
            detail::EigFactor f = detail::sym_eig_desc(smat(y));
            return f.lam.minCoeff() >= -tol ? 0.0 : kInf;
        }
        case CatalogKind::l1:
            return g.sigma * y.lpNorm<1>();
        case CatalogKind::nuclear: {
            detail::SvdFactor f = detail::full_svd(vec_mat(y, g.p, g.q));
            return g.sigma * f.sigma.sum();
        }
        case CatalogKind::spectral: {
            detail::SvdFactor f = detail::full_svd(vec_mat(y, g.p, g.q));
            return g.sigma * (f.sigma.size() > 0 ? f.sigma[0] : 0.0);
        }
    }
    throw UnknownCatalogKind("catalog_value");
}

inline bool domain_member(const CatalogFunction& g, const Vec& y,
                          double tol = detail::kMemberTol) {
    if (!g.indicator()) return true;
    const double s = tol * (1.0 + y.norm());
    switch (g.kind) {
        case CatalogKind::orthant: return y.maxCoeff() <= s;
        case CatalogKind::soc: return y.tail(y.size() - 1).norm() - y[0] <= s;
        case CatalogKind::psd: {
            detail::EigFactor f = detail::sym_eig_desc(smat(y));
            return f.lam.minCoeff() >= -s;
        }
        default: return true;
    }
}

// ---------------------------------------------------------------------------
// Spectral thresholds for the l1-ball projection of singular values
// ---------------------------------------------------------------------------

struct SpectralThresholds {
    int k1 = 0;  ///< largest i with sigma_i strictly above the running threshold
    int k2 = 0;  ///< largest i with sigma_i at or above it
    Vec p;       ///< l1-ball projection of the singular value vector
};

/// Index pair (k1, k2) and projection p for a nonincreasing nonnegative vector
/// with ||sigma||_1 > radius. Comparisons use an absolute tolerance band; the
/// band resolves to the strict-false branch for k1 and inclusive-true for k2.
inline SpectralThresholds spectral_thresholds(const Vec& sigma, double radius = 1.0,
                                              double band = 1e-10) {
    const int n = static_cast<int>(sigma.size());
    if (n == 0) throw NotCaseThree("spectral_thresholds: empty vector");
    for (int i = 0; i + 1 < n; ++i)
        if (sigma[i] < sigma[i + 1] - 1e-12)
            throw ValidationError("spectral_thresholds: entries must be nonincreasing");
    if (sigma.lpNorm<1>() <= radius)
        throw NotCaseThree("spectral_thresholds: ||sigma||_1 <= radius");
    SpectralThresholds out;
    double csum = 0.0;
    double theta = 0.0;
    for (int i = 0; i < n; ++i) {
        csum += sigma[i];
        const double q = (csum - radius) / (i + 1);
        if (sigma[i] > q + band) out.k1 = i + 1;
        if (sigma[i] >= q - band) out.k2 = i + 1;
    }
    // Threshold from the strict index set.
    double s = 0.0;
    for (int i = 0; i < out.k1; ++i) s += sigma[i];
    theta = (s - radius) / out.k1;
    out.p = Vec::Zero(n);
    for (int i = 0; i < n; ++i) out.p[i] = std::max(sigma[i] - theta, 0.0);
    return out;
}

// ---------------------------------------------------------------------------
// Proximal mappings
// ---------------------------------------------------------------------------

/// Prox of s*g at z. For indicators this is the metric projection; for norms
/// the soft-threshold / ball-projection complements.
inline Vec prox(const CatalogFunction& g, const Vec& z, double s = 1.0) {
    if (static_cast<int>(z.size()) != g.dim())
        throw DimensionMismatch("prox: wrong image dimension");
    if (!(s > 0.0)) throw ValidationError("prox: sigma must be positive");
    const double t = s * g.sigma;
    switch (g.kind) {
        case CatalogKind::orthant:
            return z.cwiseMin(0.0);
        case CatalogKind::soc:
            return detail::soc_project(z);
        case CatalogKind::psd:
            return svec(detail::psd_clip(smat(z)));
        case CatalogKind::l1: {
            Vec out(z.size());
            for (int i = 0; i < z.size(); ++i) {
                const double m = std::max(std::abs(z[i]) - t, 0.0);
                out[i] = z[i] >= 0 ? m : -m;
            }
            return out;
        }
        case CatalogKind::nuclear: {
            detail::SvdFactor f = detail::full_svd(vec_mat(z, g.p, g.q));
            Vec phi = (f.sigma.array() - t).max(0.0);
            Mat M = f.R * phi.asDiagonal() * f.S.leftCols(f.pp).transpose();
            return mat_vec(f.to_original(M));
        }
        case CatalogKind::spectral: {
            detail::SvdFactor f = detail::full_svd(vec_mat(z, g.p, g.q));
            Vec pr = detail::l1_ball_project(f.sigma, t);
            Vec phi = f.sigma - pr;
            Mat M = f.R * phi.asDiagonal() * f.S.leftCols(f.pp).transpose();
            return mat_vec(f.to_original(M));
        }
    }
    throw UnknownCatalogKind("prox");
}

/// Prox of (s*g)^* at z, via the independent conjugate formulas
/// (projections onto the polar cone / dual-norm ball).
inline Vec prox_conjugate(const CatalogFunction& g, const Vec& z, double s = 1.0) {
    const double t = s * g.sigma;
    switch (g.kind) {
        case CatalogKind::orthant:
            return z.cwiseMax(0.0);  // projection onto R^p_+
        case CatalogKind::soc:
            return -detail::soc_project(-z);  // projection onto the polar -K
        case CatalogKind::psd:
            return svec(detail::psd_clip(smat(z), /*positive_part=*/false));
        case CatalogKind::l1:
            return z.cwiseMax(-t).cwiseMin(t);  // l-infinity ball
        case CatalogKind::nuclear: {
            // spectral-norm ball of radius t
            detail::SvdFactor f = detail::full_svd(vec_mat(z, g.p, g.q));
            Vec cl = f.sigma.cwiseMin(t);
            Mat M = f.R * cl.asDiagonal() * f.S.leftCols(f.pp).transpose();
            return mat_vec(f.to_original(M));
        }
        case CatalogKind::spectral: {
            // nuclear-norm ball of radius t
            detail::SvdFactor f = detail::full_svd(vec_mat(z, g.p, g.q));
            Vec pr = detail::l1_ball_project(f.sigma, t);
            Mat M = f.R * pr.asDiagonal() * f.S.leftCols(f.pp).transpose();
            return mat_vec(f.to_original(M));
        }
    }
    throw UnknownCatalogKind("prox_conjugate");
}

/// Fixed-point test u in subdiff g(x)  <=>  x = Prox_g(x+u).
inline bool subdifferential_contains(const CatalogFunction& g, const Vec& x, const Vec& u,
                                     double tol = 1e-8) {
    return (x - prox(g, x + u, 1.0)).norm() <= tol * (1.0 + x.norm());
}

// ---------------------------------------------------------------------------
// Jacobians of the proximal mapping.
//
// Each Jacobian is materialized as a dense symmetric m x m matrix acting on
// the encoded image space. The distinguished element W-bar is the limit of
// Jacobians through full-rank tie perturbations resolved so that the range is
// maximal; prox_jacobian_sample draws random convex combinations of
// B-subdifferential elements obtained from random tie resolutions.
// ---------------------------------------------------------------------------

namespace detail {

/// Tie resolution for a scalar kink coordinate: derivative limits 0/1 plus
/// interior values for convex combinations.
struct KinkChoice {
    double value;  // in [0,1]
};

/// Coefficient data for the matrix-kind Jacobians, in the internal (pp<=qq)
/// orientation. The operator maps H to
///   R * [ Dsym o sym(H1) + Dasym o skew(H1) + diag-coupling, C2 o H2 ] * S^T
/// where H1 is the leading pp x pp block of R^T H S and H2 the rest.
struct SpectralCoeffs {
    Mat Csym;   // pp x pp, off-diagonal symmetric-part coefficients
    Mat Casym;  // pp x pp, off-diagonal antisymmetric-part coefficients
    Mat Ddiag;  // pp x pp coupling on the diagonal entries
    Vec c2;     // pp, row coefficients for the trailing block
};

inline Mat apply_spectral_operator(const SvdFactor& f, const SpectralCoeffs& C,
                                   const Mat& H_orig) {
    Mat H = f.to_internal(H_orig);
    const int pp = f.pp, qq = f.qq;
    Mat Ht = f.R.transpose() * H * f.S;
    Mat H1 = Ht.leftCols(pp);
    Mat Hs = 0.5 * (H1 + H1.transpose());
    Mat Ha = 0.5 * (H1 - H1.transpose());
    Mat out1 = Mat::Zero(pp, pp);
    for (int i = 0; i < pp; ++i)
        for (int j = 0; j < pp; ++j)
            if (i != j) out1(i, j) = C.Csym(i, j) * Hs(i, j) + C.Casym(i, j) * Ha(i, j);
    Vec d = C.Ddiag * H1.diagonal();
    for (int i = 0; i < pp; ++i) out1(i, i) = d[i];
    Mat out(pp, qq);
    out.leftCols(pp) = out1;
    for (int i = 0; i < pp; ++i)
        for (int j = pp; j < qq; ++j) out(i, j) = C.c2[i] * Ht(i, j);
    return f.to_original(Mat(f.R * out * f.S.transpose()));
}

/// Materialize an operator on p x q matrices as a dense matrix in vec coords.
template <class Op>
inline Mat materialize_matrix_operator(int p, int q, Op&& op) {
    const int m = p * q;
    Mat W(m, m);
    for (int k = 0; k < m; ++k) {
        Vec e = Vec::Zero(m);
        e[k] = 1.0;
        W.col(k) = mat_vec(op(vec_mat(e, p, q)));
    }
    return 0.5 * (W + W.transpose());
}

/// Materialize an operator on symmetric p x p matrices in svec coords.
template <class Op>
inline Mat materialize_sym_operator(int p, Op&& op) {
    const int m = svec_dim(p);
    Mat W(m, m);
    for (int k = 0; k < m; ++k) {
        Vec e = Vec::Zero(m);
        e[k] = 1.0;
        W.col(k) = svec(op(smat(e)));
    }
    return 0.5 * (W + W.transpose());
}

/// PSD projection differential with per-pair coefficients Omega.
inline Mat apply_loewner(const EigFactor& f, const Mat& Omega, const Mat& H) {
    Mat Ht = f.Q.transpose() * H * f.Q;
    Mat M = Omega.cwiseProduct(Ht);
    return f.Q * 0.5 * (M + M.transpose()) * f.Q.transpose();
}

/// Omega matrix for the PSD projection. zero_side[i] in {+1,-1} resolves the
/// kink for eigenvalues tied to zero; mags give the relative perturbation
/// magnitudes used for mixed-side pairs.
inline Mat psd_omega(const Vec& lam, const std::vector<int>& zero_idx,
                     const std::vector<int>& side, const std::vector<double>& mags) {
    const int p = static_cast<int>(lam.size());
    const double scale = 1.0 + (p > 0 ? lam.cwiseAbs().maxCoeff() : 0.0);
    const double tol = kTieTol * scale;
    std::vector<int> code(p, 0);  // +1 positive, -1 negative, 0 member of zero group
    for (int i = 0; i < p; ++i) code[i] = lam[i] > tol ? 1 : (lam[i] < -tol ? -1 : 0);
    std::vector<int> zpos(p, -1);
    for (size_t k = 0; k < zero_idx.size(); ++k) zpos[zero_idx[k]] = static_cast<int>(k);
    auto eff_sign = [&](int i) { return code[i] != 0 ? code[i] : side[zpos[i]]; };
    Mat Om(p, p);
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) {
            const int si = eff_sign(i), sj = eff_sign(j);
            double v;
            if (si > 0 && sj > 0) {
                v = 1.0;
            } else if (si < 0 && sj < 0) {
                v = 0.0;
            } else if (code[i] == 0 && code[j] == 0) {
                // mixed-sign pair inside the zero group: eps_i / (eps_i + eps_j)
                const double mi = mags[zpos[i]], mj = mags[zpos[j]];
                v = si > 0 ? mi / (mi + mj) : mj / (mi + mj);
            } else if (code[i] != 0 && code[j] != 0) {
                v = (std::max(lam[i], 0.0) - std::max(lam[j], 0.0)) / (lam[i] - lam[j]);
            } else {
                // one genuine eigenvalue, one zero-group member: the limit keeps
                // only the genuine value's side
                v = (code[i] != 0 ? code[i] : code[j]) > 0 ? 1.0 : 0.0;
            }
            Om(i, j) = v;
        }
    }
    return Om;
}

struct PsdResolution {
    std::vector<int> side;      // +1/-1 per zero-group member
    std::vector<double> mags;   // perturbation magnitudes per zero-group member
    Mat mix;                    // orthogonal mixing of the zero-group basis
};

inline Mat psd_jacobian(const Mat& Zs, const PsdResolution* res) {
    EigFactor f = sym_eig_desc(Zs);
    const int p = static_cast<int>(f.lam.size());
    const double scale = 1.0 + (p > 0 ? f.lam.cwiseAbs().maxCoeff() : 0.0);
    const double tol = kTieTol * scale;
    std::vector<int> zero_idx;
    for (int i = 0; i < p; ++i)
        if (std::abs(f.lam[i]) <= tol) zero_idx.push_back(i);
    EigFactor fr = f;
    std::vector<int> side(zero_idx.size(), +1);
    std::vector<double> mags(zero_idx.size(), 1.0);
    if (res) {
        side = res->side;
        mags = res->mags;
        if (res->mix.size() > 0) {
            Mat B(p, static_cast<int>(zero_idx.size()));
            for (size_t k = 0; k < zero_idx.size(); ++k) B.col(k) = f.Q.col(zero_idx[k]);
            B = B * res->mix;
            for (size_t k = 0; k < zero_idx.size(); ++k) fr.Q.col(zero_idx[k]) = B.col(k);
        }
    }
    Mat Om = psd_omega(fr.lam, zero_idx, side, mags);
    return materialize_sym_operator(p, [&](const Mat& H) { return apply_loewner(fr, Om, H); });
}

/// Scalar soft-threshold derivative structure for nuclear; kink resolution per
/// singular value tied to the threshold t.
struct NuclearResolution {
    std::vector<int> side;      // +1 above / -1 below, per kink member
    std::vector<double> mags;
    std::vector<Mat> mix_left;   // per tie group rotations (positive groups)
    std::vector<Mat> mix_right;
};

inline SpectralCoeffs nuclear_coeffs(const Vec& sigma, double t,
                                     const std::vector<int>& kink_idx,
                                     const std::vector<int>& side,
                                     const std::vector<double>& mags) {
    const int pp = static_cast<int>(sigma.size());
    const double scale = 1.0 + (pp > 0 ? sigma[0] : 0.0);
    const double tol = kTieTol * scale;
    std::vector<int> kpos(pp, -1);
    for (size_t k = 0; k < kink_idx.size(); ++k) kpos[kink_idx[k]] = static_cast<int>(k);
    // phi_i = (sigma_i - t)_+ with kink resolution: phi' = 1 above, 0 below.
    auto deriv = [&](int i) -> double {
        if (kpos[i] >= 0) return side[kpos[i]] > 0 ? 1.0 : 0.0;
        return sigma[i] > t ? 1.0 : 0.0;
    };
    auto phi = [&](int i) { return std::max(sigma[i] - t, 0.0); };
    SpectralCoeffs C;
    C.Csym = Mat::Zero(pp, pp);
    C.Casym = Mat::Zero(pp, pp);
    C.Ddiag = Mat::Zero(pp, pp);
    C.c2 = Vec::Zero(pp);
    for (int i = 0; i < pp; ++i) {
        C.Ddiag(i, i) = deriv(i);
        C.c2[i] = sigma[i] > tol ? phi(i) / sigma[i] : 0.0;
        for (int j = 0; j < pp; ++j) {
            if (i == j) continue;
            double cs;
            if (std::abs(sigma[i] - sigma[j]) <= tol) {
                if (kpos[i] >= 0 && kpos[j] >= 0 && side[kpos[i]] != side[kpos[j]]) {
                    const double mi = mags[kpos[i]], mj = mags[kpos[j]];
                    cs = side[kpos[i]] > 0 ? mi / (mi + mj) : mj / (mi + mj);
                } else {
                    cs = deriv(i);  // tied group on a common side
                }
            } else {
                cs = (phi(i) - phi(j)) / (sigma[i] - sigma[j]);
            }
            const double denom = sigma[i] + sigma[j];
            C.Csym(i, j) = cs;
            C.Casym(i, j) = denom > tol ? (phi(i) + phi(j)) / denom : 0.0;
        }
    }
    return C;
}

/// Coefficients of the spectral-norm prox differential for ||sigma||_1 > t.
/// active = indices of the chosen active set of the singular-value l1-ball
/// projection (a superset of the strict set {1..k1}).
inline SpectralCoeffs spectral_coeffs_case3(const Vec& sigma, double t,
                                            const std::vector<int>& active) {
    const int pp = static_cast<int>(sigma.size());
    const double scale = 1.0 + (pp > 0 ? sigma[0] : 0.0);
    const double tol = kTieTol * scale;
    std::vector<bool> act(pp, false);
    for (int i : active) act[i] = true;
    double asum = 0.0;
    int acount = 0;
    for (int i = 0; i < pp; ++i)
        if (act[i]) { asum += sigma[i]; ++acount; }
    const double theta = acount > 0 ? (asum - t) / acount : 0.0;
    auto pval = [&](int i) { return act[i] ? std::max(sigma[i] - theta, 0.0) : 0.0; };
    auto phi = [&](int i) { return sigma[i] - pval(i); };  // = theta on the active set
    SpectralCoeffs C;
    C.Csym = Mat::Zero(pp, pp);
    C.Casym = Mat::Zero(pp, pp);
    C.Ddiag = Mat::Zero(pp, pp);
    C.c2 = Vec::Zero(pp);
    for (int i = 0; i < pp; ++i) {
        C.c2[i] = sigma[i] > tol ? phi(i) / sigma[i] : 1.0;
        for (int j = 0; j < pp; ++j) {
            if (i == j) continue;
            double cs;
            if (std::abs(sigma[i] - sigma[j]) <= tol) {
                // tie: both active -> phi constant -> 0; both inactive -> identity
                if (act[i] && act[j]) cs = 0.0;
                else if (!act[i] && !act[j]) cs = 1.0;
                else cs = 0.5;  // mixed resolution inside a threshold tie
            } else {
                cs = (phi(i) - phi(j)) / (sigma[i] - sigma[j]);
            }
            const double denom = sigma[i] + sigma[j];
            C.Csym(i, j) = cs;
            C.Casym(i, j) = denom > tol ? (phi(i) + phi(j)) / denom : 1.0;
        }
    }
    // Diagonal coupling: I - P with P the l1-ball projection Jacobian
    // restricted to the active set.
    Mat P = Mat::Zero(pp, pp);
    if (acount > 0) {
        for (int i = 0; i < pp; ++i)
            for (int j = 0; j < pp; ++j)
                if (act[i] && act[j]) P(i, j) = (i == j ? 1.0 : 0.0) - 1.0 / acount;
    }
    C.Ddiag = Mat::Identity(pp, pp) - P;
    return C;
}

struct SpectralResolution {
    std::vector<int> extra_active;  // tie indices k1..k2-1 promoted to active
    double boundary_mix = 1.0;      // weight of the outside limit at ||sigma||_1 = t
};

inline Mat spectral_jacobian_matrix(const CatalogFunction& g, const SvdFactor& f, double t,
                                    const SpectralResolution* res) {
    const double s1 = f.sigma.lpNorm<1>();
    const double tol = kTieTol * (1.0 + (f.sigma.size() > 0 ? f.sigma[0] : 0.0));
    const int m = g.p * g.q;
    if (s1 < t - tol && !res) return Mat::Zero(m, m);
    if (s1 < t - tol && res) return Mat::Zero(m, m);

    const bool boundary = std::abs(s1 - t) <= tol;
    std::vector<int> active;
    if (boundary) {
        // outside limit: every positive singular value is active at theta -> 0
        for (int i = 0; i < f.pp; ++i)
            if (f.sigma[i] > tol) active.push_back(i);
        if (active.empty()) return Mat::Zero(m, m);
    } else {
        SpectralThresholds th = spectral_thresholds(f.sigma, t);
        for (int i = 0; i < th.k1; ++i) active.push_back(i);
        if (res)
            for (int i : res->extra_active)
                if (i >= th.k1 && i < th.k2) active.push_back(i);
    }
    SpectralCoeffs C = spectral_coeffs_case3(f.sigma, boundary ? s1 : t, active);
    Mat W = materialize_matrix_operator(
        g.p, g.q, [&](const Mat& H) { return apply_spectral_operator(f, C, H); });
    if (boundary && res && res->boundary_mix < 1.0) W *= res->boundary_mix;
    return W;
}

inline void rotate_svd_tie_groups(SvdFactor& f, Rng& rng) {
    const double tol = kTieTol * (1.0 + (f.sigma.size() > 0 ? f.sigma[0] : 0.0));
    auto groups = tie_groups(f.sigma, kTieTol);
    for (const auto& grp : groups) {
        if (grp.size() < 2) continue;
        const int k = static_cast<int>(grp.size());
        const bool zero_group = f.sigma[grp[0]] <= tol;
        Mat QL = rng.orthogonal(k);
        Mat QR = zero_group ? rng.orthogonal(k) : QL;  // positive ties share the rotation
        Mat Rg(f.pp, k), Sg(f.qq, k);
        for (int c = 0; c < k; ++c) {
            Rg.col(c) = f.R.col(grp[c]);
            Sg.col(c) = f.S.col(grp[c]);
        }
        Rg = Rg * QL;
        Sg = Sg * QR;
        for (int c = 0; c < k; ++c) {
            f.R.col(grp[c]) = Rg.col(c);
            f.S.col(grp[c]) = Sg.col(c);
        }
    }
}

}  // namespace detail

/// The distinguished basic Jacobian element: symmetric, eigenvalues in [0,1],
/// with maximal range among the generalized Jacobian (kink coordinates resolve
/// to the identity side, spectral ties to the minimal active set).
inline Mat prox_jacobian_basic(const CatalogFunction& g, const Vec& z) {
    if (static_cast<int>(z.size()) != g.dim())
        throw DimensionMismatch("prox_jacobian_basic: wrong image dimension");
    const double t = g.sigma;
    switch (g.kind) {
        case CatalogKind::orthant: {
            const double tol = detail::kTieTol * (1.0 + z.cwiseAbs().maxCoeff());
            Vec d(z.size());
            for (int i = 0; i < z.size(); ++i) d[i] = z[i] <= tol ? 1.0 : 0.0;
            return d.asDiagonal();
        }
        case CatalogKind::l1: {
            const double tol = detail::kTieTol * (1.0 + z.cwiseAbs().maxCoeff());
            Vec d(z.size());
            for (int i = 0; i < z.size(); ++i) d[i] = std::abs(z[i]) >= t - tol ? 1.0 : 0.0;
            return d.asDiagonal();
        }
        case CatalogKind::soc: {
            const int p = static_cast<int>(z.size());
            const double z0 = z[0];
            const double r = z.tail(p - 1).norm();
            const double tol = detail::kTieTol * (1.0 + z.norm());
            if (r <= z0 + tol && r <= tol) return Mat::Identity(p, p);  // near apex: max range
            if (r <= z0 - tol) return Mat::Identity(p, p);
            if (r <= -z0 - tol) return Mat::Zero(p, p);
            if (std::abs(r - z0) <= tol) return Mat::Identity(p, p);  // boundary of K: identity side
            // interior of the projection regime, or boundary of -K (continuous there)
            Vec w = z.tail(p - 1) / r;
            Mat J(p, p);
            J(0, 0) = 0.5;
            J.block(0, 1, 1, p - 1) = 0.5 * w.transpose();
            J.block(1, 0, p - 1, 1) = 0.5 * w;
            const double beta = 0.5 * (z0 + r) / r;
            J.block(1, 1, p - 1, p - 1) =
                0.5 * w * w.transpose() + beta * (Mat::Identity(p - 1, p - 1) - w * w.transpose());
            return J;
        }
        case CatalogKind::psd:
            return detail::psd_jacobian(smat(z), nullptr);
        case CatalogKind::nuclear: {
            detail::SvdFactor f = detail::full_svd(vec_mat(z, g.p, g.q));
            const double tol = detail::kTieTol * (1.0 + (f.sigma.size() ? f.sigma[0] : 0.0));
            std::vector<int> kink, side;
            std::vector<double> mags;
            for (int i = 0; i < f.pp; ++i)
                if (std::abs(f.sigma[i] - t) <= tol) {
                    kink.push_back(i);
                    side.push_back(+1);  // identity side: maximal range
                    mags.push_back(1.0);
                }
            detail::SpectralCoeffs C = detail::nuclear_coeffs(f.sigma, t, kink, side, mags);
            return detail::materialize_matrix_operator(
                g.p, g.q, [&](const Mat& H) { return detail::apply_spectral_operator(f, C, H); });
        }
        case CatalogKind::spectral: {
            detail::SvdFactor f = detail::full_svd(vec_mat(z, g.p, g.q));
            return detail::spectral_jacobian_matrix(g, f, t, nullptr);
        }
    }
    throw UnknownCatalogKind("prox_jacobian_basic");
}

/// A random element of the generalized Jacobian of Prox_g at z: a convex
/// combination of B-elements drawn by perturbing the active/tie structure.
/// Deterministic in (z, seed).
inline Mat prox_jacobian_sample(const CatalogFunction& g, const Vec& z, std::uint64_t seed) {
    Rng rng(Rng::derive(0x5eedbeefULL, seed));
    const double t = g.sigma;
    const int m = g.dim();
    auto combine = [&](const std::function<Mat()>& draw) {
        const int k = 1 + (rng.uniform() < 0.5 ? 0 : rng.uniform_int(2) + 1);
        if (k == 1) return draw();
        Vec w(k);
        for (int i = 0; i < k; ++i) w[i] = rng.uniform() + 1e-3;
        w /= w.sum();
        Mat acc = Mat::Zero(m, m);
        for (int i = 0; i < k; ++i) acc += w[i] * draw();
        return acc;
    };
    switch (g.kind) {
        case CatalogKind::orthant: {
            const double tol = detail::kTieTol * (1.0 + z.cwiseAbs().maxCoeff());
            return combine([&]() -> Mat {
                Vec d(m);
                for (int i = 0; i < m; ++i)
                    d[i] = z[i] < -tol ? 1.0 : (z[i] > tol ? 0.0 : (rng.uniform() < 0.5 ? 1.0 : 0.0));
                return d.asDiagonal();
            });
        }
        case CatalogKind::l1: {
            const double tol = detail::kTieTol * (1.0 + z.cwiseAbs().maxCoeff());
            return combine([&]() -> Mat {
                Vec d(m);
                for (int i = 0; i < m; ++i) {
                    const double a = std::abs(z[i]);
                    d[i] = a > t + tol ? 1.0 : (a < t - tol ? 0.0 : (rng.uniform() < 0.5 ? 1.0 : 0.0));
                }
                return d.asDiagonal();
            });
        }
        case CatalogKind::soc: {
            const int p = m;
            const double z0 = z[0];
            const double r = z.tail(p - 1).norm();
            const double tol = detail::kTieTol * (1.0 + z.norm());
            auto mid = [&](const Vec& w, double beta) {
                Mat J(p, p);
                J(0, 0) = 0.5;
                J.block(0, 1, 1, p - 1) = 0.5 * w.transpose();
                J.block(1, 0, p - 1, 1) = 0.5 * w;
                J.block(1, 1, p - 1, p - 1) = 0.5 * w * w.transpose() +
                                              beta * (Mat::Identity(p - 1, p - 1) - w * w.transpose());
                return J;
            };
            return combine([&]() -> Mat {
                if (r <= tol && std::abs(z0) <= tol) {
                    // apex: limits from all three regimes
                    const int c = rng.uniform_int(3);
                    if (c == 0) return Mat::Identity(p, p);
                    if (c == 1) return Mat::Zero(p, p);
                    Vec w = rng.gaussian_vec(p - 1);
                    const double nw = w.norm();
                    w = nw > 0 ? Vec(w / nw) : Vec::Unit(p - 1, 0);
                    return mid(w, rng.uniform());
                }
                if (std::abs(r - z0) <= tol) {
                    // boundary of K: identity or the middle-regime limit
                    if (rng.uniform() < 0.5) return Mat::Identity(p, p);
                    return mid(z.tail(p - 1) / r, 1.0);
                }
                if (std::abs(r + z0) <= tol) {
                    if (rng.uniform() < 0.5) return Mat::Zero(p, p);
                    return mid(z.tail(p - 1) / r, 0.0);
                }
                return prox_jacobian_basic(g, z);
            });
        }
        case CatalogKind::psd: {
            Mat Zs = smat(z);
            return combine([&]() -> Mat {
                detail::EigFactor f = detail::sym_eig_desc(Zs);
                const double tol =
                    detail::kTieTol * (1.0 + (f.lam.size() ? f.lam.cwiseAbs().maxCoeff() : 0.0));
                int nzero = 0;
                for (int i = 0; i < f.lam.size(); ++i)
                    if (std::abs(f.lam[i]) <= tol) ++nzero;
                detail::PsdResolution res;
                res.side.resize(nzero);
                res.mags.resize(nzero);
                for (int k = 0; k < nzero; ++k) {
                    res.side[k] = rng.uniform() < 0.5 ? +1 : -1;
                    res.mags[k] = 0.1 + rng.uniform();
                }
                res.mix = nzero > 1 ? rng.orthogonal(nzero) : Mat::Identity(nzero, nzero);
                return detail::psd_jacobian(Zs, &res);
            });
        }
        case CatalogKind::nuclear: {
            return combine([&]() -> Mat {
                detail::SvdFactor f = detail::full_svd(vec_mat(z, g.p, g.q));
                detail::rotate_svd_tie_groups(f, rng);
                const double tol =
                    detail::kTieTol * (1.0 + (f.sigma.size() ? f.sigma[0] : 0.0));
                std::vector<int> kink, side;
                std::vector<double> mags;
                for (int i = 0; i < f.pp; ++i)
                    if (std::abs(f.sigma[i] - t) <= tol) {
                        kink.push_back(i);
                        side.push_back(rng.uniform() < 0.5 ? +1 : -1);
                        mags.push_back(0.1 + rng.uniform());
                    }
                detail::SpectralCoeffs C = detail::nuclear_coeffs(f.sigma, t, kink, side, mags);
                return detail::materialize_matrix_operator(
                    g.p, g.q,
                    [&](const Mat& H) { return detail::apply_spectral_operator(f, C, H); });
            });
        }
        case CatalogKind::spectral: {
            return combine([&]() -> Mat {
                detail::SvdFactor f = detail::full_svd(vec_mat(z, g.p, g.q));
                detail::rotate_svd_tie_groups(f, rng);
                const double s1 = f.sigma.lpNorm<1>();
                const double tol =
                    detail::kTieTol * (1.0 + (f.sigma.size() ? f.sigma[0] : 0.0));
                if (s1 < t - tol) return Mat::Zero(m, m);
                detail::SpectralResolution res;
                if (std::abs(s1 - t) <= tol) {
                    // boundary: inside limit is 0, outside limit is the
                    // projection-like element; draw pure sides half the time
                    res.boundary_mix = rng.uniform() < 0.5
                                           ? (rng.uniform() < 0.5 ? 0.0 : 1.0)
                                           : rng.uniform();
                } else {
                    SpectralThresholds th = spectral_thresholds(f.sigma, t);
                    for (int i = th.k1; i < th.k2; ++i)
                        if (rng.uniform() < 0.5) res.extra_active.push_back(i);
                }
                return detail::spectral_jacobian_matrix(g, f, t, &res);
            });
        }
    }
    throw UnknownCatalogKind("prox_jacobian_sample");
}

/// Prox value together with the basic Jacobian element and its rank.
struct ProxEval {
    Vec point;
    Mat basic_jacobian;
    int jacobian_rank = 0;
};

inline ProxEval prox_eval(const CatalogFunction& g, const Vec& z) {
    ProxEval out;
    out.point = prox(g, z, 1.0);
    out.basic_jacobian = prox_jacobian_basic(g, z);
    Vec lam; Mat Q;
    sym_eig(out.basic_jacobian, lam, Q);
    const double lmax = lam.size() ? std::max(lam.maxCoeff(), 0.0) : 0.0;
    for (int i = 0; i < lam.size(); ++i)
        if (lam[i] > detail::kRangeTol * std::max(lmax, 1e-300)) ++out.jacobian_rank;
    return out;
}

// ---------------------------------------------------------------------------
// First-order directional derivative dg(x)(d)
// ---------------------------------------------------------------------------

/// Closed-form dg(x)(d): indicator kinds return 0 on the tangent cone and
/// +infinity outside; norm kinds return the support function of the
/// subdifferential at x.
inline double directional_deriv(const CatalogFunction& g, const Vec& x, const Vec& d) {
    if (!domain_member(g, x))
        throw DomainViolation("directional_deriv: x outside dom g");
    const double t = g.sigma;
    const double tol = 1e-8 * (1.0 + x.norm() + d.norm());
    switch (g.kind) {
        case CatalogKind::orthant: {
            for (int i = 0; i < x.size(); ++i)
                if (x[i] >= -tol && d[i] > tol) return kInf;
            return 0.0;
        }
        case CatalogKind::soc: {
            const int p = static_cast<int>(x.size());
            const double r = x.tail(p - 1).norm();
            if (x[0] - r > tol) return 0.0;  // interior
            if (x.norm() <= tol) {
                const double rd = d.tail(p - 1).norm();
                return rd - d[0] <= tol ? 0.0 : kInf;
            }
            Vec w = x.tail(p - 1) / r;
            return w.dot(d.tail(p - 1)) - d[0] <= tol ? 0.0 : kInf;
        }
        case CatalogKind::psd: {
            detail::EigFactor f = detail::sym_eig_desc(smat(x));
            const double s = detail::kTieTol * (1.0 + f.lam.cwiseAbs().maxCoeff());
            std::vector<int> ker;
            for (int i = 0; i < f.lam.size(); ++i)
                if (f.lam[i] <= s) ker.push_back(i);
            if (ker.empty()) return 0.0;
            Mat D = smat(d);
            Mat K(f.Q.rows(), static_cast<int>(ker.size()));
            for (size_t k = 0; k < ker.size(); ++k) K.col(k) = f.Q.col(ker[k]);
            Mat Dk = K.transpose() * D * K;
            detail::EigFactor fd = detail::sym_eig_desc(Dk);
            return fd.lam.minCoeff() >= -tol ? 0.0 : kInf;
        }
        case CatalogKind::l1: {
            const double s = 1e-10 * (1.0 + x.cwiseAbs().maxCoeff());
            double v = 0.0;
            for (int i = 0; i < x.size(); ++i)
                v += std::abs(x[i]) > s ? (x[i] > 0 ? d[i] : -d[i]) : std::abs(d[i]);
            return t * v;
        }
        case CatalogKind::nuclear: {
            detail::SvdFactor f = detail::full_svd(vec_mat(x, g.p, g.q));
            const double s = detail::kTieTol * (1.0 + (f.sigma.size() ? f.sigma[0] : 0.0));
            int r = 0;
            while (r < f.pp && f.sigma[r] > s) ++r;
            Mat D = f.to_internal(vec_mat(d, g.p, g.q));
            Mat Dt = f.R.transpose() * D * f.S;
            double v = Dt.topLeftCorner(r, r).trace();
            if (r < f.pp) {
                Mat tail = Dt.bottomRightCorner(f.pp - r, f.qq - r);
                Eigen::JacobiSVD<Mat> svd(tail);
                v += svd.singularValues().sum();
            }
            return t * v;
        }
        case CatalogKind::spectral: {
            Mat X = vec_mat(x, g.p, g.q);
            Mat D = vec_mat(d, g.p, g.q);
            if (X.norm() <= tol) {
                Eigen::JacobiSVD<Mat> svd(D);
                return t * (svd.singularValues().size() ? svd.singularValues()[0] : 0.0);
            }
            detail::SvdFactor f = detail::full_svd(X);
            const double s = detail::kTieTol * (1.0 + f.sigma[0]);
            int k = 0;
            while (k < f.pp && f.sigma[k] >= f.sigma[0] - s) ++k;
            Mat Dt = f.to_internal(D);
            Mat B = f.R.leftCols(k).transpose() * Dt * f.S.leftCols(k);
            detail::EigFactor fe = detail::sym_eig_desc(0.5 * (B + B.transpose()));
            return t * fe.lam.maxCoeff();
        }
    }
    throw UnknownCatalogKind("directional_deriv");
}

// ---------------------------------------------------------------------------
// Projection onto the normal cone of dom g at x
// ---------------------------------------------------------------------------

inline Vec domain_normal_project(const CatalogFunction& g, const Vec& x, const Vec& v) {
    if (!domain_member(g, x))
        throw DomainViolation("domain_normal_project: x outside dom g");
    const double tol = 1e-8 * (1.0 + x.norm());
    switch (g.kind) {
        case CatalogKind::orthant: {
            Vec out = Vec::Zero(x.size());
            for (int i = 0; i < x.size(); ++i)
                if (x[i] >= -tol) out[i] = std::max(v[i], 0.0);
            return out;
        }
        case CatalogKind::soc: {
            const int p = static_cast<int>(x.size());
            const double r = x.tail(p - 1).norm();
            if (x[0] - r > tol) return Vec::Zero(p);      // interior: N = {0}
            if (x.norm() <= tol) return -detail::soc_project(-v);  // apex: N = -K
            Vec n0(p);
            n0[0] = -1.0;
            n0.tail(p - 1) = x.tail(p - 1) / r;
            n0 /= std::sqrt(2.0);
            return std::max(n0.dot(v), 0.0) * n0;  // boundary ray
        }
        case CatalogKind::psd: {
            detail::EigFactor f = detail::sym_eig_desc(smat(x));
            const double s = detail::kTieTol * (1.0 + f.lam.cwiseAbs().maxCoeff());
            std::vector<int> ker;
            for (int i = 0; i < f.lam.size(); ++i)
                if (f.lam[i] <= s) ker.push_back(i);
            if (ker.empty()) return Vec::Zero(x.size());
            Mat K(f.Q.rows(), static_cast<int>(ker.size()));
            for (size_t k = 0; k < ker.size(); ++k) K.col(k) = f.Q.col(ker[k]);
            Mat Vk = K.transpose() * smat(v) * K;
            return svec(K * detail::psd_clip(Vk, /*positive_part=*/false) * K.transpose());
        }
        case CatalogKind::l1:
        case CatalogKind::nuclear:
        case CatalogKind::spectral:
            return Vec::Zero(x.size());  // full domain
    }
    throw UnknownCatalogKind("domain_normal_project");
}

}  // namespace stabilis
