#pragma once

#include <functional>
#include <optional>

#include "stabilis/catalog.hpp"

namespace stabilis {

// ---------------------------------------------------------------------------
// First-order critical direction set K(x,u) = {d | dg(x)(d) = <u,d>} of a
// catalog function at a subgradient pair, described by its affine hull,
// lineality space, a membership oracle and (when closed-form) a projector.
// ---------------------------------------------------------------------------

struct ConeDescription {
    Mat affine_basis;     ///< orthonormal columns spanning aff K
    Mat lineality_basis;  ///< orthonormal columns spanning lin K
    std::function<bool(const Vec&, double)> membership;
    std::optional<std::function<Vec(const Vec&)>> projector;
};

namespace detail {

/// Assembles a basis from coordinate index sets.
inline Mat coordinate_basis(int m, const std::vector<int>& idx) {
    Mat B = Mat::Zero(m, static_cast<int>(idx.size()));
    for (size_t k = 0; k < idx.size(); ++k) B(idx[k], static_cast<int>(k)) = 1.0;
    return B;
}

struct OrthantStructure {
    std::vector<int> pinned;  // active with positive multiplier: d_i = 0
    std::vector<int> cone;    // active with zero multiplier:     d_i <= 0 (times sign)
    std::vector<int> free_;   // inactive coordinate
    Vec ray_sign;             // +1/-1 per coordinate for the cone part
};

}  // namespace detail

/// Critical direction set of g at x for the subgradient u.
inline ConeDescription critical_set(const CatalogFunction& g, const Vec& x, const Vec& u) {
    if (!subdifferential_contains(g, x, u))
        throw NotASubgradient("critical_set: u is not a subgradient of g at x");
    const int m = g.dim();
    const double tol = 1e-7 * (1.0 + x.norm() + u.norm());
    ConeDescription K;

    switch (g.kind) {
        case CatalogKind::orthant:
        case CatalogKind::l1: {
            const double t = g.sigma;
            detail::OrthantStructure st;
            st.ray_sign = Vec::Ones(m);
            for (int i = 0; i < m; ++i) {
                if (g.kind == CatalogKind::orthant) {
                    if (x[i] < -tol) st.free_.push_back(i);
                    else if (u[i] > tol) st.pinned.push_back(i);
                    else { st.cone.push_back(i); st.ray_sign[i] = -1.0; }
                } else {
                    if (std::abs(x[i]) > tol) st.free_.push_back(i);
                    else if (std::abs(u[i]) < t - tol) st.pinned.push_back(i);
                    else { st.cone.push_back(i); st.ray_sign[i] = u[i] >= 0 ? 1.0 : -1.0; }
                }
            }
            std::vector<int> aff = st.free_;
            aff.insert(aff.end(), st.cone.begin(), st.cone.end());
            K.lineality_basis = detail::coordinate_basis(m, st.free_);
            K.affine_basis = detail::coordinate_basis(m, aff);
            K.membership = [st, tol](const Vec& d, double tl) {
                const double s = tl > 0 ? tl : tol;
                for (int i : st.pinned)
                    if (std::abs(d[i]) > s) return false;
                for (int i : st.cone)
                    if (st.ray_sign[i] * d[i] < -s) return false;
                return true;
            };
            K.projector = [st](const Vec& d) {
                Vec out = d;
                for (int i : st.pinned) out[i] = 0.0;
                for (int i : st.cone) out[i] = st.ray_sign[i] * std::max(st.ray_sign[i] * d[i], 0.0);
                return out;
            };
            return K;
        }

        case CatalogKind::soc: {
            const int p = m;
            const double r = x.tail(p - 1).norm();
            if (x[0] - r > tol) {
                // interior point, u = 0: K is the whole space
                K.lineality_basis = Mat::Identity(p, p);
                K.affine_basis = Mat::Identity(p, p);
                K.membership = [](const Vec&, double) { return true; };
                K.projector = [](const Vec& d) { return d; };
                return K;
            }
            if (x.norm() <= tol) {
                // apex
                if (u.norm() <= tol) {
                    // K is the cone itself
                    K.lineality_basis = Mat(p, 0);
                    K.affine_basis = Mat::Identity(p, p);
                    CatalogFunction gc = g;
                    K.membership = [gc](const Vec& d, double tl) {
                        return d.tail(d.size() - 1).norm() - d[0] <= (tl > 0 ? tl : 1e-9) * (1.0 + d.norm());
                    };
                    K.projector = [](const Vec& d) { return detail::soc_project(d); };
                    return K;
                }
                const double ru = u.tail(p - 1).norm();
                if (-u[0] - ru > tol) {
                    // u in the interior of the polar: K = {0}
                    K.lineality_basis = Mat(p, 0);
                    K.affine_basis = Mat(p, 0);
                    K.membership = [](const Vec& d, double tl) {
                        return d.norm() <= (tl > 0 ? tl : 1e-9);
                    };
                    K.projector = [p](const Vec&) { return Vec::Zero(p); };
                    return K;
                }
                // u on the polar boundary: K is the ray through (1, -u1/||u1||)
                Vec d0(p);
                d0[0] = 1.0;
                d0.tail(p - 1) = -u.tail(p - 1) / ru;
                d0 /= d0.norm();
                K.lineality_basis = Mat(p, 0);
                K.affine_basis = d0;
                K.membership = [d0](const Vec& d, double tl) {
                    const double s = (tl > 0 ? tl : 1e-9) * (1.0 + d.norm());
                    const double c = d0.dot(d);
                    return c >= -s && (d - c * d0).norm() <= s;
                };
                K.projector = [d0](const Vec& d) { return Vec(std::max(d0.dot(d), 0.0) * d0); };
                return K;
            }
            // boundary, x != 0
            Vec n0(p);
            n0[0] = -1.0;
            n0.tail(p - 1) = x.tail(p - 1) / r;
            n0 /= std::sqrt(2.0);
            Mat H = nullspace(Mat(n0.transpose()));  // tangent hyperplane basis
            const double alpha = u.dot(n0);
            if (alpha > tol) {
                // strict complementarity: K is the tangent hyperplane
                K.lineality_basis = H;
                K.affine_basis = H;
                K.membership = [n0](const Vec& d, double tl) {
                    return std::abs(n0.dot(d)) <= (tl > 0 ? tl : 1e-9) * (1.0 + d.norm());
                };
                K.projector = [n0](const Vec& d) { return Vec(d - n0.dot(d) * n0); };
                return K;
            }
            // u = 0: K is the tangent halfspace
            K.lineality_basis = H;
            K.affine_basis = Mat::Identity(p, p);
            K.membership = [n0](const Vec& d, double tl) {
                return n0.dot(d) <= (tl > 0 ? tl : 1e-9) * (1.0 + d.norm());
            };
            K.projector = [n0](const Vec& d) { return Vec(d - std::max(n0.dot(d), 0.0) * n0); };
            return K;
        }

        case CatalogKind::psd: {
            // Joint eigenstructure from Z = X + U: alpha (positive), beta
            // (joint kernel), gamma (negative).
            const int p = g.p;
            detail::EigFactor f = detail::sym_eig_desc(smat(x + u));
            const double s = detail::kTieTol * (1.0 + f.lam.cwiseAbs().maxCoeff());
            std::vector<int> a, b, c;
            for (int i = 0; i < p; ++i) {
                if (f.lam[i] > s) a.push_back(i);
                else if (f.lam[i] < -s) c.push_back(i);
                else b.push_back(i);
            }
            Mat Q = f.Q;
            auto block_indices = [&](const std::vector<int>& I, const std::vector<int>& J) {
                // svec basis of Q E_ij Q^T over i in I, j in J (i<=j handled once)
                std::vector<Vec> cols;
                for (size_t ii = 0; ii < I.size(); ++ii)
                    for (size_t jj = 0; jj < J.size(); ++jj) {
                        int i = I[ii], j = J[jj];
                        if (&I == &J && i > j) continue;
                        Mat E = Mat::Zero(p, p);
                        if (i == j) E(i, i) = 1.0;
                        else { E(i, j) = E(j, i) = 1.0 / std::sqrt(2.0); }
                        cols.push_back(svec(Q * E * Q.transpose()));
                    }
                Mat B(svec_dim(p), static_cast<int>(cols.size()));
                for (size_t k = 0; k < cols.size(); ++k) B.col(static_cast<int>(k)) = cols[k];
                return B;
            };
            Mat Laa = block_indices(a, a), Lab = block_indices(a, b), Lac = block_indices(a, c);
            Mat Bbb = block_indices(b, b);
            Mat lin(svec_dim(p), Laa.cols() + Lab.cols() + Lac.cols());
            lin << Laa, Lab, Lac;
            Mat aff(svec_dim(p), lin.cols() + Bbb.cols());
            aff << lin, Bbb;
            K.lineality_basis = lin;
            K.affine_basis = aff;
            Mat Qb(p, static_cast<int>(b.size())), Qc(p, static_cast<int>(c.size()));
            for (size_t k = 0; k < b.size(); ++k) Qb.col(static_cast<int>(k)) = Q.col(b[k]);
            for (size_t k = 0; k < c.size(); ++k) Qc.col(static_cast<int>(k)) = Q.col(c[k]);
            K.membership = [Qb, Qc](const Vec& d, double tl) {
                const double s2 = (tl > 0 ? tl : 1e-9) * (1.0 + d.norm());
                Mat D = smat(d);
                if (Qc.cols() > 0) {
                    if ((Qc.transpose() * D * Qc).norm() > s2) return false;
                    if (Qb.cols() > 0 && (Qb.transpose() * D * Qc).norm() > s2) return false;
                }
                if (Qb.cols() > 0) {
                    detail::EigFactor fb = detail::sym_eig_desc(Qb.transpose() * D * Qb);
                    if (fb.lam.size() > 0 && fb.lam.minCoeff() < -s2) return false;
                }
                return true;
            };
            K.projector = [Qb, Qc](const Vec& d) {
                Mat D = smat(d);
                if (Qc.cols() > 0) {
                    Mat Dc = Qc.transpose() * D * Qc;
                    D -= Qc * Dc * Qc.transpose();
                    if (Qb.cols() > 0) {
                        Mat Dbc = Qb.transpose() * D * Qc;
                        D -= Qb * Dbc * Qc.transpose() + Qc * Dbc.transpose() * Qb.transpose();
                    }
                }
                if (Qb.cols() > 0) {
                    Mat Db = Qb.transpose() * D * Qb;
                    D += Qb * (detail::psd_clip(Db) - Db) * Qb.transpose();
                }
                return svec(D);
            };
            return K;
        }

        case CatalogKind::nuclear: {
            const int p = g.p, q = g.q;
            const double t = g.sigma;
            detail::SvdFactor f = detail::full_svd(vec_mat(x, p, q));
            const double s = detail::kTieTol * (1.0 + (f.sigma.size() ? f.sigma[0] : 0.0));
            int r = 0;
            while (r < f.pp && f.sigma[r] > s) ++r;
            Mat R2 = f.R.rightCols(f.pp - r);
            Mat S2 = f.S.rightCols(f.qq - r);
            // unit-singular-value structure of the residual subgradient block
            Mat G = f.to_internal(vec_mat(u, p, q)) / t;
            Mat Wt = R2.transpose() * G * S2;
            int e = 0;
            Mat E1(Wt.rows(), 0), F1(Wt.cols(), 0);
            if (Wt.rows() > 0 && Wt.cols() > 0) {
                Eigen::JacobiSVD<Mat> wsvd(Wt, Eigen::ComputeFullU | Eigen::ComputeFullV);
                while (e < wsvd.singularValues().size() &&
                       wsvd.singularValues()[e] >= 1.0 - 1e-7)
                    ++e;
                E1 = wsvd.matrixU().leftCols(e);
                F1 = wsvd.matrixV().leftCols(e);
            }
            const bool transposed = f.transposed;
            auto to_int = [transposed, p, q](const Vec& d) {
                Mat D = vec_mat(d, p, q);
                return transposed ? Mat(D.transpose()) : D;
            };
            auto to_orig_vec = [transposed](const Mat& D) {
                return mat_vec(transposed ? Mat(D.transpose()) : D);
            };
            // Bases: lin = everything except the R2^T V S2 block; aff adds the
            // symmetric E1-F1 directions of that block.
            std::vector<Vec> lin_cols, aff_extra;
            for (int i = 0; i < f.pp; ++i)
                for (int j = 0; j < f.qq; ++j) {
                    if (i >= r && j >= r) continue;
                    Mat D = f.R.col(i) * f.S.col(j).transpose();
                    lin_cols.push_back(to_orig_vec(D));
                }
            for (int k = 0; k < e; ++k)
                for (int l = k; l < e; ++l) {
                    Mat N = Mat::Zero(e, e);
                    if (k == l) N(k, k) = 1.0;
                    else N(k, l) = N(l, k) = 1.0 / std::sqrt(2.0);
                    Mat D = R2 * (E1 * N * F1.transpose()) * S2.transpose();
                    aff_extra.push_back(to_orig_vec(D));
                }
            Mat lin(m, static_cast<int>(lin_cols.size()));
            for (size_t k = 0; k < lin_cols.size(); ++k) lin.col(static_cast<int>(k)) = lin_cols[k];
            Mat aff(m, lin.cols() + static_cast<int>(aff_extra.size()));
            aff.leftCols(lin.cols()) = lin;
            for (size_t k = 0; k < aff_extra.size(); ++k)
                aff.col(lin.cols() + static_cast<int>(k)) = aff_extra[k];
            K.lineality_basis = lin;
            K.affine_basis = aff;
            K.membership = [R2, S2, E1, F1, to_int](const Vec& d, double tl) {
                const double s2 = (tl > 0 ? tl : 1e-9) * (1.0 + d.norm());
                Mat M = R2.transpose() * to_int(d) * S2;
                Mat N = E1.transpose() * M * F1;
                Mat res = M - E1 * N * F1.transpose();
                if (res.norm() > s2) return false;
                if ((N - N.transpose()).norm() > s2) return false;
                detail::EigFactor fe = detail::sym_eig_desc(0.5 * (N + N.transpose()));
                return fe.lam.size() == 0 || fe.lam.minCoeff() >= -s2;
            };
            K.projector = [R2, S2, E1, F1, to_int, to_orig_vec](const Vec& d) {
                Mat D = to_int(d);
                Mat M = R2.transpose() * D * S2;
                Mat N = E1.transpose() * M * F1;
                Mat Mp = E1 * detail::psd_clip(0.5 * (N + N.transpose())) * F1.transpose();
                Mat Dp = D - R2 * (M - Mp) * S2.transpose();
                return Vec(to_orig_vec(Dp));
            };
            return K;
        }

        case CatalogKind::spectral: {
            const int p = g.p, q = g.q;
            const double t = g.sigma;
            Mat X = vec_mat(x, p, q);
            const bool x_zero = X.norm() <= tol;
            detail::SvdFactor fu = detail::full_svd(vec_mat(u, p, q));
            if (x_zero) {
                const double ustar = fu.sigma.sum();  // nuclear norm of u
                if (ustar < t * (1.0 - 1e-7)) {
                    // subgradient in the interior of the dual ball: K = {0}
                    K.lineality_basis = Mat(m, 0);
                    K.affine_basis = Mat(m, 0);
                    K.membership = [](const Vec& d, double tl) {
                        return d.norm() <= (tl > 0 ? tl : 1e-9);
                    };
                    K.projector = [m](const Vec&) { return Vec::Zero(m); };
                    return K;
                }
                // boundary of the dual ball: alignment with supp(w)
                int e = 0;
                const double ws = detail::kTieTol * (1.0 + fu.sigma[0]);
                while (e < fu.pp && fu.sigma[e] > ws) ++e;
                Mat P1 = fu.R.leftCols(e), Q1 = fu.S.leftCols(e);
                const bool tr = fu.transposed;
                auto to_int = [tr, p, q](const Vec& d) {
                    Mat D = vec_mat(d, p, q);
                    return tr ? Mat(D.transpose()) : D;
                };
                // aff K = {V : V Q1 = c P1, V^T P1 = c Q1 for some c}
                auto constraint = [P1, Q1, e, to_int](const Vec& d) {
                    Mat D = to_int(d);
                    const double c = (P1.transpose() * D * Q1).trace() / e;
                    Mat r1 = D * Q1 - c * P1;
                    Mat r2 = D.transpose() * P1 - c * Q1;
                    Vec out(r1.size() + r2.size());
                    out.head(r1.size()) = mat_vec(r1);
                    out.tail(r2.size()) = mat_vec(r2);
                    return out;
                };
                Mat C(constraint(Vec::Zero(m)).size(), m);
                for (int k = 0; k < m; ++k) {
                    Vec ek = Vec::Zero(m);
                    ek[k] = 1.0;
                    C.col(k) = constraint(ek);
                }
                K.affine_basis = nullspace(C);
                K.lineality_basis = Mat(m, 0);
                K.membership = [P1, Q1, to_int](const Vec& d, double tl) {
                    const double s2 = (tl > 0 ? tl : 1e-9) * (1.0 + d.norm());
                    Mat D = to_int(d);
                    Eigen::JacobiSVD<Mat> svd(D);
                    const double smax = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
                    return (D * Q1 - smax * P1).norm() <= s2 &&
                           (D.transpose() * P1 - smax * Q1).norm() <= s2;
                };
                // no closed-form projector in the aligned-cone case
                return K;
            }
            // x != 0: top singular block of X and the eigenstructure of the
            // multiplier block decide the alignment constraints.
            detail::SvdFactor fx = detail::full_svd(X);
            const double s = detail::kTieTol * (1.0 + fx.sigma[0]);
            int k = 0;
            while (k < fx.pp && fx.sigma[k] >= fx.sigma[0] - s) ++k;
            Mat R1 = fx.R.leftCols(k), S1 = fx.S.leftCols(k);
            const bool tr = fx.transposed;
            auto to_int = [tr, p, q](const Vec& d) {
                Mat D = vec_mat(d, p, q);
                return tr ? Mat(D.transpose()) : D;
            };
            Mat Tb0 = R1.transpose() * to_int(u) * S1 / t;
            Mat Tbar = 0.5 * (Tb0 + Tb0.transpose());
            detail::EigFactor ft = detail::sym_eig_desc(Tbar);
            int e = 0;
            while (e < ft.lam.size() && ft.lam[e] > 1e-7) ++e;
            Mat Ep = ft.Q.leftCols(e);   // range of the multiplier block
            Mat Em = ft.Q.rightCols(k - e);
            // aff K: sym(R1^T V S1) has Ep as an eigenblock; lin K: sym block = c I.
            auto sym_block = [R1, S1, to_int](const Vec& d) {
                Mat B = R1.transpose() * to_int(d) * S1;
                return Mat(0.5 * (B + B.transpose()));
            };
            auto aff_constraint = [sym_block, Ep, Em, e](const Vec& d) {
                Mat M = sym_block(d);
                Mat Mpp = Ep.transpose() * M * Ep;
                const double c = e > 0 ? Mpp.trace() / e : 0.0;
                Mat r1 = Mpp - c * Mat::Identity(e, e);
                Mat r2 = Em.cols() > 0 ? Mat(Em.transpose() * M * Ep) : Mat(0, 0);
                Vec out(r1.size() + r2.size());
                if (r1.size() > 0) out.head(r1.size()) = mat_vec(r1);
                if (r2.size() > 0) out.tail(r2.size()) = mat_vec(r2);
                return out;
            };
            auto lin_constraint = [sym_block, k](const Vec& d) {
                Mat M = sym_block(d);
                const double c = M.trace() / k;
                return Vec(mat_vec(Mat(M - c * Mat::Identity(k, k))));
            };
            Mat Ca(aff_constraint(Vec::Zero(m)).size(), m), Cl(k * k, m);
            for (int kk = 0; kk < m; ++kk) {
                Vec ek = Vec::Zero(m);
                ek[kk] = 1.0;
                Ca.col(kk) = aff_constraint(ek);
                Cl.col(kk) = lin_constraint(ek);
            }
            K.affine_basis = nullspace(Ca);
            K.lineality_basis = nullspace(Cl);
            K.membership = [sym_block, Ep](const Vec& d, double tl) {
                const double s2 = (tl > 0 ? tl : 1e-9) * (1.0 + d.norm());
                Mat M = sym_block(d);
                detail::EigFactor fm = detail::sym_eig_desc(M);
                const double lmax = fm.lam.size() ? fm.lam.maxCoeff() : 0.0;
                return Ep.cols() == 0 || (M * Ep - lmax * Ep).norm() <= s2;
            };
            if (e == k) {
                // full multiplier rank: K is the subspace {sym block = c I}
                K.projector = [R1, S1, to_int, tr, p, q, k](const Vec& d) {
                    Mat D = to_int(d);
                    Mat B = R1.transpose() * D * S1;
                    Mat M = 0.5 * (B + B.transpose());
                    Mat Mbar = (M.trace() / k) * Mat::Identity(k, k);
                    Mat Dp = D - R1 * (M - Mbar) * S1.transpose();
                    return Vec(mat_vec(tr ? Mat(Dp.transpose()) : Dp));
                };
            }
            return K;
        }
    }
    throw UnknownCatalogKind("critical_set");
}

/// Draws a direction from K(x,u); used by samplers and property tests.
inline Vec sample_critical_direction(const CatalogFunction& g, const Vec& x, const Vec& u,
                                     Rng& rng) {
    const int m = g.dim();
    ConeDescription K = critical_set(g, x, u);
    Vec d = rng.gaussian_vec(m);
    if (K.projector) return (*K.projector)(d);
    // No projector: push into aff K, then repair the spectral alignment.
    if (K.affine_basis.cols() == 0) return Vec::Zero(m);
    d = K.affine_basis * (K.affine_basis.transpose() * d);
    if (K.membership(d, 1e-8)) return d;
    // Spectral kinds: enforce the top-eigenvalue alignment by shifting the
    // multiplier block.
    if (g.kind == CatalogKind::spectral) {
        Mat X = vec_mat(x, g.p, g.q);
        if (X.norm() > 1e-9 * (1.0 + x.norm())) {
            detail::SvdFactor fx = detail::full_svd(X);
            const double s = detail::kTieTol * (1.0 + fx.sigma[0]);
            int k = 0;
            while (k < fx.pp && fx.sigma[k] >= fx.sigma[0] - s) ++k;
            Mat R1 = fx.R.leftCols(k), S1 = fx.S.leftCols(k);
            Mat D = fx.to_internal(vec_mat(d, g.p, g.q));
            Mat B = R1.transpose() * D * S1;
            Mat M = 0.5 * (B + B.transpose());
            Mat Tbar = R1.transpose() * fx.to_internal(vec_mat(u, g.p, g.q)) * S1 / g.sigma;
            detail::EigFactor ft = detail::sym_eig_desc(0.5 * (Tbar + Tbar.transpose()));
            int e = 0;
            while (e < ft.lam.size() && ft.lam[e] > 1e-7) ++e;
            Mat Ep = ft.Q.leftCols(e);
            Mat P = Ep * Ep.transpose();
            Mat Mrest = (Mat::Identity(k, k) - P) * M * (Mat::Identity(k, k) - P);
            detail::EigFactor fr = detail::sym_eig_desc(Mrest);
            const double lam = (fr.lam.size() ? std::max(fr.lam.maxCoeff(), 0.0) : 0.0) +
                               std::abs(rng.gaussian());
            Mat Mp = lam * P + Mrest;
            Mat Dp = D - R1 * (M - Mp) * S1.transpose();
            return mat_vec(fx.to_original(Dp));
        }
    }
    return d;  // caller may reject via membership
}

}  // namespace stabilis
