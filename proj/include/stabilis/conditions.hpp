#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "stabilis/second_order.hpp"
#include "stabilis/solver.hpp"

namespace stabilis {

// ---------------------------------------------------------------------------
// Margin-reporting verdicts for the pointbased conditions and the aggregate
// certificate. Every condition is a strict sign condition, so margins inside
// the band give "inconclusive" rather than a guess.
// ---------------------------------------------------------------------------

enum class Status { holds, fails, inconclusive };

inline std::string to_string(Status s) {
    switch (s) {
        case Status::holds: return "holds";
        case Status::fails: return "fails";
        case Status::inconclusive: return "inconclusive";
    }
    return "?";
}

struct ConditionVerdict {
    Status status = Status::inconclusive;
    double margin = 0.0;
    std::string detail;
};

struct CheckOptions {
    double band = 1e-7;       ///< inconclusive half-width on normalized margins
    int jz_samples = 32;      ///< generalized-Jacobian samples
    int sosc_starts = 256;    ///< projected random starts for the cone search
    int multiplier_samples = 16;
    std::uint64_t seed = 0;
    double kkt_tol = 1e-6;
};

inline constexpr double kMarginCap = 1e6;

namespace detail {

inline ConditionVerdict verdict_from_margin(double margin, double band_eff,
                                            std::string detail = {}) {
    ConditionVerdict v;
    v.margin = margin;
    v.detail = std::move(detail);
    if (margin > band_eff) v.status = Status::holds;
    else if (margin < -band_eff) v.status = Status::fails;
    else v.status = Status::inconclusive;
    return v;
}

/// Minimizes ||JF^T v|| over unit vectors of a cone given by its projector.
/// Projected gradient with multistart; returns the smallest value found and
/// the attaining v, or an empty optional when the cone is trivial.
inline std::optional<std::pair<double, Vec>> min_adjoint_norm_over_cone(
    const Mat& Jt, const std::function<Vec(const Vec&)>& project, int m, int starts,
    std::uint64_t seed) {
    Rng rng(Rng::derive(seed, 0xabcdULL));
    // Jt maps image-space v (dim m) to primal space; objective f(v)=||Jt v||^2.
    Mat H = Jt.transpose() * Jt;  // m x m
    double L = 1.0;
    {
        Eigen::JacobiSVD<Mat> svd(H);
        L = svd.singularValues().size() ? std::max(svd.singularValues()[0], 1e-12) : 1e-12;
    }
    const double step = 1.0 / (2.0 * L);
    bool any = false;
    double best = kInf;
    Vec vbest;
    for (int s = 0; s < starts; ++s) {
        Vec v = project(rng.gaussian_vec(m));
        if (v.norm() <= 1e-12) continue;
        v /= v.norm();
        for (int it = 0; it < 150; ++it) {
            Vec grad = 2.0 * (H * v);
            Vec w = project(v - step * grad);
            const double nw = w.norm();
            if (nw <= 1e-14) break;
            v = w / nw;
        }
        if (v.norm() <= 1e-12) continue;
        const double val = (Jt * v).norm();
        any = true;
        if (val < best) {
            best = val;
            vbest = v;
        }
    }
    if (!any) return std::nullopt;
    return std::make_pair(best, vbest);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Individual checks
// ---------------------------------------------------------------------------

/// Robinson constraint qualification via the dual form: no unit normal-cone
/// vector of dom g at F(x) may annihilate JF^T.
inline ConditionVerdict check_rcq(const ProblemSpec& spec, const Vec& x,
                                  const CheckOptions& opt = {}) {
    const Vec y = spec.F_value(x);
    if (!domain_member(spec.g, y)) throw DomainViolation("check_rcq: F(x) outside dom g");
    Mat J = spec.F_jacobian(x);
    const double band_eff = opt.band * (1.0 + J.norm());
    auto project = [&](const Vec& v) { return domain_normal_project(spec.g, y, v); };
    auto res = detail::min_adjoint_norm_over_cone(Mat(J.transpose()), project, spec.m, 32,
                                                  opt.seed);
    if (!res)
        return detail::verdict_from_margin(kMarginCap, band_eff, "trivial normal cone");
    if (res->first <= 1e-11 * (1.0 + J.norm()))
        return detail::verdict_from_margin(-10.0 * band_eff, band_eff,
                                           "witness normal vector annihilates JF^T");
    return detail::verdict_from_margin(res->first, band_eff, "sampled dual-form minimum");
}

/// Strong Robinson constraint qualification: the polar of the critical
/// direction set intersects ker JF^T trivially. Needs a projector on the
/// critical set; otherwise inconclusive.
inline ConditionVerdict check_srcq(const ProblemSpec& spec, const Vec& x, const Vec& u,
                                   const CheckOptions& opt = {}) {
    detail::require_kkt(spec, x, u, opt.kkt_tol);
    const Vec y = spec.F_value(x);
    Mat J = spec.F_jacobian(x);
    const double band_eff = opt.band * (1.0 + J.norm());
    ConeDescription K = critical_set(spec.g, y, u);
    if (!K.projector) {
        ConditionVerdict v;
        v.status = Status::inconclusive;
        v.margin = 0.0;
        v.detail = "no projector; use isolated-calmness probe";
        return v;
    }
    auto polar_project = [&](const Vec& v) { return Vec(v - (*K.projector)(v)); };
    auto res = detail::min_adjoint_norm_over_cone(Mat(J.transpose()), polar_project, spec.m,
                                                  32, opt.seed);
    if (!res)
        return detail::verdict_from_margin(kMarginCap, band_eff, "trivial polar cone");
    if (res->first <= 1e-11 * (1.0 + J.norm()))
        return detail::verdict_from_margin(-10.0 * band_eff, band_eff,
                                           "witness polar vector annihilates JF^T");
    return detail::verdict_from_margin(res->first, band_eff, "sampled dual-form minimum");
}

/// Constraint nondegeneracy: [JF | lineality basis of the critical set] must
/// span the image space. Exact linear algebra; the margin is the m-th
/// singular value.
inline ConditionVerdict check_nondegeneracy(const ProblemSpec& spec, const Vec& x, const Vec& u,
                                            const CheckOptions& opt = {}) {
    detail::require_kkt(spec, x, u, opt.kkt_tol);
    const Vec y = spec.F_value(x);
    Mat J = spec.F_jacobian(x);
    ConeDescription K = critical_set(spec.g, y, u);
    const Mat& L = K.lineality_basis;
    Mat M(spec.m, spec.n + L.cols());
    M.leftCols(spec.n) = J;
    if (L.cols() > 0) M.rightCols(L.cols()) = L;
    Eigen::JacobiSVD<Mat> svd(M);
    const double smin = svd.singularValues().size() >= spec.m
                            ? svd.singularValues()[spec.m - 1]
                            : 0.0;
    const double band_eff = opt.band * (1.0 + J.norm());
    std::ostringstream os;
    os << "sigma_min of [JF | lin K], rank target " << spec.m;
    if (smin <= 1e-11 * (1.0 + M.norm())) {
        os << "; rank deficiency certain at machine precision (sigma_m = " << smin << ")";
        return detail::verdict_from_margin(-10.0 * band_eff, band_eff, os.str());
    }
    return detail::verdict_from_margin(smin, band_eff, os.str());
}

/// Second-order qualification condition. For the catalog (all C2-cone
/// reducible) the verdict reduces to constraint nondegeneracy; a sampled
/// kernel cross-check is recorded in the detail field.
inline ConditionVerdict check_soqc(const ProblemSpec& spec, const Vec& x, const Vec& u,
                                   const CheckOptions& opt = {}) {
    ConditionVerdict v = check_nondegeneracy(spec, x, u, opt);
    const Vec y = spec.F_value(x);
    Mat Jt = spec.F_jacobian(x).transpose();
    int bad = 0;
    for (int s = 0; s < 32; ++s) {
        Mat U = prox_jacobian_sample(spec.g, y + u, Rng::derive(opt.seed, 7000 + s));
        Mat S(spec.n + spec.m, spec.m);
        S.topRows(spec.n) = Jt;
        S.bottomRows(spec.m) = U;
        if (smallest_singular_value(S) <= 1e-8 * (1.0 + S.norm())) ++bad;
    }
    std::ostringstream os;
    os << "reduced to nondegeneracy; kernel cross-check: " << bad << "/32 degenerate samples";
    if (bad > 0 && v.status == Status::holds)
        os << " (internal inconsistency: nondegeneracy holds but a sampled kernel meets "
              "ker JF^T)";
    v.detail = os.str();
    return v;
}

namespace detail {

/// Minimum of q(d) = <Hxx L d, d> + Gamma(JF d) over unit critical directions,
/// by projected sampling plus local refinement. Returns +cap when the cone is
/// trivial, nullopt when sampling produced no feasible direction.
inline std::optional<double> min_curvature_over_cone(const ProblemSpec& spec, const Vec& x,
                                                     const Vec& u, const CheckOptions& opt) {
    CriticalCone cone = critical_cone(spec, x, u, opt.kkt_tol);
    const int k = static_cast<int>(cone.basis.cols());
    if (k == 0) return kMarginCap;
    const Vec y = spec.F_value(x);
    Mat J = spec.F_jacobian(x);
    Mat H = lagrangian_hessian(spec, x, u);
    Mat W = prox_jacobian_basic(spec.g, y + u);
    Mat Wp = pinv_psd(W, kRangeTol);
    Mat Hq = cone.basis.transpose() *
                 (H + J.transpose() * (Wp - Mat::Identity(spec.m, spec.m)) * J) * cone.basis;
    Hq = Mat(0.5 * (Hq + Hq.transpose().eval()));
    ConeDescription K = critical_set(spec.g, y, u);
    Mat JB = J * cone.basis;

    auto feasible = [&](const Vec& c) { return K.membership(JB * c, 1e-8); };
    auto value = [&](const Vec& c) { return c.dot(Hq * c) / c.squaredNorm(); };

    Rng rng(Rng::derive(opt.seed, 0x50ccULL));
    double best = kInf;
    Vec cbest;
    auto consider = [&](Vec c) {
        const double nc = c.norm();
        if (nc <= 1e-10) return;
        c /= nc;
        if (!feasible(c)) return;
        const double q = value(c);
        if (q < best) {
            best = q;
            cbest = c;
        }
    };
    for (int s = 0; s < opt.sosc_starts; ++s) {
        Vec c = rng.gaussian_vec(k);
        consider(c);
        if (K.projector) {
            // push the image onto the cone, then return to the subspace
            Vec w = (*K.projector)(JB * c);
            Vec cproj = JB.colPivHouseholderQr().solve(w);
            consider(cproj);
        }
    }
    // eigvector starts: the unconstrained minimizer often lies near the cone
    {
        Vec lam;
        Mat V;
        sym_eig(Hq, lam, V);
        for (int i = 0; i < std::min<int>(3, k); ++i) {
            consider(V.col(i));
            consider(Vec(-V.col(i)));
            if (K.projector) {
                Vec w = (*K.projector)(JB * V.col(i));
                consider(Vec(JB.colPivHouseholderQr().solve(w)));
                w = (*K.projector)(-JB * V.col(i));
                consider(Vec(JB.colPivHouseholderQr().solve(w)));
            }
        }
    }
    if (best == kInf) return std::nullopt;
    // local refinement around the best direction
    double stepsz = 0.3;
    for (int it = 0; it < 200 && stepsz > 1e-8; ++it) {
        Vec c = cbest + stepsz * rng.gaussian_vec(k);
        const double before = best;
        consider(c);
        if (best >= before) stepsz *= 0.92;
    }
    return best;
}

}  // namespace detail

/// Second-order sufficient condition over the critical cone, with the sup
/// over multipliers sampled when the multiplier set is not a singleton.
inline ConditionVerdict check_sosc(const ProblemSpec& spec, const Vec& x, const Vec& u,
                                   const CheckOptions& opt = {}) {
    detail::require_kkt(spec, x, u, opt.kkt_tol);
    const double scale =
        1.0 + lagrangian_hessian(spec, x, u).norm() + std::pow(spec.F_jacobian(x).norm(), 2);
    const double band_eff = opt.band * scale;
    std::vector<Vec> mults{u};
    ConditionVerdict nd = check_nondegeneracy(spec, x, u, opt);
    bool approx = false;
    if (nd.status != Status::holds) {
        for (const Vec& v : sample_multipliers(spec, x, opt.multiplier_samples, opt.seed))
            if ((v - u).norm() > 1e-8 * (1.0 + u.norm())) mults.push_back(v);
        approx = mults.size() > 1;
    }
    double margin = -kInf;
    bool any = false;
    for (const Vec& um : mults) {
        auto q = detail::min_curvature_over_cone(spec, x, um, opt);
        if (!q) continue;
        any = true;
        margin = std::max(margin, std::min(*q, kMarginCap));
    }
    if (!any) {
        ConditionVerdict v;
        v.status = Status::inconclusive;
        v.detail = "no critical directions sampled";
        return v;
    }
    std::string detail = margin >= kMarginCap
                             ? "empty critical cone; holds vacuously"
                             : "sampled cone minimum";
    if (approx) detail += "; approximate sup over multiplier samples";
    return detail::verdict_from_margin(margin, band_eff, std::move(detail));
}

/// Strong second-order sufficient condition: least eigenvalue of the reduced
/// matrix on the subspace where Gamma is finite.
inline ConditionVerdict check_ssosc(const ProblemSpec& spec, const Vec& x, const Vec& u,
                                    const CheckOptions& opt = {}) {
    detail::require_kkt(spec, x, u, opt.kkt_tol);
    const double scale =
        1.0 + lagrangian_hessian(spec, x, u).norm() + std::pow(spec.F_jacobian(x).norm(), 2);
    const double band_eff = opt.band * scale;
    std::vector<Vec> mults{u};
    ConditionVerdict nd = check_nondegeneracy(spec, x, u, opt);
    bool approx = false;
    if (nd.status != Status::holds) {
        for (const Vec& v : sample_multipliers(spec, x, opt.multiplier_samples, opt.seed))
            if ((v - u).norm() > 1e-8 * (1.0 + u.norm())) mults.push_back(v);
        approx = mults.size() > 1;
    }
    double margin = -kInf;
    for (const Vec& um : mults) {
        auto [B, H] = reduced_ssosc_matrix(spec, x, um, opt.kkt_tol);
        double lmin = kMarginCap;
        if (B.cols() > 0) {
            Vec lam;
            Mat V;
            sym_eig(H, lam, V);
            lmin = lam.minCoeff();
        }
        margin = std::max(margin, std::min(lmin, kMarginCap));
    }
    std::string detail = margin >= kMarginCap ? "empty test subspace; holds vacuously"
                                              : "least eigenvalue of the reduced matrix";
    if (approx) detail += "; approximate sup over multiplier samples";
    return detail::verdict_from_margin(margin, band_eff, std::move(detail));
}

namespace detail {

inline double det_sign(const Mat& E) {
    Eigen::PartialPivLU<Mat> lu(E);
    const double d = lu.determinant();
    return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
}

}  // namespace detail

/// Nonsingularity of the sampled generalized Jacobian of the KKT residual
/// map. Sampling always includes the basic element; determinant sign changes
/// between samples are refined by bisection to locate singular convex
/// combinations in the interior of the hull.
inline ConditionVerdict check_jz_nonsingular(const ProblemSpec& spec, const Vec& x, const Vec& u,
                                             const CheckOptions& opt = {}) {
    detail::require_kkt(spec, x, u, opt.kkt_tol);
    const Vec y = spec.F_value(x);
    const Vec z = y + u;
    std::vector<Mat> samples;
    samples.push_back(prox_jacobian_basic(spec.g, z));
    for (int s = 0; s < opt.jz_samples; ++s)
        samples.push_back(prox_jacobian_sample(spec.g, z, Rng::derive(opt.seed, 9000 + s)));

    double margin = kInf;
    double escale = 0.0;
    std::vector<double> signs;
    for (const Mat& U : samples) {
        Mat E = jz_element(spec, x, u, U);
        escale = std::max(escale, E.norm());
        margin = std::min(margin, smallest_singular_value(E));
        signs.push_back(detail::det_sign(E));
    }
    // determinant sign changes expose singular elements strictly inside the
    // hull; bisect along the connecting segments
    int refinements = 0;
    for (size_t i = 0; i < samples.size() && refinements < 8; ++i) {
        for (size_t j = i + 1; j < samples.size() && refinements < 8; ++j) {
            if (signs[i] == 0.0 || signs[j] == 0.0 || signs[i] == signs[j]) continue;
            double lo = 0.0, hi = 1.0;
            double slo = signs[i];
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                Mat U = (1.0 - mid) * samples[i] + mid * samples[j];
                const double sm = detail::det_sign(jz_element(spec, x, u, U));
                if (sm == slo) lo = mid;
                else hi = mid;
            }
            Mat U = (1.0 - 0.5 * (lo + hi)) * samples[i] + 0.5 * (lo + hi) * samples[j];
            margin = std::min(margin, smallest_singular_value(jz_element(spec, x, u, U)));
            ++refinements;
        }
    }
    const double band_eff = opt.band * (1.0 + escale);
    std::ostringstream os;
    os << "min sigma_min over " << samples.size() << " sampled elements";
    if (refinements > 0) os << " plus " << refinements << " sign-change bisections";
    ConditionVerdict v = detail::verdict_from_margin(margin, band_eff, os.str());
    if (refinements > 0 && margin <= band_eff) v.status = Status::fails;
    return v;
}

// ---------------------------------------------------------------------------
// Aggregate certificate
// ---------------------------------------------------------------------------

struct Certificate {
    ConditionVerdict rcq, srcq, nondegeneracy, soqc, sosc, ssosc, jz_nonsingular;
    /// implication checks: "pass" / "fail" / "skipped"
    std::map<std::string, std::string> consistency;
    bool multiplier_unique = false;
};

inline Certificate certify(const ProblemSpec& spec, const Vec& x, const Vec& u,
                           const CheckOptions& opt = {}) {
    detail::require_kkt(spec, x, u, opt.kkt_tol);
    Certificate cert;
    cert.rcq = check_rcq(spec, x, opt);
    cert.nondegeneracy = check_nondegeneracy(spec, x, u, opt);
    cert.soqc = check_soqc(spec, x, u, opt);
    cert.srcq = check_srcq(spec, x, u, opt);
    cert.sosc = check_sosc(spec, x, u, opt);
    cert.ssosc = check_ssosc(spec, x, u, opt);
    cert.jz_nonsingular = check_jz_nonsingular(spec, x, u, opt);
    cert.multiplier_unique = cert.nondegeneracy.status == Status::holds ||
                             cert.srcq.status == Status::holds;

    auto conclusive = [](const ConditionVerdict& v) { return v.status != Status::inconclusive; };
    auto held = [](const ConditionVerdict& v) { return v.status == Status::holds; };

    // nondegeneracy <=> SOQC for the catalog
    if (conclusive(cert.nondegeneracy) && conclusive(cert.soqc))
        cert.consistency["nondegeneracy_iff_soqc"] =
            (held(cert.nondegeneracy) == held(cert.soqc)) ? "pass" : "fail";
    else
        cert.consistency["nondegeneracy_iff_soqc"] = "skipped";

    // (SOQC and SSOSC) <=> all sampled generalized-Jacobian elements nonsingular
    if (conclusive(cert.soqc) && conclusive(cert.ssosc) && conclusive(cert.jz_nonsingular)) {
        const bool lhs = held(cert.soqc) && held(cert.ssosc);
        cert.consistency["soqc_ssosc_iff_jz"] =
            (lhs == held(cert.jz_nonsingular)) ? "pass" : "fail";
    } else {
        cert.consistency["soqc_ssosc_iff_jz"] = "skipped";
    }

    // strong regularity implies isolated calmness: SRCQ and SOSC expected
    // whenever SOQC and SSOSC hold
    if (conclusive(cert.soqc) && conclusive(cert.ssosc) && held(cert.soqc) &&
        held(cert.ssosc)) {
        if (conclusive(cert.srcq) && conclusive(cert.sosc))
            cert.consistency["strong_implies_isolated"] =
                (held(cert.srcq) && held(cert.sosc)) ? "pass" : "fail";
        else
            cert.consistency["strong_implies_isolated"] = "skipped";
    } else {
        cert.consistency["strong_implies_isolated"] = "skipped";
    }
    return cert;
}

inline bool consistency_violated(const Certificate& cert) {
    for (const auto& [k, v] : cert.consistency)
        if (v == "fail") return true;
    return false;
}

}  // namespace stabilis
