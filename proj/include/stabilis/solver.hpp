#pragma once

#include <utility>
#include <vector>

#include "stabilis/problem.hpp"
#include "stabilis/second_order.hpp"

namespace stabilis {

// ---------------------------------------------------------------------------
// KKT residual map
//   Z(x,u) = ( grad_x L(x,u) - a,  Prox_g(F(x)+b+u) - (F(x)+b) )
// and its damped semismooth Newton solver. The second block equals
// u - Prox_{g*}(F(x)+b+u) through the Moreau identity, so only Prox_g and its
// Jacobians are ever needed.
// ---------------------------------------------------------------------------

struct SolverParams {
    double tol = 1e-10;
    int max_iter = 100;
    double armijo_c = 1e-4;
    int step_halving_max = 30;
    double jacobian_regularization = 0.0;
};

struct SolveTrace {
    std::vector<std::pair<double, double>> iterates;  ///< (residual norm, step length)
    bool converged = false;
    double superlinear_ratio = 0.0;  ///< last contraction ratio ||Z_{k+1}||/||Z_k||
    std::vector<double> last_ratios;
    bool singular_jacobian_seen = false;
};

inline Vec residual_Z(const ProblemSpec& spec, const Vec& x, const Vec& u) {
    if (x.size() != spec.n || u.size() != spec.m)
        throw DimensionMismatch("residual_Z: wrong dimensions");
    Vec out(spec.n + spec.m);
    out.head(spec.n) = lagrangian_grad(spec, x, u);
    const Vec y = spec.F_value(x);
    out.tail(spec.m) = prox(spec.g, y + u, 1.0) - y;
    return out;
}

/// Residual of the canonically perturbed system: tilt a, image shift b.
inline Vec residual_Z(const ProblemSpec& spec, const Vec& x, const Vec& u,
                      const Perturbation& pert) {
    Vec out(spec.n + spec.m);
    out.head(spec.n) = lagrangian_grad(spec, x, u) - pert.a;
    const Vec yb = spec.F_value(x) + pert.b;
    out.tail(spec.m) = prox(spec.g, yb + u, 1.0) - yb;
    return out;
}

/// The generalized-Jacobian element of Z induced by U in JProx_g(F(x)+u):
///   E(U) = [ Hxx L, JF^T ; (U-I) JF, U ].
inline Mat jz_element(const ProblemSpec& spec, const Vec& x, const Vec& u, const Mat& U) {
    const int n = spec.n, m = spec.m;
    Mat E(n + m, n + m);
    Mat J = spec.F_jacobian(x);
    E.topLeftCorner(n, n) = lagrangian_hessian(spec, x, u);
    E.topRightCorner(n, m) = J.transpose();
    E.bottomLeftCorner(m, n) = (U - Mat::Identity(m, m)) * J;
    E.bottomRightCorner(m, m) = U;
    return E;
}

/// Damped semismooth Newton on Z with the basic Jacobian element per
/// iteration, ridge fallback near singular elements, and Armijo backtracking
/// on the squared residual.
inline std::pair<PrimalDualPair, SolveTrace> solve_kkt(const ProblemSpec& spec,
                                                       const PrimalDualPair& start,
                                                       const SolverParams& params = {},
                                                       const Perturbation* pert = nullptr) {
    const int n = spec.n, m = spec.m;
    Perturbation p0 = pert ? *pert : Perturbation::zero(n, m);
    Vec x = start.x.size() == n ? start.x : Vec::Zero(n);
    Vec u = start.u.size() == m ? start.u : Vec::Zero(m);
    SolveTrace trace;
    Vec Zv = residual_Z(spec, x, u, p0);
    double rnorm = Zv.norm();
    trace.iterates.emplace_back(rnorm, 0.0);

    for (int iter = 0; iter < params.max_iter; ++iter) {
        if (rnorm <= params.tol) break;
        const Vec yb = spec.F_value(x) + p0.b;
        Mat U = prox_jacobian_basic(spec.g, yb + u);
        Mat E = jz_element(spec, x, u, U);
        if (params.jacobian_regularization > 0)
            E.diagonal().array() += params.jacobian_regularization;
        // ridge fallback when the element is near singular
        Vec step;
        bool solved = false;
        for (double ridge : {0.0, 1e-10, 1e-8}) {
            Mat Er = E;
            if (ridge > 0) {
                Er.diagonal().array() += ridge;
                trace.singular_jacobian_seen = true;
            }
            Eigen::PartialPivLU<Mat> lu(Er);
            step = lu.solve(-Zv);
            if (step.allFinite() && (Er * step + Zv).norm() <= 1e-6 * (1.0 + rnorm)) {
                if (ridge == 0.0 && smallest_singular_value(E) < 1e-12 * E.norm()) {
                    trace.singular_jacobian_seen = true;
                    continue;
                }
                solved = true;
                break;
            }
        }
        if (!solved) throw LinearSolveFailure("newton step failed after regularization");

        // Armijo on the squared residual merit
        const double merit0 = 0.5 * rnorm * rnorm;
        double alpha = 1.0;
        Vec xn, un, Zn;
        double rn = rnorm;
        bool accepted = false;
        for (int h = 0; h <= params.step_halving_max; ++h) {
            xn = x + alpha * step.head(n);
            un = u + alpha * step.tail(m);
            Zn = residual_Z(spec, xn, un, p0);
            rn = Zn.norm();
            if (0.5 * rn * rn <= merit0 * (1.0 - 2.0 * params.armijo_c * alpha)) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            trace.iterates.emplace_back(rnorm, 0.0);
            break;  // stalled; report best iterate
        }
        x = xn;
        u = un;
        Zv = Zn;
        rnorm = rn;
        trace.iterates.emplace_back(rnorm, alpha);
    }

    trace.converged = rnorm <= params.tol;
    // contraction ratios of the last steps
    const int T = static_cast<int>(trace.iterates.size());
    for (int k = std::max(1, T - 3); k < T; ++k) {
        const double prev = trace.iterates[k - 1].first;
        if (prev > 0) trace.last_ratios.push_back(trace.iterates[k].first / prev);
    }
    trace.superlinear_ratio = trace.last_ratios.empty() ? 0.0 : trace.last_ratios.back();

    PrimalDualPair out{x, u, rnorm};
    return {out, trace};
}

/// Least-norm multiplier at an approximately stationary x: minimizes the
/// stationarity residual under the prox fixed-point constraint through an
/// increasing penalty schedule, Gauss-Newton in u.
inline Vec recover_multiplier(const ProblemSpec& spec, const Vec& x, double tol = 1e-8) {
    const int m = spec.m;
    const Vec y = spec.F_value(x);
    const Mat Jt = spec.F_jacobian(x).transpose();
    const Vec gh = spec.h_grad(x);
    Vec u = Vec::Zero(m);
    for (double rho : {1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8}) {
        for (int it = 0; it < 60; ++it) {
            // residuals: stationarity, prox fixed point, least-norm tie-break
            Vec r1 = gh + Jt * u;
            Vec r2 = y - prox(spec.g, y + u, 1.0);
            Mat U = prox_jacobian_basic(spec.g, y + u);
            const double lam = 1e-8;
            Mat A(spec.n + m + m, m);
            A.topRows(spec.n) = Jt;
            A.middleRows(spec.n, m) = -std::sqrt(rho) * U;
            A.bottomRows(m) = std::sqrt(lam) * Mat::Identity(m, m);
            Vec b(spec.n + m + m);
            b.head(spec.n) = -r1;
            b.segment(spec.n, m) = -std::sqrt(rho) * r2;
            b.tail(m) = -std::sqrt(lam) * u;
            Vec du = A.colPivHouseholderQr().solve(b);
            if (!du.allFinite()) break;
            u += du;
            if (du.norm() <= 1e-12 * (1.0 + u.norm())) break;
        }
        if ((gh + Jt * u).norm() <= tol * (1.0 + gh.norm()) &&
            subdifferential_contains(spec.g, y, u, tol))
            return u;
    }
    if ((gh + Jt * u).norm() <= tol * (1.0 + gh.norm()) &&
        subdifferential_contains(spec.g, y, u, tol))
        return u;
    throw NoMultiplierFound("recover_multiplier: stationarity residual above tolerance");
}

/// Samples of the multiplier set at x (least-norm element plus extreme-ish
/// points found by tilted penalized least squares); used when the multiplier
/// is not unique.
inline std::vector<Vec> sample_multipliers(const ProblemSpec& spec, const Vec& x, int count,
                                           std::uint64_t seed, double tol = 1e-7) {
    std::vector<Vec> out;
    const Vec y = spec.F_value(x);
    const Mat Jt = spec.F_jacobian(x).transpose();
    const Vec gh = spec.h_grad(x);
    Vec u0;
    try {
        u0 = recover_multiplier(spec, x, tol);
    } catch (const NoMultiplierFound&) {
        return out;
    }
    out.push_back(u0);
    Rng rng(Rng::derive(seed, 0x717171ULL));
    const int msz = spec.m;
    for (int k = 0; k < count; ++k) {
        // push toward an extreme point along a random tilt, then restore
        // feasibility with penalized least squares
        Vec tilt = rng.gaussian_vec(msz);
        Vec u = u0;
        for (double rho : {1e4, 1e6, 1e8}) {
            for (int it = 0; it < 40; ++it) {
                Vec r1 = gh + Jt * u;
                Vec r2 = y - prox(spec.g, y + u, 1.0);
                Mat U = prox_jacobian_basic(spec.g, y + u);
                const double lam = 1e-6;
                Mat A(spec.n + msz + msz, msz);
                A.topRows(spec.n) = std::sqrt(rho) * Jt;
                A.middleRows(spec.n, msz) = -std::sqrt(rho) * U;
                A.bottomRows(msz) = std::sqrt(lam) * Mat::Identity(msz, msz);
                Vec b(spec.n + msz + msz);
                b.head(spec.n) = -std::sqrt(rho) * r1;
                b.segment(spec.n, msz) = -std::sqrt(rho) * r2;
                b.tail(msz) = std::sqrt(lam) * tilt;  // pull along the tilt
                Vec du = A.colPivHouseholderQr().solve(b);
                if (!du.allFinite()) break;
                u += du;
                if (du.norm() <= 1e-12 * (1.0 + u.norm())) break;
            }
        }
        if ((gh + Jt * u).norm() <= tol * (1.0 + gh.norm()) &&
            subdifferential_contains(spec.g, y, u, tol)) {
            bool fresh = true;
            for (const Vec& v : out)
                if ((v - u).norm() <= 1e-6 * (1.0 + u.norm())) fresh = false;
            if (fresh) out.push_back(u);
        }
    }
    return out;
}

}  // namespace stabilis
