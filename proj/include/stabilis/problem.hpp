#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "stabilis/catalog.hpp"

namespace stabilis {

// ---------------------------------------------------------------------------
// Composite problem  min_x  h(x) + g(F(x))
//
// h is a quadratic form, F an affine or quadratic map; library callers may
// also supply custom smooth evaluators with the same contract. Matrix-valued
// images are flattened by the catalog encoding (svec for symmetric, column-
// major vec for general matrices).
// ---------------------------------------------------------------------------

struct QuadraticForm {
    Mat Q;  ///< symmetric n x n
    Vec c;  ///< n

    double value(const Vec& x) const { return 0.5 * x.dot(Q * x) + c.dot(x); }
    Vec grad(const Vec& x) const { return Q * x + c; }
};

/// Smooth map F : R^n -> R^m. Affine when the quadratic tensors are empty;
/// otherwise F_i(x) = 1/2 x^T P_i x + (A x + f0)_i.
struct SmoothMap {
    Mat A;                ///< m x n
    Vec f0;               ///< m
    std::vector<Mat> P;   ///< optional m tensors, each n x n symmetric

    bool affine() const { return P.empty(); }

    Vec value(const Vec& x) const {
        Vec y = A * x + f0;
        for (size_t i = 0; i < P.size(); ++i) y[static_cast<int>(i)] += 0.5 * x.dot(P[i] * x);
        return y;
    }
    Mat jacobian(const Vec& x) const {
        Mat J = A;
        for (size_t i = 0; i < P.size(); ++i) J.row(static_cast<int>(i)) += (P[i] * x).transpose();
        return J;
    }
    /// Sum_i u_i * Hess F_i, the curvature contribution to the Lagrangian.
    Mat hessian_weighted(const Vec& u) const {
        Mat H = Mat::Zero(A.cols(), A.cols());
        for (size_t i = 0; i < P.size(); ++i) H += u[static_cast<int>(i)] * P[i];
        return H;
    }
};

/// Optional caller-supplied smooth evaluators (same contract as the builtin
/// quadratic/affine data).
struct CustomSmooth {
    std::function<double(const Vec&)> h_value;
    std::function<Vec(const Vec&)> h_grad;
    std::function<Mat(const Vec&)> h_hess;
    std::function<Vec(const Vec&)> F_value;
    std::function<Mat(const Vec&)> F_jacobian;
    std::function<Mat(const Vec&, const Vec&)> F_hessian_weighted;
};

struct ProblemSpec {
    int n = 0;
    int m = 0;
    QuadraticForm h;
    SmoothMap F;
    CatalogFunction g;
    std::optional<CustomSmooth> custom;

    Vec F_value(const Vec& x) const { return custom ? custom->F_value(x) : F.value(x); }
    Mat F_jacobian(const Vec& x) const { return custom ? custom->F_jacobian(x) : F.jacobian(x); }
    double h_value(const Vec& x) const { return custom ? custom->h_value(x) : h.value(x); }
    Vec h_grad(const Vec& x) const { return custom ? custom->h_grad(x) : h.grad(x); }
    Mat h_hess(const Vec& x) const { return custom ? custom->h_hess(x) : h.Q; }
};

struct PrimalDualPair {
    Vec x;
    Vec u;
    double residual_norm = 0.0;
};

/// Canonical perturbation of the KKT system: tilt a and image shift b.
struct Perturbation {
    Vec a;
    Vec b;

    static Perturbation zero(int n, int m) { return {Vec::Zero(n), Vec::Zero(m)}; }
    double norm() const { return std::sqrt(a.squaredNorm() + b.squaredNorm()); }
};

/// Raw input prior to validation, as parsed from a file or built in code.
struct ProblemSpecInput {
    int n = 0;
    QuadraticForm h;
    SmoothMap F;
    CatalogFunction g;
    std::optional<CustomSmooth> custom;
};

/// Validates dimensions and symmetry and returns the assembled problem.
inline ProblemSpec assemble_problem(const ProblemSpecInput& raw) {
    ProblemSpec spec;
    spec.n = raw.n;
    spec.g = raw.g;
    spec.g.validate();
    spec.m = spec.g.dim();
    spec.h = raw.h;
    spec.F = raw.F;
    spec.custom = raw.custom;
    if (raw.n < 1) throw ValidationError("n must be positive");
    if (spec.h.Q.rows() != raw.n || spec.h.Q.cols() != raw.n)
        throw DimensionMismatch("h.Q must be n x n");
    if (spec.h.c.size() != raw.n) throw DimensionMismatch("h.c must have length n");
    if ((spec.h.Q - spec.h.Q.transpose()).cwiseAbs().maxCoeff() >
        1e-12 * (1.0 + spec.h.Q.cwiseAbs().maxCoeff()))
        throw AsymmetricQ("h.Q is not symmetric");
    spec.h.Q = Mat(0.5 * (spec.h.Q + spec.h.Q.transpose().eval()));
    if (!raw.custom) {
        if (spec.F.A.rows() != spec.m || spec.F.A.cols() != spec.n)
            throw DimensionMismatch("F.A must be m x n with m matching g");
        if (spec.F.f0.size() != spec.m) throw DimensionMismatch("F.f0 must have length m");
        if (!spec.F.P.empty() && static_cast<int>(spec.F.P.size()) != spec.m)
            throw DimensionMismatch("F.P must supply one tensor per image component");
        for (auto& Pi : spec.F.P) {
            if (Pi.rows() != spec.n || Pi.cols() != spec.n)
                throw DimensionMismatch("F.P tensors must be n x n");
            Pi = Mat(0.5 * (Pi + Pi.transpose().eval()));  // second derivatives
        }
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Lagrangian L(x,u) = h(x) + <u, F(x)>
// ---------------------------------------------------------------------------

inline Vec lagrangian_grad(const ProblemSpec& spec, const Vec& x, const Vec& u) {
    if (x.size() != spec.n || u.size() != spec.m)
        throw DimensionMismatch("lagrangian_grad: wrong dimensions");
    return spec.h_grad(x) + spec.F_jacobian(x).transpose() * u;
}

inline Mat lagrangian_hessian(const ProblemSpec& spec, const Vec& x, const Vec& u) {
    if (x.size() != spec.n || u.size() != spec.m)
        throw DimensionMismatch("lagrangian_hessian: wrong dimensions");
    Mat H = spec.custom ? spec.custom->F_hessian_weighted(x, u) : spec.F.hessian_weighted(u);
    H += spec.h_hess(x);
    return 0.5 * (H + H.transpose());
}

inline double lagrangian_value(const ProblemSpec& spec, const Vec& x, const Vec& u) {
    return spec.h_value(x) + u.dot(spec.F_value(x));
}

/// h(x) + g(F(x)); +infinity when F(x) is outside dom g.
inline double objective_value(const ProblemSpec& spec, const Vec& x) {
    const Vec y = spec.F_value(x);
    const double gv = catalog_value(spec.g, y);
    return gv == kInf ? kInf : spec.h_value(x) + gv;
}

}  // namespace stabilis
