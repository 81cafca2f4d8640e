#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace stabilis {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};
struct DimensionMismatch : Error { using Error::Error; };
struct UnknownCatalogKind : Error { using Error::Error; };
struct AsymmetricQ : Error { using Error::Error; };
struct DomainViolation : Error { using Error::Error; };
struct NotASubgradient : Error { using Error::Error; };
struct NotKKT : Error { using Error::Error; };
struct NotCaseThree : Error { using Error::Error; };
struct SpectralDecompositionFailure : Error { using Error::Error; };
struct NoMultiplierFound : Error { using Error::Error; };
struct LinearSolveFailure : Error { using Error::Error; };
struct SolveFailuresExceeded : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Symmetric-matrix encoding. svec stacks the lower triangle column by column
// with off-diagonal entries scaled by sqrt(2), so that <svec(A),svec(B)> equals
// the Frobenius inner product <A,B> exactly.
// ---------------------------------------------------------------------------

inline int svec_dim(int p) { return p * (p + 1) / 2; }

inline Vec svec(const Mat& A) {
    const int p = static_cast<int>(A.rows());
    if (A.cols() != p) throw DimensionMismatch("svec: matrix must be square");
    const double rt2 = std::sqrt(2.0);
    Vec v(svec_dim(p));
    int k = 0;
    for (int j = 0; j < p; ++j) {
        v[k++] = A(j, j);
        for (int i = j + 1; i < p; ++i) v[k++] = rt2 * 0.5 * (A(i, j) + A(j, i));
    }
    return v;
}

inline Mat smat(const Vec& v) {
    // Invert p(p+1)/2 = len.
    const int len = static_cast<int>(v.size());
    const int p = static_cast<int>(std::round((std::sqrt(8.0 * len + 1.0) - 1.0) / 2.0));
    if (svec_dim(p) != len) throw DimensionMismatch("smat: length is not a triangular number");
    const double irt2 = 1.0 / std::sqrt(2.0);
    Mat A(p, p);
    int k = 0;
    for (int j = 0; j < p; ++j) {
        A(j, j) = v[k++];
        for (int i = j + 1; i < p; ++i) {
            A(i, j) = irt2 * v[k];
            A(j, i) = irt2 * v[k];
            ++k;
        }
    }
    return A;
}

/// Column-major flattening of a general p-by-q matrix.
inline Vec mat_vec(const Mat& A) {
    return Eigen::Map<const Vec>(A.data(), A.size());
}

inline Mat vec_mat(const Vec& v, int p, int q) {
    if (static_cast<int>(v.size()) != p * q)
        throw DimensionMismatch("vec_mat: length does not match shape");
    return Eigen::Map<const Mat>(v.data(), p, q);
}

// ---------------------------------------------------------------------------
// Dense kernels
// ---------------------------------------------------------------------------

/// Orthonormal basis of the nullspace of A (columns), singular values below
/// tol * sigma_max are treated as zero.
inline Mat nullspace(const Mat& A, double tol = 1e-10) {
    if (A.rows() == 0) return Mat::Identity(A.cols(), A.cols());
    Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const double cutoff = tol * (s.size() > 0 ? s[0] : 0.0);
    int rank = 0;
    for (int i = 0; i < s.size(); ++i)
        if (s[i] > cutoff) ++rank;
    return svd.matrixV().rightCols(A.cols() - rank);
}

inline int numeric_rank(const Mat& A, double tol = 1e-10) {
    if (A.size() == 0) return 0;
    Eigen::JacobiSVD<Mat> svd(A);
    const auto& s = svd.singularValues();
    const double cutoff = tol * s[0];
    int rank = 0;
    for (int i = 0; i < s.size(); ++i)
        if (s[i] > cutoff) ++rank;
    return rank;
}

inline double smallest_singular_value(const Mat& A) {
    if (A.size() == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(A);
    return svd.singularValues().minCoeff();
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
inline void sym_eig(const Mat& W, Vec& evals, Mat& evecs) {
    if (W.rows() == 0) {
        evals = Vec(0);
        evecs = Mat(0, 0);
        return;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(W);
    if (es.info() != Eigen::Success)
        throw SpectralDecompositionFailure("symmetric eigendecomposition failed");
    evals = es.eigenvalues();
    evecs = es.eigenvectors();
}

/// Moore-Penrose inverse of a symmetric PSD matrix computed on the retained
/// eigenspace only; eigenvalues below rel_cutoff * lambda_max are dropped.
inline Mat pinv_psd(const Mat& W, double rel_cutoff = 1e-8, int* rank_out = nullptr) {
    Vec lam; Mat Q;
    sym_eig(W, lam, Q);
    const double lmax = lam.size() > 0 ? std::max(lam.maxCoeff(), 0.0) : 0.0;
    const double cutoff = rel_cutoff * std::max(lmax, 1e-300);
    Mat P = Mat::Zero(W.rows(), W.cols());
    int rank = 0;
    for (int i = 0; i < lam.size(); ++i) {
        if (lam[i] > cutoff) {
            P += Q.col(i) * Q.col(i).transpose() / lam[i];
            ++rank;
        }
    }
    if (rank_out) *rank_out = rank;
    return P;
}

/// Orthogonal projector onto the range of a symmetric PSD matrix.
inline Mat range_projector_psd(const Mat& W, double rel_cutoff = 1e-8) {
    Vec lam; Mat Q;
    sym_eig(W, lam, Q);
    const double lmax = lam.size() > 0 ? std::max(lam.maxCoeff(), 0.0) : 0.0;
    const double cutoff = rel_cutoff * std::max(lmax, 1e-300);
    Mat P = Mat::Zero(W.rows(), W.cols());
    for (int i = 0; i < lam.size(); ++i)
        if (lam[i] > cutoff) P += Q.col(i) * Q.col(i).transpose();
    return P;
}

/// Orthonormalize the columns of A, dropping near-dependent ones.
inline Mat orthonormal_columns(const Mat& A, double tol = 1e-10) {
    if (A.cols() == 0) return A;
    Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU);
    const auto& s = svd.singularValues();
    const double cutoff = tol * (s.size() > 0 ? std::max(s[0], 1e-300) : 0.0);
    int rank = 0;
    for (int i = 0; i < s.size(); ++i)
        if (s[i] > cutoff) ++rank;
    return svd.matrixU().leftCols(rank);
}

// ---------------------------------------------------------------------------
// Deterministic RNG. Wraps splitmix64 so streams are reproducible across
// platforms and standard-library versions.
// ---------------------------------------------------------------------------

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ULL) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }

    double gaussian() {
        // Box-Muller on cached pairs.
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * M_PI * u2;
        cached_ = r * std::sin(th);
        have_cached_ = true;
        return r * std::cos(th);
    }

    Vec gaussian_vec(int n) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v[i] = gaussian();
        return v;
    }

    Mat gaussian_mat(int r, int c) {
        Mat A(r, c);
        for (int j = 0; j < c; ++j)
            for (int i = 0; i < r; ++i) A(i, j) = gaussian();
        return A;
    }

    /// Haar-ish random orthogonal matrix via QR of a Gaussian matrix.
    Mat orthogonal(int n) {
        Mat A = gaussian_mat(n, n);
        Eigen::HouseholderQR<Mat> qr(A);
        Mat Q = qr.householderQ();
        Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
        for (int i = 0; i < n; ++i)
            if (R(i, i) < 0) Q.col(i) *= -1.0;
        return Q;
    }

    /// Derives an independent stream for sample index i.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t z = seed ^ (0x9e3779b97f4a7c15ULL + index * 0xbf58476d1ce4e5b9ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

  private:
    std::uint64_t state_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace stabilis
