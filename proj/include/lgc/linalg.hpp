// linalg.hpp: dense complex helpers shared by every module.
//
// Exponentials of skew-Hermitian matrices are always taken through a
// Hermitian eigendecomposition so that propagators stay unitary to machine
// precision.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace lgc {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

inline constexpr cplx kI{0.0, 1.0};
inline constexpr double kPi = 3.14159265358979323846;

// Errors raised for malformed inputs or violated preconditions (CLI exit 2).
class input_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Errors raised when a computation cannot reach a decision (CLI exit 1).
class computation_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Largest singular value.
inline double op_norm(const Mat& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(0);
}

inline double skew_defect(const Mat& m) {
    if (m.size() == 0) return 0.0;
    return (m + m.adjoint()).cwiseAbs().maxCoeff();
}

inline double hermitian_defect(const Mat& m) {
    if (m.size() == 0) return 0.0;
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

// ||P^† P - I|| for square or tall (isometry) matrices.
inline double unitarity_defect(const Mat& p) {
    const Mat g = p.adjoint() * p - Mat::Identity(p.cols(), p.cols());
    return op_norm(g);
}

inline Mat commutator(const Mat& x, const Mat& y) {
    if (x.rows() != x.cols() || y.rows() != y.cols() || x.rows() != y.rows()) {
        throw input_error("commutator: shape mismatch");
    }
    return x * y - y * x;
}

// Spectral factorization of a Hermitian H, reused for exp(-i t H) at many t.
class HermitianExp {
public:
    HermitianExp() = default;

    explicit HermitianExp(const Mat& h) {
        Eigen::SelfAdjointEigenSolver<Mat> solver(h);
        if (solver.info() != Eigen::Success) {
            throw computation_error("HermitianExp: eigendecomposition failed");
        }
        energies_ = solver.eigenvalues();
        basis_ = solver.eigenvectors();
        basis_adj_ = basis_.adjoint();
    }

    Eigen::Index dim() const noexcept { return energies_.size(); }
    const RVec& energies() const noexcept { return energies_; }

    Vec phases(double t) const {
        Vec p(energies_.size());
        for (Eigen::Index k = 0; k < energies_.size(); ++k) {
            p(k) = std::polar(1.0, -energies_(k) * t);
        }
        return p;
    }

    // exp(-i t H)
    Mat matrix(double t) const { return basis_ * phases(t).asDiagonal() * basis_adj_; }

    // psi <- exp(-i t H) psi   (psi may be a vector or a block of columns)
    template <class Derived>
    void apply(double t, Eigen::MatrixBase<Derived>& psi) const {
        const Vec p = phases(t);
        Mat tmp = basis_adj_ * psi;
        tmp = p.asDiagonal() * tmp;
        psi = basis_ * tmp;
    }

private:
    RVec energies_;
    Mat basis_;
    Mat basis_adj_;
};

// exp(K) for skew-Hermitian K, via exp(-i * (iK)).
inline Mat expm_skew(const Mat& k) {
    if (k.size() == 0) return k;
    const Mat h = kI * k;
    const Mat herm = 0.5 * (h + h.adjoint());
    return HermitianExp(herm).matrix(1.0);
}

// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace lgc
