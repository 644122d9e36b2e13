#pragma once

/// \file hermitian.hpp
/// \brief Dense complex matrices, Kronecker products and a cyclic Jacobi
/// eigensolver for the small Hermitian operators (dim <= 81) met in
/// three-nitrogen V_B spin systems.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "vbodmr/common.hpp"

namespace vbodmr {

using cplx = std::complex<double>;

/// Row-major dense complex square matrix.
class CMatrix {
public:
    CMatrix() = default;
    explicit CMatrix(std::size_t dim) : dim_(dim), data_(dim * dim) {}

    static CMatrix identity(std::size_t dim) {
        CMatrix m(dim);
        for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t dim() const { return dim_; }
    cplx& operator()(std::size_t r, std::size_t c) { return data_[r * dim_ + c]; }
    const cplx& operator()(std::size_t r, std::size_t c) const { return data_[r * dim_ + c]; }

    CMatrix& operator+=(const CMatrix& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    CMatrix& operator-=(const CMatrix& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    CMatrix& operator*=(cplx s) {
        for (auto& v : data_) v *= s;
        return *this;
    }
    friend CMatrix operator+(CMatrix a, const CMatrix& b) { return a += b; }
    friend CMatrix operator-(CMatrix a, const CMatrix& b) { return a -= b; }
    friend CMatrix operator*(CMatrix a, cplx s) { return a *= s; }
    friend CMatrix operator*(cplx s, CMatrix a) { return a *= s; }

    friend CMatrix operator*(const CMatrix& a, const CMatrix& b) {
        a.check_same(b);
        const std::size_t n = a.dim_;
        CMatrix out(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k) {
                const cplx aik = a(i, k);
                if (aik == cplx{}) continue;
                for (std::size_t j = 0; j < n; ++j) out(i, j) += aik * b(k, j);
            }
        return out;
    }

    CMatrix adjoint() const {
        CMatrix out(dim_);
        for (std::size_t i = 0; i < dim_; ++i)
            for (std::size_t j = 0; j < dim_; ++j) out(j, i) = std::conj((*this)(i, j));
        return out;
    }

    cplx trace() const {
        cplx t{};
        for (std::size_t i = 0; i < dim_; ++i) t += (*this)(i, i);
        return t;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (const auto& v : data_) s += std::norm(v);
        return std::sqrt(s);
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& v : data_) m = std::max(m, std::abs(v));
        return m;
    }

private:
    void check_same(const CMatrix& o) const {
        if (o.dim_ != dim_) throw std::invalid_argument("matrix dimension mismatch");
    }

    std::size_t dim_ = 0;
    std::vector<cplx> data_;
};

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
    const std::size_t na = a.dim(), nb = b.dim();
    CMatrix out(na * nb);
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < na; ++j) {
            const cplx aij = a(i, j);
            if (aij == cplx{}) continue;
            for (std::size_t k = 0; k < nb; ++k)
                for (std::size_t l = 0; l < nb; ++l) out(i * nb + k, j * nb + l) = aij * b(k, l);
        }
    return out;
}

/// Complex matrix checked on construction to be Hermitian.
class HermitianMatrix {
public:
    static constexpr double kHermitianTol = 1e-12;

    HermitianMatrix() = default;
    explicit HermitianMatrix(CMatrix m) : m_(std::move(m)) {
        const double dev = deviation(m_);
        const double scale = std::max(m_.max_abs(), 1.0);
        if (dev > kHermitianTol * scale)
            throw std::invalid_argument("matrix is not Hermitian (deviation " + std::to_string(dev) + ")");
        // symmetrize away round-off
        for (std::size_t i = 0; i < m_.dim(); ++i) {
            m_(i, i) = cplx(m_(i, i).real(), 0.0);
            for (std::size_t j = i + 1; j < m_.dim(); ++j) {
                const cplx avg = 0.5 * (m_(i, j) + std::conj(m_(j, i)));
                m_(i, j) = avg;
                m_(j, i) = std::conj(avg);
            }
        }
    }

    static double deviation(const CMatrix& m) {
        double dev = 0.0;
        for (std::size_t i = 0; i < m.dim(); ++i)
            for (std::size_t j = i; j < m.dim(); ++j) dev = std::max(dev, std::abs(m(i, j) - std::conj(m(j, i))));
        return dev;
    }

    std::size_t dim() const { return m_.dim(); }
    const CMatrix& matrix() const { return m_; }
    cplx operator()(std::size_t r, std::size_t c) const { return m_(r, c); }

    bool is_diagonal() const {
        for (std::size_t i = 0; i < dim(); ++i)
            for (std::size_t j = 0; j < dim(); ++j)
                if (i != j && m_(i, j) != cplx{}) return false;
        return true;
    }

private:
    CMatrix m_;
};

struct EigenDecomposition {
    std::vector<double> values;  // ascending
    CMatrix vectors;             // column k is the eigenvector of values[k]
    int sweeps = 0;
};

struct JacobiOptions {
    /// Convergence when the off-diagonal Frobenius norm falls below
    /// tolerance * ||M||_F.
    double tolerance = 1e-12;
    int max_sweeps = 100;
};

/// Cyclic Jacobi diagonalization of a Hermitian matrix.
///
/// Each rotation first removes the phase of the pivot element a_pq with a
/// diagonal unitary, then applies the real symmetric Jacobi rotation that
/// zeroes it. Throws NumericalError if the sweep cap is reached.
inline EigenDecomposition eigen_hermitian(const HermitianMatrix& h, const JacobiOptions& opt = {}) {
    const std::size_t n = h.dim();
    CMatrix a = h.matrix();
    CMatrix v = CMatrix::identity(n);

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += std::norm(a(i, j));
        return std::sqrt(s);
    };

    const double scale = a.frobenius_norm();
    const double target = opt.tolerance * scale;
    int sweep = 0;
    for (; off_norm() > target; ++sweep) {
        if (sweep >= opt.max_sweeps)
            throw NumericalError("Jacobi eigensolver did not converge after " + std::to_string(opt.max_sweeps) +
                                 " sweeps (off-diagonal norm " + std::to_string(off_norm()) + ")");
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const cplx apq = a(p, q);
                const double g = std::abs(apq);
                if (g == 0.0) continue;
                const double app = a(p, p).real(), aqq = a(q, q).real();
                // negligible against both diagonals: drop instead of rotating
                if (sweep > 3 && g < 1e-18 * (std::abs(app) + std::abs(aqq))) {
                    a(p, q) = a(q, p) = 0.0;
                    continue;
                }
                const cplx phase = apq / g;  // e^{i phi}
                const double theta = (aqq - app) / (2.0 * g);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                // U restricted to (p,q): [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
                const cplx upp = c, upq = s;
                const cplx uqp = -s * std::conj(phase), uqq = c * std::conj(phase);

                for (std::size_t k = 0; k < n; ++k) {  // A <- A U
                    const cplx akp = a(k, p), akq = a(k, q);
                    a(k, p) = akp * upp + akq * uqp;
                    a(k, q) = akp * upq + akq * uqq;
                }
                for (std::size_t k = 0; k < n; ++k) {  // A <- U^H A
                    const cplx apk = a(p, k), aqk = a(q, k);
                    a(p, k) = std::conj(upp) * apk + std::conj(uqp) * aqk;
                    a(q, k) = std::conj(upq) * apk + std::conj(uqq) * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                a(p, p) = app - t * g;
                a(q, q) = aqq + t * g;
                for (std::size_t k = 0; k < n; ++k) {  // V <- V U
                    const cplx vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = vkp * upp + vkq * uqp;
                    v(k, q) = vkp * upq + vkq * uqq;
                }
            }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i).real() < a(j, j).real(); });

    EigenDecomposition out;
    out.sweeps = sweep;
    out.values.resize(n);
    out.vectors = CMatrix(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]).real();
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
    }
    return out;
}

/// Largest ||M v_k - lambda_k v_k|| over all eigenpairs, relative to ||M||_F.
inline double max_relative_residual(const HermitianMatrix& h, const EigenDecomposition& e) {
    const std::size_t n = h.dim();
    const double scale = std::max(h.matrix().frobenius_norm(), 1e-300);
    double worst = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cplx acc = -e.values[k] * e.vectors(i, k);
            for (std::size_t j = 0; j < n; ++j) acc += h(i, j) * e.vectors(j, k);
            s += std::norm(acc);
        }
        worst = std::max(worst, std::sqrt(s) / scale);
    }
    return worst;
}

/// max |(V^H V - I)_ij|
inline double unitarity_error(const CMatrix& v) {
    const CMatrix g = v.adjoint() * v;
    double worst = 0.0;
    for (std::size_t i = 0; i < g.dim(); ++i)
        for (std::size_t j = 0; j < g.dim(); ++j)
            worst = std::max(worst, std::abs(g(i, j) - (i == j ? cplx(1.0) : cplx{})));
    return worst;
}

}  // namespace vbodmr
