#pragma once

// Dense complex linear algebra sized for sensor arrays: Hermitian eigensolver
// (cyclic two-sided Jacobi), dominant-subspace extraction (orthogonal iteration),
// snapshot covariance, and Householder least squares. Everything is double
// precision and deterministic for fixed input.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <vector>

#include "aoalab/errors.hpp"

namespace aoalab {

using cplx = std::complex<double>;

struct ComplexMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<cplx> data;  // row-major

    ComplexMatrix() = default;
    ComplexMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, cplx(0, 0)) {}

    cplx& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const cplx& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    static ComplexMatrix identity(std::size_t n) {
        ComplexMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = cplx(1, 0);
        return m;
    }
};

struct EigenDecomposition {
    std::vector<double> eigenvalues;  // descending
    ComplexMatrix eigenvectors;       // unit-norm columns, paired with eigenvalues
};

struct LeastSquaresResult {
    ComplexMatrix solution;
    double residual = 0.0;  // ||A x - B||_F
};

inline double frobenius_norm(const ComplexMatrix& a) {
    double acc = 0.0;
    for (const cplx& v : a.data) acc += std::norm(v);
    return std::sqrt(acc);
}

inline ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.cols != b.rows) throw InvalidArgument("matmul: inner dimensions disagree");
    ComplexMatrix out(a.rows, b.cols);
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const cplx ark = a.at(r, k);
            if (ark == cplx(0, 0)) continue;
            for (std::size_t c = 0; c < b.cols; ++c) out.at(r, c) += ark * b.at(k, c);
        }
    return out;
}

namespace detail {

inline void require_finite(const ComplexMatrix& a, const char* who) {
    for (const cplx& v : a.data)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw InvalidArgument(std::string(who) + ": non-finite entry");
}

inline void require_hermitian_input(const ComplexMatrix& a, const char* who) {
    if (a.rows != a.cols) throw NonSquare(std::string(who) + ": matrix is not square");
    if (a.rows == 0) throw InvalidArgument(std::string(who) + ": empty matrix");
    if (a.rows > 64) throw InvalidArgument(std::string(who) + ": dimension above the supported 64");
    require_finite(a, who);
    const double norm = frobenius_norm(a);
    double defect = 0.0;
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t c = 0; c < a.cols; ++c) defect += std::norm(a.at(r, c) - std::conj(a.at(c, r)));
    if (std::sqrt(defect) > 1e-9 * std::max(norm, 1e-300))
        throw NotHermitian(std::string(who) + ": symmetry violated beyond tolerance");
}

// Fix each column's global phase so the first component of significant modulus
// is real-positive; keeps eigenvector output deterministic.
inline void normalize_column_phases(ComplexMatrix& v) {
    for (std::size_t k = 0; k < v.cols; ++k) {
        for (std::size_t r = 0; r < v.rows; ++r) {
            const cplx lead = v.at(r, k);
            const double mag = std::abs(lead);
            if (mag > 1e-12) {
                const cplx rot = std::conj(lead) / mag;
                for (std::size_t rr = 0; rr < v.rows; ++rr) v.at(rr, k) *= rot;
                break;
            }
        }
    }
}

inline void sort_descending(std::vector<double>& values, ComplexMatrix& vectors) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    std::vector<double> sorted_values(n);
    ComplexMatrix sorted_vectors(vectors.rows, n);
    for (std::size_t k = 0; k < n; ++k) {
        sorted_values[k] = values[order[k]];
        for (std::size_t r = 0; r < vectors.rows; ++r) sorted_vectors.at(r, k) = vectors.at(r, order[k]);
    }
    values = std::move(sorted_values);
    vectors = std::move(sorted_vectors);
}

}  // namespace detail

// Cyclic two-sided unitary Jacobi sweeps. Converges when the off-diagonal
// Frobenius mass drops below 1e-12 * ||A||_F; capped at 100 sweeps.
inline EigenDecomposition hermitian_eig(const ComplexMatrix& a) {
    detail::require_hermitian_input(a, "hermitian_eig");
    const std::size_t n = a.rows;
    const double norm = frobenius_norm(a);

    // Work on the symmetrized copy so the tolerance-level asymmetry allowed by
    // the precondition cannot leak into the iteration.
    ComplexMatrix w(n, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) w.at(r, c) = 0.5 * (a.at(r, c) + std::conj(a.at(c, r)));
    ComplexMatrix v = ComplexMatrix::identity(n);

    EigenDecomposition out;
    if (norm == 0.0) {
        out.eigenvalues.assign(n, 0.0);
        out.eigenvectors = std::move(v);
        return out;
    }

    const double stop = 1e-12 * norm;
    bool converged = false;
    for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double r_pq = std::abs(w.at(p, q));
                if (r_pq == 0.0) continue;
                const double alpha = w.at(p, p).real();
                const double beta = w.at(q, q).real();
                const double phase = std::arg(w.at(p, q));
                const double tau = (beta - alpha) / (2.0 * r_pq);
                const double t = (tau >= 0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const cplx s = t * c * std::exp(cplx(0, phase));

                for (std::size_t k = 0; k < n; ++k) {  // W <- J^H W
                    const cplx wpk = w.at(p, k), wqk = w.at(q, k);
                    w.at(p, k) = c * wpk - s * wqk;
                    w.at(q, k) = std::conj(s) * wpk + c * wqk;
                }
                for (std::size_t k = 0; k < n; ++k) {  // W <- W J, V <- V J
                    const cplx wkp = w.at(k, p), wkq = w.at(k, q);
                    w.at(k, p) = c * wkp - std::conj(s) * wkq;
                    w.at(k, q) = s * wkp + c * wkq;
                    const cplx vkp = v.at(k, p), vkq = v.at(k, q);
                    v.at(k, p) = c * vkp - std::conj(s) * vkq;
                    v.at(k, q) = s * vkp + c * vkq;
                }
                w.at(p, q) = cplx(0, 0);
                w.at(q, p) = cplx(0, 0);
                w.at(p, p) = cplx(w.at(p, p).real(), 0);
                w.at(q, q) = cplx(w.at(q, q).real(), 0);
            }
        }
        double off = 0.0;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c)
                if (r != c) off += std::norm(w.at(r, c));
        converged = std::sqrt(off) <= stop;
    }
    if (!converged) throw NoConvergence("hermitian_eig: Jacobi sweep cap reached");

    out.eigenvalues.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.eigenvalues[i] = w.at(i, i).real();
    out.eigenvectors = std::move(v);
    detail::sort_descending(out.eigenvalues, out.eigenvectors);
    detail::normalize_column_phases(out.eigenvectors);
    return out;
}

// Top-k eigenpairs by algebraic value via shifted orthogonal iteration with a
// Rayleigh-Ritz finish. Intended for the covariance matrices the estimators
// produce; the shift by ||A||_F makes the iteration track algebraic order for
// any Hermitian input.
inline EigenDecomposition dominant_eigenpairs(const ComplexMatrix& a, std::size_t k) {
    detail::require_hermitian_input(a, "dominant_eigenpairs");
    const std::size_t n = a.rows;
    if (k == 0 || k > n) throw InvalidArgument("dominant_eigenpairs: k outside [1, n]");
    const double norm = frobenius_norm(a);
    if (norm == 0.0) {
        EigenDecomposition out;
        out.eigenvalues.assign(k, 0.0);
        out.eigenvectors = ComplexMatrix(n, k);
        for (std::size_t i = 0; i < k; ++i) out.eigenvectors.at(i, i) = cplx(1, 0);
        return out;
    }

    ComplexMatrix b = a;
    for (std::size_t i = 0; i < n; ++i) b.at(i, i) += norm;  // positive definite shift

    ComplexMatrix q(n, k);
    for (std::size_t i = 0; i < k; ++i) q.at(i, i) = cplx(1, 0);

    const double tol = 1e-11 * frobenius_norm(b);
    ComplexMatrix small(k, k);
    bool converged = false;
    for (int iter = 0; iter < 500 && !converged; ++iter) {
        ComplexMatrix z = matmul(b, q);
        // Ritz residual ||B Q - Q (Q^H B Q)||_F against the current basis.
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                cplx dot(0, 0);
                for (std::size_t r = 0; r < n; ++r) dot += std::conj(q.at(r, i)) * z.at(r, j);
                small.at(i, j) = dot;
            }
        double resid = 0.0;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < k; ++j) {
                cplx acc = z.at(r, j);
                for (std::size_t i = 0; i < k; ++i) acc -= q.at(r, i) * small.at(i, j);
                resid += std::norm(acc);
            }
        if (std::sqrt(resid) <= tol) {
            converged = true;
            break;
        }
        // Second power step before re-orthonormalizing squares the contraction
        // ratio, which matters when the k-th gap is small.
        z = matmul(b, z);
        // Modified Gram-Schmidt on Z -> next Q.
        for (std::size_t j = 0; j < k; ++j) {
            for (std::size_t i = 0; i < j; ++i) {
                cplx dot(0, 0);
                for (std::size_t r = 0; r < n; ++r) dot += std::conj(z.at(r, i)) * z.at(r, j);
                for (std::size_t r = 0; r < n; ++r) z.at(r, j) -= dot * z.at(r, i);
            }
            double len = 0.0;
            for (std::size_t r = 0; r < n; ++r) len += std::norm(z.at(r, j));
            len = std::sqrt(len);
            if (len <= 1e-300) throw NumericError("dominant_eigenpairs: basis collapse");
            for (std::size_t r = 0; r < n; ++r) z.at(r, j) /= len;
        }
        q = std::move(z);
    }
    if (!converged) {
        // Degenerate spectra (k-th gap ~ 0) can stall the iteration; the full
        // solver is the deterministic fallback and is still cheap at n <= 64.
        const EigenDecomposition full = hermitian_eig(a);
        EigenDecomposition out;
        out.eigenvalues.assign(full.eigenvalues.begin(), full.eigenvalues.begin() + k);
        out.eigenvectors = ComplexMatrix(n, k);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t r = 0; r < n; ++r) out.eigenvectors.at(r, i) = full.eigenvectors.at(r, i);
        return out;
    }

    for (std::size_t i = 0; i < k; ++i)  // enforce Hermitian small problem
        for (std::size_t j = i; j < k; ++j) {
            const cplx v = 0.5 * (small.at(i, j) + std::conj(small.at(j, i)));
            small.at(i, j) = v;
            small.at(j, i) = std::conj(v);
        }
    const EigenDecomposition ritz = hermitian_eig(small);

    EigenDecomposition out;
    out.eigenvalues.resize(k);
    out.eigenvectors = matmul(q, ritz.eigenvectors);
    for (std::size_t i = 0; i < k; ++i) out.eigenvalues[i] = ritz.eigenvalues[i] - norm;
    detail::normalize_column_phases(out.eigenvectors);
    return out;
}

// R = (1/T) X X^H from a sensors-by-T snapshot block.
inline ComplexMatrix sample_covariance(const ComplexMatrix& snapshots) {
    if (snapshots.cols == 0) throw EmptySnapshotBlock("sample_covariance: zero snapshots");
    const std::size_t n = snapshots.rows, T = snapshots.cols;
    ComplexMatrix r(n, n);
    const double inv_t = 1.0 / static_cast<double>(T);
    for (std::size_t i = 0; i < n; ++i) {
        const cplx* xi = &snapshots.data[i * T];
        for (std::size_t j = i; j < n; ++j) {
            const cplx* xj = &snapshots.data[j * T];
            double re = 0.0, im = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                // x_i(t) * conj(x_j(t))
                re += xi[t].real() * xj[t].real() + xi[t].imag() * xj[t].imag();
                im += xi[t].imag() * xj[t].real() - xi[t].real() * xj[t].imag();
            }
            const cplx value(re * inv_t, im * inv_t);
            r.at(i, j) = value;
            r.at(j, i) = std::conj(value);
        }
        r.at(i, i) = cplx(r.at(i, i).real(), 0.0);
    }
    return r;
}

// Minimum-norm ||A X - B||_F solve through Householder QR with back substitution.
inline LeastSquaresResult least_squares(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.rows < a.cols) throw InvalidArgument("least_squares: system is underdetermined");
    if (a.rows != b.rows) throw InvalidArgument("least_squares: row counts disagree");
    if (a.cols == 0 || b.cols == 0) throw InvalidArgument("least_squares: empty operand");
    detail::require_finite(a, "least_squares");
    detail::require_finite(b, "least_squares");

    const std::size_t m = a.rows, n = a.cols, p = b.cols;
    const double norm_a = frobenius_norm(a);
    ComplexMatrix qr = a;
    ComplexMatrix rhs = b;

    for (std::size_t j = 0; j < n; ++j) {
        double len = 0.0;
        for (std::size_t r = j; r < m; ++r) len += std::norm(qr.at(r, j));
        len = std::sqrt(len);
        if (len <= 1e-10 * std::max(norm_a, 1e-300))
            throw RankDeficient("least_squares: column rank below tolerance");

        const cplx x0 = qr.at(j, j);
        const cplx alpha = (std::abs(x0) > 0) ? cplx(-(x0 / std::abs(x0)) * len) : cplx(-len, 0);
        std::vector<cplx> v(m - j);
        v[0] = x0 - alpha;
        for (std::size_t r = j + 1; r < m; ++r) v[r - j] = qr.at(r, j);
        double vlen2 = 0.0;
        for (const cplx& value : v) vlen2 += std::norm(value);
        if (vlen2 <= 1e-300) continue;  // column already reduced

        auto reflect = [&](ComplexMatrix& target, std::size_t col) {
            cplx dot(0, 0);
            for (std::size_t r = j; r < m; ++r) dot += std::conj(v[r - j]) * target.at(r, col);
            const cplx scale = 2.0 * dot / vlen2;
            for (std::size_t r = j; r < m; ++r) target.at(r, col) -= scale * v[r - j];
        };
        for (std::size_t c = j; c < n; ++c) reflect(qr, c);
        for (std::size_t c = 0; c < p; ++c) reflect(rhs, c);
        qr.at(j, j) = alpha;
        for (std::size_t r = j + 1; r < m; ++r) qr.at(r, j) = cplx(0, 0);
    }

    LeastSquaresResult out;
    out.solution = ComplexMatrix(n, p);
    for (std::size_t c = 0; c < p; ++c)
        for (std::size_t i = n; i-- > 0;) {
            cplx acc = rhs.at(i, c);
            for (std::size_t jj = i + 1; jj < n; ++jj) acc -= qr.at(i, jj) * out.solution.at(jj, c);
            out.solution.at(i, c) = acc / qr.at(i, i);
        }

    double resid = 0.0;
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < p; ++c) {
            cplx acc(0, 0);
            for (std::size_t jj = 0; jj < n; ++jj) acc += a.at(r, jj) * out.solution.at(jj, c);
            resid += std::norm(acc - b.at(r, c));
        }
    out.residual = std::sqrt(resid);
    return out;
}

namespace detail {

// Eigenvalues of a small dense (not necessarily Hermitian) complex matrix:
// Givens-based Hessenberg reduction followed by explicitly shifted QR
// iteration with Wilkinson shifts. Sizes here are tiny (rotation operators of
// subspace trackers), so cubic passes per step are fine.
inline std::vector<cplx> dense_eigenvalues(ComplexMatrix h) {
    if (h.rows != h.cols) throw NonSquare("dense_eigenvalues: matrix is not square");
    const std::size_t n = h.rows;
    if (n == 0) throw InvalidArgument("dense_eigenvalues: empty matrix");
    require_finite(h, "dense_eigenvalues");
    if (n == 1) return {h.at(0, 0)};

    // complex Givens zeroing g against f: c real, G^H [f;g] = [r;0]
    auto givens = [](cplx f, cplx g, double& c, cplx& s) {
        const double af = std::abs(f), ag = std::abs(g);
        if (ag == 0.0) {
            c = 1.0;
            s = cplx(0, 0);
            return;
        }
        if (af == 0.0) {
            c = 0.0;
            s = cplx(1, 0);
            return;
        }
        const double r = std::hypot(af, ag);
        c = af / r;
        s = (f / af) * std::conj(g) / r;
    };
    auto rot_rows = [&](ComplexMatrix& m, std::size_t i, std::size_t k, double c, cplx s,
                        std::size_t col_begin) {
        for (std::size_t col = col_begin; col < m.cols; ++col) {
            const cplx a = m.at(i, col), b = m.at(k, col);
            m.at(i, col) = c * a + s * b;
            m.at(k, col) = -std::conj(s) * a + c * b;
        }
    };
    auto rot_cols = [&](ComplexMatrix& m, std::size_t i, std::size_t k, double c, cplx s,
                        std::size_t row_end) {
        for (std::size_t row = 0; row < row_end; ++row) {
            const cplx a = m.at(row, i), b = m.at(row, k);
            m.at(row, i) = c * a + std::conj(s) * b;
            m.at(row, k) = -s * a + c * b;
        }
    };

    // Hessenberg reduction by similarity rotations
    for (std::size_t k = 0; k + 2 < n; ++k) {
        for (std::size_t i = n - 1; i > k + 1; --i) {
            double c;
            cplx s;
            givens(h.at(i - 1, k), h.at(i, k), c, s);
            rot_rows(h, i - 1, i, c, s, k);
            rot_cols(h, i - 1, i, c, s, n);
            h.at(i, k) = cplx(0, 0);
        }
    }

    std::vector<cplx> out(n);
    std::size_t hi = n - 1;
    std::size_t iters = 0;
    const std::size_t max_iters = 200 * n;
    while (true) {
        // deflate converged subdiagonals
        for (std::size_t m = hi; m > 0; --m) {
            const double tol = 1e-14 * (std::abs(h.at(m - 1, m - 1)) + std::abs(h.at(m, m)));
            if (std::abs(h.at(m, m - 1)) <= std::max(tol, 1e-300)) h.at(m, m - 1) = cplx(0, 0);
        }
        while (hi > 0 && h.at(hi, hi - 1) == cplx(0, 0)) {
            out[hi] = h.at(hi, hi);
            --hi;
        }
        if (hi == 0) {
            out[0] = h.at(0, 0);
            break;
        }
        if (++iters > max_iters) throw NoConvergence("dense_eigenvalues: QR iteration stalled");

        // active block [lo, hi]
        std::size_t lo = hi;
        while (lo > 0 && h.at(lo, lo - 1) != cplx(0, 0)) --lo;

        // Wilkinson shift from the trailing 2x2 of the active block
        const cplx a11 = h.at(hi - 1, hi - 1), a12 = h.at(hi - 1, hi);
        const cplx a21 = h.at(hi, hi - 1), a22 = h.at(hi, hi);
        const cplx tr = a11 + a22;
        const cplx disc = std::sqrt(tr * tr - 4.0 * (a11 * a22 - a12 * a21));
        const cplx l1 = 0.5 * (tr + disc), l2 = 0.5 * (tr - disc);
        cplx mu = (std::abs(l1 - a22) < std::abs(l2 - a22)) ? l1 : l2;
        if (iters % 17 == 0) mu += 0.5 * std::abs(h.at(hi, hi - 1));  // exceptional shift

        // explicit shifted QR step on the active block: H <- R Q + mu I
        for (std::size_t i = lo; i <= hi; ++i) h.at(i, i) -= mu;
        std::vector<double> cs(hi - lo);
        std::vector<cplx> ss(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) {
            givens(h.at(i, i), h.at(i + 1, i), cs[i - lo], ss[i - lo]);
            rot_rows(h, i, i + 1, cs[i - lo], ss[i - lo], i);
            h.at(i + 1, i) = cplx(0, 0);
        }
        for (std::size_t i = lo; i < hi; ++i)
            rot_cols(h, i, i + 1, cs[i - lo], ss[i - lo], std::min(i + 2, hi + 1));
        for (std::size_t i = lo; i <= hi; ++i) h.at(i, i) += mu;
    }
    return out;
}

}  // namespace detail

}  // namespace aoalab
