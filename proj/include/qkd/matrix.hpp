#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace qkd {

using cx = std::complex<double>;

// Desk-scale guard: dense algebra only, nothing here is meant to scale past
// a few hundred dimensions.
inline constexpr int kMaxDim = 256;

class CMat {
public:
    CMat() = default;
    explicit CMat(int n) : n_(n), a_(static_cast<size_t>(n) * n) {
        if (n < 0 || n > kMaxDim) throw std::invalid_argument("CMat: dimension out of range");
    }

    static CMat zero(int n) { return CMat(n); }

    static CMat identity(int n) {
        CMat m(n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int dim() const { return n_; }
    bool empty() const { return n_ == 0; }

    cx& operator()(int i, int j) { return a_[static_cast<size_t>(i) * n_ + j]; }
    const cx& operator()(int i, int j) const { return a_[static_cast<size_t>(i) * n_ + j]; }

    cx* data() { return a_.data(); }
    const cx* data() const { return a_.data(); }

    CMat& operator+=(const CMat& o) {
        check_same(o);
        for (size_t k = 0; k < a_.size(); ++k) a_[k] += o.a_[k];
        return *this;
    }
    CMat& operator-=(const CMat& o) {
        check_same(o);
        for (size_t k = 0; k < a_.size(); ++k) a_[k] -= o.a_[k];
        return *this;
    }
    CMat& operator*=(cx s) {
        for (auto& v : a_) v *= s;
        return *this;
    }

    friend CMat operator+(CMat a, const CMat& b) { return a += b; }
    friend CMat operator-(CMat a, const CMat& b) { return a -= b; }
    friend CMat operator*(cx s, CMat a) { return a *= s; }
    friend CMat operator*(CMat a, cx s) { return a *= s; }

    friend CMat operator*(const CMat& a, const CMat& b) {
        a.check_same(b);
        int n = a.n_;
        CMat c(n);
        for (int i = 0; i < n; ++i) {
            for (int k = 0; k < n; ++k) {
                cx aik = a(i, k);
                if (aik == cx{}) continue;
                const cx* brow = &b.a_[static_cast<size_t>(k) * n];
                cx* crow = &c.a_[static_cast<size_t>(i) * n];
                for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
            }
        }
        return c;
    }

    CMat adjoint() const {
        CMat c(n_);
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) c(j, i) = std::conj((*this)(i, j));
        return c;
    }

    cx trace() const {
        cx t = 0;
        for (int i = 0; i < n_; ++i) t += (*this)(i, i);
        return t;
    }

    double frobenius_norm() const {
        double s = 0;
        for (const auto& v : a_) s += std::norm(v);
        return std::sqrt(s);
    }

    double max_abs() const {
        double s = 0;
        for (const auto& v : a_) s = std::max(s, std::abs(v));
        return s;
    }

    bool is_hermitian(double tol = 1e-12) const {
        for (int i = 0; i < n_; ++i)
            for (int j = i; j < n_; ++j)
                if (std::abs((*this)(i, j) - std::conj((*this)(j, i))) > tol) return false;
        return true;
    }

    // (A + A^dag)/2, cleans up roundoff drift
    CMat hermitized() const {
        CMat c(n_);
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j)
                c(i, j) = 0.5 * ((*this)(i, j) + std::conj((*this)(j, i)));
        return c;
    }

private:
    void check_same(const CMat& o) const {
        if (n_ != o.n_) throw std::invalid_argument("CMat: dimension mismatch");
    }

    int n_ = 0;
    std::vector<cx> a_;
};

inline double real_trace(const CMat& m) { return m.trace().real(); }

// tr(a b) for Hermitian a, b is real; computed without forming the product
inline double trace_product_real(const CMat& a, const CMat& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("trace_product: dimension mismatch");
    int n = a.dim();
    double s = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) s += (a(i, j) * b(j, i)).real();
    return s;
}

inline CMat outer(const std::vector<cx>& v) {
    CMat m(static_cast<int>(v.size()));
    for (size_t i = 0; i < v.size(); ++i)
        for (size_t j = 0; j < v.size(); ++j) m(static_cast<int>(i), static_cast<int>(j)) = v[i] * std::conj(v[j]);
    return m;
}

inline CMat tensor(const CMat& a, const CMat& b) {
    long prod = static_cast<long>(a.dim()) * b.dim();
    if (prod > kMaxDim) throw std::invalid_argument("tensor: dimension guard exceeded");
    CMat c(static_cast<int>(prod));
    int db = b.dim();
    for (int i1 = 0; i1 < a.dim(); ++i1)
        for (int j1 = 0; j1 < a.dim(); ++j1) {
            cx av = a(i1, j1);
            if (av == cx{}) continue;
            for (int i2 = 0; i2 < db; ++i2)
                for (int j2 = 0; j2 < db; ++j2) c(i1 * db + i2, j1 * db + j2) = av * b(i2, j2);
        }
    return c;
}

inline std::vector<cx> tensor(const std::vector<cx>& a, const std::vector<cx>& b) {
    std::vector<cx> c(a.size() * b.size());
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) c[i * b.size() + j] = a[i] * b[j];
    return c;
}

// Ordered tensor-factor bookkeeping; factor 0 is the leftmost (most
// significant) index in row-major composite indices.
struct SystemLayout {
    std::vector<int> factor_dims;

    int total_dim() const {
        int t = 1;
        for (int d : factor_dims) {
            if (d <= 0) throw std::invalid_argument("SystemLayout: factor dims must be positive");
            t *= d;
        }
        return t;
    }
    int factors() const { return static_cast<int>(factor_dims.size()); }

    void check_matches(const CMat& m) const {
        if (total_dim() != m.dim()) throw std::invalid_argument("SystemLayout: inconsistent with matrix dimension");
    }

    std::vector<int> decode(int idx) const {
        std::vector<int> out(factor_dims.size());
        for (int f = factors() - 1; f >= 0; --f) {
            out[f] = idx % factor_dims[f];
            idx /= factor_dims[f];
        }
        return out;
    }

    int encode(const std::vector<int>& comps) const {
        int idx = 0;
        for (int f = 0; f < factors(); ++f) idx = idx * factor_dims[f] + comps[f];
        return idx;
    }
};

// Trace over every factor not listed in `keep`; `keep` preserves its given order
// as the factor order of the result.
inline CMat partial_trace(const CMat& m, const SystemLayout& layout, const std::vector<int>& keep) {
    layout.check_matches(m);
    for (int f : keep)
        if (f < 0 || f >= layout.factors()) throw std::invalid_argument("partial_trace: bad factor index");

    std::vector<bool> kept(layout.factors(), false);
    for (int f : keep) kept[f] = true;

    int dkeep = 1;
    for (int f : keep) dkeep *= layout.factor_dims[f];
    CMat out(dkeep);

    int n = m.dim();
    std::vector<std::vector<int>> comps(n);
    for (int i = 0; i < n; ++i) comps[i] = layout.decode(i);

    auto keep_index = [&](const std::vector<int>& c) {
        int idx = 0;
        for (int f : keep) idx = idx * layout.factor_dims[f] + c[f];
        return idx;
    };

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            bool diag_on_traced = true;
            for (int f = 0; f < layout.factors(); ++f) {
                if (!kept[f] && comps[i][f] != comps[j][f]) {
                    diag_on_traced = false;
                    break;
                }
            }
            if (diag_on_traced) out(keep_index(comps[i]), keep_index(comps[j])) += m(i, j);
        }
    }
    return out;
}

// Zero all blocks off-diagonal in the given classical factor's basis.
inline CMat pinch(const CMat& m, const SystemLayout& layout, int classical_factor) {
    layout.check_matches(m);
    if (classical_factor < 0 || classical_factor >= layout.factors())
        throw std::invalid_argument("pinch: bad factor index");
    CMat out(m.dim());
    int n = m.dim();
    for (int i = 0; i < n; ++i) {
        auto ci = layout.decode(i);
        for (int j = 0; j < n; ++j) {
            auto cj = layout.decode(j);
            if (ci[classical_factor] == cj[classical_factor]) out(i, j) = m(i, j);
        }
    }
    return out;
}

struct EigResult {
    std::vector<double> values;  // ascending
    CMat vectors;                // columns, unitary; empty when not requested
};

// Cyclic Jacobi for complex Hermitian matrices.  Deterministic: fixed sweep
// order, no pivot search.
inline EigResult eig_hermitian(const CMat& m, bool want_vectors = true) {
    int n = m.dim();
    double scale = std::max(m.max_abs(), 1.0);
    if (!m.is_hermitian(1e-12 * scale * n)) throw std::invalid_argument("eig_hermitian: matrix not Hermitian");

    CMat a = m.hermitized();
    CMat v = want_vectors ? CMat::identity(n) : CMat();

    auto off_norm = [&]() {
        double s = 0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) s += std::norm(a(p, q));
        return std::sqrt(2.0 * s);
    };

    const double target = 1e-15 * n * scale;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = off_norm();
        if (off <= target) break;
        double thresh = (sweep < 3) ? 0.2 * off / (n * n) : 0.0;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double r = std::abs(a(p, q));
                if (r <= thresh || r == 0.0) continue;
                double app = a(p, p).real();
                double aqq = a(q, q).real();
                cx phase = a(p, q) / r;
                double tau = (aqq - app) / (2.0 * r);
                double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                cx sp = s * phase;           // J(p,q) entry
                cx spc = std::conj(sp);      // used for J(q,p) = -conj(sp)

                // A <- J^dag A J ; columns first, then rows
                for (int k = 0; k < n; ++k) {
                    cx akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - spc * akq;
                    a(k, q) = sp * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    cx apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sp * aqk;
                    a(q, k) = spc * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                a(p, p) = cx(a(p, p).real(), 0.0);
                a(q, q) = cx(a(q, q).real(), 0.0);
                if (want_vectors) {
                    for (int k = 0; k < n; ++k) {
                        cx vkp = v(k, p), vkq = v(k, q);
                        v(k, p) = c * vkp - spc * vkq;
                        v(k, q) = sp * vkp + c * vkq;
                    }
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (int i = 0; i < n; ++i) diag[i] = a(i, i).real();
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return diag[x] < diag[y]; });

    EigResult res;
    res.values.resize(n);
    for (int i = 0; i < n; ++i) res.values[i] = diag[order[i]];
    if (want_vectors) {
        res.vectors = CMat(n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) res.vectors(i, j) = v(i, order[j]);
    }
    return res;
}

namespace detail {
inline CMat recompose(const EigResult& e, const std::vector<double>& fvals) {
    int n = static_cast<int>(e.values.size());
    CMat out(n);
    for (int k = 0; k < n; ++k) {
        if (fvals[k] == 0.0) continue;
        for (int i = 0; i < n; ++i) {
            cx vik = e.vectors(i, k) * fvals[k];
            for (int j = 0; j < n; ++j) out(i, j) += vik * std::conj(e.vectors(j, k));
        }
    }
    return out;
}
}  // namespace detail

// Square root of a PSD matrix; eigenvalues in [-1e-10, 0) clamp to zero,
// anything lower is a genuine non-PSD input.
inline CMat matrix_sqrt(const CMat& m) {
    EigResult e = eig_hermitian(m);
    double scale = std::max(1.0, std::abs(e.values.empty() ? 0.0 : e.values.back()));
    std::vector<double> f(e.values.size());
    for (size_t k = 0; k < e.values.size(); ++k) {
        double lam = e.values[k];
        if (lam < -1e-10 * scale) throw std::domain_error("matrix_sqrt: input not positive semidefinite");
        f[k] = lam > 0 ? std::sqrt(lam) : 0.0;
    }
    return detail::recompose(e, f);
}

}  // namespace qkd
