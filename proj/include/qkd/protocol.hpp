#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "qkd/entropy.hpp"
#include "qkd/matrix.hpp"

namespace qkd {

// Single-round statistics over the evaluation alphabet C, indexed in
// declaration order.
struct StatisticsVector {
    std::vector<double> probs;

    double sum() const {
        double s = 0;
        for (double p : probs) s += p;
        return s;
    }
};

// Arguments of a generic prepare-and-measure protocol round: a cq source
// state, Bob's POVM, the classical maps (public discussion, raw key,
// evaluation), and the testing probability.  Test-round randomisation is
// folded into the POVM: each physical outcome appears once per coin value,
// with elements scaled by gamma / (1-gamma), which keeps the evaluation map
// deterministic.
struct ProtocolSpec {
    std::vector<std::string> u_labels, v_labels, i_labels, s_labels, c_labels;

    std::vector<double> source_prob;            // p(u)
    std::vector<std::vector<cx>> source_state;  // pure |psi_u> on Q
    std::vector<CMat> povm;                     // N^(v) on Q

    std::vector<std::vector<int>> pd;               // [u][v] -> i
    std::vector<std::vector<int>> rk;               // [u][i] -> s
    std::vector<std::vector<std::vector<int>>> ev;  // [v][i][s] -> c

    double gamma = 0.0;

    int n_u() const { return static_cast<int>(u_labels.size()); }
    int n_v() const { return static_cast<int>(v_labels.size()); }
    int n_i() const { return static_cast<int>(i_labels.size()); }
    int n_s() const { return static_cast<int>(s_labels.size()); }
    int n_c() const { return static_cast<int>(c_labels.size()); }
    int dim_q() const { return source_state.empty() ? 0 : static_cast<int>(source_state.front().size()); }

    int label_index(const std::vector<std::string>& labels, const std::string& name) const {
        for (size_t k = 0; k < labels.size(); ++k)
            if (labels[k] == name) return static_cast<int>(k);
        throw std::invalid_argument("ProtocolSpec: unknown label " + name);
    }
};

// Empty result means ok; otherwise each entry names a violated invariant.
inline std::vector<std::string> validate(const ProtocolSpec& spec) {
    std::vector<std::string> bad;
    auto fail = [&](const std::string& s) { bad.push_back(s); };

    if (spec.u_labels.empty() || spec.v_labels.empty() || spec.i_labels.empty() || spec.s_labels.empty() ||
        spec.c_labels.empty())
        fail("alphabets must be non-empty");
    if (spec.gamma <= 0.0 || spec.gamma > 1.0) fail("testing probability out of (0,1]");

    if (spec.source_prob.size() != spec.u_labels.size() || spec.source_state.size() != spec.u_labels.size())
        fail("source table sized to U");
    double psum = 0;
    for (double p : spec.source_prob) {
        if (p < 0) fail("source probabilities nonnegative");
        psum += p;
    }
    if (std::abs(psum - 1.0) > 1e-12) fail("source normalization");

    int dq = spec.dim_q();
    for (const auto& st : spec.source_state) {
        if (static_cast<int>(st.size()) != dq || dq == 0) {
            fail("source states share dimension");
            break;
        }
        double n2 = 0;
        for (cx a : st) n2 += std::norm(a);
        if (std::abs(n2 - 1.0) > 1e-12) {
            fail("state normalization");
            break;
        }
    }

    if (spec.povm.size() != spec.v_labels.size()) fail("POVM sized to V");
    CMat sum(dq);
    bool povm_ok = true;
    for (const CMat& n : spec.povm) {
        if (n.dim() != dq) {
            fail("POVM element dimension");
            povm_ok = false;
            break;
        }
        if (!n.is_hermitian(1e-10)) fail("POVM element hermiticity");
        sum += n;
    }
    if (povm_ok && dq > 0 && (sum - CMat::identity(dq)).max_abs() > 1e-10) fail("POVM completeness");

    auto table_total = [&](auto&& sizes_ok, const char* name) {
        if (!sizes_ok()) fail(std::string(name) + " table totality");
    };
    table_total(
        [&] {
            if (spec.pd.size() != spec.u_labels.size()) return false;
            for (const auto& row : spec.pd) {
                if (row.size() != spec.v_labels.size()) return false;
                for (int i : row)
                    if (i < 0 || i >= spec.n_i()) return false;
            }
            return true;
        },
        "pd");
    table_total(
        [&] {
            if (spec.rk.size() != spec.u_labels.size()) return false;
            for (const auto& row : spec.rk) {
                if (row.size() != spec.i_labels.size()) return false;
                for (int s : row)
                    if (s < 0 || s >= spec.n_s()) return false;
            }
            return true;
        },
        "rk");
    table_total(
        [&] {
            if (spec.ev.size() != spec.v_labels.size()) return false;
            for (const auto& vi : spec.ev) {
                if (vi.size() != spec.i_labels.size()) return false;
                for (const auto& is : vi) {
                    if (is.size() != spec.s_labels.size()) return false;
                    for (int c : is)
                        if (c < 0 || c >= spec.n_c()) return false;
                }
            }
            return true;
        },
        "ev");

    return bad;
}

// Source-replacement picture of a protocol round: the pure state psi~_PQ with
// a pinned Alice marginal, the measurement operators M^(s,i,c) that absorb
// the classical maps, and the statistics operators Gamma_c.
struct ConstraintOperators {
    int dim_p = 0, dim_q = 0;
    int n_s = 0, n_i = 0, n_c = 0;
    std::vector<std::string> s_labels, i_labels, c_labels;
    double gamma = 0.0;

    std::vector<CMat> m_ops;    // [(s*n_i + i)*n_c + c], dim 0 when absent
    std::vector<CMat> m_sqrt;   // matching square roots
    std::vector<CMat> gamma_ops;  // [c] on P (x) Q
    std::vector<cx> source_pure;  // |psi~>_PQ
    CMat alice_marginal;          // psi~_P

    int dim_pq() const { return dim_p * dim_q; }
    int m_index(int s, int i, int c) const { return (s * n_i + i) * n_c + c; }
    const CMat& m_op(int s, int i, int c) const { return m_ops[m_index(s, i, c)]; }
};

inline ConstraintOperators source_replacement(const ProtocolSpec& spec) {
    auto diag = validate(spec);
    if (!diag.empty()) throw std::invalid_argument("source_replacement: invalid spec: " + diag.front());

    ConstraintOperators ops;
    ops.dim_p = spec.n_u();
    ops.dim_q = spec.dim_q();
    ops.n_s = spec.n_s();
    ops.n_i = spec.n_i();
    ops.n_c = spec.n_c();
    ops.s_labels = spec.s_labels;
    ops.i_labels = spec.i_labels;
    ops.c_labels = spec.c_labels;
    ops.gamma = spec.gamma;

    int dpq = ops.dim_pq();
    if (dpq > kMaxDim) throw std::invalid_argument("source_replacement: P x Q dimension guard exceeded");

    // |psi~> = sum_u sqrt(p(u)) |u>_P |psi_u>_Q
    ops.source_pure.assign(dpq, cx{});
    for (int u = 0; u < spec.n_u(); ++u) {
        double amp = std::sqrt(spec.source_prob[u]);
        for (int q = 0; q < ops.dim_q; ++q) ops.source_pure[u * ops.dim_q + q] = amp * spec.source_state[u][q];
    }

    ops.m_ops.assign(static_cast<size_t>(ops.n_s) * ops.n_i * ops.n_c, CMat());
    for (int u = 0; u < spec.n_u(); ++u) {
        for (int v = 0; v < spec.n_v(); ++v) {
            int i = spec.pd[u][v];
            int s = spec.rk[u][i];
            int c = spec.ev[v][i][s];
            CMat& target = ops.m_ops[ops.m_index(s, i, c)];
            if (target.empty()) target = CMat(dpq);
            const CMat& nv = spec.povm[v];
            for (int q = 0; q < ops.dim_q; ++q)
                for (int qp = 0; qp < ops.dim_q; ++qp)
                    target(u * ops.dim_q + q, u * ops.dim_q + qp) += nv(q, qp);
        }
    }
    ops.m_sqrt.resize(ops.m_ops.size());
    for (size_t k = 0; k < ops.m_ops.size(); ++k)
        if (!ops.m_ops[k].empty()) ops.m_sqrt[k] = matrix_sqrt(ops.m_ops[k]);

    ops.gamma_ops.assign(ops.n_c, CMat(dpq));
    for (int s = 0; s < ops.n_s; ++s)
        for (int i = 0; i < ops.n_i; ++i)
            for (int c = 0; c < ops.n_c; ++c) {
                const CMat& m = ops.m_op(s, i, c);
                if (!m.empty()) ops.gamma_ops[c] += m;
            }

    CMat psi = outer(ops.source_pure);
    SystemLayout lay{{ops.dim_p, ops.dim_q}};
    ops.alice_marginal = partial_trace(psi, lay, {0});
    return ops;
}

// nu^1 as a dense matrix on P (x) Q (x) S (x) I (x) C; only usable when the
// composite dimension stays inside the dense guard (B92-scale).  The solver
// works on the block form instead.
inline CMat nu1(const ConstraintOperators& ops, const CMat& psi) {
    if (psi.dim() != ops.dim_pq()) throw std::invalid_argument("nu1: psi dimension mismatch");
    long total = static_cast<long>(ops.dim_pq()) * ops.n_s * ops.n_i * ops.n_c;
    if (total > kMaxDim) throw std::invalid_argument("nu1: composite dimension guard exceeded");

    int dpq = ops.dim_pq();
    CMat out(static_cast<int>(total));
    // index ((pq)*nS + s)*nI*nC + i*nC + c ordered as factors [PQ, S, I, C]
    auto idx = [&](int pq, int s, int i, int c) { return ((pq * ops.n_s + s) * ops.n_i + i) * ops.n_c + c; };
    for (int i = 0; i < ops.n_i; ++i)
        for (int c = 0; c < ops.n_c; ++c)
            for (int s = 0; s < ops.n_s; ++s) {
                const CMat& ms = ops.m_sqrt[ops.m_index(s, i, c)];
                if (ms.empty()) continue;
                for (int sp = 0; sp < ops.n_s; ++sp) {
                    const CMat& msp = ops.m_sqrt[ops.m_index(sp, i, c)];
                    if (msp.empty()) continue;
                    CMat block = ms * psi * msp;
                    for (int a = 0; a < dpq; ++a)
                        for (int b = 0; b < dpq; ++b) out(idx(a, s, i, c), idx(b, sp, i, c)) = block(a, b);
                }
            }
    return out;
}

inline SystemLayout nu1_layout(const ConstraintOperators& ops) {
    return SystemLayout{{ops.dim_pq(), ops.n_s, ops.n_i, ops.n_c}};
}

inline StatisticsVector statistics(const ConstraintOperators& ops, const CMat& psi) {
    if (psi.dim() != ops.dim_pq()) throw std::invalid_argument("statistics: psi dimension mismatch");
    StatisticsVector out;
    out.probs.resize(ops.n_c);
    for (int c = 0; c < ops.n_c; ++c) out.probs[c] = trace_product_real(ops.gamma_ops[c], psi);
    return out;
}

inline CMat depolarize(const CMat& rho, double p) {
    CMat out = rho * cx(1.0 - p);
    double fill = p * rho.trace().real() / rho.dim();
    for (int i = 0; i < rho.dim(); ++i) out(i, i) += fill;
    return out;
}

// Honest single-round state: the source-replaced pure state with the
// depolarising channel applied to Bob's share.
inline CMat honest_state(const ConstraintOperators& ops, double p) {
    CMat psi = outer(ops.source_pure);
    int dp = ops.dim_p, dq = ops.dim_q;
    // apply 1_P (x) D_p blockwise on the Q factor
    CMat out = psi * cx(1.0 - p);
    for (int u = 0; u < dp; ++u)
        for (int up = 0; up < dp; ++up) {
            cx block_tr = 0;
            for (int q = 0; q < dq; ++q) block_tr += psi(u * dq + q, up * dq + q);
            if (u == up || block_tr != cx{}) {
                cx fill = p * block_tr / static_cast<double>(dq);
                for (int q = 0; q < dq; ++q) out(u * dq + q, up * dq + q) += fill;
            }
        }
    return out;
}

// Statistics of the honest depolarised implementation together with the
// error-correction entropy H(S|VI) of its single-round cq-state.
inline std::pair<StatisticsVector, double> honest_model(const ProtocolSpec& spec, double p) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("honest_model: p outside [0,1]");
    ConstraintOperators ops = source_replacement(spec);
    CMat hon = honest_state(ops, p);
    StatisticsVector stats = statistics(ops, hon);

    // classical joint over (s, v, i)
    std::vector<double> joint(static_cast<size_t>(spec.n_s()) * spec.n_v() * spec.n_i(), 0.0);
    for (int u = 0; u < spec.n_u(); ++u) {
        CMat rho_u = depolarize(outer(spec.source_state[u]), p);
        for (int v = 0; v < spec.n_v(); ++v) {
            double pv = spec.source_prob[u] * trace_product_real(spec.povm[v], rho_u);
            int i = spec.pd[u][v];
            int s = spec.rk[u][i];
            joint[(static_cast<size_t>(s) * spec.n_v() + v) * spec.n_i() + i] += pv;
        }
    }
    auto shannon = [](const std::vector<double>& q) {
        double h = 0;
        for (double x : q)
            if (x > 1e-15) h -= x * std::log2(x);
        return h;
    };
    std::vector<double> marg_vi(static_cast<size_t>(spec.n_v()) * spec.n_i(), 0.0);
    for (int s = 0; s < spec.n_s(); ++s)
        for (int v = 0; v < spec.n_v(); ++v)
            for (int i = 0; i < spec.n_i(); ++i)
                marg_vi[static_cast<size_t>(v) * spec.n_i() + i] +=
                    joint[(static_cast<size_t>(s) * spec.n_v() + v) * spec.n_i() + i];
    double h_sv = shannon(joint) - shannon(marg_vi);
    return {stats, h_sv};
}

// ---------------------------------------------------------------------------
// Presets

inline ProtocolSpec b92_preset(double gamma) {
    if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("b92_preset: gamma outside (0,1]");
    ProtocolSpec s;
    s.gamma = gamma;
    s.u_labels = {"0", "1"};
    s.v_labels = {"0|t0", "1|t0", "inc|t0", "0|t1", "1|t1", "inc|t1"};
    s.i_labels = {"conclusive", "discard"};
    s.s_labels = {"0", "1", "perp"};
    s.c_labels = {"fail", "inc", "pass", "skip"};

    double r = 1.0 / std::sqrt(2.0);
    s.source_prob = {0.5, 0.5};
    s.source_state = {{1.0, 0.0}, {r, r}};

    CMat minus(2), one(2), inc(2);
    minus(0, 0) = 0.5;
    minus(0, 1) = -0.5;
    minus(1, 0) = -0.5;
    minus(1, 1) = 0.5;
    minus *= cx(0.5);  // (1/2)|-><-|
    one(1, 1) = 0.5;   // (1/2)|1><1|
    inc = CMat::identity(2) - minus - one;  // (1/2)(|0><0| + |+><+|)

    s.povm.resize(6);
    const CMat base[3] = {minus, one, inc};
    for (int v = 0; v < 3; ++v) {
        s.povm[v] = base[v] * cx(1.0 - gamma);
        s.povm[v + 3] = base[v] * cx(gamma);
    }

    // pd: discard iff the physical outcome was inconclusive
    s.pd.assign(2, std::vector<int>(6));
    for (int u = 0; u < 2; ++u)
        for (int v = 0; v < 6; ++v) s.pd[u][v] = (v % 3 == 2) ? 1 : 0;

    // rk: keep u on conclusive rounds, sift otherwise
    s.rk = {{0, 2}, {1, 2}};

    // ev: tested rounds grade the outcome, untested rounds are skipped
    s.ev.assign(6, std::vector<std::vector<int>>(2, std::vector<int>(3)));
    for (int v = 0; v < 6; ++v)
        for (int i = 0; i < 2; ++i)
            for (int st = 0; st < 3; ++st) {
                bool tested = v >= 3;
                int phys = v % 3;
                int c;
                if (!tested)
                    c = 3;  // skip
                else if ((st == 0 && phys == 1) || (st == 1 && phys == 0))
                    c = 0;  // fail
                else if (phys == 2)
                    c = 1;  // inc
                else
                    c = 2;  // pass
                s.ev[v][i][st] = c;
            }
    return s;
}

inline ProtocolSpec bb84_preset(double gamma) {
    if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("bb84_preset: gamma outside (0,1]");
    ProtocolSpec s;
    s.gamma = gamma;
    for (int x = 0; x < 2; ++x)
        for (int a = 0; a < 2; ++a) s.u_labels.push_back("x" + std::to_string(x) + "a" + std::to_string(a));
    for (int t = 0; t < 2; ++t)
        for (int y = 0; y < 2; ++y)
            for (int b = 0; b < 2; ++b)
                s.v_labels.push_back("y" + std::to_string(y) + "b" + std::to_string(b) + "|t" + std::to_string(t));
    for (int x = 0; x < 2; ++x)
        for (int y = 0; y < 2; ++y) s.i_labels.push_back("x" + std::to_string(x) + "y" + std::to_string(y));
    s.s_labels = {"0", "1", "perp"};
    s.c_labels = {"pass", "fail", "skip"};

    double r = 1.0 / std::sqrt(2.0);
    s.source_prob = {0.25, 0.25, 0.25, 0.25};
    s.source_state = {{1.0, 0.0}, {0.0, 1.0}, {r, r}, {r, -r}};  // |0>,|1>,|+>,|->

    auto proj = [&](int y, int b) {
        std::vector<cx> v;
        if (y == 0)
            v = (b == 0) ? std::vector<cx>{1.0, 0.0} : std::vector<cx>{0.0, 1.0};
        else
            v = (b == 0) ? std::vector<cx>{r, r} : std::vector<cx>{r, -r};
        return outer(v);
    };
    for (int t = 0; t < 2; ++t)
        for (int y = 0; y < 2; ++y)
            for (int b = 0; b < 2; ++b) {
                double w = 0.5 * (t == 0 ? (1.0 - gamma) : gamma);
                s.povm.push_back(proj(y, b) * cx(w));
            }

    auto u_index = [](int x, int a) { return 2 * x + a; };
    auto v_index = [](int t, int y, int b) { return 4 * t + 2 * y + b; };
    auto i_index = [](int x, int y) { return 2 * x + y; };

    s.pd.assign(4, std::vector<int>(8));
    for (int x = 0; x < 2; ++x)
        for (int a = 0; a < 2; ++a)
            for (int t = 0; t < 2; ++t)
                for (int y = 0; y < 2; ++y)
                    for (int b = 0; b < 2; ++b) s.pd[u_index(x, a)][v_index(t, y, b)] = i_index(x, y);

    s.rk.assign(4, std::vector<int>(4));
    for (int x = 0; x < 2; ++x)
        for (int a = 0; a < 2; ++a)
            for (int xi = 0; xi < 2; ++xi)
                for (int yi = 0; yi < 2; ++yi) s.rk[u_index(x, a)][i_index(xi, yi)] = (xi == yi) ? a : 2;

    s.ev.assign(8, std::vector<std::vector<int>>(4, std::vector<int>(3)));
    for (int t = 0; t < 2; ++t)
        for (int y = 0; y < 2; ++y)
            for (int b = 0; b < 2; ++b)
                for (int xi = 0; xi < 2; ++xi)
                    for (int yi = 0; yi < 2; ++yi)
                        for (int st = 0; st < 3; ++st) {
                            int c;
                            if (xi != yi || t == 0)
                                c = 2;  // skip
                            else if (st < 2 && b == st)
                                c = 0;  // pass
                            else
                                c = 1;  // fail
                            s.ev[v_index(t, y, b)][i_index(xi, yi)][st] = c;
                        }
    return s;
}

}  // namespace qkd
