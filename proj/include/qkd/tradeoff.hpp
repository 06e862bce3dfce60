#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "qkd/entropy.hpp"
#include "qkd/matrix.hpp"
#include "qkd/protocol.hpp"

namespace qkd {

// Affine collective-attack bound CA(nu_C) = lambda . nu_C + c_offset with the
// cached simplex properties the accumulation bounds consume.
struct TradeoffFunction {
    std::vector<std::string> alphabet;
    std::vector<double> lambda;
    double c_offset = 0.0;
    double max_val = 0.0;       // max over point distributions
    double min_val = 0.0;       // min over point distributions
    double min_sigma_lb = 0.0;  // lower bound on the min over achievable statistics
    double var_ub = 0.0;        // upper bound on the variance over achievable statistics

    double evaluate(const std::vector<double>& stats) const {
        if (stats.size() != lambda.size()) throw std::invalid_argument("TradeoffFunction: statistics size mismatch");
        double v = c_offset;
        for (size_t k = 0; k < lambda.size(); ++k) v += lambda[k] * stats[k];
        return v;
    }
    double evaluate(const StatisticsVector& stats) const { return evaluate(stats.probs); }

    // lambda + offset with the simplex extremes filled in; the variance bound
    // is Popoviciu's (max-min)^2/4, valid for any achievable set
    static TradeoffFunction from_affine(std::vector<std::string> alphabet, std::vector<double> lambda, double c) {
        TradeoffFunction tf;
        tf.alphabet = std::move(alphabet);
        tf.lambda = std::move(lambda);
        tf.c_offset = c;
        double mx = -std::numeric_limits<double>::infinity();
        double mn = std::numeric_limits<double>::infinity();
        for (double l : tf.lambda) {
            mx = std::max(mx, l + c);
            mn = std::min(mn, l + c);
        }
        tf.max_val = mx;
        tf.min_val = mn;
        tf.min_sigma_lb = mn;
        tf.var_ub = 0.25 * (mx - mn) * (mx - mn);
        return tf;
    }
};

struct SolveReport {
    double upper_value = 0.0;      // objective at the best feasible point
    double certified_lower = 0.0;  // duality-certified lower bound on the infimum
    double gap = 0.0;              // upper_value - certified_lower
    int iterations = 0;
    double perturbation_penalty = 0.0;
    std::vector<double> trace;  // objective value per accepted iterate
};

namespace solver_detail {

// |delta H| <= d eta(2 eps / d) per entropy term (Lidskii + concavity of eta);
// two entropy terms appear in D(rho || pinch(rho)) = H(pinch rho) - H(rho).
inline double perturbation_penalty(double eps, int total_dim) {
    if (eps <= 0.0) return 0.0;
    double d = std::max(2, total_dim);
    double x = 2.0 * eps / d;
    return 2.0 * d * (-x * std::log2(x));
}

inline double eig_min(const CMat& m) { return eig_hermitian(m, false).values.front(); }

// log2 on the support; eigenvalues at or below the floor contribute nothing
inline CMat pseudo_log2(const CMat& m) {
    EigResult e = eig_hermitian(m);
    std::vector<double> f(e.values.size(), 0.0);
    for (size_t k = 0; k < e.values.size(); ++k)
        if (e.values[k] > kEigFloor) f[k] = std::log2(e.values[k]);
    return detail::recompose(e, f);
}

}  // namespace solver_detail

// ---------------------------------------------------------------------------
// Linear subproblem: certified minimum of tr(w psi) over the feasible set
// { psi >= 0, Tr_Q psi = marginal }.  Any dual candidate Y on P becomes
// feasible after the eigenvalue shift mu = lambda_min(w - Y (x) 1_Q), so the
// returned bound tr(marginal (Y + mu 1)) is always valid.

struct LinearBound {
    double bound = 0.0;
    CMat minimizer;     // feasible primal point, near-optimal when duality is tight
    CMat dual_witness;  // Y + mu 1 on P, satisfies w - witness (x) 1 >= 0
};

namespace solver_detail {

inline double dual_value(const CMat& w, const CMat& marginal, const CMat& y, int dq, double* mu_out = nullptr) {
    CMat z = w - tensor(y, CMat::identity(dq));
    double mu = eig_min(z);
    if (mu_out) *mu_out = mu;
    return trace_product_real(marginal, y) + mu;
}

// Feasible point with near-minimal excess tr(z psi): FISTA on
// || Tr_Q psi - marginal ||_F^2 + w tr(z psi) over psi >= 0 with a decreasing
// penalty weight, then an exact marginal repair.
inline CMat primal_recovery(const CMat& z, const CMat& marginal, int dp, int dq) {
    int n = dp * dq;
    SystemLayout lay{{dp, dq}};
    CMat eye_q = CMat::identity(dq);
    CMat canon = tensor(marginal, eye_q * cx(1.0 / dq));
    double zscale = std::max(z.max_abs(), 1e-12);

    auto psd_project = [&](const CMat& x) {
        EigResult e = eig_hermitian(x.hermitized());
        std::vector<double> f(e.values.size());
        bool clamped = false;
        for (size_t i = 0; i < f.size(); ++i) {
            f[i] = std::max(0.0, e.values[i]);
            clamped |= e.values[i] < 0.0;
        }
        return clamped ? detail::recompose(e, f) : x;
    };

    CMat psi = canon;
    const double step = 1.0 / (2.0 * dq);
    for (double w : {3e-2, 1e-4, 0.0}) {
        CMat zt = z * cx(w / zscale);
        CMat x = psi, yv = psi;
        double tprev = 1.0;
        for (int it = 0; it < 170; ++it) {
            CMat r = partial_trace(yv, lay, {0}) - marginal;
            if (w == 0.0 && r.frobenius_norm() < 1e-12 && it > 3) break;
            CMat g = tensor(r, eye_q) * cx(2.0) + zt;
            CMat xn = psd_project(yv - g * cx(step));
            double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tprev * tprev));
            yv = xn + (xn - x) * cx((tprev - 1.0) / tn);
            x = xn;
            tprev = tn;
        }
        psi = x;
    }

    // exact marginal repair, then a minimal mix toward the canonical
    // completion if the repair dips below the PSD cone
    CMat diff = marginal - partial_trace(psi, lay, {0});
    psi += tensor(diff, eye_q * cx(1.0 / dq));
    psi = psi.hermitized();
    double emin = eig_min(psi);
    if (emin < 0) {
        double m0 = eig_min(canon);
        double theta = std::min(1.0, 1.0000001 * (-emin) / (m0 - emin));
        psi = psi * cx(1.0 - theta) + canon * cx(theta);
    }
    (void)n;
    return psi;
}

// Direct ADMM solve of min tr(w psi) over { psi >= 0, Tr_Q psi = marginal };
// does not depend on any dual candidate.
inline CMat primal_lp_admm(const CMat& w, const CMat& marginal, int dp, int dq, int max_iter = 800) {
    SystemLayout lay{{dp, dq}};
    CMat eye_q = CMat::identity(dq);
    CMat canon = tensor(marginal, eye_q * cx(1.0 / dq));

    auto proj_affine = [&](const CMat& m) {
        CMat d = marginal - partial_trace(m, lay, {0});
        return m + tensor(d, eye_q * cx(1.0 / dq));
    };
    auto proj_psd = [&](const CMat& m) {
        EigResult e = eig_hermitian(m.hermitized());
        std::vector<double> f(e.values.size());
        for (size_t i = 0; i < f.size(); ++i) f[i] = std::max(0.0, e.values[i]);
        return detail::recompose(e, f);
    };

    double tau = 1.0 / std::max(w.frobenius_norm(), 1e-12);
    CMat z = canon, u(dp * dq), x(dp * dq);
    for (int it = 0; it < max_iter; ++it) {
        CMat xn = proj_affine(z - u - w * cx(tau));
        CMat zn = proj_psd(xn + u);
        u += xn - zn;
        double gap = (xn - zn).frobenius_norm();
        x = xn;
        z = zn;
        if (gap < 1e-11 && it > 20) break;
    }

    CMat psi = proj_affine(z).hermitized();
    double emin = eig_min(psi);
    if (emin < 0) {
        double m0 = eig_min(canon);
        double theta = std::min(1.0, 1.0000001 * (-emin) / (m0 - emin));
        psi = psi * cx(1.0 - theta) + canon * cx(theta);
    }
    return psi;
}

}  // namespace solver_detail

// Low effort reuses a warm dual candidate with a short polish; high effort
// runs the full temperature ladder plus a coordinate sweep.  Either way the
// eigenvalue shift keeps the returned bound valid.
struct LinearBoundOpts {
    const CMat* warm_dual = nullptr;  // on P (full space, pre-compression)
    bool high_effort = true;
};

namespace solver_detail {
inline LinearBound lin_lower_bound_fullrank(const CMat& w, const CMat& marginal, const LinearBoundOpts& opts);
}

// Feasible states are supported inside supp(marginal) (x) Q, so a
// rank-deficient marginal first gets compressed onto its support; there the
// dual is attained and the certificate is tight.
inline LinearBound lin_lower_bound(const CMat& w, const CMat& marginal, const LinearBoundOpts& opts = {}) {
    int dp = marginal.dim();
    if (dp <= 0 || w.dim() % dp != 0) throw std::invalid_argument("lin_lower_bound: dimension mismatch");
    int dq = w.dim() / dp;
    int n = w.dim();
    if (!w.is_hermitian(1e-9 * std::max(1.0, w.max_abs()) * n))
        throw std::invalid_argument("lin_lower_bound: w not Hermitian");

    EigResult em = eig_hermitian(marginal);
    double mtop = std::max(std::abs(em.values.back()), 1e-300);
    int rank = 0;
    for (double v : em.values)
        if (v > 1e-11 * mtop) ++rank;
    if (rank < dp) {
        // support basis: columns of U_r are the eigenvectors above the cutoff
        CMat ur(dp);  // dp x dp, only first `rank` columns used
        std::vector<double> mvals;
        int col = 0;
        for (int k = 0; k < dp; ++k) {
            if (em.values[k] <= 1e-11 * mtop) continue;
            for (int i = 0; i < dp; ++i) ur(i, col) = em.vectors(i, k);
            mvals.push_back(em.values[k]);
            ++col;
        }
        CMat marg_r(rank);
        for (int k = 0; k < rank; ++k) marg_r(k, k) = mvals[k];
        // W_r = (U_r (x) 1)^dag W (U_r (x) 1)
        CMat w_r(rank * dq);
        for (int a = 0; a < rank; ++a)
            for (int b = 0; b < rank; ++b)
                for (int qa = 0; qa < dq; ++qa)
                    for (int qb = 0; qb < dq; ++qb) {
                        cx acc = 0;
                        for (int i = 0; i < dp; ++i)
                            for (int j = 0; j < dp; ++j)
                                acc += std::conj(ur(i, a)) * w(i * dq + qa, j * dq + qb) * ur(j, b);
                        w_r(a * dq + qa, b * dq + qb) = acc;
                    }
        LinearBoundOpts ropts = opts;
        CMat warm_r;
        if (opts.warm_dual) {
            warm_r = CMat(rank);
            for (int a = 0; a < rank; ++a)
                for (int b = 0; b < rank; ++b) {
                    cx acc = 0;
                    for (int i = 0; i < dp; ++i)
                        for (int j = 0; j < dp; ++j)
                            acc += std::conj(ur(i, a)) * (*opts.warm_dual)(i, j) * ur(j, b);
                    warm_r(a, b) = acc;
                }
            warm_r = warm_r.hermitized();  // the null-space weight cancels only up to roundoff
            ropts.warm_dual = &warm_r;
        }
        LinearBound red = solver_detail::lin_lower_bound_fullrank(w_r.hermitized(), marg_r, ropts);

        LinearBound out;
        // embed the minimizer back into the full space
        out.minimizer = CMat(n);
        for (int i = 0; i < dp; ++i)
            for (int j = 0; j < dp; ++j)
                for (int qa = 0; qa < dq; ++qa)
                    for (int qb = 0; qb < dq; ++qb) {
                        cx acc = 0;
                        for (int a = 0; a < rank; ++a)
                            for (int b = 0; b < rank; ++b)
                                acc += ur(i, a) * red.minimizer(a * dq + qa, b * dq + qb) * std::conj(ur(j, b));
                        out.minimizer(i * dq + qa, j * dq + qb) = acc;
                    }
        out.minimizer = out.minimizer.hermitized();
        // embed the witness with a large negative weight on the null space,
        // then re-shift so the returned witness is exactly dual feasible
        double t_null = 1e9 * std::max(1.0, w.max_abs());
        CMat y(dp);
        for (int i = 0; i < dp; ++i)
            for (int j = 0; j < dp; ++j) {
                cx acc = 0;
                for (int a = 0; a < rank; ++a)
                    for (int b = 0; b < rank; ++b) acc += ur(i, a) * red.dual_witness(a, b) * std::conj(ur(j, b));
                // -t_null on the orthogonal complement
                cx comp = (i == j ? cx(1.0) : cx(0.0));
                for (int a = 0; a < rank; ++a) comp -= ur(i, a) * std::conj(ur(j, a));
                y(i, j) = acc - t_null * comp;
            }
        double mu = solver_detail::eig_min((w - tensor(y, CMat::identity(dq))).hermitized());
        out.dual_witness = y;
        for (int i = 0; i < dp; ++i) out.dual_witness(i, i) += mu;
        out.bound = trace_product_real(marginal, out.dual_witness);
        return out;
    }
    return solver_detail::lin_lower_bound_fullrank(w, marginal, opts);
}

namespace solver_detail {

inline LinearBound lin_lower_bound_fullrank(const CMat& w, const CMat& marginal, const LinearBoundOpts& opts) {
    int dp = marginal.dim();
    int dq = w.dim() / dp;
    int n = w.dim();

    // block-wise partial minimum as the starting dual candidate
    CMat y(dp);
    for (int p = 0; p < dp; ++p) {
        CMat block(dq);
        for (int a = 0; a < dq; ++a)
            for (int b = 0; b < dq; ++b) block(a, b) = w(p * dq + a, p * dq + b);
        y(p, p) = solver_detail::eig_min(block.hermitized());
    }

    double scale = std::max(1.0, w.max_abs());
    double best = -std::numeric_limits<double>::infinity();
    CMat best_y = y;
    auto consider = [&](const CMat& cand) {
        double v = solver_detail::dual_value(w, marginal, cand, dq);
        if (v > best) {
            best = v;
            best_y = cand;
        }
        return v;
    };
    consider(y);
    if (opts.warm_dual && opts.warm_dual->dim() == dp) consider(opts.warm_dual->hermitized());
    if (opts.high_effort) consider(CMat(dp));  // Y = 0 fallback, bound = lambda_min(w)

    // ascent on Y -> tr(marginal Y) + lambda_min(w - Y x 1); the eigenvalue
    // floor is smoothed by a softmin with a decreasing temperature, which
    // handles the degenerate bottom eigenspace at the optimum
    SystemLayout lay{{dp, dq}};
    auto smoothed = [&](const CMat& yc, double mu, CMat* grad_out) {
        CMat z = w - tensor(yc, CMat::identity(dq));
        EigResult e = eig_hermitian(z, grad_out != nullptr);
        double lmin = e.values.front();
        double norm = 0.0;
        std::vector<double> wts(n);
        for (int i = 0; i < n; ++i) {
            wts[i] = std::exp(-(e.values[i] - lmin) / mu);
            norm += wts[i];
        }
        if (grad_out) {
            CMat agg(n);
            for (int k = 0; k < n; ++k) {
                double wk = wts[k] / norm;
                if (wk < 1e-14) continue;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) agg(i, j) += wk * e.vectors(i, k) * std::conj(e.vectors(j, k));
            }
            *grad_out = marginal - partial_trace(agg, lay, {0});
        }
        return trace_product_real(marginal, yc) + lmin - mu * std::log(norm);
    };

    std::vector<double> ladder;
    int steps_per_level;
    if (opts.high_effort) {
        ladder = {0.3 * scale, 0.06 * scale, 0.012 * scale, 2.5e-3 * scale, 5e-4 * scale};
        steps_per_level = 30;
    } else {
        ladder = {6e-3 * scale, 8e-4 * scale};
        steps_per_level = 12;
    }
    CMat cur = best_y;
    for (double mu : ladder) {
        double step = opts.high_effort ? 0.5 * scale : 0.05 * scale;
        CMat grad;
        double fcur = smoothed(cur, mu, &grad);
        for (int k = 0; k < steps_per_level; ++k) {
            CMat cand = cur + grad * cx(step);
            CMat gnew;
            double fnew = smoothed(cand, mu, &gnew);
            if (fnew > fcur) {
                cur = cand;
                fcur = fnew;
                grad = gnew;
                step *= 1.3;
            } else {
                step *= 0.5;
                if (step < 1e-11 * scale) break;
            }
        }
        consider(cur);
    }

    if (opts.high_effort) {
        // deterministic coordinate polish around the best candidate
        double delta = 0.1 * scale;
        for (int sweep = 0; sweep < 5; ++sweep, delta *= 0.35) {
            bool moved = false;
            for (int p = 0; p < dp; ++p)
                for (int q = p; q < dp; ++q) {
                    int reim_max = (p == q) ? 1 : 2;
                    for (int reim = 0; reim < reim_max; ++reim) {
                        for (double sgn : {+1.0, -1.0}) {
                            CMat cand = best_y;
                            cx bump = (reim == 0) ? cx(sgn * delta, 0) : cx(0, sgn * delta);
                            cand(p, q) += bump;
                            if (p != q) cand(q, p) += std::conj(bump);
                            double prev = best;
                            consider(cand);
                            moved |= best > prev;
                        }
                    }
                }
            if (!moved && sweep >= 1) break;
        }
    }

    double mu = 0.0;
    solver_detail::dual_value(w, marginal, best_y, dq, &mu);
    LinearBound out;
    out.dual_witness = best_y;
    for (int p = 0; p < dp; ++p) out.dual_witness(p, p) += mu;
    out.bound = trace_product_real(marginal, out.dual_witness);

    // primal recovery biased into the kernel of the shifted operator; if the
    // kernel route leaves a material excess over the bound, fall back to a
    // direct ADMM solve of the subproblem
    CMat z = (w - tensor(out.dual_witness, CMat::identity(dq))).hermitized();
    out.minimizer = solver_detail::primal_recovery(z, marginal, dp, dq);
    double excess = trace_product_real(w, out.minimizer) - out.bound;
    if (excess > 1e-6 * scale) {
        CMat alt = solver_detail::primal_lp_admm(w, marginal, dp, dq);
        if (trace_product_real(w, alt) < trace_product_real(w, out.minimizer)) out.minimizer = alt;
    }
    return out;
}

}  // namespace solver_detail

// ---------------------------------------------------------------------------
// Objective machinery.  nu^1 is kept in block form: the (i,c) blocks are the
// only nonzero ones, each spanning the raw-key symbols with nonzero M^(s,i,c).

namespace solver_detail {

struct BlockStructure {
    struct Block {
        int i = 0, c = 0;
        std::vector<int> s_list;
    };
    std::vector<Block> blocks;
    int dpq = 0;
    int total_dim = 0;

    static BlockStructure build(const ConstraintOperators& ops) {
        BlockStructure bs;
        bs.dpq = ops.dim_pq();
        for (int i = 0; i < ops.n_i; ++i)
            for (int c = 0; c < ops.n_c; ++c) {
                Block b;
                b.i = i;
                b.c = c;
                for (int s = 0; s < ops.n_s; ++s)
                    if (!ops.m_op(s, i, c).empty()) b.s_list.push_back(s);
                if (!b.s_list.empty()) {
                    bs.total_dim += static_cast<int>(b.s_list.size()) * bs.dpq;
                    bs.blocks.push_back(std::move(b));
                }
            }
        return bs;
    }
};

using BlockMats = std::vector<CMat>;  // one matrix per structure block

inline BlockMats apply_nu1(const ConstraintOperators& ops, const BlockStructure& bs, const CMat& psi) {
    BlockMats out;
    out.reserve(bs.blocks.size());
    int d = bs.dpq;
    for (const auto& b : bs.blocks) {
        int ns = static_cast<int>(b.s_list.size());
        CMat m(ns * d);
        std::vector<CMat> right;  // psi * sqrtM_s'
        right.reserve(ns);
        for (int bcol = 0; bcol < ns; ++bcol) right.push_back(psi * ops.m_sqrt[ops.m_index(b.s_list[bcol], b.i, b.c)]);
        for (int brow = 0; brow < ns; ++brow) {
            const CMat& lsq = ops.m_sqrt[ops.m_index(b.s_list[brow], b.i, b.c)];
            for (int bcol = 0; bcol < ns; ++bcol) {
                CMat prod = lsq * right[bcol];
                for (int a = 0; a < d; ++a)
                    for (int bb = 0; bb < d; ++bb) m(brow * d + a, bcol * d + bb) = prod(a, bb);
            }
        }
        out.push_back(m.hermitized());
    }
    return out;
}

inline BlockMats blend(const BlockMats& a, const BlockMats& b, double t) {
    BlockMats out = a;
    for (size_t k = 0; k < out.size(); ++k) {
        out[k] *= cx(1.0 - t);
        out[k] += b[k] * cx(t);
    }
    return out;
}

// D(nu || pinch_S nu) = H(pinch_S nu) - H(nu), from eigenvalues only
inline double pinched_relative_entropy(const BlockStructure& bs, const BlockMats& mats) {
    double h_full = 0.0, h_pinched = 0.0;
    int d = bs.dpq;
    for (size_t k = 0; k < mats.size(); ++k) {
        const CMat& m = mats[k];
        h_full += von_neumann_entropy(eig_hermitian(m, false).values);
        int ns = static_cast<int>(bs.blocks[k].s_list.size());
        for (int s = 0; s < ns; ++s) {
            CMat sub(d);
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) sub(a, b) = m(s * d + a, s * d + b);
            h_pinched += von_neumann_entropy(eig_hermitian(sub.hermitized(), false).values);
        }
    }
    return h_pinched - h_full;
}

// adjoint of the nu^1 map contracted with (log nu - log pinch nu)
inline CMat nu1_adjoint_log_term(const ConstraintOperators& ops, const BlockStructure& bs, const BlockMats& mats) {
    int d = bs.dpq;
    CMat out(d);
    for (size_t k = 0; k < mats.size(); ++k) {
        const auto& blk = bs.blocks[k];
        int ns = static_cast<int>(blk.s_list.size());
        CMat logm = pseudo_log2(mats[k]);
        // subtract the pinched log on the diagonal s-blocks
        for (int s = 0; s < ns; ++s) {
            CMat sub(d);
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) sub(a, b) = mats[k](s * d + a, s * d + b);
            CMat logsub = pseudo_log2(sub.hermitized());
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) logm(s * d + a, s * d + b) -= logsub(a, b);
        }
        for (int srow = 0; srow < ns; ++srow) {
            const CMat& ls = ops.m_sqrt[ops.m_index(blk.s_list[srow], blk.i, blk.c)];
            for (int scol = 0; scol < ns; ++scol) {
                const CMat& rs = ops.m_sqrt[ops.m_index(blk.s_list[scol], blk.i, blk.c)];
                CMat x(d);
                for (int a = 0; a < d; ++a)
                    for (int b = 0; b < d; ++b) x(a, b) = logm(srow * d + a, scol * d + b);
                out += ls * x * rs;
            }
        }
    }
    return out.hermitized();
}

}  // namespace solver_detail

// Full convex objective D(nu^1(psi_eps) || pinch_S nu^1(psi_eps)) - lambda . nu_C(psi)
// with the entropy factor evaluated at psi_eps = (1-eps) psi + eps 1/d.
class TradeoffProblem {
public:
    TradeoffProblem(const ConstraintOperators& ops, std::vector<double> lambda, double eps_pert = 1e-10)
        : ops_(&ops), lambda_(std::move(lambda)), eps_(eps_pert), bs_(solver_detail::BlockStructure::build(ops)) {
        if (lambda_.size() != static_cast<size_t>(ops.n_c))
            throw std::invalid_argument("TradeoffProblem: lambda size mismatch");
        CMat mixed = CMat::identity(ops.dim_pq()) * cx(1.0 / ops.dim_pq());
        mix_blocks_ = solver_detail::apply_nu1(ops, bs_, mixed);
        lambda_gamma_ = CMat(ops.dim_pq());
        for (int c = 0; c < ops.n_c; ++c) lambda_gamma_ += ops.gamma_ops[c] * cx(lambda_[c]);
    }

    int dim() const { return ops_->dim_pq(); }
    const CMat& marginal() const { return ops_->alice_marginal; }
    const ConstraintOperators& ops() const { return *ops_; }
    const std::vector<double>& lambda() const { return lambda_; }

    double perturbation_penalty() const { return solver_detail::perturbation_penalty(eps_, bs_.total_dim); }

    CMat start_point() const { return tensor(ops_->alice_marginal, CMat::identity(ops_->dim_q) * cx(1.0 / ops_->dim_q)); }

    double value(const CMat& psi) const {
        auto blocks = perturbed_blocks(psi);
        return solver_detail::pinched_relative_entropy(bs_, blocks) - lambda_dot_stats(psi);
    }

    std::pair<double, CMat> value_and_grad(const CMat& psi) const {
        auto blocks = perturbed_blocks(psi);
        double val = solver_detail::pinched_relative_entropy(bs_, blocks) - lambda_dot_stats(psi);
        CMat grad = solver_detail::nu1_adjoint_log_term(*ops_, bs_, blocks) * cx(1.0 - eps_) - lambda_gamma_;
        // D = H(pinch) - H(full): the adjoint term above is log nu - log pinch nu,
        // which is the gradient of -H(full) + H(pinch) contracted correctly
        return {val, grad.hermitized()};
    }

    // callable phi(t) along psi + t (v - psi), sharing precomputed blocks
    std::function<double(double)> segment(const CMat& psi, const CMat& v) const {
        auto bp = perturbed_blocks(psi);
        auto bv = perturbed_blocks(v);
        double sp = lambda_dot_stats(psi), sv = lambda_dot_stats(v);
        const auto* bsp = &bs_;
        return [bp, bv, sp, sv, bsp](double t) {
            auto mixed = solver_detail::blend(bp, bv, t);
            return solver_detail::pinched_relative_entropy(*bsp, mixed) - ((1.0 - t) * sp + t * sv);
        };
    }

    double lambda_dot_stats(const CMat& psi) const { return trace_product_real(lambda_gamma_, psi); }

private:
    solver_detail::BlockMats perturbed_blocks(const CMat& psi) const {
        auto raw = solver_detail::apply_nu1(*ops_, bs_, psi);
        return solver_detail::blend(raw, mix_blocks_, eps_);
    }

    const ConstraintOperators* ops_;
    std::vector<double> lambda_;
    double eps_;
    solver_detail::BlockStructure bs_;
    solver_detail::BlockMats mix_blocks_;
    CMat lambda_gamma_;
};

// (value, gradient) of the full objective at psi
inline std::pair<double, CMat> objective(const ConstraintOperators& ops, const std::vector<double>& lambda,
                                          const CMat& psi) {
    TradeoffProblem pb(ops, lambda);
    return pb.value_and_grad(psi);
}

// ---------------------------------------------------------------------------
// Frank-Wolfe with golden-section line search and a duality-certified gap.

namespace solver_detail {

inline double golden_min(const std::function<double(double)>& f, double lo, double hi, int iters) {
    const double inv_phi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int k = 0; k < iters; ++k) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    return (f1 <= f2) ? x1 : x2;
}

inline void repair_feasible(CMat& psi, const CMat& marginal, int dq) {
    SystemLayout lay{{marginal.dim(), dq}};
    CMat diff = marginal - partial_trace(psi, lay, {0});
    if (diff.max_abs() > 1e-15) psi += tensor(diff, CMat::identity(dq) * cx(1.0 / dq));
    double emin = eig_min(psi);
    if (emin < 0) {
        CMat canon = tensor(marginal, CMat::identity(dq) * cx(1.0 / dq));
        double m0 = eig_min(canon);
        double theta = std::min(1.0, 1.1 * (-emin) / (m0 - emin));
        psi = psi * cx(1.0 - theta) + canon * cx(theta);
    }
    psi = psi.hermitized();
}

}  // namespace solver_detail

template <typename Problem>
inline SolveReport frank_wolfe(const Problem& pb, double tol, int max_iter, CMat* psi_out = nullptr) {
    CMat psi = pb.start_point();
    int dq = pb.dim() / pb.marginal().dim();

    SolveReport rep;
    rep.perturbation_penalty = pb.perturbation_penalty();
    double best_val = std::numeric_limits<double>::infinity();
    double best_cert = -std::numeric_limits<double>::infinity();
    CMat best_psi = psi;
    CMat warm_dual;

    for (int it = 0; it < max_iter; ++it) {
        auto [val, grad] = pb.value_and_grad(psi);
        if (val < best_val) {
            best_val = val;
            best_psi = psi;
        }
        rep.trace.push_back(val);
        rep.iterations = it + 1;

        LinearBoundOpts opts;
        opts.high_effort = (it < 3) || (it % 10 == 0);
        if (!warm_dual.empty()) opts.warm_dual = &warm_dual;
        LinearBound lb = lin_lower_bound(grad, pb.marginal(), opts);
        double fw_gap = trace_product_real(grad, psi) - lb.bound;
        if (fw_gap <= 3.0 * tol && !opts.high_effort) {
            // confirm the near-converged gap with a full-effort bound
            opts.high_effort = true;
            lb = lin_lower_bound(grad, pb.marginal(), opts);
            fw_gap = trace_product_real(grad, psi) - lb.bound;
        }
        warm_dual = lb.dual_witness;
        best_cert = std::max(best_cert, val - std::max(fw_gap, 0.0));
        if (fw_gap <= tol) break;

        auto phi = pb.segment(psi, lb.minimizer);
        double t = solver_detail::golden_min(phi, 0.0, 1.0, 42);
        if (phi(t) > val) {
            // no progress along this direction; tighten with a pure gradient check
            t = solver_detail::golden_min(phi, 0.0, std::min(1.0, 1e-3), 42);
            if (phi(t) > val) break;
        }
        psi = psi * cx(1.0 - t) + lb.minimizer * cx(t);
        if ((it + 1) % 25 == 0) solver_detail::repair_feasible(psi, pb.marginal(), dq);
    }

    rep.upper_value = best_val;
    rep.certified_lower = best_cert - rep.perturbation_penalty;
    rep.gap = rep.upper_value - rep.certified_lower;
    if (psi_out) *psi_out = best_psi;
    return rep;
}

// Certified c_lambda: lower bound on inf_psi D(nu1 || pinch nu1) - lambda . nu_C
// over the feasible set, from the linearisation at the best iterate.
inline std::pair<double, SolveReport> certified_c_lambda(const ConstraintOperators& ops,
                                                         const std::vector<double>& lambda, double tol,
                                                         int max_iter = 2000, CMat* psi_out = nullptr) {
    TradeoffProblem pb(ops, lambda);
    SolveReport rep = frank_wolfe(pb, tol, max_iter, psi_out);
    return {rep.certified_lower, rep};
}

// Full-alphabet tradeoff function from a certified solve at fixed lambda.
inline std::pair<TradeoffFunction, SolveReport> generic_tradeoff(const ConstraintOperators& ops,
                                                                 const std::vector<double>& lambda, double tol,
                                                                 int max_iter = 2000) {
    auto [c, rep] = certified_c_lambda(ops, lambda, tol, max_iter);
    return {TradeoffFunction::from_affine(ops.c_labels, lambda, c), rep};
}

// ---------------------------------------------------------------------------
// Test/data lifting: from a bound g on the test-conditioned statistics to a
// bound on the full statistics with the data symbol appended.
//   CA(delta_c)   = Max g + (g(delta_c) - Max g)/gamma   for test outcomes c
//   CA(delta_data)= Max g
inline TradeoffFunction lift_test_data(const TradeoffFunction& g, double gamma,
                                       const std::string& data_symbol = "skip") {
    if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("lift_test_data: gamma outside (0,1]");
    double mg = g.max_val;
    double mn = g.min_val;

    TradeoffFunction out;
    out.alphabet = g.alphabet;
    out.alphabet.push_back(data_symbol);
    out.lambda.resize(out.alphabet.size());
    for (size_t k = 0; k < g.lambda.size(); ++k) out.lambda[k] = (g.lambda[k] + g.c_offset - mg) / gamma;
    out.lambda.back() = 0.0;
    out.c_offset = mg;
    out.max_val = mg;
    out.min_val = mg + (mn - mg) / gamma;
    out.min_sigma_lb = mn;
    out.var_ub = (mg - mn) * (mg - mn) / gamma;
    return out;
}

// ---------------------------------------------------------------------------
// Reduced B92 objective: the conclusive data-round block rotated down to
// P (x) Q, D(nu~ || pinch_P nu~) - lambda' . nu_test with
// nu~ = (1-gamma) (1 (x) sqrt(1 - N_inc)) psi (1 (x) sqrt(1 - N_inc)).

class B92ReducedProblem {
public:
    B92ReducedProblem(const ConstraintOperators& ops, const ProtocolSpec& spec, std::vector<double> lambda_test,
                      double eps_pert = 1e-10)
        : marginal_(ops.alice_marginal), gamma_(spec.gamma), lambda_(std::move(lambda_test)), eps_(eps_pert) {
        if (spec.s_labels.size() != 3 || spec.dim_q() != 2 || spec.n_u() != 2)
            throw std::invalid_argument("B92ReducedProblem: spec is not B92-shaped");
        if (lambda_.size() != 3) throw std::invalid_argument("B92ReducedProblem: lambda over (fail, inc, pass)");

        // unscaled single-outcome POVM elements: tested copies rescaled by gamma
        int v0 = spec.label_index(spec.v_labels, "0|t1");
        int v1 = spec.label_index(spec.v_labels, "1|t1");
        int vinc = spec.label_index(spec.v_labels, "inc|t1");
        CMat n0 = spec.povm[v0] * cx(1.0 / spec.gamma);
        CMat n1 = spec.povm[v1] * cx(1.0 / spec.gamma);
        CMat ninc = spec.povm[vinc] * cx(1.0 / spec.gamma);

        CMat e0(2), e1(2);
        e0(0, 0) = 1.0;
        e1(1, 1) = 1.0;
        test_ops_[0] = tensor(e0, n1) + tensor(e1, n0);                     // fail
        test_ops_[1] = tensor(CMat::identity(2), ninc);                     // inc
        test_ops_[2] = CMat::identity(4) - test_ops_[0] - test_ops_[1];     // pass
        k_op_ = tensor(CMat::identity(2), matrix_sqrt(CMat::identity(2) - ninc));
    }

    int dim() const { return 4; }
    const CMat& marginal() const { return marginal_; }
    double gamma() const { return gamma_; }
    const CMat& test_op(int c) const { return test_ops_[c]; }

    double perturbation_penalty() const { return solver_detail::perturbation_penalty(eps_, 4); }

    CMat start_point() const { return tensor(marginal_, CMat::identity(2) * cx(0.5)); }

    std::vector<double> test_statistics(const CMat& psi) const {
        return {trace_product_real(test_ops_[0], psi), trace_product_real(test_ops_[1], psi),
                trace_product_real(test_ops_[2], psi)};
    }

    double entropy_term(const CMat& psi) const {
        CMat nu = reduced_state(perturb(psi));
        return pinched_p_relent(nu);
    }

    double value(const CMat& psi) const { return entropy_term(psi) - lambda_dot_stats(psi); }

    std::pair<double, CMat> value_and_grad(const CMat& psi) const {
        CMat nu = reduced_state(perturb(psi));
        double val = pinched_p_relent(nu) - lambda_dot_stats(psi);
        CMat diff = solver_detail::pseudo_log2(nu) - solver_detail::pseudo_log2(pinch_p(nu));
        CMat grad = (k_op_ * diff * k_op_) * cx((1.0 - eps_) * (1.0 - gamma_));
        for (int c = 0; c < 3; ++c) grad -= test_ops_[c] * cx(lambda_[c]);
        return {val, grad.hermitized()};
    }

    std::function<double(double)> segment(const CMat& psi, const CMat& v) const {
        CMat np = reduced_state(perturb(psi));
        CMat nv = reduced_state(perturb(v));
        double sp = lambda_dot_stats(psi), sv = lambda_dot_stats(v);
        return [this, np, nv, sp, sv](double t) {
            CMat mixed = np * cx(1.0 - t) + nv * cx(t);
            return pinched_p_relent(mixed) - ((1.0 - t) * sp + t * sv);
        };
    }

    double lambda_dot_stats(const CMat& psi) const {
        auto st = test_statistics(psi);
        return lambda_[0] * st[0] + lambda_[1] * st[1] + lambda_[2] * st[2];
    }

    CMat reduced_state(const CMat& psi) const { return (k_op_ * psi * k_op_) * cx(1.0 - gamma_); }

private:
    CMat perturb(const CMat& psi) const { return psi * cx(1.0 - eps_) + CMat::identity(4) * cx(eps_ * 0.25); }

    static CMat pinch_p(const CMat& m) {
        CMat out(4);
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                if (a / 2 == b / 2) out(a, b) = m(a, b);
        return out;
    }

    static double pinched_p_relent(const CMat& nu) {
        double h_full = von_neumann_entropy(nu);
        double h_pinched = 0.0;
        for (int blk = 0; blk < 2; ++blk) {
            CMat sub(2);
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) sub(a, b) = nu(blk * 2 + a, blk * 2 + b);
            h_pinched += von_neumann_entropy(sub.hermitized());
        }
        return h_pinched - h_full;
    }

    CMat marginal_;
    double gamma_;
    std::vector<double> lambda_;
    double eps_;
    CMat test_ops_[3];
    CMat k_op_;
};

// (value, gradient) of the reduced B92 objective
inline std::pair<double, CMat> b92_reduced_objective(const ConstraintOperators& ops, const ProtocolSpec& spec,
                                                     const std::vector<double>& lambda_test, const CMat& psi) {
    B92ReducedProblem pb(ops, spec, lambda_test);
    return pb.value_and_grad(psi);
}

// Certified test-conditioned bound g for B92 via the reduced program, plus the
// lifted full-alphabet tradeoff function.
inline std::pair<TradeoffFunction, SolveReport> b92_test_bound(const ConstraintOperators& ops,
                                                               const ProtocolSpec& spec,
                                                               const std::vector<double>& lambda_test, double tol,
                                                               int max_iter = 2000) {
    B92ReducedProblem pb(ops, spec, lambda_test);
    SolveReport rep = frank_wolfe(pb, tol, max_iter);
    TradeoffFunction g = TradeoffFunction::from_affine({"fail", "inc", "pass"}, lambda_test, rep.certified_lower);
    return {g, rep};
}

inline std::pair<TradeoffFunction, SolveReport> b92_lifted_tradeoff(const ConstraintOperators& ops,
                                                                    const ProtocolSpec& spec,
                                                                    const std::vector<double>& lambda_test,
                                                                    double tol, int max_iter = 2000) {
    auto [g, rep] = b92_test_bound(ops, spec, lambda_test, tol, max_iter);
    return {lift_test_data(g, spec.gamma, "skip"), rep};
}

// ---------------------------------------------------------------------------
// Heuristic lambda: supporting-hyperplane search.  Maximises the certified
// bound evaluated at the target statistics; validity never depends on the
// quality of this search, only tightness does.

struct LambdaSearchBudget {
    double tol = 1e-5;
    int max_iter = 400;
    int sweeps = 3;
    double initial_step = 8.0;
    double time_cap_seconds = 600.0;
};

namespace solver_detail {

template <typename Certify>
std::vector<double> coordinate_polish(std::vector<double> lambda, const std::vector<double>& target,
                                      const Certify& certify, const LambdaSearchBudget& budget) {
    auto started = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    };
    auto score = [&](const std::vector<double>& l) {
        double c = certify(l);
        double v = c;
        for (size_t k = 0; k < l.size(); ++k) v += l[k] * target[k];
        return v;
    };
    double best = score(lambda);
    double step = budget.initial_step;
    for (int sweep = 0; sweep < budget.sweeps && elapsed() < budget.time_cap_seconds; ++sweep) {
        for (size_t k = 0; k < lambda.size(); ++k) {
            double local = step;
            for (int halving = 0; halving < 6 && elapsed() < budget.time_cap_seconds; ++halving) {
                bool moved = false;
                for (double sgn : {+1.0, -1.0}) {
                    std::vector<double> cand = lambda;
                    cand[k] += sgn * local;
                    double v = score(cand);
                    if (v > best + 1e-12) {
                        best = v;
                        lambda = cand;
                        moved = true;
                        break;
                    }
                }
                if (!moved) local *= 0.5;
            }
        }
        step *= 0.5;
    }
    return lambda;
}

}  // namespace solver_detail

// Full-alphabet heuristic over the protocol statistics.
inline std::vector<double> heuristic_lambda(const ConstraintOperators& ops, const std::vector<double>& target_stats,
                                            const LambdaSearchBudget& budget = {}) {
    if (target_stats.size() != static_cast<size_t>(ops.n_c))
        throw std::invalid_argument("heuristic_lambda: target statistics size mismatch");
    auto certify = [&](const std::vector<double>& l) {
        return certified_c_lambda(ops, l, budget.tol, budget.max_iter).first;
    };
    std::vector<double> lambda(ops.n_c, 0.0);
    lambda = solver_detail::coordinate_polish(lambda, target_stats, certify, budget);
    // remove the flat direction (adding a constant to lambda only moves c)
    double mean = 0;
    for (double l : lambda) mean += l;
    mean /= lambda.size();
    for (double& l : lambda) l -= mean;
    return lambda;
}

// Test-conditioned heuristic for the reduced B92 program.
inline std::vector<double> b92_heuristic_lambda(const ConstraintOperators& ops, const ProtocolSpec& spec,
                                                const std::vector<double>& target_test_stats,
                                                const LambdaSearchBudget& budget = {}) {
    auto certify = [&](const std::vector<double>& l) {
        B92ReducedProblem pb(ops, spec, l);
        return frank_wolfe(pb, budget.tol, budget.max_iter).certified_lower;
    };
    std::vector<double> lambda(3, 0.0);
    lambda = solver_detail::coordinate_polish(lambda, target_test_stats, certify, budget);
    double mean = (lambda[0] + lambda[1] + lambda[2]) / 3.0;
    for (double& l : lambda) l -= mean;
    return lambda;
}

}  // namespace qkd
