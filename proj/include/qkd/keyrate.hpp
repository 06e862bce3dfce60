#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

#include "qkd/protocol.hpp"
#include "qkd/tradeoff.hpp"

namespace qkd {

struct SecurityParams {
    double n = 0;            // round count (exact for n < 2^53)
    double eps_s = 0;        // smoothing
    double eps_a = 0;        // abort floor
    double eps_pa = 0;       // extractor error
    double eps_kv = 0;       // hash length parameter
    double eps_comp_kv = 0;  // error-correction abort budget
    double eps_comp_ev = 0;  // statistical-check abort budget
    std::uint64_t step_size = 1;  // 1 = strict sequentiality

    void check() const {
        auto in01 = [](double e) { return e > 0.0 && e < 1.0; };
        if (!(n >= 1)) throw std::invalid_argument("SecurityParams: n >= 1 required");
        if (!in01(eps_s) || !in01(eps_a) || !in01(eps_pa) || !in01(eps_kv) || !in01(eps_comp_kv) ||
            !in01(eps_comp_ev))
            throw std::invalid_argument("SecurityParams: epsilons must lie in (0,1)");
        if (step_size < 1) throw std::invalid_argument("SecurityParams: step size >= 1 required");
        if (eps_comp_ev <= eps_kv)
            throw std::invalid_argument("SecurityParams: eps_comp_ev must exceed eps_kv");
    }

    double eps_cor() const { return eps_kv; }
    double eps_sec() const { return std::max(eps_pa + 4.0 * eps_s, 2.0 * eps_a) + 2.0 * eps_kv; }
};

// Second-order constants of the accumulation bound at Renyi parameter alpha.
struct GeatBreakdown {
    double alpha = 0;
    double g_eps = 0;
    double v_term = 0;
    double kprime = 0;
    int d_a = 0;
};

struct CompletenessPlan {
    std::int64_t lambda_ec = 0;
    double k_ca = 0;
    double delta = 0;
};

struct KeyRateResult {
    std::int64_t key_length = 0;  // clamped at zero: no key
    double rate = 0;
    CompletenessPlan plan;
    GeatBreakdown breakdown;
    double gamma = 0;
    double eps_cor = 0;
    double eps_sec = 0;
    std::vector<double> lambda;  // tradeoff coefficients used (full alphabet)
    double ca_honest = 0;        // CA at the honest statistics
};

// g(eps) = -log2(1 - sqrt(1 - eps^2)), evaluated cancellation-free
inline double g_smoothing(double eps) {
    if (eps <= 0.0 || eps > 1.0) throw std::invalid_argument("g_smoothing: eps outside (0,1]");
    double one_m = eps * eps / (1.0 + std::sqrt(std::max(0.0, 1.0 - eps * eps)));
    return -std::log2(one_m);
}

inline GeatBreakdown geat_terms(double alpha, int d_a, const TradeoffFunction& tf, double eps) {
    if (!(alpha > 1.0 && alpha < 1.5)) throw std::invalid_argument("geat_terms: alpha outside (1, 3/2)");
    GeatBreakdown b;
    b.alpha = alpha;
    b.d_a = d_a;
    b.g_eps = g_smoothing(eps);
    b.v_term = std::log2(2.0 * d_a * d_a + 1.0) + std::sqrt(2.0 + tf.var_ub);
    double range = 2.0 * std::log2(static_cast<double>(d_a)) + tf.max_val - tf.min_sigma_lb;
    double frac = (alpha - 1.0) / (2.0 - alpha);
    double pre = std::pow(2.0 - alpha, 3.0) / (6.0 * std::pow(3.0 - 2.0 * alpha, 3.0) * std::log(2.0));
    double lnarg = std::log(std::exp2(range) + std::exp(2.0));
    b.kprime = pre * std::exp2(frac * range) * lnarg * lnarg * lnarg;
    return b;
}

namespace keyrate_detail {

// real-valued right-hand side of the key-length bound (blocked form; s = 1
// reproduces the strict-sequential bound exactly)
inline long double key_length_rhs(const SecurityParams& p, double k_ca, const GeatBreakdown& b,
                                  std::int64_t lambda_ec) {
    long double n = p.n;
    long double frac = (b.alpha - 1.0L) / (2.0L - b.alpha);
    long double s = static_cast<long double>(p.step_size);
    long double eps_prime = p.eps_s / (3.0L * s - 2.0L);
    long double g_eps = g_smoothing(static_cast<double>(eps_prime));
    long double rhs = n * static_cast<long double>(k_ca);
    rhs -= n * frac * (std::log(2.0L) / 2.0L) * static_cast<long double>(b.v_term) * b.v_term;
    rhs -= s * (g_eps + b.alpha * std::log2(1.0L / p.eps_a)) / (b.alpha - 1.0L);
    rhs -= n * frac * frac * static_cast<long double>(b.kprime);
    rhs -= (s - 1.0L) * g_eps;
    rhs -= std::ceil(2.0L * std::log2(1.0L / p.eps_pa));
    rhs -= std::ceil(std::log2(1.0L / p.eps_kv));
    rhs -= static_cast<long double>(lambda_ec);
    return rhs;
}

}  // namespace keyrate_detail

// Largest integer key length compatible with the accumulation bound under
// strict sequentiality; may be negative (no key).
inline std::int64_t key_length(const SecurityParams& params, double k_ca, const TradeoffFunction& tf,
                               const GeatBreakdown& breakdown, std::int64_t lambda_ec) {
    (void)tf;
    SecurityParams p = params;
    p.step_size = 1;
    return static_cast<std::int64_t>(std::floor(keyrate_detail::key_length_rhs(p, k_ca, breakdown, lambda_ec)));
}

// Blocked variant: adversary may hold up to step_size signals in flight.
inline std::int64_t key_length_blocked(const SecurityParams& params, double k_ca, const TradeoffFunction& tf,
                                       const GeatBreakdown& breakdown, std::int64_t lambda_ec) {
    (void)tf;
    return static_cast<std::int64_t>(std::floor(keyrate_detail::key_length_rhs(params, k_ca, breakdown, lambda_ec)));
}

// Error-correction leakage sized so the key-validation abort stays within
// the requested budget: ceil of
//   n h_sv + 2 sqrt(n) sqrt(1 - 2 log2(e/2)) log2(1 + 2|S|) + 2 log2(2/e)
inline std::int64_t lambda_ec(double n, double h_sv, int s_alphabet_size, double eps_comp_kv) {
    if (!(eps_comp_kv > 0.0 && eps_comp_kv < 1.0)) throw std::invalid_argument("lambda_ec: budget outside (0,1)");
    long double term = static_cast<long double>(n) * h_sv;
    term += 2.0L * std::sqrt(static_cast<long double>(n)) *
            std::sqrt(1.0L - 2.0L * std::log2(static_cast<long double>(eps_comp_kv) / 2.0L)) *
            std::log2(1.0L + 2.0L * s_alphabet_size);
    term += 2.0L * std::log2(2.0L / static_cast<long double>(eps_comp_kv));
    return static_cast<std::int64_t>(std::ceil(term));
}

// Statistical-check threshold with a Bernstein-style completeness margin.
inline CompletenessPlan threshold_k_ca(double ca_honest, const TradeoffFunction& tf, double n, double eps_comp_ev,
                                       double eps_kv) {
    if (eps_comp_ev <= eps_kv) throw std::invalid_argument("threshold_k_ca: eps_comp_ev must exceed eps_kv");
    CompletenessPlan plan;
    double range = tf.max_val - tf.min_val;
    plan.delta = std::sqrt((2.0 * range * ca_honest + 6.0 * tf.var_ub) / (3.0 * n) *
                           std::log2(1.0 / (eps_comp_ev - eps_kv)));
    plan.k_ca = ca_honest - plan.delta;
    return plan;
}

// Bernstein tail bound on the honest statistical-check abort probability.
inline double bernstein_abort(double delta, double n, const TradeoffFunction& tf) {
    if (delta < 0.0) throw std::invalid_argument("bernstein_abort: delta must be nonnegative");
    if (delta == 0.0) return 1.0;
    double range = tf.max_val - tf.min_val;
    return std::exp(-n * (delta * delta / 2.0) / (tf.var_ub + range * delta / 3.0));
}

// ---------------------------------------------------------------------------
// Parameter optimisation

struct SolverBudget {
    double fw_tol = 1e-5;
    int fw_max_iter = 600;
    LambdaSearchBudget lambda_budget{};
    bool polish_gamma = true;
    int threads = 0;  // 0 = hardware concurrency
};

namespace keyrate_detail {

inline double golden_max(const std::function<double(double)>& f, double lo, double hi, int iters) {
    auto neg = [&](double x) { return -f(x); };
    double x = solver_detail::golden_min(neg, lo, hi, iters);
    return x;
}

// best alpha in (1, 3/2) by golden section plus a dense guard scan
inline std::pair<double, std::int64_t> optimise_alpha(const SecurityParams& params, double k_ca,
                                                      const TradeoffFunction& tf, int d_a, std::int64_t lam_ec) {
    auto length_at = [&](double alpha) {
        GeatBreakdown b = geat_terms(alpha, d_a, tf, params.eps_s / (3.0 * params.step_size - 2.0));
        return static_cast<double>(keyrate_detail::key_length_rhs(params, k_ca, b, lam_ec));
    };
    const double lo = 1.0 + 1e-9, hi = 1.5 - 1e-9;
    double best_alpha = keyrate_detail::golden_max(length_at, lo, hi, 60);
    double best_val = length_at(best_alpha);
    // unimodality guard
    for (int k = 0; k < 200; ++k) {
        double a = lo + (hi - lo) * (k + 0.5) / 200.0;
        double v = length_at(a);
        if (v > best_val) {
            best_val = v;
            best_alpha = a;
        }
    }
    return {best_alpha, static_cast<std::int64_t>(std::floor(best_val))};
}

}  // namespace keyrate_detail

// Key length and full provenance for a fixed gamma and tradeoff function.
inline KeyRateResult evaluate_keyrate(const SecurityParams& params, const TradeoffFunction& tf, double gamma,
                                      double ca_honest, double h_sv, int s_alphabet_size) {
    params.check();
    std::int64_t lam_ec = lambda_ec(params.n, h_sv, s_alphabet_size, params.eps_comp_kv);
    CompletenessPlan plan = threshold_k_ca(ca_honest, tf, params.n, params.eps_comp_ev, params.eps_kv);
    plan.lambda_ec = lam_ec;
    auto [alpha, l] = keyrate_detail::optimise_alpha(params, plan.k_ca, tf, s_alphabet_size, lam_ec);

    KeyRateResult r;
    r.key_length = std::max<std::int64_t>(0, l);
    r.rate = static_cast<double>(r.key_length) / params.n;
    r.plan = plan;
    r.breakdown = geat_terms(alpha, s_alphabet_size, tf, params.eps_s / (3.0 * params.step_size - 2.0));
    r.gamma = gamma;
    r.eps_cor = params.eps_cor();
    r.eps_sec = params.eps_sec();
    r.lambda = tf.lambda;
    r.ca_honest = ca_honest;
    return r;
}

// Cached tradeoff functions, reusable across round counts within a sweep.
struct TradeoffCacheEntry {
    double gamma = 0;
    TradeoffFunction tf;
    double ca_honest = 0;
};

// Derive a lifted B92 tradeoff function at one gamma: heuristic lambda at the
// honest test statistics, then a key-length polish of the coefficients.
inline TradeoffCacheEntry derive_b92_tradeoff(const ProtocolSpec& base, double gamma, double p,
                                              const SecurityParams* polish_target, const SolverBudget& budget) {
    ProtocolSpec spec = b92_preset(gamma);
    (void)base;
    ConstraintOperators ops = source_replacement(spec);
    auto [hon_stats, h_sv] = honest_model(spec, p);

    // test-conditioned honest statistics (fail, inc, pass)
    std::vector<double> test_hon = {hon_stats.probs[0] / gamma, hon_stats.probs[1] / gamma,
                                    hon_stats.probs[2] / gamma};

    std::vector<double> lambda = b92_heuristic_lambda(ops, spec, test_hon, budget.lambda_budget);

    if (polish_target) {
        // polish the coefficients against the final key length
        auto score = [&](const std::vector<double>& lam) {
            auto [tf, rep] = b92_lifted_tradeoff(ops, spec, lam, budget.fw_tol, budget.fw_max_iter);
            (void)rep;
            double ca_hon = tf.evaluate(hon_stats);
            KeyRateResult r = evaluate_keyrate(*polish_target, tf, gamma, ca_hon, h_sv, spec.n_s());
            return static_cast<double>(r.key_length);
        };
        double step = 2.0;
        double best = score(lambda);
        for (int sweep = 0; sweep < 3; ++sweep, step *= 0.4) {
            for (size_t k = 0; k < lambda.size(); ++k) {
                for (double sgn : {+1.0, -1.0}) {
                    std::vector<double> cand = lambda;
                    cand[k] += sgn * step;
                    double v = score(cand);
                    if (v > best) {
                        best = v;
                        lambda = cand;
                    }
                }
            }
        }
    }

    auto [tf, rep] = b92_lifted_tradeoff(ops, spec, lambda, budget.fw_tol, budget.fw_max_iter);
    (void)rep;
    TradeoffCacheEntry entry;
    entry.gamma = gamma;
    entry.tf = tf;
    entry.ca_honest = tf.evaluate(hon_stats);
    return entry;
}

inline bool is_b92_shaped(const ProtocolSpec& spec) {
    return spec.n_u() == 2 && spec.dim_q() == 2 && spec.n_s() == 3 && spec.n_c() == 4 && spec.n_v() == 6;
}

// Completeness-driven key-rate optimisation over the testing probability and
// the Renyi parameter.  Candidate tradeoff functions accumulate in `cache`
// (shared across calls), so rates over an n-sweep are monotone by
// construction: every n is evaluated against every candidate seen so far.
inline KeyRateResult optimize_keyrate(const ProtocolSpec& spec, double p, const SecurityParams& params,
                                      const SolverBudget& budget, std::vector<TradeoffCacheEntry>* cache = nullptr) {
    params.check();
    std::vector<TradeoffCacheEntry> local_cache;
    std::vector<TradeoffCacheEntry>& entries = cache ? *cache : local_cache;

    if (!is_b92_shaped(spec)) {
        // generic route: heuristic full-alphabet coefficients at this spec's
        // own testing probability, no gamma scan
        ConstraintOperators ops = source_replacement(spec);
        auto [hon, h_sv] = honest_model(spec, p);
        std::vector<double> lambda = heuristic_lambda(ops, hon.probs, budget.lambda_budget);
        auto [tf, rep] = generic_tradeoff(ops, lambda, budget.fw_tol, budget.fw_max_iter);
        (void)rep;
        return evaluate_keyrate(params, tf, spec.gamma, tf.evaluate(hon), h_sv, spec.n_s());
    }

    std::vector<double> gammas;
    for (double g = 0.005; g <= 1.0; g *= 2.0) gammas.push_back(g);

    auto derive_parallel = [&](const std::vector<double>& gs) {
        std::vector<TradeoffCacheEntry> fresh(gs.size());
        unsigned workers = budget.threads > 0 ? budget.threads : std::thread::hardware_concurrency();
        workers = std::max(1u, std::min<unsigned>(workers, gs.size()));
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < gs.size(); i = next.fetch_add(1))
                    fresh[i] = derive_b92_tradeoff(spec, gs[i], p, &params, budget);
            });
        for (auto& t : pool) t.join();
        for (auto& e : fresh) entries.push_back(std::move(e));
    };
    derive_parallel(gammas);

    auto evaluate_entry = [&](const TradeoffCacheEntry& e) {
        auto [hs, h_sv] = honest_model(b92_preset(e.gamma), p);
        (void)hs;
        return evaluate_keyrate(params, e.tf, e.gamma, e.ca_honest, h_sv, 3);
    };

    KeyRateResult best;
    bool first = true;
    for (const auto& e : entries) {
        KeyRateResult r = evaluate_entry(e);
        if (first || r.key_length > best.key_length) {
            best = r;
            first = false;
        }
    }

    if (budget.polish_gamma) {
        // local geometric refinement around the winning grid point
        double g0 = best.gamma;
        for (double factor : {1.4142135623730951, 1.189207115002721, 1.0905077326652577}) {
            std::vector<double> cands;
            for (double g : {g0 / factor, g0 * factor})
                if (g > 0.0 && g <= 1.0) cands.push_back(g);
            size_t before = entries.size();
            derive_parallel(cands);
            for (size_t i = before; i < entries.size(); ++i) {
                KeyRateResult r = evaluate_entry(entries[i]);
                if (r.key_length > best.key_length) {
                    best = r;
                    g0 = entries[i].gamma;
                }
            }
        }
    }
    return best;
}

// Asymptotic collective-attack rate: best certified test-round bound at the
// honest statistics minus the error-correction entropy.
inline double asymptotic_rate(const ProtocolSpec& spec, double p, const SolverBudget& budget) {
    // gamma drops out of the test-conditioned program in the limit of rare
    // testing; evaluate at a nominal small gamma and rescale the data term
    double gamma = 1.0 / 1024.0;
    ProtocolSpec s = b92_preset(gamma);
    (void)spec;
    ConstraintOperators ops = source_replacement(s);
    auto [hon_stats, h_sv] = honest_model(s, p);
    std::vector<double> test_hon = {hon_stats.probs[0] / gamma, hon_stats.probs[1] / gamma,
                                    hon_stats.probs[2] / gamma};
    std::vector<double> lambda = b92_heuristic_lambda(ops, s, test_hon, budget.lambda_budget);
    auto [g, rep] = b92_test_bound(ops, s, lambda, budget.fw_tol, budget.fw_max_iter);
    (void)rep;
    double ca_hon = g.evaluate(test_hon) / (1.0 - gamma);
    return ca_hon - h_sv;
}

}  // namespace qkd
