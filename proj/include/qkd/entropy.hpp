#pragma once

#include <cmath>
#include <stdexcept>

#include "qkd/matrix.hpp"

namespace qkd {

// All entropies are in bits.

// Eigenvalues in [0, kEigFloor] contribute 0*log(0) = 0; below -1e-10 the
// input is treated as a genuine non-PSD bug.
inline constexpr double kEigFloor = 1e-12;
inline constexpr double kNegEigTol = 1e-10;

inline double binary_entropy(double x) {
    if (x < 0.0 || x > 1.0) throw std::domain_error("binary_entropy: argument outside [0,1]");
    double h = 0.0;
    if (x > 0.0) h -= x * std::log2(x);
    if (x < 1.0) h -= (1.0 - x) * std::log2(1.0 - x);
    return h;
}

namespace detail {
inline double eta_bits(double lam) {
    if (lam <= kEigFloor) {
        if (lam < -kNegEigTol) throw std::domain_error("entropy: negative eigenvalue beyond tolerance");
        return 0.0;
    }
    return -lam * std::log2(lam);
}
}  // namespace detail

// -tr(m log2 m) for PSD m (subnormalised inputs allowed)
inline double von_neumann_entropy(const CMat& m) {
    EigResult e = eig_hermitian(m, /*want_vectors=*/false);
    double h = 0.0;
    for (double lam : e.values) h += detail::eta_bits(lam);
    return h;
}

inline double von_neumann_entropy(const std::vector<double>& eigenvalues) {
    double h = 0.0;
    for (double lam : eigenvalues) h += detail::eta_bits(lam);
    return h;
}

// D(rho || sigma) = tr(rho log2 rho) - tr(rho log2 sigma).
// Requires support(rho) within support(sigma): sigma-kernel weight of rho
// above `support_tol` signals infinite divergence.
inline double relative_entropy(const CMat& rho, const CMat& sigma, double support_tol = 1e-9) {
    if (rho.dim() != sigma.dim()) throw std::invalid_argument("relative_entropy: dimension mismatch");

    EigResult er = eig_hermitian(rho, false);
    double tr_rho_log_rho = 0.0;
    for (double lam : er.values) tr_rho_log_rho -= detail::eta_bits(lam);

    EigResult es = eig_hermitian(sigma, true);
    int n = sigma.dim();
    double tr_rho_log_sigma = 0.0;
    for (int k = 0; k < n; ++k) {
        double mu = es.values[k];
        // weight <w_k| rho |w_k>
        cx w = 0.0;
        for (int i = 0; i < n; ++i) {
            cx t = 0.0;
            for (int j = 0; j < n; ++j) t += rho(i, j) * es.vectors(j, k);
            w += std::conj(es.vectors(i, k)) * t;
        }
        double weight = w.real();
        if (mu <= kEigFloor) {
            if (mu < -kNegEigTol) throw std::domain_error("relative_entropy: sigma not PSD");
            if (weight > support_tol) throw std::domain_error("relative_entropy: support violation (infinite divergence)");
            continue;
        }
        tr_rho_log_sigma += weight * std::log2(mu);
    }
    return tr_rho_log_rho - tr_rho_log_sigma;
}

// H(target | conditioning) = H(target,conditioning) - H(conditioning);
// factors outside the union are traced out first.
inline double conditional_entropy(const CMat& rho, const SystemLayout& layout, int target,
                                  const std::vector<int>& conditioning) {
    layout.check_matches(rho);
    std::vector<int> joint{target};
    for (int f : conditioning) joint.push_back(f);
    CMat m_joint = partial_trace(rho, layout, joint);
    if (conditioning.empty()) return von_neumann_entropy(m_joint);
    CMat m_cond = partial_trace(rho, layout, conditioning);
    return von_neumann_entropy(m_joint) - von_neumann_entropy(m_cond);
}

}  // namespace qkd
