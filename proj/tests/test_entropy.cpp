#include <catch2/catch_amalgamated.hpp>

#include "qkd/entropy.hpp"
#include "support/random_states.hpp"

using namespace qkd;
using testsupport::random_density;

namespace {

// spectral-decomposition oracle for D(rho||sigma), shared eigenbasis approach
// avoided on purpose: evaluates both log factors by scalar eigen sums
double relent_oracle(const CMat& rho, const CMat& sigma) {
    EigResult er = eig_hermitian(rho);
    EigResult es = eig_hermitian(sigma);
    int n = rho.dim();
    double d = 0;
    for (int k = 0; k < n; ++k)
        if (er.values[k] > 1e-12) d += er.values[k] * std::log2(er.values[k]);
    for (int k = 0; k < n; ++k) {
        if (es.values[k] <= 1e-12) continue;
        // overlap <w_k|rho|w_k>
        cx acc = 0;
        for (int i = 0; i < n; ++i) {
            cx t = 0;
            for (int j = 0; j < n; ++j) t += rho(i, j) * es.vectors(j, k);
            acc += std::conj(es.vectors(i, k)) * t;
        }
        d -= acc.real() * std::log2(es.values[k]);
    }
    return d;
}

double trace_norm(const CMat& m) {
    EigResult e = eig_hermitian(m, false);
    double s = 0;
    for (double v : e.values) s += std::abs(v);
    return s;
}

}  // namespace

TEST_CASE("binary entropy") {
    CHECK(binary_entropy(0.5) == Catch::Approx(1.0));
    CHECK(binary_entropy(0.0) == 0.0);
    CHECK(binary_entropy(1.0) == 0.0);
    CHECK(binary_entropy(0.5) == binary_entropy(0.5));

    // high-precision scalar oracle for h(1/1.05)
    long double x = 1.0L / 1.05L;
    long double h = -x * std::log2(x) - (1.0L - x) * std::log2(1.0L - x);
    CHECK(binary_entropy(1.0 / 1.05) == Catch::Approx(static_cast<double>(h)).epsilon(1e-12));
    CHECK(binary_entropy(1.0 / 1.05) == Catch::Approx(0.276195).margin(5e-7));

    SECTION("symmetry") {
        for (double x2 : {0.1, 0.23, 0.4999}) CHECK(binary_entropy(x2) == Catch::Approx(binary_entropy(1 - x2)));
    }
    CHECK_THROWS_AS(binary_entropy(-0.01), std::domain_error);
    CHECK_THROWS_AS(binary_entropy(1.01), std::domain_error);
}

TEST_CASE("relative entropy") {
    std::mt19937_64 rng(41);

    SECTION("D(rho||rho) = 0") {
        for (int rep = 0; rep < 5; ++rep) {
            CMat rho = random_density(rng, 4);
            CHECK(relative_entropy(rho, rho) == Catch::Approx(0.0).margin(1e-9));
        }
    }

    SECTION("pure state vs maximally mixed: 1 bit") {
        CMat p(2);
        p(0, 0) = 1.0;
        CHECK(relative_entropy(p, CMat::identity(2) * cx(0.5)) == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("random pairs vs spectral oracle") {
        for (int rep = 0; rep < 10; ++rep) {
            CMat rho = random_density(rng, 4);
            CMat sigma = random_density(rng, 4);
            CHECK(relative_entropy(rho, sigma) == Catch::Approx(relent_oracle(rho, sigma)).margin(1e-9));
        }
    }

    SECTION("nonnegative, zero iff equal") {
        for (int rep = 0; rep < 30; ++rep) {
            int n = 2 + static_cast<int>(rng() % 7);
            CMat rho = random_density(rng, n);
            CMat sigma = random_density(rng, n);
            double d = relative_entropy(rho, sigma);
            CHECK(d >= -1e-9);
            if (d < 1e-10) CHECK(trace_norm(rho - sigma) <= 1e-8);
        }
    }

    SECTION("support violation detected") {
        CMat rho(2), sigma(2);
        rho(0, 0) = 0.5;
        rho(1, 1) = 0.5;
        sigma(0, 0) = 1.0;
        CHECK_THROWS_AS(relative_entropy(rho, sigma), std::domain_error);
    }
}

TEST_CASE("conditional entropy") {
    SystemLayout ab{{2, 2}};

    SECTION("maximally entangled gives -1") {
        std::vector<cx> bell = {std::sqrt(0.5), 0, 0, std::sqrt(0.5)};
        CHECK(conditional_entropy(outer(bell), ab, 0, {1}) == Catch::Approx(-1.0).margin(1e-10));
    }

    SECTION("product state: H(A|B) = H(A)") {
        std::mt19937_64 rng(43);
        for (int rep = 0; rep < 5; ++rep) {
            CMat a = random_density(rng, 2);
            CMat b = random_density(rng, 3);
            SystemLayout lay{{2, 3}};
            double lhs = conditional_entropy(tensor(a, b), lay, 0, {1});
            CHECK(lhs == Catch::Approx(von_neumann_entropy(a)).margin(1e-9));
        }
    }
}

TEST_CASE("pinching increases entropy") {
    std::mt19937_64 rng(47);
    SystemLayout lay{{2, 2}};
    for (int rep = 0; rep < 200; ++rep) {
        CMat rho = random_density(rng, 4);
        CHECK(von_neumann_entropy(pinch(rho, lay, 0)) >= von_neumann_entropy(rho) - 1e-9);
    }
}
