#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rng.hpp"
#include "theory.hpp"

#include <cmath>

using namespace fedsim;

namespace {

QuadraticProblem identity_problem() {
    QuadraticProblem p;
    p.dim = 2;
    p.a = {1.0, 0.0, 0.0, 1.0};
    p.b = {0.0, 0.0};
    p.coordinate_layers = {{0}, {1}};
    return p;
}

} // namespace

TEST_CASE("make_quadratic construction guarantees") {
    const QuadraticProblem p = make_quadratic(4, 2, 7);
    CHECK(is_symmetric(p));
    CHECK(is_positive_definite(p));
    REQUIRE(p.coordinate_layers.size() == 2);
    CHECK(p.coordinate_layers[0] == std::vector<int>{0, 1});
    CHECK(p.coordinate_layers[1] == std::vector<int>{2, 3});

    const QuadraticProblem q = make_quadratic(4, 2, 7);
    CHECK(p.a == q.a);
    CHECK(p.b == q.b);

    CHECK_THROWS_AS(make_quadratic(2, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_quadratic(2, 0, 1), std::invalid_argument);
}

TEST_CASE("lipschitz constant of diagonal matrices") {
    QuadraticProblem p = identity_problem();
    CHECK(lipschitz(p) == doctest::Approx(1.0).epsilon(1e-10));

    p.a = {1.0, 0.0, 0.0, 3.0};
    CHECK(lipschitz(p) == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("power iteration matches the random Rayleigh-quotient oracle") {
    for (uint64_t seed : {11ull, 12ull, 13ull}) {
        const QuadraticProblem p = make_quadratic(2, 2, seed);
        const double lam = lipschitz(p);

        // lower-bound oracle: max Rayleigh quotient over 1e5 random unit vectors
        Rng rng(seed * 1000 + 1);
        double oracle = 0.0;
        for (int i = 0; i < 100000; ++i) {
            double x = rng.uniform(-1.0, 1.0);
            double y = rng.uniform(-1.0, 1.0);
            const double n2 = x * x + y * y;
            if (n2 == 0.0) {
                continue;
            }
            const double quad = p.a[0] * x * x + (p.a[1] + p.a[2]) * x * y + p.a[3] * y * y;
            oracle = std::max(oracle, quad / n2);
        }
        CHECK(lam >= oracle - 1e-12);
        CHECK(lam - oracle <= 1e-8);

        // closed form for the 2x2 symmetric eigenproblem
        const double tr = p.a[0] + p.a[3];
        const double det = p.a[0] * p.a[3] - p.a[1] * p.a[2];
        const double exact = 0.5 * (tr + std::sqrt(tr * tr - 4.0 * det));
        CHECK(lam == doctest::Approx(exact).epsilon(1e-10));
    }
}

TEST_CASE("delta gap") {
    const QuadraticProblem p = identity_problem();
    const std::vector<double> w = {1.0, 1.0};

    CHECK(delta_gap(p, w, {0, 1}) == doctest::Approx(0.0));
    CHECK(delta_gap(p, w, {0}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(delta_gap(p, w, {}), std::invalid_argument);
    CHECK_THROWS_AS(delta_gap(p, w, {5}), std::invalid_argument);

    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const QuadraticProblem q = make_quadratic(6, 3, rng.next_u64());
        std::vector<double> x(6);
        for (double & v : x) {
            v = rng.uniform(-2.0, 2.0);
        }
        for (const std::vector<int> & subset : {std::vector<int>{0}, {1, 2}, {0, 2}}) {
            CHECK(delta_gap(q, x, subset) >= 0.0);
        }
    }
}

TEST_CASE("delta is zero exactly when the subset covers the gradient support") {
    // diagonal problem keeps gradients coordinate-local
    QuadraticProblem p;
    p.dim = 4;
    p.a = {2, 0, 0, 0, 0, 1, 0, 0, 0, 0, 3, 0, 0, 0, 0, 1};
    p.b = {0, 0, 0, 0};
    p.coordinate_layers = {{0}, {1}, {2}, {3}};

    const std::vector<double> w = {1.0, 0.0, 2.0, 0.0}; // gradient lives on layers 0 and 2
    CHECK(delta_gap(p, w, {0, 2}) == 0.0);
    CHECK(delta_gap(p, w, {0, 1, 2}) == 0.0);
    CHECK(delta_gap(p, w, {0, 1}) > 0.0);
    CHECK(delta_gap(p, w, {1, 3}) > 0.0);
}

TEST_CASE("verify_bounds hand equalities") {
    const QuadraticProblem p = identity_problem();

    SUBCASE("full step on w = (1, 0), eta = 0.5") {
        const BoundReport r = verify_bounds(p, std::vector<double>{1.0, 0.0}, {0, 1}, 0.5);
        CHECK(r.delta_full == doctest::Approx(0.375).epsilon(1e-12));
        CHECK(r.bound_full == doctest::Approx(0.375).epsilon(1e-12));
        CHECK(r.delta == doctest::Approx(0.0));
        CHECK(r.full_holds);
        CHECK(r.subset_holds);
    }
    SUBCASE("subset step on w = (1, 1), eta = 0.5, subset = layer 0") {
        const BoundReport r = verify_bounds(p, std::vector<double>{1.0, 1.0}, {0}, 0.5);
        CHECK(r.grad_norm_sq == doctest::Approx(2.0));
        CHECK(r.delta == doctest::Approx(1.0));
        CHECK(r.delta_subset == doctest::Approx(0.375).epsilon(1e-12));
        CHECK(r.bound_subset == doctest::Approx(0.375).epsilon(1e-12));
        CHECK(r.subset_holds);
    }
    SUBCASE("frozen coordinates never move") {
        // measured subset reduction only touches subset coordinates: freezing
        // layer 1 keeps the loss change attributable to coordinate 0 alone
        const BoundReport r = verify_bounds(p, std::vector<double>{1.0, 1.0}, {0}, 0.5);
        // L(1,1) = 1, after subset step L(0.5,1) = 0.625
        CHECK(r.delta_subset == doctest::Approx(1.0 - 0.625).epsilon(1e-15));
    }
    SUBCASE("eta must be positive") {
        CHECK_THROWS_AS(verify_bounds(p, std::vector<double>{1.0, 0.0}, {0}, 0.0), std::invalid_argument);
    }
}

TEST_CASE("crossover term signs") {
    const QuadraticProblem p = identity_problem(); // L = 1, delta = 1 at w = (1,1), subset {0}
    const std::vector<double> w = {1.0, 1.0};

    const std::vector<BoundReport> scan = crossover_scan(p, w, {0}, {1.0, 2.0, 4.0});
    REQUIRE(scan.size() == 3);
    CHECK(scan[0].crossover_term == doctest::Approx(-0.5).epsilon(1e-12)); // eta L = 1 -> -eta/2
    CHECK(std::abs(scan[1].crossover_term) <= 1e-12);                      // eta L = 2 -> 0
    CHECK(scan[2].crossover_term == doctest::Approx(4.0).epsilon(1e-12));  // eta L = 4 -> +eta

    CHECK_THROWS_AS(crossover_scan(p, w, {0}, {}), std::invalid_argument);
    CHECK_THROWS_AS(crossover_scan(p, w, {0}, {0.5, -1.0}), std::invalid_argument);
}

TEST_CASE("smoothness inequality holds for arbitrary steps") {
    Rng rng(99);
    for (int trial = 0; trial < 25; ++trial) {
        const QuadraticProblem p = make_quadratic(5, 2, rng.next_u64());
        const double lip = lipschitz(p);
        std::vector<double> w(5), step(5), w2(5);
        for (int i = 0; i < 5; ++i) {
            w[(size_t) i] = rng.uniform(-3.0, 3.0);
            step[(size_t) i] = rng.uniform(-2.0, 2.0);
            w2[(size_t) i] = w[(size_t) i] + step[(size_t) i];
        }
        const std::vector<double> g = quad_grad(p, w);
        double inner = 0.0, step_sq = 0.0;
        for (int i = 0; i < 5; ++i) {
            inner += g[(size_t) i] * step[(size_t) i];
            step_sq += step[(size_t) i] * step[(size_t) i];
        }
        const double rhs = quad_loss(p, w) + inner + 0.5 * lip * step_sq;
        CHECK(quad_loss(p, w2) <= rhs + 1e-9 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("both loss-reduction bounds hold over a seeded sweep") {
    Rng rng(1234);
    for (int prob = 0; prob < 10; ++prob) {
        const QuadraticProblem p = make_quadratic(6, 3, rng.next_u64());
        const double lip = lipschitz(p);
        for (int point = 0; point < 2; ++point) {
            std::vector<double> w(6);
            for (double & v : w) {
                v = rng.uniform(-2.0, 2.0);
            }
            for (const std::vector<int> & subset :
                 {std::vector<int>{0}, {1}, {2}, {0, 1}, {0, 2}, {1, 2}}) {
                for (double eta_l : {0.1, 0.5, 1.0, 1.9}) {
                    const BoundReport r = verify_bounds(p, w, subset, eta_l / lip, lip);
                    CHECK(r.full_holds);
                    CHECK(r.subset_holds);
                }
            }
        }
    }
}

TEST_CASE("bound report serializes to JSON") {
    const QuadraticProblem p = identity_problem();
    const BoundReport r = verify_bounds(p, std::vector<double>{1.0, 1.0}, {0}, 0.5);
    const std::string js = bound_report_json(r);
    CHECK(js.find("\"grad_norm_sq\":2.0") != std::string::npos);
    CHECK(js.find("\"subset_holds\":true") != std::string::npos);
}
