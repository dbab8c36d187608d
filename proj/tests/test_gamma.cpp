#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>

#include "weimix/gamma.hpp"

using weimix::gamma_fn;

TEST_CASE("gamma is exact at small integers") {
    CHECK(gamma_fn(1.0) == 1.0);
    CHECK(gamma_fn(2.0) == 1.0);
    CHECK(gamma_fn(3.0) == 2.0);
    CHECK(gamma_fn(5.0) == 24.0);
    CHECK(gamma_fn(11.0) == 3628800.0);
    CHECK(gamma_fn(21.0) == 2432902008176640000.0);
}

TEST_CASE("gamma matches reference values at half-integers") {
    CHECK_THAT(gamma_fn(0.5),
               Catch::Matchers::WithinRel(1.7724538509055160273, 1e-14));
    CHECK_THAT(gamma_fn(1.5),
               Catch::Matchers::WithinRel(0.88622692545275801365, 1e-14));
    CHECK_THAT(gamma_fn(2.5),
               Catch::Matchers::WithinRel(1.3293403881791370205, 1e-14));
}

TEST_CASE("gamma matches the C library implementation on a dense grid") {
    // std::tgamma is an independent implementation; agreement across the
    // argument range exercised by mean-lifetime queries (1 < 1+1/beta <= 2)
    // and well beyond it.
    for (double x = 0.05; x <= 25.0; x += 0.013) {
        INFO("x = " << x);
        CHECK_THAT(gamma_fn(x),
                   Catch::Matchers::WithinRel(std::tgamma(x), 1e-12));
    }
}

TEST_CASE("gamma satisfies the recurrence relation") {
    for (double x : {0.3, 0.9, 1.4, 3.7, 9.2, 14.6}) {
        CHECK_THAT(gamma_fn(x + 1.0),
                   Catch::Matchers::WithinRel(x * gamma_fn(x), 1e-13));
    }
}

TEST_CASE("gamma rejects non-positive arguments") {
    CHECK_THROWS_AS(gamma_fn(0.0), std::domain_error);
    CHECK_THROWS_AS(gamma_fn(-1.0), std::domain_error);
    CHECK_THROWS_AS(gamma_fn(-0.5), std::domain_error);
}
