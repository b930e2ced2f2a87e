#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "rvox/optim.hpp"

using namespace rvox;

TEST_CASE("zero gradient leaves parameters unchanged") {
    ParamGroup<double> g;
    g.reset(4);
    std::vector<double> p{1.0, -2.0, 0.5, 3.0};
    const auto before = p;
    std::vector<double> grad(4, 0.0);
    adam_step<double>(g, p, grad, 0.1);
    CHECK(p == before);
}

TEST_CASE("first step moves a scalar by lr, matching a hand-stepped trace") {
    // hand trace, beta1=0.9 beta2=0.99 eps=1e-8, g=0.3, lr=0.05:
    //   m = 0.03, v = 0.0009; mhat = 0.3, vhat = 0.09
    //   step = 0.05 * 0.3 / (0.3 + 1e-8) ~= 0.05
    ParamGroup<double> g;
    g.reset(1);
    std::vector<double> p{1.0};
    std::vector<double> grad{0.3};
    adam_step<double>(g, p, grad, 0.05);
    CHECK(p[0] == Catch::Approx(1.0 - 0.05).epsilon(1e-6));
    CHECK(g.m[0] == Catch::Approx(0.03).margin(1e-15));
    CHECK(g.v[0] == Catch::Approx(0.0009).margin(1e-15));
}

TEST_CASE("identical groups given identical gradients stay identical") {
    ParamGroup<double> a, b;
    a.reset(3);
    b.reset(3);
    std::vector<double> pa{0.1, 0.2, 0.3}, pb{0.1, 0.2, 0.3};
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int step = 0; step < 20; ++step) {
        std::vector<double> grad{uni(rng), uni(rng), uni(rng)};
        adam_step<double>(a, pa, grad, 0.01);
        adam_step<double>(b, pb, grad, 0.01);
    }
    CHECK(pa == pb);
}

TEST_CASE("non-finite gradient raises with the group name") {
    ParamGroup<double> g;
    g.name = "density";
    g.reset(1);
    std::vector<double> p{0.0}, grad{std::nan("")};
    CHECK_THROWS_WITH(adam_step<double>(g, p, grad, 0.1),
                      Catch::Matchers::ContainsSubstring("density"));
}

TEST_CASE("converges on a convex quadratic") {
    // f(x) = (x - 3)^2 / 2, grad = x - 3
    ParamGroup<double> g;
    g.reset(1);
    std::vector<double> p{-5.0};
    for (int step = 0; step < 2000; ++step) {
        std::vector<double> grad{p[0] - 3.0};
        adam_step<double>(g, p, grad, 0.01);
    }
    CHECK(p[0] == Catch::Approx(3.0).margin(1e-3));
}

TEST_CASE("lr schedule endpoints and midpoint") {
    CHECK(lr_schedule(0.1, 0L, 100L, 0.1) == Catch::Approx(0.1).margin(1e-15));
    CHECK(lr_schedule(0.1, 100L, 100L, 0.1) == Catch::Approx(0.01).margin(1e-15));
    CHECK(lr_schedule(0.1, 50L, 100L, 0.1) ==
          Catch::Approx(0.1 * std::pow(10.0, -0.5)).margin(1e-15));
    CHECK_THROWS(lr_schedule(0.1, -1L, 100L, 0.1));
}
