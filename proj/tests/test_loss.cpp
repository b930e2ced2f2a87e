#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "rvox/loss.hpp"

using namespace rvox;

namespace {

std::vector<Vec3<double>> random_batch(std::mt19937_64& rng, int n, double lo = 0.0,
                                       double hi = 1.0) {
    std::uniform_real_distribution<double> uni(lo, hi);
    std::vector<Vec3<double>> out(n);
    for (auto& v : out) v = {uni(rng), uni(rng), uni(rng)};
    return out;
}

}  // namespace

TEST_CASE("photometric loss of identical batches is zero") {
    std::mt19937_64 rng(1);
    const auto a = random_batch(rng, 16);
    CHECK(photometric_loss<double>(a, a) == 0.0);
}

TEST_CASE("photometric loss of a constant offset is its square") {
    std::mt19937_64 rng(2);
    auto a = random_batch(rng, 16, 0.0, 0.8);
    auto b = a;
    for (auto& v : b) v += Vec3<double>{0.1, 0.1, 0.1};
    CHECK(photometric_loss<double>(a, b) == Catch::Approx(0.01).margin(1e-12));
}

TEST_CASE("photometric loss matches the two-line mean-square oracle") {
    std::mt19937_64 rng(3);
    const auto a = random_batch(rng, 32);
    const auto b = random_batch(rng, 32);
    double acc = 0.0;
    for (int i = 0; i < 32; ++i)
        for (int c = 0; c < 3; ++c) acc += (a[i][c] - b[i][c]) * (a[i][c] - b[i][c]);
    acc /= 32 * 3;
    CHECK(photometric_loss<double>(a, b) == Catch::Approx(acc).margin(1e-12));
}

TEST_CASE("photometric loss rejects shape mismatch") {
    std::mt19937_64 rng(4);
    const auto a = random_batch(rng, 4);
    const auto b = random_batch(rng, 5);
    CHECK_THROWS(photometric_loss<double>(a, b));
}

TEST_CASE("per-point term vanishes when all colors equal the target") {
    const Vec3<double> gt{0.3, 0.6, 0.9};
    const std::vector<double> w{0.5, 0.25};
    const std::vector<Vec3<double>> c{gt, gt};
    CHECK(per_point_rgb_ray<double>(w, c, gt) == 0.0);
}

TEST_CASE("single-sample per-point term") {
    const Vec3<double> gt{0.0, 0.0, 0.0};
    const std::vector<double> w{1.0};
    const std::vector<Vec3<double>> c{{0.2, 0.2, 0.2}};  // |c - gt|^2 = 0.12
    CHECK(per_point_rgb_ray<double>(w, c, gt) == Catch::Approx(0.12).margin(1e-12));
}

TEST_CASE("per-point term matches the brute-force oracle") {
    std::mt19937_64 rng(5);
    const auto c = random_batch(rng, 9);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> w(9);
    for (auto& v : w) v = uni(rng);
    const Vec3<double> gt{uni(rng), uni(rng), uni(rng)};
    double acc = 0.0;
    for (int i = 0; i < 9; ++i) {
        const Vec3<double> d = c[i] - gt;
        acc += w[i] * dot(d, d);
    }
    CHECK(per_point_rgb_ray<double>(w, c, gt) == Catch::Approx(acc).margin(1e-12));
}

TEST_CASE("background entropy limits") {
    CHECK(background_entropy(0.0) == Catch::Approx(0.0).margin(1e-4));
    CHECK(background_entropy(1.0) == Catch::Approx(0.0).margin(1e-4));
    CHECK(background_entropy(0.5) == Catch::Approx(std::log(2.0)).margin(1e-12));
    CHECK(background_entropy(0.9) == Catch::Approx(0.32508).margin(1e-5));
}

TEST_CASE("background entropy is symmetric and maximized at one half") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const double t = uni(rng);
        CHECK(background_entropy(t) == Catch::Approx(background_entropy(1.0 - t)).margin(1e-12));
        CHECK(background_entropy(t) <= background_entropy(0.5) + 1e-15);
        CHECK(background_entropy(t) >= 0.0);
    }
}

TEST_CASE("background entropy gradient matches finite differences") {
    const double h = 1e-7;
    for (double t : {0.1, 0.35, 0.5, 0.77, 0.93}) {
        const double fd = (background_entropy(t + h) - background_entropy(t - h)) / (2 * h);
        CHECK(background_entropy_grad(t) == Catch::Approx(fd).epsilon(1e-5).margin(1e-8));
    }
}

TEST_CASE("normal penalty vanishes for matching normals and peaks antipodally") {
    const std::vector<double> w{1.0};
    const Vec3<double> n{0.0, 0.0, 1.0};
    CHECK(normal_penalty_ray<double>(w, std::vector<Vec3<double>>{n},
                                     std::vector<Vec3<double>>{n}) == 0.0);
    CHECK(normal_penalty_ray<double>(w, std::vector<Vec3<double>>{n},
                                     std::vector<Vec3<double>>{-n}) ==
          Catch::Approx(4.0).margin(1e-12));
}

TEST_CASE("normal penalty matches the brute-force oracle") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nrm(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const int n = 7;
    std::vector<double> w(n);
    std::vector<Vec3<double>> a(n), b(n);
    for (int i = 0; i < n; ++i) {
        w[i] = uni(rng);
        a[i] = normalized(Vec3<double>{nrm(rng), nrm(rng), nrm(rng)});
        b[i] = normalized(Vec3<double>{nrm(rng), nrm(rng), nrm(rng)});
    }
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += w[i] * dot(a[i] - b[i], a[i] - b[i]);
    CHECK(normal_penalty_ray<double>(w, a, b) == Catch::Approx(acc).margin(1e-12));
}

TEST_CASE("orientation penalty ignores camera-facing normals") {
    const std::vector<double> w{1.0, 0.5};
    const Vec3<double> d{0.0, 0.0, 1.0};
    const std::vector<Vec3<double>> facing{{0.0, 0.0, -1.0}, {0.3, 0.2, -0.9}};
    CHECK(orientation_penalty_ray<double>(w, facing, d) == 0.0);
}

TEST_CASE("orientation penalty single sample") {
    const std::vector<double> w{1.0};
    const Vec3<double> d{0.0, 0.0, 1.0};
    const std::vector<Vec3<double>> n{{0.0, std::sqrt(0.75), 0.5}};  // dot = 0.5
    CHECK(orientation_penalty_ray<double>(w, n, d) == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("orientation penalty matches the brute-force oracle on a mixed batch") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nrm(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const int n = 11;
    std::vector<double> w(n);
    std::vector<Vec3<double>> nv(n);
    const Vec3<double> d = normalized(Vec3<double>{nrm(rng), nrm(rng), nrm(rng)});
    for (int i = 0; i < n; ++i) {
        w[i] = uni(rng);
        nv[i] = normalized(Vec3<double>{nrm(rng), nrm(rng), nrm(rng)});
    }
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dd = std::max(0.0, dot(nv[i], d));
        acc += w[i] * dd * dd;
    }
    CHECK(orientation_penalty_ray<double>(w, nv, d) == Catch::Approx(acc).margin(1e-12));
}

TEST_CASE("total loss reduces to photometric when other weights vanish") {
    LossWeights<double> w;
    w.w_ph = 1.0;
    w.w_pp = w.w_bg = w.w_p = w.w_o = w.w_tv = 0.0;
    const auto b = total_loss(0.42, 1.0, 2.0, 3.0, 4.0, 5.0, w);
    CHECK(b.total == Catch::Approx(0.42).margin(1e-15));
}

TEST_CASE("total loss with unit weights is the plain sum") {
    LossWeights<double> w;
    w.w_ph = w.w_pp = w.w_bg = w.w_p = w.w_o = w.w_tv = 1.0;
    const auto b = total_loss(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, w);
    CHECK(b.total == Catch::Approx(21.0).margin(1e-12));
}

TEST_CASE("total loss matches the dot-product oracle") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> uni(0.0, 2.0);
    LossWeights<double> w;
    w.w_ph = uni(rng) + 0.01;
    w.w_pp = uni(rng);
    w.w_bg = uni(rng);
    w.w_p = uni(rng);
    w.w_o = uni(rng);
    w.w_tv = uni(rng);
    const double terms[6] = {uni(rng), uni(rng), uni(rng), uni(rng), uni(rng), uni(rng)};
    const double expect = w.w_ph * terms[0] + w.w_pp * terms[1] + w.w_bg * terms[2] +
                          w.w_p * terms[3] + w.w_o * terms[4] + w.w_tv * terms[5];
    const auto b = total_loss(terms[0], terms[1], terms[2], terms[3], terms[4], terms[5], w);
    CHECK(b.total == Catch::Approx(expect).margin(1e-12));
    // breakdown invariant
    const double recomputed = w.w_ph * b.photometric + w.w_pp * b.per_point + w.w_bg * b.background +
                              w.w_p * b.normal + w.w_o * b.orientation + w.w_tv * b.tv;
    CHECK(b.total == Catch::Approx(recomputed).margin(1e-10));
}

TEST_CASE("total loss names a non-finite term") {
    LossWeights<double> w;
    CHECK_THROWS_WITH(total_loss(1.0, std::nan(""), 0.0, 0.0, 0.0, 0.0, w),
                      Catch::Matchers::ContainsSubstring("per_point"));
}

TEST_CASE("loss weights validate") {
    LossWeights<double> w;
    CHECK_NOTHROW(w.validate());
    w.w_ph = 0.0;
    CHECK_THROWS(w.validate());
    w.w_ph = 1.0;
    w.w_tv = -1.0;
    CHECK_THROWS(w.validate());
}
