#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "rvox/encoding.hpp"

using namespace rvox;

namespace {

Vec3<double> random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3<double> v{n(rng), n(rng), n(rng)};
    return normalized(v);
}

// random rotation via Gram-Schmidt on Gaussian vectors
std::array<Vec3<double>, 3> random_rotation(std::mt19937_64& rng) {
    Vec3<double> a = random_unit(rng);
    Vec3<double> b = random_unit(rng);
    b = normalized(b - dot(a, b) * a);
    return {a, b, cross(a, b)};
}

}  // namespace

TEST_CASE("reflect of the normal itself is the normal") {
    const Vec3<double> n{0, 0, 1};
    const auto r = reflect(n, n);
    CHECK(norm(r - n) < 1e-12);
}

TEST_CASE("grazing reflection flips the view") {
    const Vec3<double> n{0, 0, 1};
    const Vec3<double> o{1, 0, 0};
    const auto r = reflect(o, n);
    CHECK(norm(r + o) < 1e-12);
}

TEST_CASE("reflect hand-evaluated example") {
    const auto r = reflect(Vec3<double>{0.6, 0, 0.8}, Vec3<double>{0, 0, 1});
    CHECK(r.x == Catch::Approx(-0.6).margin(1e-12));
    CHECK(r.y == Catch::Approx(0.0).margin(1e-12));
    CHECK(r.z == Catch::Approx(0.8).margin(1e-12));
}

TEST_CASE("reflect is an involution and preserves the normal angle") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 100; ++i) {
        const auto n = random_unit(rng);
        const auto o = random_unit(rng);
        const auto r = reflect(o, n);
        CHECK(std::abs(norm(r) - 1.0) < 1e-10);
        CHECK(norm(reflect(r, n) - o) < 1e-10);
        CHECK(std::abs(dot(r, n) - dot(o, n)) < 1e-10);
    }
}

TEST_CASE("reflect rejects a degenerate normal") {
    CHECK_THROWS(reflect(Vec3<double>{0, 0, 1}, Vec3<double>{0, 0, 0}));
}

TEST_CASE("reflect_backward matches finite differences") {
    std::mt19937_64 rng(2);
    const auto n = random_unit(rng);
    const auto o = random_unit(rng);
    const auto up = random_unit(rng);
    Vec3<double> g_o{}, g_n{};
    reflect_backward(o, n, up, g_o, g_n);
    const double h = 1e-7;
    for (int a = 0; a < 3; ++a) {
        // perturb the raw formula (unit-norm handled by the caller's chain)
        auto f = [&](Vec3<double> oo, Vec3<double> nn) {
            return dot(up, 2.0 * dot(oo, nn) * nn - oo);
        };
        Vec3<double> op = o, om = o;
        op[a] += h;
        om[a] -= h;
        CHECK(g_o[a] == Catch::Approx((f(op, n) - f(om, n)) / (2 * h)).epsilon(1e-6).margin(1e-9));
        Vec3<double> np = n, nm = n;
        np[a] += h;
        nm[a] -= h;
        CHECK(g_n[a] == Catch::Approx((f(o, np) - f(o, nm)) / (2 * h)).epsilon(1e-6).margin(1e-9));
    }
}

TEST_CASE("degree-1 SH block is a fixed linear map of the coordinates") {
    DirectionalEncodingConfig cfg;
    cfg.levels = {1};
    std::mt19937_64 rng(3);
    const auto d = random_unit(rng);
    double out[3];
    sh_basis(d, cfg, std::span<double>(out, 3));
    const double c = 0.4886025119029199;
    CHECK(out[0] == Catch::Approx(c * d.y).margin(1e-14));
    CHECK(out[1] == Catch::Approx(c * d.z).margin(1e-14));
    CHECK(out[2] == Catch::Approx(c * d.x).margin(1e-14));
}

TEST_CASE("SH Monte-Carlo orthonormality") {
    DirectionalEncodingConfig cfg;
    cfg.levels = {1, 2, 3, 4};
    const int dim = cfg.dim();
    std::vector<double> gram(dim * dim, 0.0), y(dim);
    std::mt19937_64 rng(4);
    const int n = 1 << 20;
    for (int s = 0; s < n; ++s) {
        const auto d = random_unit(rng);
        sh_basis(d, cfg, std::span<double>(y));
        for (int i = 0; i < dim; ++i)
            for (int j = i; j < dim; ++j) gram[i * dim + j] += y[i] * y[j];
    }
    const double scale = 4.0 * std::acos(-1.0) / n;  // sphere area / samples
    for (int i = 0; i < dim; ++i)
        for (int j = i; j < dim; ++j) {
            const double integral = gram[i * dim + j] * scale;
            CHECK(integral == Catch::Approx(i == j ? 1.0 : 0.0).margin(0.01));
        }
}

TEST_CASE("per-degree SH norm is rotation invariant") {
    std::mt19937_64 rng(5);
    for (int l = 1; l <= 4; ++l) {
        DirectionalEncodingConfig cfg;
        cfg.levels = {l};
        const int dim = cfg.dim();
        std::vector<double> ya(dim), yb(dim);
        for (int trial = 0; trial < 20; ++trial) {
            const auto d = random_unit(rng);
            const auto rot = random_rotation(rng);
            const Vec3<double> rd{dot(rot[0], d), dot(rot[1], d), dot(rot[2], d)};
            sh_basis(d, cfg, std::span<double>(ya));
            sh_basis(rd, cfg, std::span<double>(yb));
            double na = 0, nb = 0;
            for (int i = 0; i < dim; ++i) {
                na += ya[i] * ya[i];
                nb += yb[i] * yb[i];
            }
            CHECK(std::sqrt(na) == Catch::Approx(std::sqrt(nb)).margin(1e-10));
        }
    }
}

TEST_CASE("SH direction gradients match finite differences") {
    DirectionalEncodingConfig cfg;  // default {1, 2, 4}
    const int dim = cfg.dim();
    std::mt19937_64 rng(6);
    const auto d = random_unit(rng);
    std::vector<double> y(dim), grad(3 * dim), yp(dim), ym(dim);
    sh_basis(d, cfg, std::span<double>(y), std::span<double>(grad));
    const double h = 1e-7;
    for (int a = 0; a < 3; ++a) {
        Vec3<double> dp = d, dm = d;
        dp[a] += h;
        dm[a] -= h;
        sh_basis(dp, cfg, std::span<double>(yp));
        sh_basis(dm, cfg, std::span<double>(ym));
        for (int i = 0; i < dim; ++i) {
            const double fd = (yp[i] - ym[i]) / (2 * h);
            CHECK(grad[3 * i + a] == Catch::Approx(fd).epsilon(1e-6).margin(1e-9));
        }
    }
}

TEST_CASE("ide equals the raw basis in the mirror limit") {
    DirectionalEncodingConfig cfg;
    const int dim = cfg.dim();
    std::mt19937_64 rng(7);
    const auto d = random_unit(rng);
    std::vector<double> raw(dim), enc(dim);
    sh_basis(d, cfg, std::span<double>(raw));
    ide(d, 1e12, cfg, std::span<double>(enc));
    for (int i = 0; i < dim; ++i) CHECK(enc[i] == Catch::Approx(raw[i]).margin(1e-10));
}

TEST_CASE("ide at zero concentration wipes all degree >= 1 blocks") {
    DirectionalEncodingConfig cfg;
    const int dim = cfg.dim();
    std::mt19937_64 rng(8);
    const auto d = random_unit(rng);
    std::vector<double> enc(dim);
    ide(d, 0.0, cfg, std::span<double>(enc));
    for (int i = 0; i < dim; ++i) CHECK(enc[i] == 0.0);
}

TEST_CASE("attenuation: A_2(3) = exp(-1)") {
    CHECK(ide_attenuation(2, 3.0) == Catch::Approx(std::exp(-1.0)).margin(1e-12));
    CHECK(ide_attenuation(2, 3.0) == Catch::Approx(0.36788).margin(1e-5));
}

TEST_CASE("attenuation is non-decreasing in kappa and A_0 == 1") {
    for (int l = 0; l <= 4; ++l) {
        double prev = -1.0;
        for (double kappa : {0.0, 0.01, 0.1, 1.0, 10.0, 1000.0}) {
            const double a = ide_attenuation(l, kappa);
            CHECK(a >= prev);
            prev = a;
        }
    }
    for (double kappa : {0.0, 0.5, 100.0}) CHECK(ide_attenuation(0, kappa) == 1.0);
}

TEST_CASE("ide rejects negative kappa") {
    CHECK_THROWS(ide_attenuation(1, -0.5));
}

TEST_CASE("ide output dimension is constant") {
    DirectionalEncodingConfig cfg;
    CHECK(cfg.dim() == 3 + 5 + 9);
    cfg.levels = {1, 2, 3, 4};
    CHECK(cfg.dim() == 3 + 5 + 7 + 9);
    cfg.levels = {0, 1};
    CHECK_THROWS(cfg.validate());
    cfg.levels = {2, 1};
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("ide backward matches finite differences in kappa and direction") {
    DirectionalEncodingConfig cfg;
    const int dim = cfg.dim();
    std::mt19937_64 rng(9);
    const auto d = random_unit(rng);
    const double kappa = 2.3;
    std::vector<double> out(dim), up(dim);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (auto& v : up) v = uni(rng);

    IdeTrace<double> trace;
    ide_forward(d, kappa, cfg, std::span<double>(out), trace);
    Vec3<double> g_dir{};
    const double g_kappa = ide_backward(kappa, cfg, std::span<const double>(up), trace, g_dir);

    auto loss = [&](const Vec3<double>& dir, double k) {
        std::vector<double> o(dim);
        ide(dir, k, cfg, std::span<double>(o));
        double acc = 0.0;
        for (int i = 0; i < dim; ++i) acc += up[i] * o[i];
        return acc;
    };
    const double h = 1e-6;
    CHECK(g_kappa ==
          Catch::Approx((loss(d, kappa + h) - loss(d, kappa - h)) / (2 * h)).epsilon(1e-5));
    for (int a = 0; a < 3; ++a) {
        Vec3<double> dp = d, dm = d;
        dp[a] += h;
        dm[a] -= h;
        CHECK(g_dir[a] ==
              Catch::Approx((loss(dp, kappa) - loss(dm, kappa)) / (2 * h)).epsilon(1e-5).margin(1e-9));
    }
}
