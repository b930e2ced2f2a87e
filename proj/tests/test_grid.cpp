#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "rvox/grid.hpp"

using namespace rvox;

namespace {

Aabb<double> unit_box() { return {{0, 0, 0}, {1, 1, 1}}; }

VoxelGrid<double> random_grid(std::array<int, 3> dims, int channels, std::uint64_t seed) {
    VoxelGrid<double> g(dims, channels, unit_box());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : g.data()) v = dist(rng);
    return g;
}

// independent 8-corner weighted sum, written against the definition
double trilerp_oracle(const VoxelGrid<double>& g, const Vec3<double>& p, int channel) {
    const auto d = g.dims();
    double u[3];
    for (int a = 0; a < 3; ++a)
        u[a] = (p[a] - g.bbox().min[a]) / (g.bbox().max[a] - g.bbox().min[a]) * (d[a] - 1);
    const int i = std::min((int)std::floor(u[0]), d[0] - 2);
    const int j = std::min((int)std::floor(u[1]), d[1] - 2);
    const int k = std::min((int)std::floor(u[2]), d[2] - 2);
    const double fx = u[0] - i, fy = u[1] - j, fz = u[2] - k;
    double acc = 0.0;
    for (int dx = 0; dx < 2; ++dx)
        for (int dy = 0; dy < 2; ++dy)
            for (int dz = 0; dz < 2; ++dz) {
                const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                acc += w * g.at(i + dx, j + dy, k + dz, channel);
            }
    return acc;
}

// brute-force TV: enumerate every adjacent pair once
double tv_oracle(const VoxelGrid<double>& g) {
    const auto d = g.dims();
    double acc = 0.0;
    std::size_t pairs = 0;
    for (int i = 0; i < d[0]; ++i)
        for (int j = 0; j < d[1]; ++j)
            for (int k = 0; k < d[2]; ++k) {
                const int nb[3][3] = {{i + 1, j, k}, {i, j + 1, k}, {i, j, k + 1}};
                for (const auto& n : nb) {
                    if (n[0] >= d[0] || n[1] >= d[1] || n[2] >= d[2]) continue;
                    ++pairs;
                    for (int c = 0; c < g.channels(); ++c) {
                        const double diff = g.at(i, j, k, c) - g.at(n[0], n[1], n[2], c);
                        acc += diff * diff;
                    }
                }
            }
    return acc / double(pairs);
}

}  // namespace

TEST_CASE("trilerp is exact at nodes") {
    auto g = random_grid({3, 4, 5}, 2, 1);
    double out[2];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 5; ++k) {
                g.interpolate(g.node_position(i, j, k), std::span<double>(out, 2));
                CHECK(out[0] == Catch::Approx(g.at(i, j, k, 0)).margin(1e-12));
                CHECK(out[1] == Catch::Approx(g.at(i, j, k, 1)).margin(1e-12));
            }
}

TEST_CASE("trilerp at a cell center is the corner mean") {
    auto g = random_grid({2, 2, 2}, 1, 2);
    double mean = 0.0;
    for (auto v : g.data()) mean += v;
    mean /= 8.0;
    double out;
    g.interpolate({0.5, 0.5, 0.5}, std::span<double>(&out, 1));
    CHECK(out == Catch::Approx(mean).margin(1e-12));
}

TEST_CASE("trilerp matches the 8-corner sum oracle on a 2x2x2 indexed grid") {
    VoxelGrid<double> g({2, 2, 2}, 1, unit_box());
    // values 0..7 laid out by index
    int v = 0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) g.at(i, j, k, 0) = v++;
    const Vec3<double> p{0.25, 0.5, 0.75};
    double out;
    g.interpolate(p, std::span<double>(&out, 1));
    CHECK(out == Catch::Approx(trilerp_oracle(g, p, 0)).margin(1e-12));
}

TEST_CASE("trilerp is linear along each axis within a cell") {
    auto g = random_grid({3, 3, 3}, 1, 3);
    // midpoint of two adjacent nodes, other coordinates on nodes
    double out, a, b;
    g.interpolate(g.node_position(0, 1, 2), std::span<double>(&a, 1));
    g.interpolate(g.node_position(1, 1, 2), std::span<double>(&b, 1));
    const Vec3<double> mid = 0.5 * (g.node_position(0, 1, 2) + g.node_position(1, 1, 2));
    g.interpolate(mid, std::span<double>(&out, 1));
    CHECK(out == Catch::Approx(0.5 * (a + b)).margin(1e-12));
}

TEST_CASE("outside-bbox queries return zero") {
    auto g = random_grid({3, 3, 3}, 2, 4);
    double out[2] = {1, 1};
    CHECK_FALSE(g.interpolate({2.0, 0.5, 0.5}, std::span<double>(out, 2)));
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
}

TEST_CASE("non-finite query point raises") {
    auto g = random_grid({2, 2, 2}, 1, 5);
    double out;
    CHECK_THROWS(g.interpolate({std::nan(""), 0.5, 0.5}, std::span<double>(&out, 1)));
}

TEST_CASE("scatter at a node hits only that node") {
    auto g = random_grid({3, 3, 3}, 2, 6);
    const double up[2] = {2.0, -3.0};
    g.scatter_grad(g.node_position(1, 2, 0), std::span<const double>(up, 2));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                for (int c = 0; c < 2; ++c) {
                    const double expect = (i == 1 && j == 2 && k == 0) ? up[c] : 0.0;
                    CHECK(g.grad()[g.index(i, j, k, c)] == Catch::Approx(expect).margin(1e-15));
                }
}

TEST_CASE("scatter at a cell center gives each corner u/8") {
    VoxelGrid<double> g({2, 2, 2}, 1, unit_box());
    const double up = 8.0;
    g.scatter_grad({0.5, 0.5, 0.5}, std::span<const double>(&up, 1));
    for (double v : g.grad()) CHECK(v == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("scatter accumulates and matches finite differences of the forward") {
    auto g = random_grid({3, 3, 3}, 2, 7);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> dist(0.05, 0.95);
    const Vec3<double> p{dist(rng), dist(rng), dist(rng)};
    const double up[2] = {1.3, -0.7};
    g.zero_grad();
    g.scatter_grad(p, std::span<const double>(up, 2));

    const double h = 1e-6;
    double out[2];
    for (std::size_t i = 0; i < g.data().size(); ++i) {
        const double orig = g.data()[i];
        g.data()[i] = orig + h;
        g.interpolate(p, std::span<double>(out, 2));
        double fp = up[0] * out[0] + up[1] * out[1];
        g.data()[i] = orig - h;
        g.interpolate(p, std::span<double>(out, 2));
        fp -= up[0] * out[0] + up[1] * out[1];
        g.data()[i] = orig;
        const double fd = fp / (2 * h);
        if (std::abs(fd) > 1e-9)
            CHECK(g.grad()[i] == Catch::Approx(fd).epsilon(1e-6));
        else
            CHECK(std::abs(g.grad()[i]) < 1e-9);
    }
}

TEST_CASE("spatial gradient of a constant grid is zero") {
    VoxelGrid<double> g({3, 3, 3}, 2, unit_box());
    for (auto& v : g.data()) v = 4.2;
    double out[6];
    g.spatial_gradient({0.3, 0.6, 0.9}, std::span<double>(out, 6));
    for (double v : out) CHECK(v == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("spatial gradient of a linear-in-x grid") {
    VoxelGrid<double> g({4, 3, 3}, 1, {{0, 0, 0}, {2, 1, 1}});
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) g.at(i, j, k, 0) = i;
    double out[3];
    g.spatial_gradient({0.7, 0.4, 0.6}, std::span<double>(out, 3));
    CHECK(out[0] == Catch::Approx(3.0 / 2.0).margin(1e-12));  // (Nx-1) / extent_x
    CHECK(out[1] == Catch::Approx(0.0).margin(1e-12));
    CHECK(out[2] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("spatial gradient matches finite differences of the forward") {
    auto g = random_grid({4, 4, 4}, 1, 9);
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> dist(0.05, 0.95);
    for (int trial = 0; trial < 5; ++trial) {
        Vec3<double> p{dist(rng), dist(rng), dist(rng)};
        double out[3];
        g.spatial_gradient(p, std::span<double>(out, 3));
        const double h = 1e-7;
        for (int a = 0; a < 3; ++a) {
            Vec3<double> pp = p, pm = p;
            pp[a] += h;
            pm[a] -= h;
            double vp, vm;
            g.interpolate(pp, std::span<double>(&vp, 1));
            g.interpolate(pm, std::span<double>(&vm, 1));
            const double fd = (vp - vm) / (2 * h);
            CHECK(out[a] == Catch::Approx(fd).epsilon(1e-5).margin(1e-8));
        }
    }
}

TEST_CASE("upsample to identical dims is the identity") {
    auto g = random_grid({3, 3, 3}, 2, 11);
    auto u = g.upsample({3, 3, 3});
    for (std::size_t i = 0; i < g.data().size(); ++i)
        CHECK(u.data()[i] == Catch::Approx(g.data()[i]).margin(1e-12));
}

TEST_CASE("upsampling a constant grid stays constant") {
    VoxelGrid<double> g({2, 2, 2}, 1, unit_box());
    for (auto& v : g.data()) v = -1.7;
    auto u = g.upsample({5, 4, 7});
    for (double v : u.data()) CHECK(v == Catch::Approx(-1.7).margin(1e-12));
}

TEST_CASE("2^3 -> 3^3 upsample of a linear-in-x grid takes exact interpolants") {
    VoxelGrid<double> g({2, 2, 2}, 1, unit_box());
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) g.at(i, j, k, 0) = 2.0 * i;
    auto u = g.upsample({3, 3, 3});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) CHECK(u.at(i, j, k, 0) == Catch::Approx(i).margin(1e-12));
}

TEST_CASE("upsample refuses to shrink") {
    auto g = random_grid({3, 3, 3}, 1, 12);
    CHECK_THROWS(g.upsample({2, 3, 3}));
}

TEST_CASE("upsampled linear field interpolates identically to the original") {
    // trilinear per coarse cell and new nodes within one coarse cell
    VoxelGrid<double> g({2, 2, 2}, 1, unit_box());
    int v = 0;
    for (auto& x : g.data()) x = 0.3 * (v++) - 0.9;
    auto u = g.upsample({4, 5, 3});
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3<double> p{dist(rng), dist(rng), dist(rng)};
        double a, b;
        g.interpolate(p, std::span<double>(&a, 1));
        u.interpolate(p, std::span<double>(&b, 1));
        CHECK(b == Catch::Approx(a).margin(1e-12));
    }
}

TEST_CASE("total variation of a constant grid is zero") {
    VoxelGrid<double> g({3, 3, 3}, 2, unit_box());
    for (auto& v : g.data()) v = 0.5;
    CHECK(g.total_variation() == 0.0);
}

TEST_CASE("total variation of an x-indexed 2^3 grid is 1/3") {
    // 4 of the 12 adjacent pairs differ by 1: mean squared difference 1/3
    VoxelGrid<double> g({2, 2, 2}, 1, unit_box());
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) g.at(i, j, k, 0) = i;
    CHECK(g.total_variation() == Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("total variation matches the pair-enumeration oracle") {
    auto g = random_grid({3, 3, 3}, 2, 14);
    CHECK(g.total_variation() == Catch::Approx(tv_oracle(g)).margin(1e-12));
    CHECK(g.total_variation() >= 0.0);
}

TEST_CASE("total variation gradient matches finite differences") {
    auto g = random_grid({3, 3, 3}, 1, 15);
    g.zero_grad();
    const double weight = 0.7;
    g.total_variation_backward(weight);
    const double h = 1e-6;
    for (std::size_t i = 0; i < g.data().size(); ++i) {
        const double orig = g.data()[i];
        g.data()[i] = orig + h;
        const double fp = g.total_variation();
        g.data()[i] = orig - h;
        const double fm = g.total_variation();
        g.data()[i] = orig;
        const double fd = weight * (fp - fm) / (2 * h);
        CHECK(g.grad()[i] == Catch::Approx(fd).epsilon(1e-6).margin(1e-10));
    }
}

TEST_CASE("adjoint identity between interpolate and scatter") {
    auto g = random_grid({3, 4, 3}, 2, 16);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> dist(0.05, 0.95);
    const Vec3<double> p{dist(rng), dist(rng), dist(rng)};
    const double u[2] = {0.4, -1.1};
    // v-perturbation direction
    std::vector<double> dir(g.data().size());
    for (auto& v : dir) v = dist(rng);
    g.zero_grad();
    g.scatter_grad(p, std::span<const double>(u, 2));
    double lhs = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i) lhs += g.grad()[i] * dir[i];
    // directional derivative of u . interpolate along dir
    const double h = 1e-6;
    double out[2];
    auto probe = [&](double s) {
        for (std::size_t i = 0; i < dir.size(); ++i) g.data()[i] += s * dir[i];
        g.interpolate(p, std::span<double>(out, 2));
        for (std::size_t i = 0; i < dir.size(); ++i) g.data()[i] -= s * dir[i];
        return u[0] * out[0] + u[1] * out[1];
    };
    const double rhs = (probe(h) - probe(-h)) / (2 * h);
    CHECK(lhs == Catch::Approx(rhs).epsilon(1e-6));
}

TEST_CASE("grid constructor validates shape") {
    CHECK_THROWS(VoxelGrid<double>({1, 2, 2}, 1, unit_box()));
    CHECK_THROWS(VoxelGrid<double>({2, 2, 2}, 0, unit_box()));
    CHECK_THROWS(Aabb<double>(Vec3<double>{0, 0, 0}, Vec3<double>{1, 0, 1}));
}
