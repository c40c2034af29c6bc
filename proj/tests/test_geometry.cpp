#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "specsplat/geometry.hpp"
#include "specsplat/rng.hpp"

using namespace specsplat;
using testutil::central_diff;
using testutil::rel_err;

namespace {

Quat<double> random_unit_quat(Rng& rng) {
    Quat<double> q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    return normalized(q);
}

Camera<double> random_camera(Rng& rng) {
    Camera<double> cam;
    cam.rotation = rotation_matrix(random_unit_quat(rng));
    cam.translation = {rng.normal(), rng.normal(), rng.normal()};
    cam.focal = {rng.uniform(300.0, 800.0), rng.uniform(300.0, 800.0)};
    cam.width = 640;
    cam.height = 480;
    cam.principal = {320.0, 240.0};
    return cam;
}

// World position whose camera-space image is exactly t.
Vec3<double> world_from_cam(const Camera<double>& cam, Vec3<double> t) {
    return transpose(cam.rotation) * (t - cam.translation);
}

Gaussian<double> random_gaussian_in_view(const Camera<double>& cam, Rng& rng) {
    Gaussian<double> g;
    const Vec3<double> t{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(1.0, 4.0)};
    g.position = world_from_cam(cam, t);
    g.rotation = random_unit_quat(rng);
    g.log_scale = {rng.uniform(-2.5, -0.5), rng.uniform(-2.5, -0.5), rng.uniform(-2.5, -0.5)};
    g.opacity_logit = rng.uniform(-2.0, 2.0);
    return g;
}

Eigen::Matrix3d to_eigen(const Mat3<double>& m) {
    Eigen::Matrix3d e;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) e(r, c) = m(std::size_t(r), std::size_t(c));
    return e;
}

// Projected 2D covariance (with the low-pass diagonal) computed entirely in
// Eigen as an independent check of project_gaussian's internals.
Eigen::Matrix2d oracle_cov2d(const Gaussian<double>& g, const Camera<double>& cam) {
    const Eigen::Matrix3d w = to_eigen(cam.rotation);
    const Eigen::Vector3d pos(g.position.x, g.position.y, g.position.z);
    const Eigen::Vector3d tr(cam.translation.x, cam.translation.y, cam.translation.z);
    const Eigen::Vector3d t = w * pos + tr;

    Eigen::Matrix<double, 2, 3> j = Eigen::Matrix<double, 2, 3>::Zero();
    j(0, 0) = cam.focal.x / t.z();
    j(0, 2) = -cam.focal.x * t.x() / (t.z() * t.z());
    j(1, 1) = cam.focal.y / t.z();
    j(1, 2) = -cam.focal.y * t.y() / (t.z() * t.z());

    const Eigen::Quaterniond q(g.rotation.w, g.rotation.x, g.rotation.y, g.rotation.z);
    const Eigen::Matrix3d r = q.normalized().toRotationMatrix();
    const Vec3<double> s = g.activated_scale();
    const Eigen::Vector3d s2(s.x * s.x, s.y * s.y, s.z * s.z);
    const Eigen::Matrix3d sigma = r * s2.asDiagonal() * r.transpose();

    Eigen::Matrix2d c = j * w * sigma * w.transpose() * j.transpose();
    c(0, 0) += kCovDilation;
    c(1, 1) += kCovDilation;
    return c;
}

}  // namespace

TEST_CASE("covariance3d matches an Eigen-built R S S^T R^T") {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        const Quat<double> q = random_unit_quat(rng);
        const Vec3<double> ls{rng.uniform(-2.0, 1.0), rng.uniform(-2.0, 1.0),
                              rng.uniform(-2.0, 1.0)};
        const Mat3<double> cov = covariance3d(q, ls).to_mat();

        const Eigen::Matrix3d r =
            Eigen::Quaterniond(q.w, q.x, q.y, q.z).toRotationMatrix();
        const Eigen::Vector3d s2(std::exp(2 * ls.x), std::exp(2 * ls.y), std::exp(2 * ls.z));
        const Eigen::Matrix3d want = r * s2.asDiagonal() * r.transpose();

        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                CHECK(cov(std::size_t(i), std::size_t(j)) ==
                      doctest::Approx(want(i, j)).epsilon(1e-12));
    }
}

TEST_CASE("covariance3d eigenvalues are the squared activated scales") {
    Rng rng(102);
    for (int trial = 0; trial < 100; ++trial) {
        const Quat<double> q = random_unit_quat(rng);
        const Vec3<double> ls{rng.uniform(-2.0, 1.0), rng.uniform(-2.0, 1.0),
                              rng.uniform(-2.0, 1.0)};
        const Eigen::Matrix3d cov = to_eigen(covariance3d(q, ls).to_mat());
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);

        std::array<double, 3> want{std::exp(2 * ls.x), std::exp(2 * ls.y), std::exp(2 * ls.z)};
        std::sort(want.begin(), want.end());
        for (int i = 0; i < 3; ++i)
            CHECK(es.eigenvalues()(i) == doctest::Approx(want[std::size_t(i)]).epsilon(1e-9));
    }
}

TEST_CASE("covariance3d rejects non-finite inputs") {
    const double nan = std::nan("");
    CHECK_THROWS_AS(covariance3d<double>({nan, 0, 0, 0}, {0, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(covariance3d<double>({1, 0, 0, 0}, {nan, 0, 0}), std::invalid_argument);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(covariance3d<double>({1, 0, 0, inf}, {0, 0, 0}), std::invalid_argument);
}

TEST_CASE("covariance3d backward matches finite differences") {
    Rng rng(103);
    testutil::GradCheckStats stats;
    for (int trial = 0; trial < 100; ++trial) {
        Quat<double> q = random_unit_quat(rng);
        Vec3<double> ls{rng.uniform(-1.5, 0.5), rng.uniform(-1.5, 0.5), rng.uniform(-1.5, 0.5)};
        const Sym3<double> w{rng.normal(), rng.normal(), rng.normal(),
                             rng.normal(), rng.normal(), rng.normal()};

        const auto scalar = [&] {
            const Sym3<double> c = covariance3d(q, ls);
            return w.xx * c.xx + w.xy * c.xy + w.xz * c.xz + w.yy * c.yy + w.yz * c.yz +
                   w.zz * c.zz;
        };

        Quat<double> dq{0, 0, 0, 0};
        Vec3<double> dls{};
        covariance3d_backward(q, ls, w, dq, dls);

        for (int k = 0; k < 4; ++k)
            stats.add(dq[std::size_t(k)], central_diff(scalar, &q[std::size_t(k)]), 1e-3, 1e-3);
        for (int k = 0; k < 3; ++k)
            stats.add(dls[std::size_t(k)], central_diff(scalar, &ls[std::size_t(k)]), 1e-3, 1e-3);
    }
    CHECK(stats.bad == 0);
    CHECK(stats.worst < 1e-3);
}

TEST_CASE("projection jacobian matches finite differences of the pixel map") {
    Rng rng(104);
    for (int trial = 0; trial < 50; ++trial) {
        const Camera<double> cam = random_camera(rng);
        Vec3<double> t{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(0.8, 5.0)};
        const auto j = projection_jacobian(cam, t);

        const auto px = [&] { return cam.focal.x * t.x / t.z + cam.principal.x; };
        const auto py = [&] { return cam.focal.y * t.y / t.z + cam.principal.y; };
        for (int k = 0; k < 3; ++k) {
            CHECK(rel_err(j[0][std::size_t(k)], central_diff(px, &t[std::size_t(k)]), 1e-3) <
                  1e-6);
            CHECK(rel_err(j[1][std::size_t(k)], central_diff(py, &t[std::size_t(k)]), 1e-3) <
                  1e-6);
        }
    }
}

TEST_CASE("project_gaussian matches an Eigen oracle for mean, conic and radius") {
    Rng rng(105);
    for (int trial = 0; trial < 100; ++trial) {
        const Camera<double> cam = random_camera(rng);
        const Gaussian<double> g = random_gaussian_in_view(cam, rng);
        const Sym3<double> cov = covariance3d(g.rotation, g.log_scale);
        const Splat2D<double> sp = project_gaussian(g, cov, cam);
        REQUIRE(!sp.culled);

        const Vec3<double> t = world_to_camera(cam, g.position);
        CHECK(sp.depth == doctest::Approx(t.z).epsilon(1e-12));
        CHECK(sp.mean2d.x ==
              doctest::Approx(cam.focal.x * t.x / t.z + cam.principal.x).epsilon(1e-10));
        CHECK(sp.mean2d.y ==
              doctest::Approx(cam.focal.y * t.y / t.z + cam.principal.y).epsilon(1e-10));

        const Eigen::Matrix2d c2d = oracle_cov2d(g, cam);
        const Eigen::Matrix2d inv = c2d.inverse();
        CHECK(rel_err(sp.conic.x, inv(0, 0)) < 1e-8);
        CHECK(rel_err(sp.conic.y, inv(0, 1)) < 1e-8);
        CHECK(rel_err(sp.conic.z, inv(1, 1)) < 1e-8);

        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(c2d);
        const double lambda_max = es.eigenvalues()(1);
        CHECK(sp.screen_radius == doctest::Approx(3.0 * std::sqrt(lambda_max)).epsilon(1e-8));

        const double op = g.opacity();
        if (255.0 * op > 1.0) {
            CHECK(sp.bin_radius ==
                  doctest::Approx(std::sqrt(2.0 * lambda_max * std::log(255.0 * op)))
                      .epsilon(1e-8));
        } else {
            CHECK(sp.bin_radius == -1.0);
        }
    }
}

TEST_CASE("project_gaussian culls outside the depth range") {
    Rng rng(106);
    const Camera<double> cam = random_camera(rng);
    Gaussian<double> g = random_gaussian_in_view(cam, rng);
    const Sym3<double> cov = covariance3d(g.rotation, g.log_scale);

    g.position = world_from_cam(cam, {0.0, 0.0, -1.0});
    CHECK(project_gaussian(g, cov, cam).culled);
    g.position = world_from_cam(cam, {0.0, 0.0, cam.near_plane * 0.5});
    CHECK(project_gaussian(g, cov, cam).culled);
    g.position = world_from_cam(cam, {0.0, 0.0, cam.far_plane * 2.0});
    CHECK(project_gaussian(g, cov, cam).culled);
    g.position = world_from_cam(cam, {0.0, 0.0, 2.0});
    CHECK(!project_gaussian(g, cov, cam).culled);
}

TEST_CASE("bin radius bounds every pixel that can reach the blending cutoff") {
    constexpr double kAlphaCut = 1.0 / 255.0;
    Rng rng(107);
    int circles = 0, hits = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const Camera<double> cam = random_camera(rng);
        Gaussian<double> g = random_gaussian_in_view(cam, rng);
        g.opacity_logit = rng.uniform(-4.0, 4.0);
        const Sym3<double> cov = covariance3d(g.rotation, g.log_scale);
        const Splat2D<double> sp = project_gaussian(g, cov, cam);
        REQUIRE(!sp.culled);
        const double op = g.opacity();

        if (255.0 * op <= 1.0) {
            CHECK(sp.bin_radius == -1.0);
            continue;
        }

        const auto alpha_at = [&](double dx, double dy) {
            const double power = -0.5 * (sp.conic.x * dx * dx + sp.conic.z * dy * dy) -
                                 sp.conic.y * dx * dy;
            return op * std::exp(power);
        };

        // Just outside the circle alpha must already be below the cutoff.
        const double r_out = sp.bin_radius + 1e-4;
        for (int k = 0; k < 64; ++k) {
            const double ang = 2.0 * std::numbers::pi * double(k) / 64.0;
            CHECK(alpha_at(r_out * std::cos(ang), r_out * std::sin(ang)) < kAlphaCut);
            ++circles;
        }
        // And any sample that reaches the cutoff lies inside it.
        for (int k = 0; k < 200; ++k) {
            const double dx = rng.uniform(-1.5, 1.5) * sp.bin_radius;
            const double dy = rng.uniform(-1.5, 1.5) * sp.bin_radius;
            if (alpha_at(dx, dy) >= kAlphaCut) {
                CHECK(dx * dx + dy * dy <= sp.bin_radius * sp.bin_radius * (1.0 + 1e-9));
                ++hits;
            }
        }
    }
    CHECK(circles > 0);
    CHECK(hits > 0);
}

TEST_CASE("project_gaussian backward matches finite differences") {
    Rng rng(108);
    testutil::GradCheckStats stats;
    for (int trial = 0; trial < 100; ++trial) {
        const Camera<double> cam = random_camera(rng);
        Gaussian<double> g = random_gaussian_in_view(cam, rng);
        const Vec2<double> wm{rng.normal(), rng.normal()};
        const Vec3<double> wc{rng.normal(), rng.normal(), rng.normal()};

        const auto scalar = [&] {
            const Sym3<double> cov = covariance3d(g.rotation, g.log_scale);
            const Splat2D<double> sp = project_gaussian(g, cov, cam);
            return wm.x * sp.mean2d.x + wm.y * sp.mean2d.y + wc.x * sp.conic.x +
                   wc.y * sp.conic.y + wc.z * sp.conic.z;
        };

        const Sym3<double> cov = covariance3d(g.rotation, g.log_scale);
        Vec3<double> dpos{};
        Sym3<double> dcov{};
        project_gaussian_backward(g.position, cov, cam, wm, wc, dpos, dcov);
        Quat<double> dq{0, 0, 0, 0};
        Vec3<double> dls{};
        covariance3d_backward(g.rotation, g.log_scale, dcov, dq, dls);

        for (int k = 0; k < 3; ++k)
            stats.add(dpos[std::size_t(k)], central_diff(scalar, &g.position[std::size_t(k)]),
                      1e-3, 1e-3);
        for (int k = 0; k < 4; ++k)
            stats.add(dq[std::size_t(k)], central_diff(scalar, &g.rotation[std::size_t(k)]),
                      1e-3, 1e-3);
        for (int k = 0; k < 3; ++k)
            stats.add(dls[std::size_t(k)], central_diff(scalar, &g.log_scale[std::size_t(k)]),
                      1e-3, 1e-3);
    }
    CHECK(stats.bad == 0);
    CHECK(stats.worst < 1e-3);
}

TEST_CASE("shortest axis normal picks the smallest scale and faces the viewer") {
    Gaussian<double> g;
    g.rotation = {1, 0, 0, 0};
    g.log_scale = {0.0, -1.0, 0.5};

    CHECK(shortest_axis_normal(g, Vec3<double>{0, 1, 0}).y == doctest::Approx(1.0));
    CHECK(shortest_axis_normal(g, Vec3<double>{0, -1, 0}).y == doctest::Approx(-1.0));

    // Ties resolve to the lowest axis index.
    g.log_scale = {-1.0, -1.0, 0.0};
    const Vec3<double> n = shortest_axis_normal(g, Vec3<double>{1, 0, 0});
    CHECK(n.x == doctest::Approx(1.0));
    CHECK(n.y == doctest::Approx(0.0));
    CHECK(n.z == doctest::Approx(0.0));

    // A quarter turn about z sends local x to world y.
    const double h = std::sqrt(0.5);
    g.rotation = {h, 0, 0, h};
    g.log_scale = {-2.0, 1.0, 1.0};
    const Vec3<double> ny = shortest_axis_normal(g, Vec3<double>{0, 1, 0});
    CHECK(ny.x == doctest::Approx(0.0));
    CHECK(ny.y == doctest::Approx(1.0));

    // info() reports exactly the axis/sign that the normal used.
    Rng rng(109);
    for (int trial = 0; trial < 50; ++trial) {
        Gaussian<double> h2;
        h2.rotation = random_unit_quat(rng);
        h2.log_scale = {rng.uniform(-2.0, 1.0), rng.uniform(-2.0, 1.0), rng.uniform(-2.0, 1.0)};
        const Vec3<double> view{rng.normal(), rng.normal(), rng.normal()};
        int axis = -1;
        double sign = 0;
        shortest_axis_info(h2, view, axis, sign);
        const Mat3<double> r = rotation_matrix(normalized(h2.rotation));
        const Vec3<double> got = shortest_axis_normal(h2, view);
        const Vec3<double> want = sign * r.col(std::size_t(axis));
        for (int k = 0; k < 3; ++k)
            CHECK(got[std::size_t(k)] == doctest::Approx(want[std::size_t(k)]).epsilon(1e-12));
        CHECK(dot(got, view) >= 0.0);
    }
}

TEST_CASE("camera transforms round trip and the center maps to the origin") {
    Rng rng(110);
    for (int trial = 0; trial < 20; ++trial) {
        const Camera<double> cam = random_camera(rng);
        const Vec3<double> at_center = world_to_camera(cam, cam.center());
        CHECK(length(at_center) < 1e-12);

        const Vec3<double> p{rng.normal(), rng.normal(), rng.normal()};
        const Vec3<double> back = world_from_cam(cam, world_to_camera(cam, p));
        CHECK(length(back - p) < 1e-12);
    }
}

TEST_CASE("camera validation rejects malformed parameters") {
    Rng rng(111);
    Camera<double> cam = random_camera(rng);
    CHECK_NOTHROW(cam.validate());

    Camera<double> bad = cam;
    bad.rotation(0, 0) += 0.01;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    // Orthonormal but orientation-reversing (a reflection).
    bad = cam;
    for (int c = 0; c < 3; ++c) std::swap(bad.rotation(0, std::size_t(c)),
                                          bad.rotation(1, std::size_t(c)));
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = cam;
    bad.width = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = cam;
    bad.near_plane = bad.far_plane;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("camera resize scales the intrinsics with the resolution") {
    Rng rng(112);
    const Camera<double> cam = random_camera(rng);
    const Camera<double> half = cam.resized(cam.width / 2, cam.height / 2);
    CHECK(half.focal.x == doctest::Approx(cam.focal.x / 2));
    CHECK(half.focal.y == doctest::Approx(cam.focal.y / 2));
    CHECK(half.principal.x == doctest::Approx(cam.principal.x / 2));
    CHECK(half.principal.y == doctest::Approx(cam.principal.y / 2));
    CHECK(half.width == cam.width / 2);
    CHECK(half.height == cam.height / 2);

    const Camera<double> same = cam.resized(cam.width, cam.height);
    CHECK(same.focal.x == doctest::Approx(cam.focal.x));
    CHECK(same.principal.y == doctest::Approx(cam.principal.y));
}
