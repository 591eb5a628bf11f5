#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "common/testers.hpp"
#include "ffkit/geometry.hpp"

using namespace ffkit;

namespace {

ProjectionMatrix simple_cam() { return ProjectionMatrix::from_intrinsics(100, 100, 50, 50); }

bool corner_sets_match(const std::array<Point3D, 8>& a, const std::array<Point3D, 8>& b,
                       double tol) {
    for (const auto& p : a) {
        bool found = false;
        for (const auto& q : b) {
            if (std::abs(p.x - q.x) < tol && std::abs(p.y - q.y) < tol &&
                std::abs(p.z - q.z) < tol) {
                found = true;
                break;
            }
        }
        if (!found) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("project_point pinhole basics") {
    const auto cam = simple_cam();
    const Pixel center = project_point({0, 0, 10}, cam);
    CHECK(center.u == doctest::Approx(50.0));
    CHECK(center.v == doctest::Approx(50.0));

    // u = fx * x / z + cx
    const Pixel off = project_point({1, 0, 10}, cam);
    CHECK(off.u == doctest::Approx(60.0));
    CHECK(off.v == doctest::Approx(50.0));

    CHECK_THROWS_AS(project_point({0, 0, -1}, cam), NonPositiveDepth);
    CHECK_THROWS_AS(project_point({0, 0, 0}, cam), NonPositiveDepth);
}

TEST_CASE("project_cloud filters and preserves order") {
    const auto cam = simple_cam();
    CHECK(project_cloud({}, cam).points.empty());

    const auto two = project_cloud({{0, 0, 10}, {0, 0, -1}}, cam);
    REQUIRE(two.points.size() == 1);
    CHECK(two.points[0].index == 0);
    CHECK(two.dropped == 1);

    // element-wise oracle on random positive-depth points
    Rng rng(31);
    std::vector<Point3D> pts;
    for (int i = 0; i < 1000; ++i)
        pts.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.1, 50)});
    const auto cloud = project_cloud(pts, cam);
    REQUIRE(cloud.points.size() == pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(cloud.points[i].index == i);
        const Pixel one = project_point(pts[i], cam);
        CHECK(cloud.points[i].px.u == one.u);
        CHECK(cloud.points[i].px.v == one.v);
    }
}

TEST_CASE("project_cloud parallel path matches the serial reference bitwise") {
    Rng rng(77);
    std::vector<Point3D> pts;
    for (int i = 0; i < 20000; ++i)
        pts.push_back({rng.uniform(-30, 30), rng.uniform(-5, 5), rng.uniform(-10, 80)});
    const auto cam = simple_cam();
    const auto par = project_cloud(pts, cam);
    const auto ser = project_cloud_serial(pts, cam);
    REQUIRE(par.points.size() == ser.points.size());
    CHECK(par.dropped == ser.dropped);
    for (std::size_t i = 0; i < par.points.size(); ++i) {
        CHECK(par.points[i].index == ser.points[i].index);
        CHECK(par.points[i].px.u == ser.points[i].px.u);
        CHECK(par.points[i].px.v == ser.points[i].px.v);
    }
}

TEST_CASE("box3d_corners canonical order and symmetry") {
    Box3D cube;
    cube.length = cube.width = cube.height = 1.0;

    const auto corners = box3d_corners(cube);
    for (const auto& c : corners) {
        CHECK(std::abs(std::abs(c.x) - 0.5) < 1e-12);
        CHECK(std::abs(std::abs(c.y) - 0.5) < 1e-12);
        CHECK(std::abs(std::abs(c.z) - 0.5) < 1e-12);
    }

    Box3D rotated = cube;
    rotated.yaw = kPi / 2;
    CHECK(corner_sets_match(box3d_corners(rotated), corners, 1e-9));
}

TEST_CASE("box3d_corners against a hand-applied rotation") {
    Box3D b;
    b.length = 2.0;
    b.width = 1.0;
    b.height = 1.0;
    b.yaw = kPi / 4;
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const auto corners = box3d_corners(b);
    // corner 0 is (+l/2, -h/2, +w/2) in the local frame
    const double lx = 1.0, lz = 0.5;
    CHECK(corners[0].x == doctest::Approx(c * lx + s * lz).epsilon(1e-12));
    CHECK(corners[0].z == doctest::Approx(-s * lx + c * lz).epsilon(1e-12));
    CHECK(corners[0].y == doctest::Approx(-0.5));
}

TEST_CASE("corner mean equals center and yaw periodicity") {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        const Box3D b = testing::random_box3d(rng);
        const auto corners = box3d_corners(b);
        Point3D mean{};
        for (const auto& p : corners) {
            mean.x += p.x / 8;
            mean.y += p.y / 8;
            mean.z += p.z / 8;
        }
        CHECK(std::abs(mean.x - b.center.x) < 1e-9);
        CHECK(std::abs(mean.y - b.center.y) < 1e-9);
        CHECK(std::abs(mean.z - b.center.z) < 1e-9);

        Box3D shifted = b;
        shifted.yaw = b.yaw + 2 * kPi;
        CHECK(corner_sets_match(box3d_corners(shifted), corners, 1e-9));
    }
}

TEST_CASE("point_in_box2d boundary is inclusive") {
    Box2D b{100, 100, 40, 20};
    CHECK(point_in_box2d({100, 100}, b));
    CHECK(point_in_box2d({120, 100}, b));  // exactly on the right edge
    CHECK(point_in_box2d({100, 110}, b));
    CHECK_FALSE(point_in_box2d({121, 100}, b));
    CHECK_FALSE(point_in_box2d({100, 111}, b));
}

TEST_CASE("composed KITTI-style projection matches the single-matrix form") {
    // rectification: small rotation about y; extrinsic: rotation + offset
    ProjectionMatrix m = ProjectionMatrix::from_intrinsics(700, 710, 600, 180);
    m.p[0][3] = 45.0;  // baseline-style offset in P2
    const double a = 0.03;
    m.rect = {{{std::cos(a), 0, std::sin(a)}, {0, 1, 0}, {-std::sin(a), 0, std::cos(a)}}};
    m.has_rect = true;
    m.lidar_to_cam = {{{0, -1, 0, 0.02}, {0, 0, -1, -0.06}, {1, 0, 0, -0.3}}};
    m.has_extrinsic = true;

    const auto composed = m.composed();
    Rng rng(9);
    for (int t = 0; t < 200; ++t) {
        const Point3D p{rng.uniform(2, 60), rng.uniform(-15, 15), rng.uniform(-2, 2)};
        const Pixel via_stages = project_point(p, m);
        const double hu = composed[0][0] * p.x + composed[0][1] * p.y + composed[0][2] * p.z +
                          composed[0][3];
        const double hv = composed[1][0] * p.x + composed[1][1] * p.y + composed[1][2] * p.z +
                          composed[1][3];
        const double hw = composed[2][0] * p.x + composed[2][1] * p.y + composed[2][2] * p.z +
                          composed[2][3];
        CHECK(std::abs(via_stages.u - hu / hw) < 1e-9);
        CHECK(std::abs(via_stages.v - hv / hw) < 1e-9);
    }
}

TEST_CASE("angle wrapping conventions") {
    CHECK(wrap_pi(kPi) == doctest::Approx(-kPi));
    CHECK(wrap_pi(-kPi) == doctest::Approx(-kPi));
    CHECK(wrap_pi(3 * kPi) == doctest::Approx(-kPi));
    CHECK(wrap_pi(0.25) == doctest::Approx(0.25));
    CHECK(wrap_two_pi(-0.1) == doctest::Approx(2 * kPi - 0.1));
}

TEST_CASE("point_in_box3d respects yaw") {
    Box3D b;
    b.center = {0, 0, 10};
    b.length = 4;
    b.width = 1;
    b.height = 1;
    b.yaw = kPi / 2;  // length now runs along z
    CHECK(point_in_box3d({0, 0, 11.9}, b));
    CHECK_FALSE(point_in_box3d({1.9, 0, 10}, b));
    CHECK(point_in_box3d({0.49, 0, 10}, b));
}
