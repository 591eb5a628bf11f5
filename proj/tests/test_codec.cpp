#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "common/testers.hpp"
#include "ffkit/box_codec.hpp"

using namespace ffkit;
using namespace ffkit::codec;

TEST_CASE("heading encode basics") {
    const HeadingCode zero = encode_heading(0.0);
    CHECK(zero.bin == 0);
    CHECK(zero.residual == doctest::Approx(0.0));

    const HeadingCode one = encode_heading(kPi / 6 + 0.1);
    CHECK(one.bin == 1);
    CHECK(one.residual == doctest::Approx(0.1).epsilon(1e-12));

    // exactly on the half-open boundary: assigned upward
    const HeadingCode edge = encode_heading(kPi / 12);
    CHECK(edge.bin == 1);
    CHECK(edge.residual == doctest::Approx(-kPi / 12).epsilon(1e-12));
}

TEST_CASE("heading decode basics and wrap convention") {
    CHECK(decode_heading({0, 0.0}) == doctest::Approx(0.0));
    CHECK(decode_heading({6, 0.0}) == doctest::Approx(-kPi));  // pi wraps to -pi
}

TEST_CASE("heading round-trip over random yaw") {
    Rng rng(71);
    for (int i = 0; i < 10000; ++i) {
        const double yaw = rng.uniform(-kPi, kPi);
        const double back = decode_heading(encode_heading(yaw));
        const double diff = std::abs(wrap_pi(back - yaw));
        CHECK(diff < 1e-9);
    }
}

TEST_CASE("bins partition the circle") {
    // residual stays in [-pi/12, pi/12) across a dense sweep including
    // boundary multiples
    for (int i = 0; i < 24000; ++i) {
        const double yaw = -2.0 * kPi + i * (4.0 * kPi / 24000.0);
        const HeadingCode h = encode_heading(yaw);
        CHECK(h.bin >= 0);
        CHECK(h.bin < kHeadingBins);
        CHECK(h.residual >= -kPi / 12 - 1e-12);
        CHECK(h.residual < kPi / 12 + 1e-12);
    }
    for (int b = 0; b < kHeadingBins; ++b) {
        const HeadingCode h = encode_heading(b * kPi / 6);
        CHECK(h.bin == b);
        CHECK(std::abs(h.residual) < 1e-12);
    }
}

TEST_CASE("size decode reproduces the shipped priors at zero residual") {
    const auto priors = SizePriorTable::tractor_defaults();
    const auto cars = decode_size("Cars", {0, 0, 0}, priors);
    CHECK(cars[0] == 4.47);
    CHECK(cars[1] == 1.98);
    CHECK(cars[2] == 1.64);
    const auto people = decode_size("People", {0, 0, 0}, priors);
    CHECK(people[0] == 0.69);
    CHECK(people[1] == 0.75);
    CHECK(people[2] == 1.57);

    const auto stretched = decode_size("Cars", {0.1, 0, 0}, priors);
    CHECK(stretched[0] == doctest::Approx(4.917).epsilon(1e-12));
    CHECK(stretched[1] == 1.98);

    CHECK_THROWS_AS(decode_size("Rover", {0, 0, 0}, priors), UnknownClass);
    CHECK_THROWS_AS(decode_size("Cars", {-1.0, 0, 0}, priors), DecodeError);
    CHECK_THROWS_AS(decode_size("Cars", {-1.5, 0, 0}, priors), DecodeError);
}

TEST_CASE("prior table rejects duplicates and non-positive entries") {
    SizePriorTable t;
    t.add("A", 1, 2, 3);
    CHECK_THROWS_AS(t.add("A", 1, 1, 1), DecodeError);
    CHECK_THROWS_AS(t.add("B", 0, 1, 1), DecodeError);
    CHECK(t.contains("A"));
    CHECK_FALSE(t.contains("B"));
}

TEST_CASE("decode_box with zero params lands on the centroid with prior size") {
    const auto priors = SizePriorTable::tractor_defaults();
    BoxParams p;  // all zeros; argmax of equal logits is bin 0
    const Point3D centroid{1.0, -0.5, 12.0};
    const Box3D box = decode_box(p, "Cars", centroid, 0.0, priors);
    CHECK(box.center.x == doctest::Approx(1.0));
    CHECK(box.center.y == doctest::Approx(-0.5));
    CHECK(box.center.z == doctest::Approx(12.0));
    CHECK(box.length == 4.47);
    CHECK(box.width == 1.98);
    CHECK(box.height == 1.64);
    CHECK(box.yaw == doctest::Approx(0.0));
    CHECK(box.class_label == "Cars");
}

TEST_CASE("decode_box composes offset, size and heading") {
    const auto priors = SizePriorTable::tractor_defaults();
    BoxParams p;
    p.center_offset = {0.5, -0.25, 1.5};
    p.size_residual = {0.1, -0.05, 0.2};
    p.heading_logits[7] = 3.0;
    p.heading_residuals[7] = 0.12;
    const Point3D centroid{2.0, 1.0, 20.0};
    const Box3D box = decode_box(p, "People", centroid, 0.0, priors);
    CHECK(box.center.x == doctest::Approx(2.5));
    CHECK(box.center.y == doctest::Approx(0.75));
    CHECK(box.center.z == doctest::Approx(21.5));
    CHECK(box.length == doctest::Approx(0.69 * 1.1).epsilon(1e-12));
    CHECK(box.width == doctest::Approx(0.75 * 0.95).epsilon(1e-12));
    CHECK(box.height == doctest::Approx(1.57 * 1.2).epsilon(1e-12));
    CHECK(box.yaw == doctest::Approx(wrap_pi(7 * kPi / 6 + 0.12)).epsilon(1e-12));
}

TEST_CASE("decode_box is invariant under frustum rotation then inverse") {
    const auto priors = SizePriorTable::tractor_defaults();
    Rng rng(83);
    for (int t = 0; t < 200; ++t) {
        BoxParams p;
        for (auto& v : p.center_offset) v = rng.uniform(-2, 2);
        for (auto& v : p.size_residual) v = rng.uniform(-0.3, 0.3);
        for (auto& v : p.heading_logits) v = rng.uniform(-2, 2);
        for (auto& v : p.heading_residuals) v = rng.uniform(-kPi / 12, kPi / 12);
        const Point3D centroid{rng.uniform(-5, 5), rng.uniform(-2, 2), rng.uniform(5, 40)};
        const double theta = rng.uniform(-kPi / 3, kPi / 3);

        const Box3D plain = decode_box(p, "Cyclists", centroid, 0.0, priors);
        // the rotated decode sees the centroid expressed in the rotated frame
        const Point3D centroid_rot = rotate_y(centroid, -theta);
        BoxParams p_rot = p;
        // offsets rotate with the frame
        const Point3D off_rot = rotate_y(
            {p.center_offset[0], p.center_offset[1], p.center_offset[2]}, -theta);
        p_rot.center_offset = {off_rot.x, off_rot.y, off_rot.z};
        Box3D via_rot = decode_box(p_rot, "Cyclists", centroid_rot, theta, priors);
        // heading residual of the argmax bin decodes in the rotated frame, so
        // compare yaw after removing theta from the plain decode
        CHECK(std::abs(via_rot.center.x - plain.center.x) < 1e-9);
        CHECK(std::abs(via_rot.center.y - plain.center.y) < 1e-9);
        CHECK(std::abs(via_rot.center.z - plain.center.z) < 1e-9);
        CHECK(via_rot.length == plain.length);
        CHECK(std::abs(wrap_pi(via_rot.yaw - plain.yaw - theta)) < 1e-9);
    }
}

TEST_CASE("BoxParams::from_flat layout") {
    std::vector<double> flat(30);
    for (std::size_t i = 0; i < 30; ++i) flat[i] = double(i);
    const BoxParams p = BoxParams::from_flat(flat);
    CHECK(p.center_offset[2] == 2.0);
    CHECK(p.size_residual[0] == 3.0);
    CHECK(p.heading_logits[0] == 6.0);
    CHECK(p.heading_residuals[11] == 29.0);
    CHECK_THROWS_AS(BoxParams::from_flat(std::vector<double>(29)), ShapeMismatch);
}
