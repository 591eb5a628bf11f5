#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "ffkit/errors.hpp"

namespace ffkit {

inline constexpr double kPi = 3.14159265358979323846;

// wrap angle to [-pi, pi)
double wrap_pi(double a);
// wrap angle to [0, 2*pi)
double wrap_two_pi(double a);

struct Point3D {
    double x = 0.0, y = 0.0, z = 0.0;
};

struct Pixel {
    double u = 0.0, v = 0.0;
};

// Camera projection, KITTI camera frame: x right, y down, z forward.
// pixel ~ p * rect * lidar_to_cam * [x y z 1]^T; rect and lidar_to_cam
// default to identity so a bare intrinsic 3x4 also works.
struct ProjectionMatrix {
    std::array<std::array<double, 4>, 3> p{};
    std::array<std::array<double, 3>, 3> rect{};
    std::array<std::array<double, 4>, 3> lidar_to_cam{};
    bool has_rect = false;
    bool has_extrinsic = false;

    static ProjectionMatrix from_intrinsics(double fx, double fy, double cx, double cy);

    // single 3x4 matrix equal to p * rect * lidar_to_cam
    std::array<std::array<double, 4>, 3> composed() const;

    // sensor-frame point -> rectified camera frame
    Point3D to_camera(const Point3D& q) const;

    double fx() const { return p[0][0]; }
    double fy() const { return p[1][1]; }
    double cx() const { return p[0][2]; }
    double cy() const { return p[1][2]; }
};

// Axis-aligned image box, stored as center + size. Corner form (x1,y1,x2,y2)
// is accepted at I/O boundaries only.
struct Box2D {
    double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;

    static Box2D from_corners(double x1, double y1, double x2, double y2);
    double x1() const { return cx - 0.5 * w; }
    double y1() const { return cy - 0.5 * h; }
    double x2() const { return cx + 0.5 * w; }
    double y2() const { return cy + 0.5 * h; }
    bool valid() const { return w > 0.0 && h > 0.0; }
};

// Oriented 3D box. center is the geometric center; yaw rotates about the
// vertical (camera y) axis, wrapped to [-pi, pi). length runs along the
// object x axis at yaw 0, width along z, height along y.
struct Box3D {
    Point3D center;
    double length = 0.0, width = 0.0, height = 0.0;
    double yaw = 0.0;
    std::string class_label;
};

// Perspective projection of a sensor-frame point; throws NonPositiveDepth
// when the point is behind the camera (the caller must filter).
Pixel project_point(const Point3D& p, const ProjectionMatrix& proj);

struct ProjectedPoint {
    std::size_t index = 0;
    Pixel px;
};

struct CloudProjection {
    std::vector<ProjectedPoint> points;  // order-preserving, positive depth only
    std::size_t dropped = 0;
};

CloudProjection project_cloud(const std::vector<Point3D>& pts, const ProjectionMatrix& proj);
// serial reference for the OpenMP path above
CloudProjection project_cloud_serial(const std::vector<Point3D>& pts, const ProjectionMatrix& proj);

// 8 corners in fixed canonical order: top face (y = -h/2) first, then bottom,
// each in (+l,+w), (+l,-w), (-l,-w), (-l,+w) order before rotation.
std::array<Point3D, 8> box3d_corners(const Box3D& b);

// Boundary-inclusive membership test.
bool point_in_box2d(const Pixel& px, const Box2D& b);

// Rotation about the vertical axis: R_y(a) applied to p.
Point3D rotate_y(const Point3D& p, double a);

// true iff p lies inside (or on the boundary of) the oriented box
bool point_in_box3d(const Point3D& p, const Box3D& b, double inflate = 0.0);

}  // namespace ffkit
