#include "ffkit/geometry.hpp"

#include <cmath>

namespace ffkit {

double wrap_pi(double a) {
    double w = std::fmod(a + kPi, 2.0 * kPi);
    if (w < 0.0) w += 2.0 * kPi;
    return w - kPi;
}

double wrap_two_pi(double a) {
    double w = std::fmod(a, 2.0 * kPi);
    if (w < 0.0) w += 2.0 * kPi;
    return w;
}

ProjectionMatrix ProjectionMatrix::from_intrinsics(double fx, double fy, double cx, double cy) {
    ProjectionMatrix m;
    m.p[0] = {fx, 0.0, cx, 0.0};
    m.p[1] = {0.0, fy, cy, 0.0};
    m.p[2] = {0.0, 0.0, 1.0, 0.0};
    return m;
}

Point3D ProjectionMatrix::to_camera(const Point3D& q) const {
    Point3D c = q;
    if (has_extrinsic) {
        const auto& t = lidar_to_cam;
        c = {t[0][0] * q.x + t[0][1] * q.y + t[0][2] * q.z + t[0][3],
             t[1][0] * q.x + t[1][1] * q.y + t[1][2] * q.z + t[1][3],
             t[2][0] * q.x + t[2][1] * q.y + t[2][2] * q.z + t[2][3]};
    }
    if (has_rect) {
        const auto& r = rect;
        c = {r[0][0] * c.x + r[0][1] * c.y + r[0][2] * c.z,
             r[1][0] * c.x + r[1][1] * c.y + r[1][2] * c.z,
             r[2][0] * c.x + r[2][1] * c.y + r[2][2] * c.z};
    }
    return c;
}

std::array<std::array<double, 4>, 3> ProjectionMatrix::composed() const {
    // rect * lidar_to_cam as a 3x4
    std::array<std::array<double, 4>, 3> rt{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 4; ++j) {
            if (has_rect && has_extrinsic) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += rect[i][k] * lidar_to_cam[k][j];
                rt[i][j] = s;
            } else if (has_extrinsic) {
                rt[i][j] = lidar_to_cam[i][j];
            } else if (has_rect) {
                rt[i][j] = (j < 3) ? rect[i][j] : 0.0;
            } else {
                rt[i][j] = (i == j) ? 1.0 : 0.0;
            }
        }
    }
    std::array<std::array<double, 4>, 3> out{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 4; ++j) {
            double s = p[i][3] * ((j == 3) ? 1.0 : 0.0);
            for (int k = 0; k < 3; ++k) s += p[i][k] * rt[k][j];
            out[i][j] = s;
        }
    }
    return out;
}

Box2D Box2D::from_corners(double x1, double y1, double x2, double y2) {
    Box2D b;
    b.cx = 0.5 * (x1 + x2);
    b.cy = 0.5 * (y1 + y2);
    b.w = x2 - x1;
    b.h = y2 - y1;
    return b;
}

namespace {

struct RawProjection {
    double u, v, depth;
};

inline RawProjection project_raw(const Point3D& q, const ProjectionMatrix& proj) {
    Point3D c = proj.to_camera(q);
    const auto& p = proj.p;
    double hu = p[0][0] * c.x + p[0][1] * c.y + p[0][2] * c.z + p[0][3];
    double hv = p[1][0] * c.x + p[1][1] * c.y + p[1][2] * c.z + p[1][3];
    double hw = p[2][0] * c.x + p[2][1] * c.y + p[2][2] * c.z + p[2][3];
    return {hu / hw, hv / hw, hw};
}

}  // namespace

Pixel project_point(const Point3D& pt, const ProjectionMatrix& proj) {
    RawProjection r = project_raw(pt, proj);
    if (!(r.depth > 0.0)) throw NonPositiveDepth("project_point: depth <= 0");
    return {r.u, r.v};
}

CloudProjection project_cloud_serial(const std::vector<Point3D>& pts, const ProjectionMatrix& proj) {
    CloudProjection out;
    out.points.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        RawProjection r = project_raw(pts[i], proj);
        if (r.depth > 0.0) {
            out.points.push_back({i, {r.u, r.v}});
        } else {
            ++out.dropped;
        }
    }
    return out;
}

CloudProjection project_cloud(const std::vector<Point3D>& pts, const ProjectionMatrix& proj) {
    const std::size_t n = pts.size();
    if (n < 4096) return project_cloud_serial(pts, proj);

    // each element is independent, so the parallel pass is bit-identical to
    // the serial reference; compaction stays serial to preserve order
    std::vector<RawProjection> raw(n);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < (long long)n; ++i) {
        raw[i] = project_raw(pts[i], proj);
    }
    CloudProjection out;
    out.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (raw[i].depth > 0.0) {
            out.points.push_back({i, {raw[i].u, raw[i].v}});
        } else {
            ++out.dropped;
        }
    }
    return out;
}

Point3D rotate_y(const Point3D& p, double a) {
    double c = std::cos(a), s = std::sin(a);
    return {c * p.x + s * p.z, p.y, -s * p.x + c * p.z};
}

std::array<Point3D, 8> box3d_corners(const Box3D& b) {
    static constexpr double sx[8] = {+1, +1, -1, -1, +1, +1, -1, -1};
    static constexpr double sz[8] = {+1, -1, -1, +1, +1, -1, -1, +1};
    static constexpr double sy[8] = {-1, -1, -1, -1, +1, +1, +1, +1};
    std::array<Point3D, 8> out;
    for (int i = 0; i < 8; ++i) {
        Point3D local{0.5 * b.length * sx[i], 0.5 * b.height * sy[i], 0.5 * b.width * sz[i]};
        Point3D r = rotate_y(local, b.yaw);
        out[i] = {r.x + b.center.x, r.y + b.center.y, r.z + b.center.z};
    }
    return out;
}

bool point_in_box2d(const Pixel& px, const Box2D& b) {
    return std::abs(px.u - b.cx) <= 0.5 * b.w && std::abs(px.v - b.cy) <= 0.5 * b.h;
}

bool point_in_box3d(const Point3D& p, const Box3D& b, double inflate) {
    Point3D d{p.x - b.center.x, p.y - b.center.y, p.z - b.center.z};
    Point3D local = rotate_y(d, -b.yaw);
    return std::abs(local.x) <= 0.5 * b.length + inflate &&
           std::abs(local.y) <= 0.5 * b.height + inflate &&
           std::abs(local.z) <= 0.5 * b.width + inflate;
}

}  // namespace ffkit
