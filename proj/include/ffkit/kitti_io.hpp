#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ffkit/geometry.hpp"

namespace ffkit::io {

// One KITTI label line. Dimensions are stored in KITTI field order (h, w, l)
// and (x, y, z) is the bottom-face center in the camera frame; box3d()
// converts to the geometric-center convention used everywhere else.
struct LabelRecord {
    std::string class_name;
    double truncation = 0.0;  // [0, 1]
    int occlusion = 0;        // {0, 1, 2, 3}
    double alpha = 0.0;       // observation angle, radians
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;  // 2D box corners, pixels
    double h = 0.0, w = 0.0, l = 0.0;               // meters
    double x = 0.0, y = 0.0, z = 0.0;               // meters, camera frame
    double rotation_y = 0.0;                        // radians, [-pi, pi]
    std::optional<double> score;  // 16th field on detection files

    Box2D box2d() const { return Box2D::from_corners(x1, y1, x2, y2); }
    Box3D box3d() const;
    static LabelRecord from_box3d(const Box3D& b, const Box2D& image_box);
};

std::vector<LabelRecord> parse_label_file(const std::string& text);
std::string serialize_labels(const std::vector<LabelRecord>& labels);

// Reads "P2:", "R0_rect:" and "Tr_velo_to_cam:" keyed lines; other keys are
// ignored. P2 is required, the other two default to identity when absent.
ProjectionMatrix parse_calib_file(const std::string& text);
std::string serialize_calib(const ProjectionMatrix& m);

struct PointXYZI {
    float x = 0, y = 0, z = 0, intensity = 0;
};

// little-endian float32 quadruples, KITTI velodyne convention
std::vector<PointXYZI> read_point_cloud_bin(const std::string& path);
void write_point_cloud_bin(const std::vector<PointXYZI>& pts, const std::string& path);

struct SplitManifest {
    uint64_t seed = 0;
    std::array<double, 3> ratios{0.70, 0.15, 0.15};
    std::vector<uint32_t> train, val, test;

    const std::vector<uint32_t>& split(const std::string& name) const;
    std::string to_json() const;
    static SplitManifest from_json(const std::string& text);
};

// seeded shuffle then contiguous partition; sizes are floor(n*r) for train
// and val, remainder to test
SplitManifest make_splits(std::vector<uint32_t> frame_ids, std::array<double, 3> ratios,
                          uint64_t seed);

}  // namespace ffkit::io
