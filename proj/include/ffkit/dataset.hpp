#pragma once

#include <string>
#include <vector>

#include "ffkit/image.hpp"
#include "ffkit/kitti_io.hpp"

namespace ffkit::io {

// One frame of a KITTI-layout dataset:
//   velodyne/%06u.bin  image_2/%06u.ppm  label_2/%06u.txt  calib/%06u.txt
struct SceneFrame {
    uint32_t id = 0;
    std::vector<PointXYZI> cloud;  // sensor (velodyne) frame
    Image image;
    ProjectionMatrix calib;
    std::vector<LabelRecord> labels;
};

std::string frame_name(uint32_t id);  // zero-padded, e.g. 000042

SceneFrame load_frame(const std::string& dataset_dir, uint32_t id, bool with_image = true);
void save_frame(const std::string& dataset_dir, const SceneFrame& frame);

// frame ids present under calib/, sorted ascending
std::vector<uint32_t> list_frame_ids(const std::string& dataset_dir);

std::vector<Point3D> cloud_points(const std::vector<PointXYZI>& cloud);

}  // namespace ffkit::io
