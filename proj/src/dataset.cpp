#include "ffkit/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "ffkit/binio.hpp"

namespace fs = std::filesystem;

namespace ffkit::io {

std::string frame_name(uint32_t id) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06u", id);
    return buf;
}

SceneFrame load_frame(const std::string& dataset_dir, uint32_t id, bool with_image) {
    const std::string name = frame_name(id);
    SceneFrame f;
    f.id = id;
    f.calib = parse_calib_file(read_file_text(dataset_dir + "/calib/" + name + ".txt"));
    f.cloud = read_point_cloud_bin(dataset_dir + "/velodyne/" + name + ".bin");
    const std::string label_path = dataset_dir + "/label_2/" + name + ".txt";
    if (fs::exists(label_path)) f.labels = parse_label_file(read_file_text(label_path));
    if (with_image) {
        const std::string img_path = dataset_dir + "/image_2/" + name + ".ppm";
        if (fs::exists(img_path)) f.image = read_ppm(img_path);
    }
    return f;
}

void save_frame(const std::string& dataset_dir, const SceneFrame& frame) {
    for (const char* sub : {"velodyne", "image_2", "label_2", "calib"})
        fs::create_directories(fs::path(dataset_dir) / sub);
    const std::string name = frame_name(frame.id);
    write_point_cloud_bin(frame.cloud, dataset_dir + "/velodyne/" + name + ".bin");
    if (!frame.image.empty()) write_ppm(frame.image, dataset_dir + "/image_2/" + name + ".ppm");
    write_file_text(dataset_dir + "/label_2/" + name + ".txt", serialize_labels(frame.labels));
    write_file_text(dataset_dir + "/calib/" + name + ".txt", serialize_calib(frame.calib));
}

std::vector<uint32_t> list_frame_ids(const std::string& dataset_dir) {
    std::vector<uint32_t> ids;
    const fs::path dir = fs::path(dataset_dir) / "calib";
    if (!fs::exists(dir)) throw IoError("no calib directory under " + dataset_dir);
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() != ".txt") continue;
        ids.push_back(uint32_t(std::stoul(e.path().stem().string())));
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<Point3D> cloud_points(const std::vector<PointXYZI>& cloud) {
    std::vector<Point3D> out;
    out.reserve(cloud.size());
    for (const auto& p : cloud) out.push_back({double(p.x), double(p.y), double(p.z)});
    return out;
}

}  // namespace ffkit::io
