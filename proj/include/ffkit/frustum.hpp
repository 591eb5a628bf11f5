#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ffkit/dataset.hpp"
#include "ffkit/geometry.hpp"
#include "ffkit/rng.hpp"
#include "ffkit/tensor.hpp"

namespace ffkit::frustum {

// Square image crop window: side = max(w, h) * alpha of the source box.
struct CropWindow {
    double cx = 0.0, cy = 0.0, side = 0.0;
};

// One training/inference unit: masked frustum points with class code, crop
// window and optional ground truth. When normalized is set, point and box
// coordinates are in the frustum-rotated camera frame and frustum_angle holds
// the rotation that decode must invert.
struct FrustumSample {
    Tensor points;  // n x 4 f32: x, y, z, xi
    std::vector<float> class_onehot;
    int class_index = 0;
    CropWindow crop;
    std::optional<Box3D> gt_box;
    Box2D source_box2d;
    double frustum_angle = 0.0;
    bool normalized = false;
    float confidence = 1.0f;
    uint32_t frame_id = 0, object_id = 0, perturb_index = 0;
    Tensor crop_pixels;  // 3 x S x S f32 in [0,1]; undefined when not materialized
};

struct PipelineConfig {
    int n_points = 1024;
    double shift_ratio = 0.1;
    int train_perturbations = 5;
    double crop_alpha = 1.5;
    int crop_size = 224;               // materialized crop resolution; 0 disables pixels
    bool normalize_frustum = true;     // rotate each frustum onto the depth axis
    bool mask_half_extent = false;     // sigma = w/2, h/2 instead of the printed w, h
    bool clip_boxes_to_image = false;  // perturbed boxes are not clipped by default
};

// Eq.-style box perturbation: independent alpha ~ U[-1, 1] per component.
Box2D perturb_box2d(const Box2D& b, double shift_ratio, Rng& rng);
// deterministic variant used by tests: alphas = {ax, ay, aw, ah}
Box2D perturb_box2d(const Box2D& b, double shift_ratio, const std::array<double, 4>& alphas);

// exp(-(u-cx)^2/(2 w^2) - (v-cy)^2/(2 h^2)); full width/height denominators
// by default, half extents behind the config flag
double gaussian_mask(const Pixel& px, const Box2D& b, bool half_extent = false);

struct MaskedPoint {
    Point3D p;  // sensor frame
    double xi = 0.0;
};

// exactly the points whose projection falls inside b, input order preserved,
// each with its mask value; points behind the camera are filtered
std::vector<MaskedPoint> extract_frustum(const std::vector<Point3D>& pts, const Box2D& b,
                                         const ProjectionMatrix& proj, bool half_extent = false);

// n x 4 f32 rows: without replacement when enough points, otherwise keep all
// and pad with replacement; throws EmptyFrustum on empty input
Tensor sample_fixed(const std::vector<MaskedPoint>& pts, int n, Rng& rng);

CropWindow crop_window(const Box2D& b, double alpha, int image_w, int image_h);

enum class SampleMode { train, eval };

struct BoxInput {
    Box2D box;
    std::string class_name;
    float confidence = 1.0f;
    std::optional<Box3D> gt_box;  // camera frame
};

std::vector<BoxInput> boxes_from_labels(const std::vector<io::LabelRecord>& labels);

struct BuildResult {
    std::vector<FrustumSample> samples;
    std::size_t dropped_empty = 0;
    std::size_t skipped_unknown_class = 0;
};

// train mode: shift_ratio perturbations, train_perturbations per object;
// eval mode: one unperturbed sample per object. The random stream is split
// per (frame, object, perturbation), so parallel and serial runs agree.
BuildResult build_samples(const io::SceneFrame& frame, const std::vector<BoxInput>& boxes,
                          SampleMode mode, const PipelineConfig& cfg,
                          const std::vector<std::string>& class_names, uint64_t seed);

// Packed sample container with an index table; points and floats are
// little-endian 32-bit.
struct SampleSet {
    std::vector<std::string> class_names;
    int n_points = 0;
    int crop_size = 0;  // 0 when crop pixels are not materialized
    std::vector<FrustumSample> samples;
};

void save_samples(const SampleSet& set, const std::string& path);
SampleSet load_samples(const std::string& path);

// angle of the ray through the 2D box center, about the vertical axis
double frustum_angle_for_box(const Box2D& b, const ProjectionMatrix& proj);

}  // namespace ffkit::frustum
