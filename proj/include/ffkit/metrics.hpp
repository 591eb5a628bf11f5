#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ffkit/geometry.hpp"

namespace ffkit::eval {

struct MatchConfig {
    std::map<std::string, double> iou_thresholds;  // per class, (0, 1]
    int ap_points = 40;                            // interpolation points (11 selects Pascal style)
    bool center_distance_error = false;            // alternative to ego-range difference
    bool errors_over_tp_only = true;

    double threshold_for(const std::string& class_name) const;
    static MatchConfig tractor_defaults();
};

struct ClassMetrics {
    double ap3d = 0.0;
    double ap_bev = 0.0;
    std::optional<double> mean_distance_error;     // meters, matched TPs only
    std::optional<double> mean_orientation_error;  // radians, matched TPs only
    int tp = 0, fp = 0, fn = 0;
    bool no_gt_and_no_detections = false;
};

struct MetricsReport {
    std::map<std::string, ClassMetrics> per_class;
    std::string config_echo;  // JSON of the MatchConfig used

    std::string to_json() const;
    std::string to_table() const;
    static MetricsReport from_json(const std::string& text);
};

struct Detection {
    Box3D box;
    double confidence = 1.0;
    uint32_t frame_id = 0;
    // insertion order is the deterministic tie-break for equal confidences
};

struct GroundTruth {
    Box3D box;
    uint32_t frame_id = 0;
};

// intersection of the yaw-rotated ground-plane rectangles over union of areas
double iou_bev(const Box3D& a, const Box3D& b);
// BEV intersection area times vertical overlap, over union of volumes
double iou_3d(const Box3D& a, const Box3D& b);

// | ||pred.center|| - ||gt.center|| |, i.e. ego-range difference
double distance_error(const Box3D& pred, const Box3D& gt);
double center_distance_error(const Box3D& pred, const Box3D& gt);
// min(|d|, 2*pi - |d|), in [0, pi]
double orientation_error(double pred_yaw, double gt_yaw);

// Interpolated AP for one class: sort by descending confidence (ties by
// insertion order), greedy-match each detection to the unmatched same-frame
// gt with highest IoU >= threshold. use_bev selects the IoU flavor.
double average_precision(const std::vector<Detection>& detections,
                         const std::vector<GroundTruth>& ground_truths,
                         const std::string& class_name, const MatchConfig& cfg,
                         bool use_bev = false);

// detections/ground truths grouped per frame id; classes taken from box labels
MetricsReport evaluate(const std::map<uint32_t, std::vector<Detection>>& detections,
                       const std::map<uint32_t, std::vector<GroundTruth>>& ground_truths,
                       const MatchConfig& cfg);

// convex polygon helpers shared with the synthetic renderer and tests
std::vector<std::array<double, 2>> bev_corners(const Box3D& b);
double convex_intersection_area(const std::vector<std::array<double, 2>>& a,
                                const std::vector<std::array<double, 2>>& b);
double polygon_area(const std::vector<std::array<double, 2>>& poly);

}  // namespace ffkit::eval
