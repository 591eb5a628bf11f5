#pragma once

#include <string>
#include <vector>

#include "ffkit/box_codec.hpp"
#include "ffkit/dataset.hpp"

namespace ffkit::io {

// Synthetic tractor-road scene recipe. Boxes are placed non-overlapping in
// the camera's field of view, sized from the class priors with a small
// jitter; LiDAR-like points are sampled on camera-visible faces with
// range-dependent density, plus ground and clutter; the image is a crude
// flat-shaded render whose job is learnable signal, not realism.
struct SynthSpec {
    std::vector<std::string> classes = {"Cars", "People"};
    int min_objects = 1;
    int max_objects = 2;
    double min_range = 8.0;   // meters
    double max_range = 22.0;
    double size_jitter = 0.05;  // relative stddev around the prior
    double fx = 520.0, fy = 520.0;
    int image_w = 640, image_h = 480;
    double sensor_height = 1.6;       // camera above ground, meters
    double point_noise = 0.003;       // per-axis, truncated at 2.5 sigma
    double surface_density = 120.0;   // points per m^2 at 10 m
    int ground_points = 3000;
    int clutter_points = 400;
    double pixel_noise = 6.0;         // uniform, 8-bit levels
    int max_place_retries = 200;

    std::string to_json() const;
    static SynthSpec from_json(const std::string& text);
};

// Deterministic under (spec, frame_id, seed). Labels are exact: 2D boxes are
// the projected 3D-corner hulls clipped to the image. Throws SpecInfeasible
// when non-overlap placement fails after bounded retries.
SceneFrame generate_synthetic_scene(const SynthSpec& spec, const codec::SizePriorTable& priors,
                                    uint32_t frame_id, uint64_t seed);

// fixed velodyne->camera frame change used by the synthetic calibration
ProjectionMatrix synth_projection(const SynthSpec& spec);
Point3D camera_to_velo(const Point3D& cam);

}  // namespace ffkit::io
