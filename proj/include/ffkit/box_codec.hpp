#pragma once

#include <array>
#include <string>
#include <vector>

#include "ffkit/geometry.hpp"

namespace ffkit::codec {

// Per-class mean dimensions in meters the network regresses residuals
// against. The shipped defaults are the tractor-road class statistics.
class SizePriorTable {
public:
    struct Entry {
        std::string class_name;
        double length, width, height;
    };

    void add(std::string class_name, double l, double w, double h);
    const Entry& lookup(const std::string& class_name) const;  // throws UnknownClass
    bool contains(const std::string& class_name) const;
    const std::vector<Entry>& entries() const { return entries_; }

    static SizePriorTable tractor_defaults();

private:
    std::vector<Entry> entries_;
};

inline constexpr int kHeadingBins = 12;
inline constexpr double kBinWidth = 2.0 * kPi / kHeadingBins;  // 30 degrees

struct HeadingCode {
    int bin = 0;             // [0, 12)
    double residual = 0.0;   // [-pi/12, pi/12)
};

// Network output parameterization: 3 + 3 + 12 + 12 = 30 values.
struct BoxParams {
    std::array<double, 3> center_offset{};    // meters, relative to mask centroid
    std::array<double, 3> size_residual{};    // unitless multipliers
    std::array<double, kHeadingBins> heading_logits{};
    std::array<double, kHeadingBins> heading_residuals{};  // radians

    static BoxParams from_flat(const std::vector<double>& v);  // 30 values
};

// Bin centers sit at b * 30 deg with half-open intervals
// [center - 15 deg, center + 15 deg); boundaries assign upward.
HeadingCode encode_heading(double yaw);
double decode_heading(const HeadingCode& h);  // wrapped to [-pi, pi)

// dimension_i = prior_i * (1 + residual_i); throws DecodeError when any
// residual <= -1 (non-positive size), UnknownClass when the class is missing.
std::array<double, 3> decode_size(const std::string& class_name,
                                  const std::array<double, 3>& residual,
                                  const SizePriorTable& priors);

// centroid is in the frustum-rotated frame; frame_rotation is the rotation
// that was applied (0 when normalization is off) and is inverted here.
Box3D decode_box(const BoxParams& params, const std::string& class_name, const Point3D& centroid,
                 double frame_rotation, const SizePriorTable& priors);

}  // namespace ffkit::codec
