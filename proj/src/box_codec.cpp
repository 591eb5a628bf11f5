#include "ffkit/box_codec.hpp"

#include <cmath>

namespace ffkit::codec {

void SizePriorTable::add(std::string class_name, double l, double w, double h) {
    if (l <= 0 || w <= 0 || h <= 0) throw DecodeError("size prior must be positive");
    for (const auto& e : entries_)
        if (e.class_name == class_name) throw DecodeError("duplicate size prior: " + class_name);
    entries_.push_back({std::move(class_name), l, w, h});
}

const SizePriorTable::Entry& SizePriorTable::lookup(const std::string& class_name) const {
    for (const auto& e : entries_)
        if (e.class_name == class_name) return e;
    throw UnknownClass("no size prior for class: " + class_name);
}

bool SizePriorTable::contains(const std::string& class_name) const {
    for (const auto& e : entries_)
        if (e.class_name == class_name) return true;
    return false;
}

SizePriorTable SizePriorTable::tractor_defaults() {
    SizePriorTable t;
    t.add("Cars", 4.47, 1.98, 1.64);
    t.add("People", 0.69, 0.75, 1.57);
    t.add("Cyclists", 1.87, 1.00, 1.64);
    t.add("Bicycles", 1.70, 1.22, 1.13);
    t.add("Trucks", 4.66, 1.99, 1.85);
    t.add("Freight Tricycles", 2.36, 2.36, 1.12);
    return t;
}

BoxParams BoxParams::from_flat(const std::vector<double>& v) {
    if (v.size() != 30) throw ShapeMismatch("BoxParams::from_flat: expected 30 values");
    BoxParams p;
    for (int i = 0; i < 3; ++i) p.center_offset[std::size_t(i)] = v[std::size_t(i)];
    for (int i = 0; i < 3; ++i) p.size_residual[std::size_t(i)] = v[std::size_t(3 + i)];
    for (int i = 0; i < kHeadingBins; ++i) p.heading_logits[std::size_t(i)] = v[std::size_t(6 + i)];
    for (int i = 0; i < kHeadingBins; ++i)
        p.heading_residuals[std::size_t(i)] = v[std::size_t(18 + i)];
    return p;
}

HeadingCode encode_heading(double yaw) {
    const double a = wrap_two_pi(yaw);
    int bin = int(std::floor((a + 0.5 * kBinWidth) / kBinWidth)) % kHeadingBins;
    HeadingCode h;
    h.bin = bin;
    h.residual = wrap_pi(a - bin * kBinWidth);
    // half-open intervals: a residual that landed exactly on +pi/12 belongs upward
    if (h.residual >= 0.5 * kBinWidth) {
        h.bin = (h.bin + 1) % kHeadingBins;
        h.residual -= kBinWidth;
    } else if (h.residual < -0.5 * kBinWidth) {
        h.bin = (h.bin + kHeadingBins - 1) % kHeadingBins;
        h.residual += kBinWidth;
    }
    return h;
}

double decode_heading(const HeadingCode& h) { return wrap_pi(h.bin * kBinWidth + h.residual); }

std::array<double, 3> decode_size(const std::string& class_name,
                                  const std::array<double, 3>& residual,
                                  const SizePriorTable& priors) {
    const auto& e = priors.lookup(class_name);
    std::array<double, 3> prior{e.length, e.width, e.height};
    std::array<double, 3> out{};
    for (std::size_t i = 0; i < 3; ++i) {
        out[i] = prior[i] * (1.0 + residual[i]);
        if (!(out[i] > 0.0))
            throw DecodeError("decoded non-positive dimension for class " + class_name);
    }
    return out;
}

Box3D decode_box(const BoxParams& params, const std::string& class_name, const Point3D& centroid,
                 double frame_rotation, const SizePriorTable& priors) {
    int best = 0;
    for (int b = 1; b < kHeadingBins; ++b)
        if (params.heading_logits[std::size_t(b)] > params.heading_logits[std::size_t(best)])
            best = b;
    const double yaw_rot = decode_heading(
        {best, params.heading_residuals[std::size_t(best)]});

    Point3D center_rot{centroid.x + params.center_offset[0], centroid.y + params.center_offset[1],
                       centroid.z + params.center_offset[2]};
    const auto dims = decode_size(class_name, params.size_residual, priors);

    Box3D box;
    box.center = rotate_y(center_rot, frame_rotation);
    box.length = dims[0];
    box.width = dims[1];
    box.height = dims[2];
    box.yaw = wrap_pi(yaw_rot + frame_rotation);
    box.class_label = class_name;
    return box;
}

}  // namespace ffkit::codec
