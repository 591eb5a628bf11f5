#include "ffkit/frustum.hpp"

#include <algorithm>
#include <cmath>

#include "ffkit/binio.hpp"
#include "ffkit/image.hpp"

namespace ffkit::frustum {

Box2D perturb_box2d(const Box2D& b, double shift_ratio, const std::array<double, 4>& alphas) {
    if (shift_ratio < 0.0) throw InvalidRatio("shift_ratio must be >= 0");
    if (shift_ratio >= 1.0) throw InvalidRatio("shift_ratio must be < 1 to keep sizes positive");
    Box2D out;
    out.cx = b.cx + b.w * shift_ratio * alphas[0];
    out.cy = b.cy + b.h * shift_ratio * alphas[1];
    out.w = b.w + b.w * shift_ratio * alphas[2];
    out.h = b.h + b.h * shift_ratio * alphas[3];
    return out;
}

Box2D perturb_box2d(const Box2D& b, double shift_ratio, Rng& rng) {
    std::array<double, 4> a;
    for (double& v : a) v = rng.uniform(-1.0, 1.0);
    return perturb_box2d(b, shift_ratio, a);
}

double gaussian_mask(const Pixel& px, const Box2D& b, bool half_extent) {
    const double sx = half_extent ? 0.5 * b.w : b.w;
    const double sy = half_extent ? 0.5 * b.h : b.h;
    const double du = px.u - b.cx;
    const double dv = px.v - b.cy;
    return std::exp(-du * du / (2.0 * sx * sx) - dv * dv / (2.0 * sy * sy));
}

std::vector<MaskedPoint> extract_frustum(const std::vector<Point3D>& pts, const Box2D& b,
                                         const ProjectionMatrix& proj, bool half_extent) {
    std::vector<MaskedPoint> out;
    const CloudProjection cp = project_cloud(pts, proj);
    for (const auto& pp : cp.points) {
        if (point_in_box2d(pp.px, b))
            out.push_back({pts[pp.index], gaussian_mask(pp.px, b, half_extent)});
    }
    return out;
}

Tensor sample_fixed(const std::vector<MaskedPoint>& pts, int n, Rng& rng) {
    if (pts.empty()) throw EmptyFrustum("no points to sample");
    const std::size_t cnt = pts.size();
    std::vector<std::size_t> picks;
    picks.reserve(std::size_t(n));
    if (cnt >= std::size_t(n)) {
        // partial Fisher-Yates, then restore input order
        std::vector<std::size_t> idx(cnt);
        for (std::size_t i = 0; i < cnt; ++i) idx[i] = i;
        for (std::size_t i = 0; i < std::size_t(n); ++i) {
            const std::size_t j = i + std::size_t(rng.uniform_int(cnt - i));
            std::swap(idx[i], idx[j]);
        }
        picks.assign(idx.begin(), idx.begin() + n);
        std::sort(picks.begin(), picks.end());
    } else {
        for (std::size_t i = 0; i < cnt; ++i) picks.push_back(i);
        for (std::size_t i = cnt; i < std::size_t(n); ++i)
            picks.push_back(std::size_t(rng.uniform_int(cnt)));
    }
    Tensor out({n, 4}, Dtype::f32);
    float* po = out.data<float>();
    for (int i = 0; i < n; ++i) {
        const MaskedPoint& mp = pts[picks[std::size_t(i)]];
        po[i * 4 + 0] = float(mp.p.x);
        po[i * 4 + 1] = float(mp.p.y);
        po[i * 4 + 2] = float(mp.p.z);
        po[i * 4 + 3] = float(mp.xi);
    }
    return out;
}

CropWindow crop_window(const Box2D& b, double alpha, int /*image_w*/, int /*image_h*/) {
    if (!(alpha > 0.0)) throw InvalidRatio("crop alpha must be positive");
    // the window may exceed image bounds; the crop is zero padded downstream
    return {b.cx, b.cy, std::max(b.w, b.h) * alpha};
}

double frustum_angle_for_box(const Box2D& b, const ProjectionMatrix& proj) {
    const double dx = (b.cx - proj.cx()) / proj.fx();
    const double dz = 1.0;
    return std::atan2(dx, dz);
}

std::vector<BoxInput> boxes_from_labels(const std::vector<io::LabelRecord>& labels) {
    std::vector<BoxInput> out;
    out.reserve(labels.size());
    for (const auto& r : labels) {
        BoxInput bi;
        bi.box = r.box2d();
        bi.class_name = r.class_name;
        bi.confidence = r.score ? float(*r.score) : 1.0f;
        bi.gt_box = r.box3d();
        out.push_back(std::move(bi));
    }
    return out;
}

namespace {

struct RawProj {
    Pixel px;
    bool valid = false;
};

int class_index_of(const std::vector<std::string>& names, const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return int(i);
    return -1;
}

}  // namespace

BuildResult build_samples(const io::SceneFrame& frame, const std::vector<BoxInput>& boxes,
                          SampleMode mode, const PipelineConfig& cfg,
                          const std::vector<std::string>& class_names, uint64_t seed) {
    BuildResult result;
    const auto pts = io::cloud_points(frame.cloud);

    // project the cloud once per frame; every box reuses it
    std::vector<RawProj> proj(pts.size());
    {
        const CloudProjection cp = project_cloud(pts, frame.calib);
        for (const auto& pp : cp.points) {
            proj[pp.index].px = pp.px;
            proj[pp.index].valid = true;
        }
    }

    // camera-frame coordinates feed the network and the rotated gt boxes
    std::vector<Point3D> cam(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) cam[i] = frame.calib.to_camera(pts[i]);

    const int reps = mode == SampleMode::train ? cfg.train_perturbations : 1;
    for (std::size_t obj = 0; obj < boxes.size(); ++obj) {
        const BoxInput& input = boxes[obj];
        const int cls = class_index_of(class_names, input.class_name);
        if (cls < 0) {
            ++result.skipped_unknown_class;
            continue;
        }
        for (int k = 0; k < reps; ++k) {
            Rng rng(derive_seed(seed, frame.id, uint64_t(obj), uint64_t(k)));
            Box2D box = input.box;
            if (mode == SampleMode::train && cfg.shift_ratio > 0.0)
                box = perturb_box2d(box, cfg.shift_ratio, rng);
            if (cfg.clip_boxes_to_image && !frame.image.empty()) {
                const double x1 = std::max(0.0, box.x1()), y1 = std::max(0.0, box.y1());
                const double x2 = std::min(double(frame.image.width - 1), box.x2());
                const double y2 = std::min(double(frame.image.height - 1), box.y2());
                if (!(x2 > x1) || !(y2 > y1)) {
                    ++result.dropped_empty;
                    continue;
                }
                box = Box2D::from_corners(x1, y1, x2, y2);
            }

            std::vector<MaskedPoint> masked;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                if (!proj[i].valid || !point_in_box2d(proj[i].px, box)) continue;
                masked.push_back({cam[i], gaussian_mask(proj[i].px, box, cfg.mask_half_extent)});
            }
            if (masked.empty()) {
                ++result.dropped_empty;
                continue;
            }

            FrustumSample s;
            s.points = sample_fixed(masked, cfg.n_points, rng);
            s.class_index = cls;
            s.class_onehot.assign(class_names.size(), 0.0f);
            s.class_onehot[std::size_t(cls)] = 1.0f;
            s.source_box2d = box;
            s.confidence = input.confidence;
            s.frame_id = frame.id;
            s.object_id = uint32_t(obj);
            s.perturb_index = uint32_t(k);
            s.crop = crop_window(box, cfg.crop_alpha, frame.image.width, frame.image.height);
            s.gt_box = input.gt_box;

            if (cfg.normalize_frustum) {
                s.normalized = true;
                s.frustum_angle = frustum_angle_for_box(box, frame.calib);
                float* pp = s.points.data<float>();
                const double c = std::cos(-s.frustum_angle), sn = std::sin(-s.frustum_angle);
                for (int i = 0; i < cfg.n_points; ++i) {
                    const double x = pp[i * 4 + 0], z = pp[i * 4 + 2];
                    pp[i * 4 + 0] = float(c * x + sn * z);
                    pp[i * 4 + 2] = float(-sn * x + c * z);
                }
                if (s.gt_box) {
                    s.gt_box->center = rotate_y(s.gt_box->center, -s.frustum_angle);
                    s.gt_box->yaw = wrap_pi(s.gt_box->yaw - s.frustum_angle);
                }
            }

            if (cfg.crop_size > 0 && !frame.image.empty())
                s.crop_pixels =
                    crop_resize_chw(frame.image, s.crop.cx, s.crop.cy, s.crop.side, cfg.crop_size);

            result.samples.push_back(std::move(s));
        }
    }
    return result;
}

namespace {

constexpr char kMagic[8] = {'F', 'F', 'S', 'A', 'M', 'P', '0', '1'};

constexpr uint32_t kFlagGt = 1;
constexpr uint32_t kFlagPixels = 2;
constexpr uint32_t kFlagNormalized = 4;

}  // namespace

void save_samples(const SampleSet& set, const std::string& path) {
    ByteWriter header;
    header.raw(kMagic, 8);
    header.u32(1);  // version
    header.u32(uint32_t(set.samples.size()));
    header.u32(uint32_t(set.n_points));
    header.u32(uint32_t(set.class_names.size()));
    header.u32(uint32_t(set.crop_size));
    for (const auto& n : set.class_names) header.str(n);

    // records first so the index table can carry absolute offsets
    std::vector<uint64_t> offsets;
    ByteWriter body;
    const std::size_t index_bytes = 8 * set.samples.size();
    for (const auto& s : set.samples) {
        offsets.push_back(header.size() + index_bytes + body.size());
        uint32_t flags = 0;
        if (s.gt_box) flags |= kFlagGt;
        if (s.crop_pixels.defined()) flags |= kFlagPixels;
        if (s.normalized) flags |= kFlagNormalized;
        body.u32(uint32_t(s.points.dim(0)));
        body.u32(uint32_t(s.class_onehot.size()));
        body.u32(flags);
        body.raw(s.points.raw(), s.points.raw_size());
        body.raw(s.class_onehot.data(), s.class_onehot.size() * 4);
        body.f32(float(s.crop.cx));
        body.f32(float(s.crop.cy));
        body.f32(float(s.crop.side));
        if (s.gt_box) {
            body.f32(float(s.gt_box->center.x));
            body.f32(float(s.gt_box->center.y));
            body.f32(float(s.gt_box->center.z));
            body.f32(float(s.gt_box->length));
            body.f32(float(s.gt_box->width));
            body.f32(float(s.gt_box->height));
            body.f32(float(s.gt_box->yaw));
        }
        body.f32(float(s.source_box2d.cx));
        body.f32(float(s.source_box2d.cy));
        body.f32(float(s.source_box2d.w));
        body.f32(float(s.source_box2d.h));
        body.f32(float(s.frustum_angle));
        body.f32(s.confidence);
        body.u32(s.frame_id);
        body.u32(s.object_id);
        body.u32(s.perturb_index);
        if (s.crop_pixels.defined()) body.raw(s.crop_pixels.raw(), s.crop_pixels.raw_size());
    }
    for (uint64_t off : offsets) header.u64(off);
    std::vector<std::byte> all(header.bytes());
    all.insert(all.end(), body.bytes().begin(), body.bytes().end());
    write_file_bytes(path, all.data(), all.size());
}

SampleSet load_samples(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes);
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a sample container: " + path);
    if (r.u32() != 1) throw IoError("unsupported sample container version");
    const uint32_t count = r.u32();
    SampleSet set;
    set.n_points = int(r.u32());
    const uint32_t num_classes = r.u32();
    set.crop_size = int(r.u32());
    for (uint32_t i = 0; i < num_classes; ++i) set.class_names.push_back(r.str());
    std::vector<uint64_t> offsets(count);
    for (auto& off : offsets) off = r.u64();

    set.samples.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        ByteReader rec(bytes.data() + offsets[i], bytes.size() - offsets[i]);
        FrustumSample s;
        const uint32_t n = rec.u32();
        const uint32_t k = rec.u32();
        const uint32_t flags = rec.u32();
        if (int(n) != set.n_points || k != num_classes)
            throw IoError("sample record disagrees with container header");
        s.points = Tensor({int64_t(n), 4}, Dtype::f32);
        rec.raw(s.points.raw(), s.points.raw_size());
        s.class_onehot.resize(k);
        rec.raw(s.class_onehot.data(), k * 4);
        for (uint32_t j = 0; j < k; ++j)
            if (s.class_onehot[j] != 0.0f) s.class_index = int(j);
        s.crop.cx = rec.f32();
        s.crop.cy = rec.f32();
        s.crop.side = rec.f32();
        if (flags & kFlagGt) {
            Box3D b;
            b.center.x = rec.f32();
            b.center.y = rec.f32();
            b.center.z = rec.f32();
            b.length = rec.f32();
            b.width = rec.f32();
            b.height = rec.f32();
            b.yaw = rec.f32();
            b.class_label = set.class_names[std::size_t(s.class_index)];
            s.gt_box = b;
        }
        s.source_box2d.cx = rec.f32();
        s.source_box2d.cy = rec.f32();
        s.source_box2d.w = rec.f32();
        s.source_box2d.h = rec.f32();
        s.frustum_angle = rec.f32();
        s.confidence = rec.f32();
        s.frame_id = rec.u32();
        s.object_id = rec.u32();
        s.perturb_index = rec.u32();
        s.normalized = (flags & kFlagNormalized) != 0;
        if (flags & kFlagPixels) {
            s.crop_pixels = Tensor({3, set.crop_size, set.crop_size}, Dtype::f32);
            rec.raw(s.crop_pixels.raw(), s.crop_pixels.raw_size());
        }
        set.samples.push_back(std::move(s));
    }
    return set;
}

}  // namespace ffkit::frustum
