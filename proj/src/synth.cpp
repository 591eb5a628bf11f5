#include "ffkit/synth.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "ffkit/rng.hpp"

namespace ffkit::io {

std::string SynthSpec::to_json() const {
    nlohmann::json j;
    j["classes"] = classes;
    j["min_objects"] = min_objects;
    j["max_objects"] = max_objects;
    j["min_range"] = min_range;
    j["max_range"] = max_range;
    j["size_jitter"] = size_jitter;
    j["fx"] = fx;
    j["fy"] = fy;
    j["image_w"] = image_w;
    j["image_h"] = image_h;
    j["sensor_height"] = sensor_height;
    j["point_noise"] = point_noise;
    j["surface_density"] = surface_density;
    j["ground_points"] = ground_points;
    j["clutter_points"] = clutter_points;
    j["pixel_noise"] = pixel_noise;
    j["max_place_retries"] = max_place_retries;
    return j.dump(2) + "\n";
}

SynthSpec SynthSpec::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    SynthSpec s;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("classes", s.classes);
    get("min_objects", s.min_objects);
    get("max_objects", s.max_objects);
    get("min_range", s.min_range);
    get("max_range", s.max_range);
    get("size_jitter", s.size_jitter);
    get("fx", s.fx);
    get("fy", s.fy);
    get("image_w", s.image_w);
    get("image_h", s.image_h);
    get("sensor_height", s.sensor_height);
    get("point_noise", s.point_noise);
    get("surface_density", s.surface_density);
    get("ground_points", s.ground_points);
    get("clutter_points", s.clutter_points);
    get("pixel_noise", s.pixel_noise);
    get("max_place_retries", s.max_place_retries);
    return s;
}

ProjectionMatrix synth_projection(const SynthSpec& spec) {
    ProjectionMatrix m = ProjectionMatrix::from_intrinsics(spec.fx, spec.fy, 0.5 * spec.image_w,
                                                           0.5 * spec.image_h);
    m.has_rect = true;
    m.rect = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    // velodyne (x fwd, y left, z up) -> camera (x right, y down, z fwd)
    m.has_extrinsic = true;
    m.lidar_to_cam = {{{0, -1, 0, 0}, {0, 0, -1, 0}, {1, 0, 0, 0}}};
    return m;
}

Point3D camera_to_velo(const Point3D& cam) { return {cam.z, -cam.x, -cam.y}; }

namespace {

struct Albedo {
    uint8_t r, g, b;
};

Albedo class_albedo(const std::string& name) {
    if (name == "Cars") return {200, 62, 54};
    if (name == "People") return {64, 96, 204};
    if (name == "Cyclists") return {70, 200, 96};
    if (name == "Bicycles") return {222, 202, 64};
    if (name == "Trucks") return {164, 70, 206};
    if (name == "Freight Tricycles") return {64, 200, 200};
    return {128, 128, 128};
}

struct PlacedObject {
    Box3D box;         // camera frame, geometric center
    double range = 0;  // ego range of the center
    Box2D bbox2d;      // projected corner hull, clipped
    double full_area = 0, clipped_area = 0;
};

// convex hull (u, v) and its axis-aligned bounds
struct Hull {
    std::vector<Pixel> pts;  // counter-clockwise
};

Hull convex_hull(std::vector<Pixel> pts) {
    std::sort(pts.begin(), pts.end(), [](const Pixel& a, const Pixel& b) {
        return a.u < b.u || (a.u == b.u && a.v < b.v);
    });
    auto cross = [](const Pixel& o, const Pixel& a, const Pixel& b) {
        return (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u);
    };
    std::vector<Pixel> h(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
        h[k++] = pts[i];
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = pts.size() - 1; i-- > 0;) {
        while (k >= lower && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
        h[k++] = pts[i];
    }
    h.resize(k > 0 ? k - 1 : 0);
    return {std::move(h)};
}

// scanline fill of a convex polygon
void fill_hull(Image& img, const Hull& hull, Albedo color) {
    if (hull.pts.size() < 3) return;
    double v_min = hull.pts[0].v, v_max = hull.pts[0].v;
    for (const auto& p : hull.pts) {
        v_min = std::min(v_min, p.v);
        v_max = std::max(v_max, p.v);
    }
    const int y0 = std::max(0, int(std::ceil(v_min)));
    const int y1 = std::min(img.height - 1, int(std::floor(v_max)));
    for (int y = y0; y <= y1; ++y) {
        double x_lo = 1e30, x_hi = -1e30;
        const double vy = y;
        for (std::size_t i = 0; i < hull.pts.size(); ++i) {
            const Pixel& a = hull.pts[i];
            const Pixel& b = hull.pts[(i + 1) % hull.pts.size()];
            if ((a.v <= vy && b.v >= vy) || (b.v <= vy && a.v >= vy)) {
                if (a.v == b.v) {
                    x_lo = std::min({x_lo, a.u, b.u});
                    x_hi = std::max({x_hi, a.u, b.u});
                } else {
                    const double t = (vy - a.v) / (b.v - a.v);
                    const double x = a.u + t * (b.u - a.u);
                    x_lo = std::min(x_lo, x);
                    x_hi = std::max(x_hi, x);
                }
            }
        }
        if (x_hi < x_lo) continue;
        const int xa = std::max(0, int(std::ceil(x_lo)));
        const int xb = std::min(img.width - 1, int(std::floor(x_hi)));
        for (int x = xa; x <= xb; ++x) {
            uint8_t* px = img.px(x, y);
            px[0] = color.r;
            px[1] = color.g;
            px[2] = color.b;
        }
    }
}

double boxes_bev_overlap_1d(double a_lo, double a_hi, double b_lo, double b_hi) {
    return std::max(0.0, std::min(a_hi, b_hi) - std::max(a_lo, b_lo));
}

}  // namespace

SceneFrame generate_synthetic_scene(const SynthSpec& spec, const codec::SizePriorTable& priors,
                                    uint32_t frame_id, uint64_t seed) {
    SceneFrame frame;
    frame.id = frame_id;
    frame.calib = synth_projection(spec);
    const ProjectionMatrix cam_proj =
        ProjectionMatrix::from_intrinsics(spec.fx, spec.fy, 0.5 * spec.image_w, 0.5 * spec.image_h);

    Rng place_rng(derive_seed(seed, frame_id, 1));
    Rng point_rng(derive_seed(seed, frame_id, 2));
    Rng image_rng(derive_seed(seed, frame_id, 3));

    const double margin = 8.0;
    const double az_max = std::atan((0.5 * spec.image_w - 4.0 * margin) / spec.fx);

    // place boxes: visible, non-overlapping in BEV
    std::vector<PlacedObject> objects;
    const int want = spec.min_objects +
                     (spec.max_objects > spec.min_objects
                          ? int(place_rng.uniform_int(uint64_t(spec.max_objects - spec.min_objects + 1)))
                          : 0);
    for (int i = 0; i < want; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < spec.max_place_retries && !placed; ++attempt) {
            const std::string cls =
                spec.classes[std::size_t(place_rng.uniform_int(spec.classes.size()))];
            const auto& prior = priors.lookup(cls);
            Box3D b;
            b.class_label = cls;
            b.length = std::max(0.3 * prior.length,
                                prior.length * (1.0 + spec.size_jitter * place_rng.normal()));
            b.width = std::max(0.3 * prior.width,
                               prior.width * (1.0 + spec.size_jitter * place_rng.normal()));
            b.height = std::max(0.3 * prior.height,
                                prior.height * (1.0 + spec.size_jitter * place_rng.normal()));
            b.yaw = place_rng.uniform(-kPi, kPi);
            const double range = place_rng.uniform(spec.min_range, spec.max_range);
            const double az = place_rng.uniform(-az_max, az_max);
            b.center = {range * std::sin(az), spec.sensor_height - 0.5 * b.height,
                        range * std::cos(az)};

            // fully visible: all corners project inside the image with margin
            bool visible = true;
            const auto corners = box3d_corners(b);
            std::vector<Pixel> proj;
            for (const auto& c : corners) {
                if (c.z <= 0.5) {
                    visible = false;
                    break;
                }
                const Pixel px = project_point(c, cam_proj);
                if (px.u < margin || px.u > spec.image_w - 1 - margin || px.v < margin ||
                    px.v > spec.image_h - 1 - margin) {
                    visible = false;
                    break;
                }
                proj.push_back(px);
            }
            if (!visible) continue;

            const double rad = 0.5 * std::hypot(b.length, b.width);
            bool overlaps = false;
            for (const auto& o : objects) {
                const double orad = 0.5 * std::hypot(o.box.length, o.box.width);
                const double d = std::hypot(b.center.x - o.box.center.x,
                                            b.center.z - o.box.center.z);
                if (d < rad + orad + 0.25) {
                    overlaps = true;
                    break;
                }
            }
            if (overlaps) continue;

            PlacedObject po;
            po.box = b;
            po.range = std::sqrt(b.center.x * b.center.x + b.center.y * b.center.y +
                                 b.center.z * b.center.z);
            double u_min = proj[0].u, u_max = proj[0].u, v_min = proj[0].v, v_max = proj[0].v;
            for (const auto& px : proj) {
                u_min = std::min(u_min, px.u);
                u_max = std::max(u_max, px.u);
                v_min = std::min(v_min, px.v);
                v_max = std::max(v_max, px.v);
            }
            po.full_area = (u_max - u_min) * (v_max - v_min);
            const double cu_min = std::clamp(u_min, 0.0, double(spec.image_w - 1));
            const double cu_max = std::clamp(u_max, 0.0, double(spec.image_w - 1));
            const double cv_min = std::clamp(v_min, 0.0, double(spec.image_h - 1));
            const double cv_max = std::clamp(v_max, 0.0, double(spec.image_h - 1));
            po.clipped_area = (cu_max - cu_min) * (cv_max - cv_min);
            po.bbox2d = Box2D::from_corners(cu_min, cv_min, cu_max, cv_max);
            objects.push_back(std::move(po));
            placed = true;
        }
        if (!placed)
            throw SpecInfeasible("could not place object " + std::to_string(i) + " after " +
                                 std::to_string(spec.max_place_retries) + " retries");
    }

    // exact labels; occlusion graded by 2D overlap with nearer objects
    for (const auto& o : objects) {
        LabelRecord r = LabelRecord::from_box3d(o.box, o.bbox2d);
        r.truncation =
            o.full_area > 0.0 ? std::clamp(1.0 - o.clipped_area / o.full_area, 0.0, 1.0) : 0.0;
        double occluded = 0.0;
        for (const auto& other : objects) {
            if (&other == &o || other.range >= o.range) continue;
            const double ox = boxes_bev_overlap_1d(o.bbox2d.x1(), o.bbox2d.x2(),
                                                   other.bbox2d.x1(), other.bbox2d.x2());
            const double oy = boxes_bev_overlap_1d(o.bbox2d.y1(), o.bbox2d.y2(),
                                                   other.bbox2d.y1(), other.bbox2d.y2());
            occluded += ox * oy;
        }
        const double frac = o.clipped_area > 0.0 ? occluded / o.clipped_area : 0.0;
        r.occlusion = frac >= 0.5 ? 2 : (frac >= 0.1 ? 1 : 0);
        frame.labels.push_back(std::move(r));
    }

    // surface points on camera-visible faces, range-dependent density
    for (const auto& o : objects) {
        const Box3D& b = o.box;
        const double half[3] = {0.5 * b.length, 0.5 * b.height, 0.5 * b.width};
        // faces: local axis, sign; spanned by the two remaining axes
        for (int axis = 0; axis < 3; ++axis) {
            for (int sign = -1; sign <= 1; sign += 2) {
                Point3D n_local{0, 0, 0};
                (axis == 0 ? n_local.x : axis == 1 ? n_local.y : n_local.z) = sign;
                const Point3D n_world = rotate_y(n_local, b.yaw);
                Point3D fc_local{0, 0, 0};
                (axis == 0 ? fc_local.x : axis == 1 ? fc_local.y : fc_local.z) =
                    sign * half[axis];
                const Point3D fc_rot = rotate_y(fc_local, b.yaw);
                const Point3D fc_world{fc_rot.x + b.center.x, fc_rot.y + b.center.y,
                                       fc_rot.z + b.center.z};
                const double facing =
                    n_world.x * fc_world.x + n_world.y * fc_world.y + n_world.z * fc_world.z;
                if (facing >= 0.0) continue;  // back face

                const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
                const double area = 4.0 * half[a1] * half[a2];
                const double scale = 10.0 / std::max(1.0, o.range);
                const double expect = spec.surface_density * scale * scale * area;
                int count = int(std::floor(expect));
                if (point_rng.uniform01() < expect - count) ++count;
                for (int pi = 0; pi < count; ++pi) {
                    Point3D local = fc_local;
                    const double c1 = point_rng.uniform(-half[a1], half[a1]);
                    const double c2 = point_rng.uniform(-half[a2], half[a2]);
                    (a1 == 0 ? local.x : a1 == 1 ? local.y : local.z) = c1;
                    (a2 == 0 ? local.x : a2 == 1 ? local.y : local.z) = c2;
                    const Point3D rot = rotate_y(local, b.yaw);
                    Point3D world{rot.x + b.center.x, rot.y + b.center.y, rot.z + b.center.z};
                    bool ok = false;
                    for (int attempt = 0; attempt < 4 && !ok; ++attempt) {
                        Point3D noisy = world;
                        auto tn = [&] {
                            return std::clamp(point_rng.normal(), -2.5, 2.5) * spec.point_noise;
                        };
                        noisy.x += tn();
                        noisy.y += tn();
                        noisy.z += tn();
                        const Pixel px = project_point(noisy, cam_proj);
                        if (point_in_box2d(px, o.bbox2d)) {
                            const Point3D v = camera_to_velo(noisy);
                            frame.cloud.push_back({float(v.x), float(v.y), float(v.z),
                                                   float(point_rng.uniform01())});
                            ok = true;
                        }
                    }
                }
            }
        }
    }

    // ground plane, skipping object footprints
    const double far_z = spec.max_range + 8.0;
    for (int i = 0; i < spec.ground_points; ++i) {
        const double z = point_rng.uniform(2.0, far_z);
        const double xr = z * (0.5 * spec.image_w) / spec.fx;
        const double x = point_rng.uniform(-xr, xr);
        const double y = spec.sensor_height + std::clamp(point_rng.normal(), -2.5, 2.5) * 0.01;
        bool under_object = false;
        for (const auto& o : objects) {
            Point3D d{x - o.box.center.x, 0.0, z - o.box.center.z};
            const Point3D local = rotate_y(d, -o.box.yaw);
            if (std::abs(local.x) <= 0.5 * o.box.length + 0.05 &&
                std::abs(local.z) <= 0.5 * o.box.width + 0.05) {
                under_object = true;
                break;
            }
        }
        if (under_object) continue;
        const Point3D v = camera_to_velo({x, y, z});
        frame.cloud.push_back({float(v.x), float(v.y), float(v.z), float(point_rng.uniform01())});
    }

    // sparse volumetric clutter outside the boxes
    for (int i = 0; i < spec.clutter_points; ++i) {
        const double z = point_rng.uniform(2.0, far_z);
        const double xr = z * (0.5 * spec.image_w) / spec.fx;
        const double x = point_rng.uniform(-xr, xr);
        const double y = point_rng.uniform(-0.6, spec.sensor_height);
        bool inside = false;
        for (const auto& o : objects) {
            if (point_in_box3d({x, y, z}, o.box, 0.05)) {
                inside = true;
                break;
            }
        }
        if (inside) continue;
        const Point3D v = camera_to_velo({x, y, z});
        frame.cloud.push_back({float(v.x), float(v.y), float(v.z), float(point_rng.uniform01())});
    }

    // flat-shaded render: sky/ground split, painter's order far-to-near
    frame.image = Image::filled(spec.image_w, spec.image_h, 0, 0, 0);
    const int horizon = spec.image_h / 2;
    for (int y = 0; y < spec.image_h; ++y) {
        const bool sky = y < horizon;
        const double t = double(y) / spec.image_h;
        const uint8_t r = sky ? uint8_t(150 + 40 * t) : uint8_t(96 + 30 * t);
        const uint8_t g = sky ? uint8_t(170 + 30 * t) : uint8_t(86 + 26 * t);
        const uint8_t bcol = sky ? uint8_t(205) : uint8_t(70 + 20 * t);
        for (int x = 0; x < spec.image_w; ++x) {
            uint8_t* px = frame.image.px(x, y);
            px[0] = r;
            px[1] = g;
            px[2] = bcol;
        }
    }
    std::vector<const PlacedObject*> draw_order;
    for (const auto& o : objects) draw_order.push_back(&o);
    std::sort(draw_order.begin(), draw_order.end(),
              [](const PlacedObject* a, const PlacedObject* b) { return a->range > b->range; });
    for (const PlacedObject* o : draw_order) {
        std::vector<Pixel> proj;
        for (const auto& c : box3d_corners(o->box)) proj.push_back(project_point(c, cam_proj));
        const Hull hull = convex_hull(proj);
        Albedo alb = class_albedo(o->box.class_label);
        const double shade = std::clamp(1.15 - 0.015 * o->range, 0.45, 1.0);
        alb.r = uint8_t(std::clamp(shade * alb.r, 0.0, 255.0));
        alb.g = uint8_t(std::clamp(shade * alb.g, 0.0, 255.0));
        alb.b = uint8_t(std::clamp(shade * alb.b, 0.0, 255.0));
        fill_hull(frame.image, hull, alb);
    }
    if (spec.pixel_noise > 0.0) {
        for (auto& v : frame.image.rgb) {
            const double noisy =
                double(v) + image_rng.uniform(-spec.pixel_noise, spec.pixel_noise);
            v = uint8_t(std::clamp(noisy, 0.0, 255.0));
        }
    }
    return frame;
}

}  // namespace ffkit::io
