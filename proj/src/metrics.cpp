#include "ffkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ffkit::eval {

double MatchConfig::threshold_for(const std::string& class_name) const {
    auto it = iou_thresholds.find(class_name);
    if (it == iou_thresholds.end()) throw UnknownClass("no IoU threshold for " + class_name);
    return it->second;
}

MatchConfig MatchConfig::tractor_defaults() {
    MatchConfig c;
    c.iou_thresholds = {{"Cars", 0.7},   {"People", 0.5}, {"Cyclists", 0.5},
                        {"Bicycles", 0.5}, {"Trucks", 0.7}, {"Freight Tricycles", 0.6}};
    return c;
}

double polygon_area(const std::vector<std::array<double, 2>>& poly) {
    if (poly.size() < 3) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % poly.size()];
        s += a[0] * b[1] - b[0] * a[1];
    }
    return 0.5 * std::abs(s);
}

std::vector<std::array<double, 2>> bev_corners(const Box3D& b) {
    const auto corners = box3d_corners(b);
    std::vector<std::array<double, 2>> out;
    out.reserve(4);
    for (int i = 4; i < 8; ++i) out.push_back({corners[std::size_t(i)].x, corners[std::size_t(i)].z});
    // normalize to counter-clockwise for the clipper
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& p = out[i];
        const auto& q = out[(i + 1) % 4];
        s += p[0] * q[1] - q[0] * p[1];
    }
    if (s < 0.0) std::reverse(out.begin(), out.end());
    return out;
}

double convex_intersection_area(const std::vector<std::array<double, 2>>& subject,
                                const std::vector<std::array<double, 2>>& clip) {
    // Sutherland-Hodgman; both polygons convex and counter-clockwise
    std::vector<std::array<double, 2>> poly = subject;
    for (std::size_t e = 0; e < clip.size() && !poly.empty(); ++e) {
        const auto& a = clip[e];
        const auto& b = clip[(e + 1) % clip.size()];
        auto side = [&](const std::array<double, 2>& p) {
            return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        };
        std::vector<std::array<double, 2>> next;
        next.reserve(poly.size() + 2);
        for (std::size_t i = 0; i < poly.size(); ++i) {
            const auto& s = poly[i];
            const auto& t = poly[(i + 1) % poly.size()];
            const double ss = side(s), st = side(t);
            auto cross_point = [&]() {
                const double denom = ss - st;
                const double u = ss / denom;
                return std::array<double, 2>{s[0] + u * (t[0] - s[0]), s[1] + u * (t[1] - s[1])};
            };
            if (ss >= 0.0) {
                next.push_back(s);
                if (st < 0.0) next.push_back(cross_point());
            } else if (st >= 0.0) {
                next.push_back(cross_point());
            }
        }
        poly = std::move(next);
    }
    return polygon_area(poly);
}

namespace {

double circumradius_bev(const Box3D& b) {
    return 0.5 * std::hypot(b.length, b.width);
}

struct BevOverlap {
    double inter, area_a, area_b;
};

BevOverlap bev_overlap(const Box3D& a, const Box3D& b) {
    const auto pa = bev_corners(a);
    const auto pb = bev_corners(b);
    const double area_a = polygon_area(pa);
    const double area_b = polygon_area(pb);
    const double dx = a.center.x - b.center.x;
    const double dz = a.center.z - b.center.z;
    if (std::hypot(dx, dz) > circumradius_bev(a) + circumradius_bev(b))
        return {0.0, area_a, area_b};
    return {convex_intersection_area(pa, pb), area_a, area_b};
}

}  // namespace

double iou_bev(const Box3D& a, const Box3D& b) {
    const BevOverlap o = bev_overlap(a, b);
    const double uni = o.area_a + o.area_b - o.inter;
    if (!(uni > 0.0)) return 0.0;
    return std::clamp(o.inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
    const BevOverlap o = bev_overlap(a, b);
    const double ya0 = a.center.y - 0.5 * a.height, ya1 = a.center.y + 0.5 * a.height;
    const double yb0 = b.center.y - 0.5 * b.height, yb1 = b.center.y + 0.5 * b.height;
    const double overlap_h = std::max(0.0, std::min(ya1, yb1) - std::max(ya0, yb0));
    const double inter = o.inter * overlap_h;
    const double uni = o.area_a * a.height + o.area_b * b.height - inter;
    if (!(uni > 0.0)) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

double distance_error(const Box3D& pred, const Box3D& gt) {
    auto range = [](const Point3D& p) { return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z); };
    return std::abs(range(pred.center) - range(gt.center));
}

double center_distance_error(const Box3D& pred, const Box3D& gt) {
    const double dx = pred.center.x - gt.center.x;
    const double dy = pred.center.y - gt.center.y;
    const double dz = pred.center.z - gt.center.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double orientation_error(double pred_yaw, double gt_yaw) {
    const double d = std::abs(wrap_pi(pred_yaw - gt_yaw));
    return std::min(d, 2.0 * kPi - d);
}

namespace {

struct MatchOutcome {
    std::vector<int> matched_gt;  // per sorted detection: gt index or -1
    std::vector<std::size_t> order;  // detection indices sorted by confidence
    std::size_t num_gt = 0;
};

// greedy confidence-descending matching; each gt matches at most once,
// highest IoU wins, gt-index ascending breaks IoU ties
MatchOutcome match_class(const std::vector<Detection>& dets,
                         const std::vector<GroundTruth>& gts, double threshold, bool use_bev) {
    MatchOutcome out;
    out.num_gt = gts.size();
    out.order.resize(dets.size());
    std::iota(out.order.begin(), out.order.end(), std::size_t(0));
    std::stable_sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].confidence > dets[b].confidence;
    });
    std::vector<char> gt_used(gts.size(), 0);
    out.matched_gt.assign(dets.size(), -1);
    for (std::size_t rank = 0; rank < out.order.size(); ++rank) {
        const Detection& d = dets[out.order[rank]];
        double best_iou = 0.0;
        int best_gt = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (gt_used[g] || gts[g].frame_id != d.frame_id) continue;
            const double iou = use_bev ? iou_bev(d.box, gts[g].box) : iou_3d(d.box, gts[g].box);
            if (iou >= threshold && iou > best_iou) {
                best_iou = iou;
                best_gt = int(g);
            }
        }
        if (best_gt >= 0) {
            gt_used[std::size_t(best_gt)] = 1;
            out.matched_gt[rank] = best_gt;
        }
    }
    return out;
}

std::vector<double> recall_levels(int ap_points) {
    std::vector<double> levels;
    if (ap_points == 11) {
        for (int i = 0; i <= 10; ++i) levels.push_back(double(i) / 10.0);
    } else {
        for (int i = 1; i <= ap_points; ++i) levels.push_back(double(i) / double(ap_points));
    }
    return levels;
}

double ap_from_match(const MatchOutcome& m, int ap_points) {
    if (m.num_gt == 0) return 0.0;
    std::vector<double> precision, recall;
    int tp = 0, fp = 0;
    for (std::size_t rank = 0; rank < m.matched_gt.size(); ++rank) {
        if (m.matched_gt[rank] >= 0)
            ++tp;
        else
            ++fp;
        precision.push_back(double(tp) / double(tp + fp));
        recall.push_back(double(tp) / double(m.num_gt));
    }
    const auto levels = recall_levels(ap_points);
    double sum = 0.0;
    for (double r : levels) {
        double best = 0.0;
        for (std::size_t i = 0; i < recall.size(); ++i)
            if (recall[i] >= r) best = std::max(best, precision[i]);
        sum += best;
    }
    return sum / double(levels.size());
}

}  // namespace

double average_precision(const std::vector<Detection>& detections,
                         const std::vector<GroundTruth>& ground_truths,
                         const std::string& class_name, const MatchConfig& cfg, bool use_bev) {
    std::vector<Detection> dets;
    std::vector<GroundTruth> gts;
    for (const auto& d : detections)
        if (d.box.class_label == class_name) dets.push_back(d);
    for (const auto& g : ground_truths)
        if (g.box.class_label == class_name) gts.push_back(g);
    const MatchOutcome m = match_class(dets, gts, cfg.threshold_for(class_name), use_bev);
    return ap_from_match(m, cfg.ap_points);
}

MetricsReport evaluate(const std::map<uint32_t, std::vector<Detection>>& detections,
                       const std::map<uint32_t, std::vector<GroundTruth>>& ground_truths,
                       const MatchConfig& cfg) {
    std::vector<Detection> all_dets;
    std::vector<GroundTruth> all_gts;
    for (const auto& [frame, dets] : detections) {
        if (ground_truths.find(frame) == ground_truths.end())
            throw FrameMismatch("detections for frame " + std::to_string(frame) +
                                " have no ground-truth entry");
        for (const auto& d : dets) {
            Detection copy = d;
            copy.frame_id = frame;
            all_dets.push_back(copy);
        }
    }
    std::set<std::string> classes;
    for (const auto& [frame, gts] : ground_truths) {
        for (const auto& g : gts) {
            GroundTruth copy = g;
            copy.frame_id = frame;
            all_gts.push_back(copy);
            classes.insert(g.box.class_label);
        }
    }
    for (const auto& d : all_dets) classes.insert(d.box.class_label);

    MetricsReport report;
    for (const std::string& cls : classes) {
        std::vector<Detection> dets;
        std::vector<GroundTruth> gts;
        for (const auto& d : all_dets)
            if (d.box.class_label == cls) dets.push_back(d);
        for (const auto& g : all_gts)
            if (g.box.class_label == cls) gts.push_back(g);

        ClassMetrics cm;
        cm.no_gt_and_no_detections = dets.empty() && gts.empty();
        const double threshold = cfg.threshold_for(cls);
        const MatchOutcome m3 = match_class(dets, gts, threshold, false);
        cm.ap3d = ap_from_match(m3, cfg.ap_points);
        cm.ap_bev = ap_from_match(match_class(dets, gts, threshold, true), cfg.ap_points);

        // error means over the 3D-matched true positives
        double dist_sum = 0.0, orient_sum = 0.0;
        std::size_t matched = 0;
        std::vector<char> gt_matched(gts.size(), 0);
        for (std::size_t rank = 0; rank < m3.matched_gt.size(); ++rank) {
            const int g = m3.matched_gt[rank];
            if (g < 0) continue;
            gt_matched[std::size_t(g)] = 1;
            const Box3D& pred = dets[m3.order[rank]].box;
            const Box3D& gt = gts[std::size_t(g)].box;
            dist_sum += cfg.center_distance_error ? center_distance_error(pred, gt)
                                                  : distance_error(pred, gt);
            orient_sum += orientation_error(pred.yaw, gt.yaw);
            ++matched;
        }
        cm.tp = int(matched);
        cm.fp = int(dets.size() - matched);
        cm.fn = int(gts.size() - matched);
        std::size_t denom = matched;
        if (!cfg.errors_over_tp_only) {
            // flagged variant: misses count at the metric's worst value
            for (std::size_t g = 0; g < gts.size(); ++g) {
                if (gt_matched[g]) continue;
                const auto& c = gts[g].box.center;
                dist_sum += std::sqrt(c.x * c.x + c.y * c.y + c.z * c.z);
                orient_sum += kPi;
                ++denom;
            }
        }
        if (denom > 0) {
            cm.mean_distance_error = dist_sum / double(denom);
            cm.mean_orientation_error = orient_sum / double(denom);
        }
        report.per_class[cls] = cm;
    }

    nlohmann::json echo;
    echo["iou_thresholds"] = cfg.iou_thresholds;
    echo["ap_points"] = cfg.ap_points;
    echo["center_distance_error"] = cfg.center_distance_error;
    echo["errors_over_tp_only"] = cfg.errors_over_tp_only;
    report.config_echo = echo.dump();
    return report;
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    for (const auto& [cls, m] : per_class) {
        nlohmann::json c;
        c["ap_3d"] = m.ap3d;
        c["ap_bev"] = m.ap_bev;
        if (m.mean_distance_error) c["mean_distance_error_m"] = *m.mean_distance_error;
        if (m.mean_orientation_error) c["mean_orientation_error_rad"] = *m.mean_orientation_error;
        c["tp"] = m.tp;
        c["fp"] = m.fp;
        c["fn"] = m.fn;
        if (m.no_gt_and_no_detections) c["no_gt_and_no_detections"] = true;
        j["per_class"][cls] = c;
    }
    j["config"] = nlohmann::json::parse(config_echo.empty() ? "{}" : config_echo);
    return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    MetricsReport r;
    if (j.contains("per_class")) {
        for (const auto& [cls, c] : j.at("per_class").items()) {
            ClassMetrics m;
            m.ap3d = c.value("ap_3d", 0.0);
            m.ap_bev = c.value("ap_bev", 0.0);
            if (c.contains("mean_distance_error_m"))
                m.mean_distance_error = c.at("mean_distance_error_m").get<double>();
            if (c.contains("mean_orientation_error_rad"))
                m.mean_orientation_error = c.at("mean_orientation_error_rad").get<double>();
            m.tp = c.value("tp", 0);
            m.fp = c.value("fp", 0);
            m.fn = c.value("fn", 0);
            m.no_gt_and_no_detections = c.value("no_gt_and_no_detections", false);
            r.per_class[cls] = m;
        }
    }
    if (j.contains("config")) r.config_echo = j.at("config").dump();
    return r;
}

std::string MetricsReport::to_table() const {
    auto fmt_opt = [](const std::optional<double>& v) {
        if (!v) return std::string("-");
        char tmp[32];
        std::snprintf(tmp, sizeof tmp, "%.3f", *v);
        return std::string(tmp);
    };
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-20s %8s %9s %12s %12s %6s %6s %6s\n", "class", "AP3D(%)",
                  "APBEV(%)", "dist_err(m)", "orient(rad)", "TP", "FP", "FN");
    os << buf;
    for (const auto& [cls, m] : per_class) {
        std::snprintf(buf, sizeof buf, "%-20s %8.2f %9.2f %12s %12s %6d %6d %6d\n", cls.c_str(),
                      100.0 * m.ap3d, 100.0 * m.ap_bev, fmt_opt(m.mean_distance_error).c_str(),
                      fmt_opt(m.mean_orientation_error).c_str(), m.tp, m.fp, m.fn);
        os << buf;
    }
    return os.str();
}

}  // namespace ffkit::eval
