#include "ffkit/kitti_io.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ffkit/binio.hpp"
#include "ffkit/rng.hpp"

namespace ffkit::io {

Box3D LabelRecord::box3d() const {
    Box3D b;
    b.center = {x, y - 0.5 * h, z};
    b.length = l;
    b.width = w;
    b.height = h;
    b.yaw = wrap_pi(rotation_y);
    b.class_label = class_name;
    return b;
}

LabelRecord LabelRecord::from_box3d(const Box3D& b, const Box2D& image_box) {
    LabelRecord r;
    r.class_name = b.class_label;
    r.x1 = image_box.x1();
    r.y1 = image_box.y1();
    r.x2 = image_box.x2();
    r.y2 = image_box.y2();
    r.h = b.height;
    r.w = b.width;
    r.l = b.length;
    r.x = b.center.x;
    r.y = b.center.y + 0.5 * b.height;
    r.z = b.center.z;
    r.rotation_y = wrap_pi(b.yaw);
    r.alpha = wrap_pi(r.rotation_y - std::atan2(b.center.x, b.center.z));
    return r;
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

double parse_num(const std::string& tok, int line_no, const char* field) {
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw MalformedLine("line " + std::to_string(line_no) + ": field " + field +
                            " is not numeric: '" + tok + "'");
    }
    if (pos != tok.size() || !std::isfinite(v))
        throw MalformedLine("line " + std::to_string(line_no) + ": field " + field +
                            " is not numeric: '" + tok + "'");
    return v;
}

}  // namespace

std::vector<LabelRecord> parse_label_file(const std::string& text) {
    std::vector<LabelRecord> out;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        auto toks = split_ws(line);
        if (toks.empty()) continue;
        if (toks.size() != 15 && toks.size() != 16)
            throw MalformedLine("line " + std::to_string(line_no) + ": expected 15 or 16 fields, got " +
                                std::to_string(toks.size()));
        LabelRecord r;
        r.class_name = toks[0];
        r.truncation = parse_num(toks[1], line_no, "truncation");
        const double occ = parse_num(toks[2], line_no, "occlusion");
        r.alpha = parse_num(toks[3], line_no, "alpha");
        r.x1 = parse_num(toks[4], line_no, "x1");
        r.y1 = parse_num(toks[5], line_no, "y1");
        r.x2 = parse_num(toks[6], line_no, "x2");
        r.y2 = parse_num(toks[7], line_no, "y2");
        r.h = parse_num(toks[8], line_no, "h");
        r.w = parse_num(toks[9], line_no, "w");
        r.l = parse_num(toks[10], line_no, "l");
        r.x = parse_num(toks[11], line_no, "x");
        r.y = parse_num(toks[12], line_no, "y");
        r.z = parse_num(toks[13], line_no, "z");
        r.rotation_y = parse_num(toks[14], line_no, "rotation_y");
        if (toks.size() == 16) r.score = parse_num(toks[15], line_no, "score");

        const std::string at = "line " + std::to_string(line_no) + ": ";
        if (r.truncation < 0.0 || r.truncation > 1.0)
            throw MalformedLine(at + "truncation out of [0,1]");
        if (occ != std::floor(occ) || occ < 0 || occ > 3)
            throw MalformedLine(at + "occlusion not in {0,1,2,3}");
        r.occlusion = int(occ);
        if (!(r.x2 > r.x1) || !(r.y2 > r.y1)) throw MalformedLine(at + "degenerate 2D box");
        if (!(r.h > 0.0) || !(r.w > 0.0) || !(r.l > 0.0))
            throw MalformedLine(at + "non-positive dimensions");
        if (std::abs(r.rotation_y) > kPi + 1e-9)
            throw MalformedLine(at + "rotation_y out of [-pi, pi]");
        out.push_back(std::move(r));
    }
    return out;
}

std::string serialize_labels(const std::vector<LabelRecord>& labels) {
    std::string out;
    char buf[512];
    for (const auto& r : labels) {
        int n = std::snprintf(buf, sizeof buf,
                              "%s %.6f %d %.6f %.6f %.6f %.6f %.6f %.6f %.6f %.6f %.6f %.6f %.6f %.6f",
                              r.class_name.c_str(), r.truncation, r.occlusion, r.alpha, r.x1, r.y1,
                              r.x2, r.y2, r.h, r.w, r.l, r.x, r.y, r.z, r.rotation_y);
        out.append(buf, std::size_t(n));
        if (r.score) {
            n = std::snprintf(buf, sizeof buf, " %.6f", *r.score);
            out.append(buf, std::size_t(n));
        }
        out.push_back('\n');
    }
    return out;
}

namespace {

std::vector<double> parse_calib_values(const std::string& rest) {
    std::vector<double> vals;
    std::istringstream is(rest);
    double v;
    while (is >> v) vals.push_back(v);
    return vals;
}

}  // namespace

ProjectionMatrix parse_calib_file(const std::string& text) {
    ProjectionMatrix m;
    bool have_p2 = false;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        const std::string key = line.substr(0, colon);
        const auto vals = parse_calib_values(line.substr(colon + 1));
        if (key == "P2") {
            if (vals.size() != 12) throw WrongArity("P2 expects 12 values, got " +
                                                    std::to_string(vals.size()));
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 4; ++j) m.p[i][j] = vals[std::size_t(i * 4 + j)];
            have_p2 = true;
        } else if (key == "R0_rect") {
            if (vals.size() != 9) throw WrongArity("R0_rect expects 9 values, got " +
                                                   std::to_string(vals.size()));
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) m.rect[i][j] = vals[std::size_t(i * 3 + j)];
            m.has_rect = true;
        } else if (key == "Tr_velo_to_cam") {
            if (vals.size() != 12) throw WrongArity("Tr_velo_to_cam expects 12 values, got " +
                                                    std::to_string(vals.size()));
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 4; ++j) m.lidar_to_cam[i][j] = vals[std::size_t(i * 4 + j)];
            m.has_extrinsic = true;
        }
    }
    if (!have_p2) throw MissingKey("calib file lacks P2");
    return m;
}

std::string serialize_calib(const ProjectionMatrix& m) {
    std::ostringstream os;
    char buf[64];
    auto emit = [&](const char* key, const double* vals, int n) {
        os << key << ":";
        for (int i = 0; i < n; ++i) {
            std::snprintf(buf, sizeof buf, " %.12e", vals[i]);
            os << buf;
        }
        os << "\n";
    };
    emit("P2", &m.p[0][0], 12);
    if (m.has_rect) emit("R0_rect", &m.rect[0][0], 9);
    if (m.has_extrinsic) emit("Tr_velo_to_cam", &m.lidar_to_cam[0][0], 12);
    return os.str();
}

std::vector<PointXYZI> read_point_cloud_bin(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() % 16 != 0)
        throw TruncatedFile(path + ": size " + std::to_string(bytes.size()) +
                            " is not a multiple of 16");
    std::vector<PointXYZI> pts(bytes.size() / 16);
    std::memcpy(pts.data(), bytes.data(), bytes.size());
    return pts;
}

void write_point_cloud_bin(const std::vector<PointXYZI>& pts, const std::string& path) {
    write_file_bytes(path, pts.data(), pts.size() * 16);
}

const std::vector<uint32_t>& SplitManifest::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw IoError("unknown split: " + name);
}

std::string SplitManifest::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["ratios"] = ratios;
    j["train"] = train;
    j["val"] = val;
    j["test"] = test;
    return j.dump(2) + "\n";
}

SplitManifest SplitManifest::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    SplitManifest m;
    m.seed = j.at("seed").get<uint64_t>();
    m.ratios = j.at("ratios").get<std::array<double, 3>>();
    m.train = j.at("train").get<std::vector<uint32_t>>();
    m.val = j.at("val").get<std::vector<uint32_t>>();
    m.test = j.at("test").get<std::vector<uint32_t>>();
    return m;
}

SplitManifest make_splits(std::vector<uint32_t> frame_ids, std::array<double, 3> ratios,
                          uint64_t seed) {
    for (double r : ratios)
        if (!(r > 0.0)) throw BadRatios("split ratios must be positive");
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        throw BadRatios("split ratios must sum to 1");

    Rng rng(derive_seed(seed, 0x5711u));
    for (std::size_t i = frame_ids.size(); i > 1; --i) {
        const std::size_t j = std::size_t(rng.uniform_int(i));
        std::swap(frame_ids[i - 1], frame_ids[j]);
    }
    const std::size_t n = frame_ids.size();
    const std::size_t n_train = std::size_t(std::floor(double(n) * ratios[0]));
    const std::size_t n_val = std::size_t(std::floor(double(n) * ratios[1]));
    SplitManifest m;
    m.seed = seed;
    m.ratios = ratios;
    m.train.assign(frame_ids.begin(), frame_ids.begin() + n_train);
    m.val.assign(frame_ids.begin() + n_train, frame_ids.begin() + n_train + n_val);
    m.test.assign(frame_ids.begin() + n_train + n_val, frame_ids.end());
    return m;
}

}  // namespace ffkit::io
