#include "ffkit/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ffkit/binio.hpp"
#include "ffkit/checkpoint.hpp"
#include "ffkit/dataset.hpp"
#include "ffkit/fusion_net.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ffkit::cli {

ClassConfig ClassConfig::tractor_defaults() {
    ClassConfig c;
    c.priors = codec::SizePriorTable::tractor_defaults();
    for (const auto& e : c.priors.entries()) c.names.push_back(e.class_name);
    c.iou_thresholds = eval::MatchConfig::tractor_defaults().iou_thresholds;
    return c;
}

namespace {

json priors_to_json(const codec::SizePriorTable& t) {
    json j = json::object();
    for (const auto& e : t.entries()) j[e.class_name] = {e.length, e.width, e.height};
    return j;
}

codec::SizePriorTable priors_from_json(const json& j) {
    codec::SizePriorTable t;
    for (const auto& [name, dims] : j.items()) {
        if (!dims.is_array() || dims.size() != 3)
            throw Error("prior for " + name + " must be [length, width, height]");
        t.add(name, dims[0].get<double>(), dims[1].get<double>(), dims[2].get<double>());
    }
    return t;
}

json classes_to_json(const ClassConfig& c) {
    json j;
    j["names"] = c.names;
    j["priors"] = priors_to_json(c.priors);
    j["iou_thresholds"] = c.iou_thresholds;
    return j;
}

ClassConfig classes_from_json(const json& j) {
    ClassConfig c;
    c.names = j.at("names").get<std::vector<std::string>>();
    c.priors = priors_from_json(j.at("priors"));
    c.iou_thresholds = j.at("iou_thresholds").get<std::map<std::string, double>>();
    for (const auto& n : c.names) {
        c.priors.lookup(n);
        if (c.iou_thresholds.find(n) == c.iou_thresholds.end())
            throw Error("class " + n + " has no IoU threshold");
    }
    return c;
}

json pipeline_to_json(const frustum::PipelineConfig& p) {
    json j;
    j["shift_ratio"] = p.shift_ratio;
    j["train_perturbations"] = p.train_perturbations;
    j["crop_alpha"] = p.crop_alpha;
    j["normalize_frustum"] = p.normalize_frustum;
    j["mask_half_extent"] = p.mask_half_extent;
    j["clip_boxes_to_image"] = p.clip_boxes_to_image;
    return j;
}

void pipeline_from_json(const json& j, frustum::PipelineConfig& p) {
    if (j.contains("shift_ratio")) p.shift_ratio = j.at("shift_ratio").get<double>();
    if (j.contains("train_perturbations"))
        p.train_perturbations = j.at("train_perturbations").get<int>();
    if (j.contains("crop_alpha")) p.crop_alpha = j.at("crop_alpha").get<double>();
    if (j.contains("normalize_frustum")) p.normalize_frustum = j.at("normalize_frustum").get<bool>();
    if (j.contains("mask_half_extent")) p.mask_half_extent = j.at("mask_half_extent").get<bool>();
    if (j.contains("clip_boxes_to_image"))
        p.clip_boxes_to_image = j.at("clip_boxes_to_image").get<bool>();
}

}  // namespace

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["threads"] = threads;
    j["classes"] = classes_to_json(classes);
    j["model"] = json::parse(model.to_json());
    j["pipeline"] = pipeline_to_json(pipeline);
    j["synth"] = json::parse(synth.to_json());
    j["split_ratios"] = split_ratios;
    j["eval"] = {{"ap_points", ap_points},
                 {"center_distance_error", center_distance_error},
                 {"errors_over_tp_only", errors_over_tp_only}};
    j["train"] = {{"epochs", epochs},         {"lr", lr},
                  {"batch_size", batch_size}, {"lambda_box", lambda_box},
                  {"precision", precision},   {"val_every", val_every}};
    return j.dump(2) + "\n";
}

void RunConfig::apply_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.contains("seed")) seed = j.at("seed").get<uint64_t>();
    if (j.contains("threads")) threads = j.at("threads").get<int>();
    if (j.contains("classes")) classes = classes_from_json(j.at("classes"));
    if (j.contains("model")) model = net::ModelConfig::from_json(j.at("model").dump());
    if (j.contains("pipeline")) pipeline_from_json(j.at("pipeline"), pipeline);
    if (j.contains("synth")) synth = io::SynthSpec::from_json(j.at("synth").dump());
    if (j.contains("split_ratios")) split_ratios = j.at("split_ratios").get<std::array<double, 3>>();
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        if (e.contains("ap_points")) ap_points = e.at("ap_points").get<int>();
        if (e.contains("center_distance_error"))
            center_distance_error = e.at("center_distance_error").get<bool>();
        if (e.contains("errors_over_tp_only"))
            errors_over_tp_only = e.at("errors_over_tp_only").get<bool>();
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        if (t.contains("epochs")) epochs = t.at("epochs").get<int>();
        if (t.contains("lr")) lr = t.at("lr").get<double>();
        if (t.contains("batch_size")) batch_size = t.at("batch_size").get<int>();
        if (t.contains("lambda_box")) lambda_box = t.at("lambda_box").get<double>();
        if (t.contains("precision")) precision = t.at("precision").get<std::string>();
        if (t.contains("val_every")) val_every = t.at("val_every").get<int>();
    }
}

RunConfig RunConfig::from_file(const std::string& path) {
    RunConfig cfg;
    cfg.apply_json(read_file_text(path));
    return cfg;
}

eval::MatchConfig RunConfig::match_config() const {
    eval::MatchConfig m;
    m.iou_thresholds = classes.iou_thresholds;
    m.ap_points = ap_points;
    m.center_distance_error = center_distance_error;
    m.errors_over_tp_only = errors_over_tp_only;
    return m;
}

frustum::PipelineConfig RunConfig::resolved_pipeline() const {
    frustum::PipelineConfig p = pipeline;
    p.n_points = model.n_points;
    p.crop_size = model.crop_size;
    return p;
}

Dtype RunConfig::precision_dtype() const {
    if (precision == "f64") return Dtype::f64;
    if (precision == "f32") return Dtype::f32;
    throw Error("precision must be f32 or f64, got " + precision);
}

void RunConfig::apply_threads() const {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif
}

namespace {

void check_class_count(const RunConfig& cfg) {
    if ((int)cfg.classes.names.size() != cfg.model.num_classes)
        throw ConfigMismatch("model.num_classes = " + std::to_string(cfg.model.num_classes) +
                             " but " + std::to_string(cfg.classes.names.size()) +
                             " classes are configured");
}

void write_run_config(const RunConfig& cfg, const std::string& path) {
    write_file_text(path, cfg.to_json());
}

void rethrow_batch_errors(const std::vector<std::string>& errors) {
    for (const auto& e : errors)
        if (!e.empty()) throw Error(e);
}

}  // namespace

void cmd_synth(const RunConfig& cfg, const std::string& out_dir, int scenes) {
    if (scenes < 0) throw Error("scene count must be non-negative");
    cfg.apply_threads();
    for (const char* sub : {"velodyne", "image_2", "label_2", "calib"})
        fs::create_directories(fs::path(out_dir) / sub);

    std::vector<std::string> errors(static_cast<std::size_t>(scenes));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long long i = 0; i < (long long)scenes; ++i) {
        try {
            const auto frame = io::generate_synthetic_scene(cfg.synth, cfg.classes.priors,
                                                            uint32_t(i), cfg.seed);
            io::save_frame(out_dir, frame);
        } catch (const std::exception& e) {
            errors[std::size_t(i)] = std::string("scene ") + std::to_string(i) + ": " + e.what();
        }
    }
    rethrow_batch_errors(errors);

    std::vector<uint32_t> ids(static_cast<std::size_t>(scenes));
    for (int i = 0; i < scenes; ++i) ids[std::size_t(i)] = uint32_t(i);
    const auto manifest = io::make_splits(ids, cfg.split_ratios, cfg.seed);
    write_file_text(out_dir + "/splits.json", manifest.to_json());
    write_file_text(out_dir + "/synth_spec.json", cfg.synth.to_json());
    write_run_config(cfg, out_dir + "/run_config.json");
    std::cout << "synth: wrote " << scenes << " frames to " << out_dir << " (train/val/test = "
              << manifest.train.size() << "/" << manifest.val.size() << "/"
              << manifest.test.size() << ")\n";
}

void cmd_preprocess(const RunConfig& cfg, const std::string& data_dir, const std::string& split,
                    const std::string& mode, const std::string& detections_dir,
                    const std::string& out_path) {
    check_class_count(cfg);
    cfg.apply_threads();
    if (mode != "train" && mode != "eval") throw Error("mode must be train or eval");
    const auto manifest =
        io::SplitManifest::from_json(read_file_text(data_dir + "/splits.json"));
    const auto& ids = manifest.split(split);
    const auto pipe = cfg.resolved_pipeline();
    const frustum::SampleMode sample_mode =
        mode == "train" ? frustum::SampleMode::train : frustum::SampleMode::eval;

    std::vector<frustum::BuildResult> per_frame(ids.size());
    std::vector<std::string> errors(ids.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long long i = 0; i < (long long)ids.size(); ++i) {
        const uint32_t id = ids[std::size_t(i)];
        try {
            const auto frame = io::load_frame(data_dir, id);
            std::vector<frustum::BoxInput> boxes;
            if (!detections_dir.empty()) {
                const std::string det_path =
                    detections_dir + "/" + io::frame_name(id) + ".txt";
                if (fs::exists(det_path))
                    boxes = frustum::boxes_from_labels(
                        io::parse_label_file(read_file_text(det_path)));
                for (auto& b : boxes) b.gt_box.reset();  // external 2D input carries no 3D truth
            } else {
                boxes = frustum::boxes_from_labels(frame.labels);
            }
            per_frame[std::size_t(i)] =
                frustum::build_samples(frame, boxes, sample_mode, pipe, cfg.classes.names,
                                       cfg.seed);
        } catch (const std::exception& e) {
            errors[std::size_t(i)] =
                "frame " + io::frame_name(id) + " in " + data_dir + ": " + e.what();
        }
    }
    rethrow_batch_errors(errors);

    frustum::SampleSet set;
    set.class_names = cfg.classes.names;
    set.n_points = pipe.n_points;
    set.crop_size = pipe.crop_size;
    std::size_t dropped = 0, skipped = 0;
    for (auto& r : per_frame) {
        dropped += r.dropped_empty;
        skipped += r.skipped_unknown_class;
        for (auto& s : r.samples) set.samples.push_back(std::move(s));
    }
    frustum::save_samples(set, out_path);
    write_run_config(cfg, out_path + ".run.json");
    std::cout << "preprocess: split=" << split << " mode=" << mode << " frames=" << ids.size()
              << " samples=" << set.samples.size() << " empty_frustum_drops=" << dropped
              << " unknown_class_skips=" << skipped << " -> " << out_path << "\n";
}

void cmd_train(const RunConfig& cfg, const std::string& samples_path,
               const std::string& val_samples_path, const std::string& out_ckpt) {
    check_class_count(cfg);
    cfg.apply_threads();
    const auto train_set = frustum::load_samples(samples_path);
    frustum::SampleSet val_set;
    const bool have_val = !val_samples_path.empty();
    if (have_val) val_set = frustum::load_samples(val_samples_path);

    net::TrainOptions opt;
    opt.epochs = cfg.epochs;
    opt.lr = cfg.lr;
    opt.batch_size = cfg.batch_size;
    opt.lambda_box = cfg.lambda_box;
    opt.seed = cfg.seed;
    opt.precision = cfg.precision_dtype();
    opt.val_every = cfg.val_every;
    opt.threads = cfg.threads;
    opt.log_path = out_ckpt + ".log.jsonl";

    json meta;
    meta["model"] = json::parse(cfg.model.to_json());
    meta["classes"] = classes_to_json(cfg.classes);
    meta["run_config"] = json::parse(cfg.to_json());
    const auto match = cfg.match_config();

    const auto result = net::train(train_set, have_val ? &val_set : nullptr, cfg.model,
                                   cfg.classes.priors, &match, opt, meta.dump());
    save_checkpoint(result.checkpoint, out_ckpt);
    std::cout << "train: " << cfg.epochs << " epochs on " << train_set.samples.size()
              << " samples";
    if (!result.epoch_losses.empty()) std::cout << ", final loss " << result.epoch_losses.back();
    std::cout << " -> " << out_ckpt << "\n";
}

void cmd_infer(const RunConfig& cfg, const std::string& samples_path, const std::string& ckpt_path,
               const std::string& out_dir) {
    cfg.apply_threads();
    const auto ck = load_checkpoint(ckpt_path);
    const json meta = json::parse(ck.metadata_json);
    const auto model_cfg = net::ModelConfig::from_json(meta.at("model").dump());
    const auto classes = classes_from_json(meta.at("classes"));
    const net::FusionNet net(model_cfg, ck);

    const auto samples = frustum::load_samples(samples_path);
    if (samples.class_names != classes.names)
        throw ConfigMismatch("sample container classes do not match the checkpoint");

    const auto t0 = std::chrono::steady_clock::now();
    const auto results = net::infer(samples, net, classes.priors);
    const double total_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(out_dir);
    std::map<uint32_t, std::vector<io::LabelRecord>> per_frame;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        const auto& s = samples.samples[i];
        io::LabelRecord rec = io::LabelRecord::from_box3d(r.box, s.source_box2d);
        rec.score = r.confidence;
        per_frame[r.frame_id].push_back(std::move(rec));
    }
    for (const auto& [frame, recs] : per_frame)
        write_file_text(out_dir + "/" + io::frame_name(frame) + ".txt", io::serialize_labels(recs));

    json timing;
    timing["objects"] = results.size();
    timing["frames"] = per_frame.size();
    timing["total_ms"] = total_ms;
    timing["per_object_ms"] = results.empty() ? 0.0 : total_ms / double(results.size());
    timing["per_frame_ms"] = per_frame.empty() ? 0.0 : total_ms / double(per_frame.size());
    write_file_text(out_dir + "/timing.json", timing.dump(2) + "\n");
    write_run_config(cfg, out_dir + "/run_config.json");
    std::cout << "infer: " << results.size() << " objects over " << per_frame.size() << " frames, "
              << (results.empty() ? 0.0 : total_ms / double(results.size()))
              << " ms/object -> " << out_dir << "\n";
}

void cmd_eval(const RunConfig& cfg, const std::string& pred_dir, const std::string& data_dir,
              const std::string& split, const std::string& out_path) {
    cfg.apply_threads();
    const auto manifest =
        io::SplitManifest::from_json(read_file_text(data_dir + "/splits.json"));
    const auto& ids = manifest.split(split);

    std::map<uint32_t, std::vector<eval::Detection>> dets;
    std::map<uint32_t, std::vector<eval::GroundTruth>> gts;
    auto known = [&](const std::string& name) {
        return std::find(cfg.classes.names.begin(), cfg.classes.names.end(), name) !=
               cfg.classes.names.end();
    };
    for (const uint32_t id : ids) {
        gts[id];
        dets[id];
        const std::string gt_path = data_dir + "/label_2/" + io::frame_name(id) + ".txt";
        if (fs::exists(gt_path)) {
            for (const auto& r : io::parse_label_file(read_file_text(gt_path)))
                if (known(r.class_name)) gts[id].push_back({r.box3d(), id});
        }
        const std::string det_path = pred_dir + "/" + io::frame_name(id) + ".txt";
        if (fs::exists(det_path)) {
            for (const auto& r : io::parse_label_file(read_file_text(det_path)))
                if (known(r.class_name))
                    dets[id].push_back({r.box3d(), r.score.value_or(1.0), id});
        }
    }

    const auto report = eval::evaluate(dets, gts, cfg.match_config());
    write_file_text(out_path, report.to_json());
    write_run_config(cfg, out_path + ".run.json");
    std::cout << report.to_table();
}

void cmd_report(const std::string& report_path) {
    const auto report = eval::MetricsReport::from_json(read_file_text(report_path));
    std::cout << report.to_table();
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NumericError*>(&e)) return 4;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const TruncatedFile*>(&e)) return 3;
    if (dynamic_cast<const Error*>(&e)) return 2;
    if (dynamic_cast<const json::exception*>(&e)) return 2;
    return 3;
}

}  // namespace ffkit::cli
