#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "ffkit/box_codec.hpp"
#include "ffkit/frustum.hpp"
#include "ffkit/metrics.hpp"
#include "ffkit/model_config.hpp"
#include "ffkit/synth.hpp"
#include "ffkit/tensor.hpp"

namespace ffkit::cli {

struct ClassConfig {
    std::vector<std::string> names;
    codec::SizePriorTable priors;
    std::map<std::string, double> iou_thresholds;

    static ClassConfig tractor_defaults();
};

// Fully resolved settings for one invocation: built-in defaults, overridden
// by the config file, overridden by flags. The resolved form is serialized
// next to every output artifact.
struct RunConfig {
    uint64_t seed = 1;
    int threads = 0;  // 0 = OpenMP default
    ClassConfig classes = ClassConfig::tractor_defaults();
    net::ModelConfig model;
    frustum::PipelineConfig pipeline;
    io::SynthSpec synth;
    std::array<double, 3> split_ratios{0.70, 0.15, 0.15};
    int ap_points = 40;
    bool center_distance_error = false;
    bool errors_over_tp_only = true;
    int epochs = 200;
    double lr = 1e-3;
    int batch_size = 32;
    double lambda_box = 1.0;
    std::string precision = "f64";
    int val_every = 0;

    std::string to_json() const;
    void apply_json(const std::string& text);  // partial override
    static RunConfig from_file(const std::string& path);

    eval::MatchConfig match_config() const;
    frustum::PipelineConfig resolved_pipeline() const;  // n/crop mirrored from the model
    Dtype precision_dtype() const;
    void apply_threads() const;
};

// Subcommand bodies. They throw ffkit errors; main() maps them onto the
// documented exit codes (2 usage/bad input, 3 I/O, 4 numeric).
void cmd_synth(const RunConfig& cfg, const std::string& out_dir, int scenes);
void cmd_preprocess(const RunConfig& cfg, const std::string& data_dir, const std::string& split,
                    const std::string& mode, const std::string& detections_dir,
                    const std::string& out_path);
void cmd_train(const RunConfig& cfg, const std::string& samples_path,
               const std::string& val_samples_path, const std::string& out_ckpt);
void cmd_infer(const RunConfig& cfg, const std::string& samples_path, const std::string& ckpt_path,
               const std::string& out_dir);
void cmd_eval(const RunConfig& cfg, const std::string& pred_dir, const std::string& data_dir,
              const std::string& split, const std::string& out_path);
void cmd_report(const std::string& report_path);

int exit_code_for(const std::exception& e);

}  // namespace ffkit::cli
