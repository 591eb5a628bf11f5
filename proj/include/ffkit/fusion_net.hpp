#pragma once

#include <map>
#include <string>
#include <vector>

#include "ffkit/autodiff.hpp"
#include "ffkit/box_codec.hpp"
#include "ffkit/checkpoint.hpp"
#include "ffkit/frustum.hpp"
#include "ffkit/metrics.hpp"
#include "ffkit/model_config.hpp"

namespace ffkit::net {

struct DetectionResult {
    Box3D box;  // camera frame
    std::string class_label;
    double confidence = 1.0;  // carried from the 2D detection input
    std::vector<bool> point_mask;
    uint32_t frame_id = 0, object_id = 0;
};

// The two-pipeline fusion model: point-cloud instance segmentation and box
// feature, image backbone plus attention encoder, and the fused MLP head.
class FusionNet {
public:
    FusionNet(ModelConfig cfg, Dtype dtype, uint64_t seed);
    FusionNet(ModelConfig cfg, const Checkpoint& ck);  // throws ConfigMismatch

    const ModelConfig& config() const { return cfg_; }
    Dtype dtype() const { return dtype_; }

    std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
    const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }

    // per-graph parameter leaves, in registry order
    struct ParamVars {
        std::vector<ad::Var> ordered;
        std::map<std::string, ad::Var> by_name;
        ad::Var operator()(const std::string& name) const;
    };
    ParamVars make_vars(ad::Graph& g, bool requires_grad = true) const;

    // graph builders for the network stages
    struct SegOut {
        ad::Var logits;     // n x 2
        ad::Var pointfeat;  // n x seg_mlp1.back()
    };
    SegOut segment_instance(ad::Graph& g, const ParamVars& pv, ad::Var points,
                            ad::Var onehot) const;
    ad::Var point_box_feature(ad::Graph& g, const ParamVars& pv, ad::Var object_points,
                              ad::Var onehot) const;
    ad::Var image_crop_feature(ad::Graph& g, const ParamVars& pv, ad::Var crop) const;
    ad::Var fuse_predict(ad::Graph& g, const ParamVars& pv, ad::Var point_feat,
                         ad::Var image_feat) const;

    // hard foreground routing between segmentation and the box pipeline
    struct Selection {
        std::vector<int64_t> rows;  // m row indices into the sample, canonical value order
        Point3D centroid;           // mean of the predicted-foreground set
        bool fallback_all = false;  // no foreground predicted
        std::vector<bool> mask;     // per-point foreground decisions
    };
    Selection select_and_center(const Tensor& points, const Tensor& seg_logits,
                                uint64_t seed) const;

    struct Forward {
        ad::Var seg_logits;
        ad::Var box_params;  // 1 x 30
        Selection selection;
    };
    // select_seed drives the foreground subsample; zero_mask_channel feeds the
    // network a zeroed xi channel (ablation and witness tests)
    Forward forward(ad::Graph& g, const ParamVars& pv, const frustum::FrustumSample& s,
                    uint64_t select_seed, bool zero_mask_channel = false,
                    const std::vector<int64_t>* frozen_rows = nullptr) const;

    Checkpoint to_checkpoint(const std::string& metadata_json) const;

private:
    void register_params(uint64_t seed);
    ModelConfig cfg_;
    Dtype dtype_ = Dtype::f64;
    std::vector<std::pair<std::string, Tensor>> params_;
};

struct LossBreakdown {
    double total = 0, seg = 0, center = 0, heading_cls = 0, heading_res = 0, size = 0;
};

struct LossVars {
    ad::Var total;
    LossBreakdown values;
};

// L = L_seg + lambda * (L_center + L_hcls + L_hres + L_size); the ground-truth
// point mask is membership in the gt 3D box. Throws MissingGroundTruth.
LossVars detection_loss(ad::Graph& g, const FusionNet& net, const FusionNet::Forward& fwd,
                        const frustum::FrustumSample& s, const codec::SizePriorTable& priors,
                        double lambda);

struct TrainOptions {
    int epochs = 200;
    double lr = 1e-3;
    int batch_size = 32;
    double lambda_box = 1.0;
    uint64_t seed = 1;
    Dtype precision = Dtype::f64;
    int val_every = 0;  // epochs between val metric evaluations; 0 = final only
    int threads = 0;    // 0 = OpenMP default
    std::string log_path;  // JSONL; empty writes no file
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<double> epoch_losses;
    std::vector<std::string> log_lines;
};

// Deterministic under fixed seed: per-sample graphs may run in parallel but
// gradients are reduced in sample order. Throws EmptyDataset.
TrainResult train(const frustum::SampleSet& train_set, const frustum::SampleSet* val_set,
                  const ModelConfig& cfg, const codec::SizePriorTable& priors,
                  const eval::MatchConfig* val_match, const TrainOptions& opt,
                  const std::string& metadata_json);

std::vector<DetectionResult> infer(const frustum::SampleSet& samples, const FusionNet& net,
                                   const codec::SizePriorTable& priors, bool zero_mask = false);

// detections/ground truths grouped per frame for the evaluator
std::map<uint32_t, std::vector<eval::Detection>> group_detections(
    const std::vector<DetectionResult>& results);
std::map<uint32_t, std::vector<eval::GroundTruth>> ground_truth_from_samples(
    const frustum::SampleSet& samples);

}  // namespace ffkit::net
