#pragma once

#include <string>
#include <vector>

#include "ffkit/errors.hpp"

namespace ffkit::net {

// Network dimensions. Defaults follow the paper-scale pipeline: n=1024
// sampled points, m=512 object points, 512-dim features from both pipelines
// fused into 1x1024, a 224 crop through a stride-2 conv stack to a 7x7 map,
// 1x1-reduced to 128 channels, 49 tokens through 3 encoder layers of 8 heads.
// desk_defaults() is a small configuration that trains on CPU in minutes.
struct ModelConfig {
    int n_points = 1024;
    int m_points = 512;
    int point_feature_dim = 512;
    int crop_size = 224;
    std::vector<int> backbone_channels = {32, 64, 128, 256, 512};  // stem + 4 stages, stride 2 each
    int reduced_dim = 128;
    int encoder_layers = 3;
    int heads = 8;
    int encoder_ffn_dim = 512;
    int fused_dim = 1024;
    int num_classes = 6;
    int heading_bins = 12;
    std::vector<int> seg_mlp1 = {64, 64};
    std::vector<int> seg_mlp2 = {64, 128, 1024};
    std::vector<int> seg_head = {512, 256, 128, 128};
    std::vector<int> box_mlp = {128, 128, 256, 512};
    std::vector<int> box_head = {512};
    std::vector<int> fusion_head = {512, 256};
    bool encoder_layer_norm = true;
    bool single_token_encoder = false;  // literal one-token reading of the flattened map
    double input_scale = 1.0;           // applied to xyz channels at the network input

    int backbone_out_size() const;  // activation map side after the conv stack
    int token_count() const;
    int token_dim() const;
    int box_output_dim() const { return 6 + 2 * heading_bins; }

    void validate() const;  // throws ConfigMismatch
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    static ModelConfig desk_defaults();
};

}  // namespace ffkit::net
