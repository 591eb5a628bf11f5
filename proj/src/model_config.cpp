#include "ffkit/model_config.hpp"

#include <nlohmann/json.hpp>

#include "ffkit/box_codec.hpp"

namespace ffkit::net {

int ModelConfig::backbone_out_size() const {
    int s = crop_size;
    for (std::size_t i = 0; i < backbone_channels.size(); ++i) s = (s + 2 - 3) / 2 + 1;
    return s;
}

int ModelConfig::token_count() const {
    if (single_token_encoder) return 1;
    const int l = backbone_out_size();
    return l * l;
}

int ModelConfig::token_dim() const {
    if (single_token_encoder) {
        const int l = backbone_out_size();
        return reduced_dim * l * l;
    }
    return reduced_dim;
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigMismatch("model config: " + msg); };
    if (n_points < 1 || m_points < 1) fail("point counts must be positive");
    if (m_points > n_points) fail("m_points must not exceed n_points");
    if (num_classes < 1) fail("num_classes must be positive");
    if (heading_bins != codec::kHeadingBins) fail("heading_bins must be 12");
    if (fused_dim != 2 * point_feature_dim) fail("fused_dim must equal 2 x point_feature_dim");
    if (backbone_channels.empty()) fail("backbone needs at least one stage");
    if (backbone_out_size() < 1) fail("crop_size too small for the backbone depth");
    if (heads < 1 || token_dim() % heads != 0) fail("token dim must be divisible by heads");
    if (box_head.empty() || box_head.back() != point_feature_dim)
        fail("box_head must end at point_feature_dim");
    if (seg_mlp1.empty() || seg_mlp2.empty()) fail("segmentation MLPs must be non-empty");
    if (!(input_scale > 0.0)) fail("input_scale must be positive");
}

std::string ModelConfig::to_json() const {
    nlohmann::json j;
    j["n_points"] = n_points;
    j["m_points"] = m_points;
    j["point_feature_dim"] = point_feature_dim;
    j["crop_size"] = crop_size;
    j["backbone_channels"] = backbone_channels;
    j["reduced_dim"] = reduced_dim;
    j["encoder_layers"] = encoder_layers;
    j["heads"] = heads;
    j["encoder_ffn_dim"] = encoder_ffn_dim;
    j["fused_dim"] = fused_dim;
    j["num_classes"] = num_classes;
    j["heading_bins"] = heading_bins;
    j["seg_mlp1"] = seg_mlp1;
    j["seg_mlp2"] = seg_mlp2;
    j["seg_head"] = seg_head;
    j["box_mlp"] = box_mlp;
    j["box_head"] = box_head;
    j["fusion_head"] = fusion_head;
    j["encoder_layer_norm"] = encoder_layer_norm;
    j["single_token_encoder"] = single_token_encoder;
    j["input_scale"] = input_scale;
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ModelConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n_points", c.n_points);
    get("m_points", c.m_points);
    get("point_feature_dim", c.point_feature_dim);
    get("crop_size", c.crop_size);
    get("backbone_channels", c.backbone_channels);
    get("reduced_dim", c.reduced_dim);
    get("encoder_layers", c.encoder_layers);
    get("heads", c.heads);
    get("encoder_ffn_dim", c.encoder_ffn_dim);
    get("fused_dim", c.fused_dim);
    get("num_classes", c.num_classes);
    get("heading_bins", c.heading_bins);
    get("seg_mlp1", c.seg_mlp1);
    get("seg_mlp2", c.seg_mlp2);
    get("seg_head", c.seg_head);
    get("box_mlp", c.box_mlp);
    get("box_head", c.box_head);
    get("fusion_head", c.fusion_head);
    get("encoder_layer_norm", c.encoder_layer_norm);
    get("single_token_encoder", c.single_token_encoder);
    get("input_scale", c.input_scale);
    return c;
}

ModelConfig ModelConfig::desk_defaults() {
    ModelConfig c;
    c.n_points = 128;
    c.m_points = 64;
    c.point_feature_dim = 128;
    c.crop_size = 56;
    c.backbone_channels = {8, 16, 32, 48};
    c.reduced_dim = 32;
    c.encoder_layers = 2;
    c.heads = 4;
    c.encoder_ffn_dim = 64;
    c.fused_dim = 256;
    c.num_classes = 2;
    c.seg_mlp1 = {32, 32};
    c.seg_mlp2 = {32, 64, 128};
    c.seg_head = {64, 32};
    c.box_mlp = {64, 64, 128};
    c.box_head = {128};
    c.fusion_head = {128, 64};
    c.input_scale = 0.1;
    return c;
}

}  // namespace ffkit::net
