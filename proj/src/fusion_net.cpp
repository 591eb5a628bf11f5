#include "ffkit/fusion_net.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ffkit/optim.hpp"
#include "ffkit/rng.hpp"

namespace ffkit::net {

namespace {

Tensor init_linear_w(int64_t in, int64_t out, bool xavier, Dtype dt, uint64_t seed,
                     const std::string& name) {
    Rng rng(derive_seed(seed, fnv1a64(name)));
    const double bound = xavier ? std::sqrt(6.0 / double(in + out)) : std::sqrt(6.0 / double(in));
    Tensor t({in, out}, dt);
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-bound, bound));
    return t;
}

Tensor init_conv_w(int64_t oc, int64_t ic, int64_t kh, int64_t kw, Dtype dt, uint64_t seed,
                   const std::string& name) {
    Rng rng(derive_seed(seed, fnv1a64(name)));
    const double bound = std::sqrt(6.0 / double(ic * kh * kw));
    Tensor t({oc, ic, kh, kw}, dt);
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-bound, bound));
    return t;
}

Tensor init_normal(std::vector<int64_t> shape, double stddev, Dtype dt, uint64_t seed,
                   const std::string& name) {
    Rng rng(derive_seed(seed, fnv1a64(name)));
    Tensor t(std::move(shape), dt);
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal(0.0, stddev));
    return t;
}

}  // namespace

ad::Var FusionNet::ParamVars::operator()(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigMismatch("unknown parameter: " + name);
    return it->second;
}

FusionNet::FusionNet(ModelConfig cfg, Dtype dtype, uint64_t seed)
    : cfg_(std::move(cfg)), dtype_(dtype) {
    cfg_.validate();
    register_params(seed);
}

FusionNet::FusionNet(ModelConfig cfg, const Checkpoint& ck) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (ck.tensors.empty()) throw ConfigMismatch("checkpoint holds no tensors");
    dtype_ = ck.tensors.front().second.dtype();
    register_params(0);
    for (auto& [name, tensor] : params_) {
        const Tensor* loaded = ck.find(name);
        if (!loaded) throw ConfigMismatch("checkpoint lacks parameter " + name);
        if (loaded->shape() != tensor.shape())
            throw ConfigMismatch("checkpoint parameter " + name + " has shape " +
                                 shape_str(loaded->shape()) + ", expected " +
                                 shape_str(tensor.shape()));
        tensor = *loaded;
    }
}

void FusionNet::register_params(uint64_t seed) {
    params_.clear();
    auto linear = [&](const std::string& name, int64_t in, int64_t out, bool xavier) {
        params_.emplace_back(name + ".w", init_linear_w(in, out, xavier, dtype_, seed, name + ".w"));
        params_.emplace_back(name + ".b", Tensor::zeros({1, out}, dtype_));
    };
    auto conv = [&](const std::string& name, int64_t oc, int64_t ic, int64_t k) {
        params_.emplace_back(name + ".w", init_conv_w(oc, ic, k, k, dtype_, seed, name + ".w"));
        params_.emplace_back(name + ".b", Tensor::zeros({oc}, dtype_));
    };
    const int64_t K = cfg_.num_classes;

    int64_t c = 4;
    for (std::size_t i = 0; i < cfg_.seg_mlp1.size(); ++i) {
        linear("seg.mlp1." + std::to_string(i), c, cfg_.seg_mlp1[i], false);
        c = cfg_.seg_mlp1[i];
    }
    const int64_t pointfeat_dim = c;
    for (std::size_t i = 0; i < cfg_.seg_mlp2.size(); ++i) {
        linear("seg.mlp2." + std::to_string(i), c, cfg_.seg_mlp2[i], false);
        c = cfg_.seg_mlp2[i];
    }
    const int64_t global_dim = c;
    c = pointfeat_dim + global_dim + K;
    for (std::size_t i = 0; i < cfg_.seg_head.size(); ++i) {
        linear("seg.head." + std::to_string(i), c, cfg_.seg_head[i], false);
        c = cfg_.seg_head[i];
    }
    linear("seg.out", c, 2, true);

    c = 4;
    for (std::size_t i = 0; i < cfg_.box_mlp.size(); ++i) {
        linear("box.mlp." + std::to_string(i), c, cfg_.box_mlp[i], false);
        c = cfg_.box_mlp[i];
    }
    c += K;
    for (std::size_t i = 0; i < cfg_.box_head.size(); ++i) {
        linear("box.head." + std::to_string(i), c, cfg_.box_head[i], false);
        c = cfg_.box_head[i];
    }

    const auto& ch = cfg_.backbone_channels;
    conv("img.stem", ch[0], 3, 3);
    for (std::size_t i = 1; i < ch.size(); ++i) {
        const std::string base = "img.stage" + std::to_string(i);
        conv(base + ".conv1", ch[i], ch[i - 1], 3);
        conv(base + ".conv2", ch[i], ch[i], 3);
        conv(base + ".skip", ch[i], ch[i - 1], 1);
    }
    conv("img.reduce", cfg_.reduced_dim, ch.back(), 1);

    const int64_t t = cfg_.token_count();
    const int64_t td = cfg_.token_dim();
    params_.emplace_back("img.pos", init_normal({t, td}, 0.02, dtype_, seed, "img.pos"));
    for (int l = 0; l < cfg_.encoder_layers; ++l) {
        const std::string base = "img.enc" + std::to_string(l);
        for (const char* proj : {"wq", "wk", "wv", "wo"}) {
            params_.emplace_back(base + "." + proj + ".w",
                                 init_linear_w(td, td, true, dtype_, seed, base + "." + proj));
            params_.emplace_back(base + "." + proj + ".b", Tensor::zeros({1, td}, dtype_));
        }
        linear(base + ".ffn1", td, cfg_.encoder_ffn_dim, false);
        linear(base + ".ffn2", cfg_.encoder_ffn_dim, td, true);
        if (cfg_.encoder_layer_norm) {
            for (const char* ln : {"ln1", "ln2"}) {
                params_.emplace_back(base + "." + ln + ".g", Tensor::full({1, td}, 1.0, dtype_));
                params_.emplace_back(base + "." + ln + ".b", Tensor::zeros({1, td}, dtype_));
            }
        }
    }
    linear("img.feat", td, cfg_.point_feature_dim, true);

    c = cfg_.fused_dim;
    for (std::size_t i = 0; i < cfg_.fusion_head.size(); ++i) {
        linear("fuse.h" + std::to_string(i), c, cfg_.fusion_head[i], false);
        c = cfg_.fusion_head[i];
    }
    linear("fuse.out", c, cfg_.box_output_dim(), true);
}

FusionNet::ParamVars FusionNet::make_vars(ad::Graph& g, bool requires_grad) const {
    ParamVars pv;
    pv.ordered.reserve(params_.size());
    for (const auto& [name, tensor] : params_) {
        ad::Var v = g.leaf(tensor, requires_grad, name);
        pv.ordered.push_back(v);
        pv.by_name.emplace(name, v);
    }
    return pv;
}

namespace {

ad::Var linear_layer(ad::Graph& g, const FusionNet::ParamVars& pv, const std::string& name,
                     ad::Var x) {
    return g.add_rowvec(g.matmul(x, pv(name + ".w")), pv(name + ".b"));
}

}  // namespace

FusionNet::SegOut FusionNet::segment_instance(ad::Graph& g, const ParamVars& pv, ad::Var points,
                                              ad::Var onehot) const {
    if (points->value.dim(0) != cfg_.n_points || points->value.dim(1) != 4)
        throw ShapeMismatch("segment_instance: expected " + std::to_string(cfg_.n_points) +
                            " x 4 points, got " + shape_str(points->value.shape()));
    if (onehot->value.dim(1) != cfg_.num_classes)
        throw ShapeMismatch("segment_instance: bad class code length");
    ad::Var h = points;
    for (std::size_t i = 0; i < cfg_.seg_mlp1.size(); ++i)
        h = g.relu(linear_layer(g, pv, "seg.mlp1." + std::to_string(i), h));
    ad::Var pointfeat = h;
    for (std::size_t i = 0; i < cfg_.seg_mlp2.size(); ++i)
        h = g.relu(linear_layer(g, pv, "seg.mlp2." + std::to_string(i), h));
    ad::Var global = g.reduce_max_rows(h);
    ad::Var global_k = g.concat_cols({global, onehot});
    ad::Var per_point = g.concat_cols({pointfeat, g.broadcast_rows(global_k, cfg_.n_points)});
    for (std::size_t i = 0; i < cfg_.seg_head.size(); ++i)
        per_point = g.relu(linear_layer(g, pv, "seg.head." + std::to_string(i), per_point));
    return {linear_layer(g, pv, "seg.out", per_point), pointfeat};
}

ad::Var FusionNet::point_box_feature(ad::Graph& g, const ParamVars& pv, ad::Var object_points,
                                     ad::Var onehot) const {
    if (object_points->value.dim(0) != cfg_.m_points || object_points->value.dim(1) != 4)
        throw ShapeMismatch("point_box_feature: expected " + std::to_string(cfg_.m_points) +
                            " x 4 points, got " + shape_str(object_points->value.shape()));
    ad::Var h = object_points;
    for (std::size_t i = 0; i < cfg_.box_mlp.size(); ++i)
        h = g.relu(linear_layer(g, pv, "box.mlp." + std::to_string(i), h));
    ad::Var pooled = g.reduce_max_rows(h);
    ad::Var with_class = g.concat_cols({pooled, onehot});
    for (std::size_t i = 0; i < cfg_.box_head.size(); ++i)
        with_class = g.relu(linear_layer(g, pv, "box.head." + std::to_string(i), with_class));
    return with_class;
}

ad::Var FusionNet::image_crop_feature(ad::Graph& g, const ParamVars& pv, ad::Var crop) const {
    const int S = cfg_.crop_size;
    if (crop->value.rank() != 3 || crop->value.dim(0) != 3 || crop->value.dim(1) != S ||
        crop->value.dim(2) != S)
        throw ShapeMismatch("image_crop_feature: expected 3 x " + std::to_string(S) + " x " +
                            std::to_string(S) + " crop, got " + shape_str(crop->value.shape()));
    ad::Var x = g.relu(g.conv2d(crop, pv("img.stem.w"), pv("img.stem.b"), 2, 1));
    for (std::size_t i = 1; i < cfg_.backbone_channels.size(); ++i) {
        const std::string base = "img.stage" + std::to_string(i);
        ad::Var main = g.relu(g.conv2d(x, pv(base + ".conv1.w"), pv(base + ".conv1.b"), 2, 1));
        main = g.conv2d(main, pv(base + ".conv2.w"), pv(base + ".conv2.b"), 1, 1);
        ad::Var skip = g.conv2d(x, pv(base + ".skip.w"), pv(base + ".skip.b"), 2, 0);
        x = g.relu(g.add(main, skip));
    }
    x = g.conv2d(x, pv("img.reduce.w"), pv("img.reduce.b"), 1, 0);

    const int64_t t = cfg_.token_count();
    const int64_t td = cfg_.token_dim();
    ad::Var tokens;
    if (cfg_.single_token_encoder) {
        tokens = g.reshape(x, {1, td});
    } else {
        tokens = g.transpose(g.reshape(x, {cfg_.reduced_dim, t}));  // t x d
    }
    tokens = g.add(tokens, pv("img.pos"));
    for (int l = 0; l < cfg_.encoder_layers; ++l) {
        const std::string base = "img.enc" + std::to_string(l);
        ad::AttentionParams ap{pv(base + ".wq.w"), pv(base + ".wq.b"), pv(base + ".wk.w"),
                               pv(base + ".wk.b"), pv(base + ".wv.w"), pv(base + ".wv.b"),
                               pv(base + ".wo.w"), pv(base + ".wo.b")};
        ad::Var attn = ad::multihead_self_attention(g, tokens, cfg_.heads, ap);
        tokens = g.add(tokens, attn);
        if (cfg_.encoder_layer_norm)
            tokens = g.layer_norm(tokens, pv(base + ".ln1.g"), pv(base + ".ln1.b"));
        ad::Var ffn = linear_layer(g, pv, base + ".ffn2",
                                   g.relu(linear_layer(g, pv, base + ".ffn1", tokens)));
        tokens = g.add(tokens, ffn);
        if (cfg_.encoder_layer_norm)
            tokens = g.layer_norm(tokens, pv(base + ".ln2.g"), pv(base + ".ln2.b"));
    }
    return linear_layer(g, pv, "img.feat", g.mean_rows(tokens));
}

ad::Var FusionNet::fuse_predict(ad::Graph& g, const ParamVars& pv, ad::Var point_feat,
                                ad::Var image_feat) const {
    if (point_feat->value.dim(1) != cfg_.point_feature_dim ||
        image_feat->value.dim(1) != cfg_.point_feature_dim)
        throw ShapeMismatch("fuse_predict: both features must be 1 x " +
                            std::to_string(cfg_.point_feature_dim));
    // point feature first; the concat order is part of the contract
    ad::Var fused = g.concat_cols({point_feat, image_feat});
    for (std::size_t i = 0; i < cfg_.fusion_head.size(); ++i)
        fused = g.relu(linear_layer(g, pv, "fuse.h" + std::to_string(i), fused));
    return linear_layer(g, pv, "fuse.out", fused);
}

FusionNet::Selection FusionNet::select_and_center(const Tensor& points, const Tensor& seg_logits,
                                                  uint64_t seed) const {
    const int64_t n = points.dim(0);
    const int64_t m = cfg_.m_points;
    Selection sel;
    sel.mask.resize(std::size_t(n));
    std::vector<int64_t> fg;
    for (int64_t i = 0; i < n; ++i) {
        const bool is_fg = seg_logits.at2(i, 1) > seg_logits.at2(i, 0);
        sel.mask[std::size_t(i)] = is_fg;
        if (is_fg) fg.push_back(i);
    }
    std::vector<int64_t> chosen = fg;
    if (chosen.empty()) {
        sel.fallback_all = true;
        chosen.resize(std::size_t(n));
        std::iota(chosen.begin(), chosen.end(), int64_t(0));
    }

    // centroid over the predicted-foreground set (or everything on fallback),
    // summed in sorted coordinate order so any input permutation yields the
    // same bits
    std::vector<std::array<double, 3>> xyz;
    xyz.reserve(chosen.size());
    for (int64_t i : chosen)
        xyz.push_back({points.at2(i, 0), points.at2(i, 1), points.at2(i, 2)});
    std::sort(xyz.begin(), xyz.end());
    double sx = 0, sy = 0, sz = 0;
    for (const auto& p : xyz) {
        sx += p[0];
        sy += p[1];
        sz += p[2];
    }
    const double cnt = double(xyz.size());
    sel.centroid = {sx / cnt, sy / cnt, sz / cnt};

    std::vector<int64_t> rows;
    if ((int64_t)chosen.size() > m) {
        Rng rng(seed);
        std::vector<int64_t> idx = chosen;
        for (int64_t i = 0; i < m; ++i) {
            const std::size_t j = std::size_t(i) + std::size_t(rng.uniform_int(idx.size() - i));
            std::swap(idx[std::size_t(i)], idx[j]);
        }
        rows.assign(idx.begin(), idx.begin() + m);
    } else {
        rows = chosen;
        Rng rng(seed);
        while ((int64_t)rows.size() < m)
            rows.push_back(chosen[std::size_t(rng.uniform_int(chosen.size()))]);
    }
    // canonical value order keeps the box pipeline permutation invariant
    std::sort(rows.begin(), rows.end(), [&](int64_t a, int64_t b) {
        for (int c = 0; c < 4; ++c) {
            const double va = points.at2(a, c), vb = points.at2(b, c);
            if (va != vb) return va < vb;
        }
        return false;
    });
    sel.rows = std::move(rows);
    return sel;
}

FusionNet::Forward FusionNet::forward(ad::Graph& g, const ParamVars& pv,
                                      const frustum::FrustumSample& s, uint64_t select_seed,
                                      bool zero_mask_channel,
                                      const std::vector<int64_t>* frozen_rows) const {
    if (s.points.dim(0) != cfg_.n_points)
        throw ConfigMismatch("sample has " + std::to_string(s.points.dim(0)) +
                             " points, model expects " + std::to_string(cfg_.n_points));
    if ((int)s.class_onehot.size() != cfg_.num_classes)
        throw ConfigMismatch("sample class code length does not match the model");

    Tensor input = s.points.astype(dtype_);
    for (int64_t i = 0; i < cfg_.n_points; ++i) {
        for (int c = 0; c < 3; ++c) input.set2(i, c, input.at2(i, c) * cfg_.input_scale);
        if (zero_mask_channel) input.set2(i, 3, 0.0);
    }
    ad::Var points = g.leaf(std::move(input));
    Tensor oh({1, cfg_.num_classes}, dtype_);
    for (int k = 0; k < cfg_.num_classes; ++k) oh.set(k, double(s.class_onehot[std::size_t(k)]));
    ad::Var onehot = g.leaf(std::move(oh));

    Forward out;
    SegOut seg = segment_instance(g, pv, points, onehot);
    out.seg_logits = seg.logits;
    if (frozen_rows) {
        out.selection.rows = *frozen_rows;
        // keep the frozen centroid consistent with the frozen routing
        double sx = 0, sy = 0, sz = 0;
        for (int64_t i : *frozen_rows) {
            sx += s.points.at2(i, 0);
            sy += s.points.at2(i, 1);
            sz += s.points.at2(i, 2);
        }
        const double cnt = double(frozen_rows->size());
        out.selection.centroid = {sx / cnt, sy / cnt, sz / cnt};
        out.selection.mask.assign(std::size_t(cfg_.n_points), false);
    } else {
        out.selection = select_and_center(s.points, seg.logits->value, select_seed);
    }

    Tensor obj({cfg_.m_points, 4}, dtype_);
    for (int64_t i = 0; i < cfg_.m_points; ++i) {
        const int64_t r = out.selection.rows[std::size_t(i)];
        obj.set2(i, 0, (s.points.at2(r, 0) - out.selection.centroid.x) * cfg_.input_scale);
        obj.set2(i, 1, (s.points.at2(r, 1) - out.selection.centroid.y) * cfg_.input_scale);
        obj.set2(i, 2, (s.points.at2(r, 2) - out.selection.centroid.z) * cfg_.input_scale);
        obj.set2(i, 3, zero_mask_channel ? 0.0 : s.points.at2(r, 3));
    }
    ad::Var box_feat = point_box_feature(g, pv, g.leaf(std::move(obj)), onehot);

    if (!s.crop_pixels.defined())
        throw ConfigMismatch("sample carries no crop pixels; preprocess with crop_size = " +
                             std::to_string(cfg_.crop_size));
    ad::Var img_feat = image_crop_feature(g, pv, g.leaf(s.crop_pixels.astype(dtype_)));
    out.box_params = fuse_predict(g, pv, box_feat, img_feat);
    return out;
}

Checkpoint FusionNet::to_checkpoint(const std::string& metadata_json) const {
    Checkpoint ck;
    ck.metadata_json = metadata_json;
    ck.tensors = params_;
    return ck;
}

LossVars detection_loss(ad::Graph& g, const FusionNet& net, const FusionNet::Forward& fwd,
                        const frustum::FrustumSample& s, const codec::SizePriorTable& priors,
                        double lambda) {
    if (!s.gt_box) throw MissingGroundTruth("sample has no ground-truth box");
    const Box3D& gt = *s.gt_box;
    const int64_t n = s.points.dim(0);

    std::vector<int64_t> seg_targets(static_cast<std::size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const Point3D p{s.points.at2(i, 0), s.points.at2(i, 1), s.points.at2(i, 2)};
        seg_targets[std::size_t(i)] = point_in_box3d(p, gt) ? 1 : 0;
    }
    ad::Var l_seg = g.softmax_cross_entropy(fwd.seg_logits, std::move(seg_targets));

    const Dtype dt = fwd.box_params->value.dtype();
    const auto& prior = priors.lookup(gt.class_label);
    const Point3D& c = fwd.selection.centroid;
    Tensor center_target = Tensor::from(
        {1, 3}, {gt.center.x - c.x, gt.center.y - c.y, gt.center.z - c.z}, dt);
    Tensor size_target = Tensor::from({1, 3},
                                      {gt.length / prior.length - 1.0, gt.width / prior.width - 1.0,
                                       gt.height / prior.height - 1.0},
                                      dt);
    const codec::HeadingCode hc = codec::encode_heading(gt.yaw);

    const int hb = net.config().heading_bins;
    ad::Var off = g.slice_cols(fwd.box_params, 0, 3);
    ad::Var sz = g.slice_cols(fwd.box_params, 3, 6);
    ad::Var hl = g.slice_cols(fwd.box_params, 6, 6 + hb);
    ad::Var hr = g.slice_cols(fwd.box_params, 6 + hb, 6 + 2 * hb);

    ad::Var l_center = g.smooth_l1_sum(off, center_target);
    ad::Var l_size = g.smooth_l1_sum(sz, size_target);
    ad::Var l_hcls = g.softmax_cross_entropy(hl, {hc.bin});
    ad::Var l_hres =
        g.smooth_l1_sum(g.gather_col(hr, hc.bin), Tensor::from({1, 1}, {hc.residual}, dt));

    ad::Var box_sum = g.add(g.add(l_center, l_hcls), g.add(l_hres, l_size));
    LossVars out;
    out.total = g.add(l_seg, g.scale(box_sum, lambda));
    out.values.seg = l_seg->value.at(0);
    out.values.center = l_center->value.at(0);
    out.values.heading_cls = l_hcls->value.at(0);
    out.values.heading_res = l_hres->value.at(0);
    out.values.size = l_size->value.at(0);
    out.values.total = out.total->value.at(0);
    return out;
}

namespace {

void check_set(const frustum::SampleSet& set, const ModelConfig& cfg) {
    if (set.n_points != cfg.n_points)
        throw ConfigMismatch("sample container has n=" + std::to_string(set.n_points) +
                             ", model expects " + std::to_string(cfg.n_points));
    if ((int)set.class_names.size() != cfg.num_classes)
        throw ConfigMismatch("sample container has " + std::to_string(set.class_names.size()) +
                             " classes, model expects " + std::to_string(cfg.num_classes));
    if (set.crop_size != cfg.crop_size)
        throw ConfigMismatch("sample container crop size " + std::to_string(set.crop_size) +
                             " does not match model crop size " + std::to_string(cfg.crop_size));
}

double mean_ap3d(const eval::MetricsReport& report) {
    if (report.per_class.empty()) return 0.0;
    double s = 0.0;
    for (const auto& [cls, m] : report.per_class) s += m.ap3d;
    return s / double(report.per_class.size());
}

}  // namespace

TrainResult train(const frustum::SampleSet& train_set, const frustum::SampleSet* val_set,
                  const ModelConfig& cfg, const codec::SizePriorTable& priors,
                  const eval::MatchConfig* val_match, const TrainOptions& opt,
                  const std::string& metadata_json) {
    if (train_set.samples.empty()) throw EmptyDataset("training set is empty");
    check_set(train_set, cfg);
    if (val_set) check_set(*val_set, cfg);
    for (const auto& s : train_set.samples)
        if (!s.gt_box) throw MissingGroundTruth("training sample lacks a ground-truth box");

    FusionNet net(cfg, opt.precision, opt.seed);
    Adam adam({opt.lr, 0.9, 0.999, 1e-8});

    const std::size_t n_samples = train_set.samples.size();
    std::vector<std::size_t> order(n_samples);
    std::iota(order.begin(), order.end(), std::size_t(0));

#ifdef _OPENMP
    const int threads = opt.threads > 0 ? opt.threads : omp_get_max_threads();
#else
    const int threads = 1;
    (void)opt.threads;
#endif

    TrainResult result;
    std::ofstream log;
    if (!opt.log_path.empty()) {
        log.open(opt.log_path, std::ios::trunc);
        if (!log) throw IoError("cannot open training log " + opt.log_path);
    }

    const auto t_start = std::chrono::steady_clock::now();
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(opt.seed, 0xE90C, uint64_t(epoch)));
        for (std::size_t i = n_samples; i > 1; --i) {
            const std::size_t j = std::size_t(shuffle_rng.uniform_int(i));
            std::swap(order[i - 1], order[j]);
        }

        LossBreakdown epoch_loss;
        for (std::size_t start = 0; start < n_samples; start += std::size_t(opt.batch_size)) {
            const std::size_t count = std::min(std::size_t(opt.batch_size), n_samples - start);
            std::vector<std::vector<Tensor>> grads(count);
            std::vector<LossBreakdown> losses(count);
            std::vector<std::string> errors(count);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#endif
            for (long long b = 0; b < (long long)count; ++b) {
                try {
                    const std::size_t idx = order[start + std::size_t(b)];
                    const auto& sample = train_set.samples[idx];
                    ad::Graph g;
                    auto pv = net.make_vars(g);
                    const uint64_t sel_seed =
                        derive_seed(opt.seed, 0x5e1ec7, uint64_t(epoch), uint64_t(idx));
                    auto fwd = net.forward(g, pv, sample, sel_seed);
                    auto loss = detection_loss(g, net, fwd, sample, priors, opt.lambda_box);
                    g.backward(loss.total);
                    losses[std::size_t(b)] = loss.values;
                    auto& slot = grads[std::size_t(b)];
                    slot.reserve(pv.ordered.size());
                    for (const auto& v : pv.ordered)
                        slot.push_back(v->grad.defined()
                                           ? std::move(v->grad)
                                           : Tensor::zeros(v->value.shape(), v->value.dtype()));
                } catch (const std::exception& e) {
                    errors[std::size_t(b)] = e.what();
                }
            }
            for (const auto& err : errors)
                if (!err.empty()) throw NumericError("training step failed: " + err);

            // deterministic reduction: sample order, then 1/batch scaling
            std::vector<Tensor> mean_grads;
            mean_grads.reserve(net.parameters().size());
            for (std::size_t p = 0; p < net.parameters().size(); ++p) {
                Tensor acc = std::move(grads[0][p]);
                for (std::size_t b = 1; b < count; ++b) acc.add_inplace(grads[b][p]);
                acc.scale_inplace(1.0 / double(count));
                mean_grads.push_back(std::move(acc));
            }
            std::vector<Tensor*> param_ptrs;
            param_ptrs.reserve(net.parameters().size());
            for (auto& [name, tensor] : net.parameters()) param_ptrs.push_back(&tensor);
            adam.step(param_ptrs, mean_grads);

            for (std::size_t b = 0; b < count; ++b) {
                epoch_loss.total += losses[b].total;
                epoch_loss.seg += losses[b].seg;
                epoch_loss.center += losses[b].center;
                epoch_loss.heading_cls += losses[b].heading_cls;
                epoch_loss.heading_res += losses[b].heading_res;
                epoch_loss.size += losses[b].size;
            }
        }

        const double inv_n = 1.0 / double(n_samples);
        nlohmann::json line;
        line["epoch"] = epoch;
        line["loss"] = {{"total", epoch_loss.total * inv_n},
                        {"seg", epoch_loss.seg * inv_n},
                        {"center", epoch_loss.center * inv_n},
                        {"heading_cls", epoch_loss.heading_cls * inv_n},
                        {"heading_res", epoch_loss.heading_res * inv_n},
                        {"size", epoch_loss.size * inv_n}};
        if (!std::isfinite(epoch_loss.total)) throw NumericError("training loss is not finite");
        result.epoch_losses.push_back(epoch_loss.total * inv_n);

        const bool last = epoch + 1 == opt.epochs;
        if (val_set && val_match &&
            (last || (opt.val_every > 0 && (epoch + 1) % opt.val_every == 0))) {
            const auto dets = infer(*val_set, net, priors);
            const auto report = eval::evaluate(group_detections(dets),
                                               ground_truth_from_samples(*val_set), *val_match);
            line["val_mean_ap3d"] = mean_ap3d(report);
        }
        line["wall_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                             .count();
        result.log_lines.push_back(line.dump());
        if (log) log << line.dump() << "\n" << std::flush;
    }

    result.checkpoint = net.to_checkpoint(metadata_json);
    return result;
}

std::vector<DetectionResult> infer(const frustum::SampleSet& samples, const FusionNet& net,
                                   const codec::SizePriorTable& priors, bool zero_mask) {
    check_set(samples, net.config());
    std::vector<DetectionResult> out(samples.samples.size());
    std::vector<std::string> errors(samples.samples.size());

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long long i = 0; i < (long long)samples.samples.size(); ++i) {
        try {
            const auto& s = samples.samples[std::size_t(i)];
            ad::Graph g;
            auto pv = net.make_vars(g, false);
            const uint64_t sel_seed = derive_seed(0x1fe2, uint64_t(i));
            auto fwd = net.forward(g, pv, s, sel_seed, zero_mask);
            const auto params = codec::BoxParams::from_flat(fwd.box_params->value.to_vector());
            const std::string cls = samples.class_names[std::size_t(s.class_index)];
            DetectionResult r;
            r.box = codec::decode_box(params, cls, fwd.selection.centroid,
                                      s.normalized ? s.frustum_angle : 0.0, priors);
            r.class_label = cls;
            r.confidence = double(s.confidence);
            r.point_mask = fwd.selection.mask;
            r.frame_id = s.frame_id;
            r.object_id = s.object_id;
            out[std::size_t(i)] = std::move(r);
        } catch (const std::exception& e) {
            errors[std::size_t(i)] = e.what();
        }
    }
    for (const auto& err : errors)
        if (!err.empty()) throw NumericError("inference failed: " + err);
    return out;
}

std::map<uint32_t, std::vector<eval::Detection>> group_detections(
    const std::vector<DetectionResult>& results) {
    std::map<uint32_t, std::vector<eval::Detection>> out;
    for (const auto& r : results) {
        eval::Detection d;
        d.box = r.box;
        d.confidence = r.confidence;
        d.frame_id = r.frame_id;
        out[r.frame_id].push_back(std::move(d));
    }
    return out;
}

std::map<uint32_t, std::vector<eval::GroundTruth>> ground_truth_from_samples(
    const frustum::SampleSet& samples) {
    std::map<uint32_t, std::vector<eval::GroundTruth>> out;
    for (const auto& s : samples.samples) {
        out[s.frame_id];  // every sample's frame exists even without gt
        if (!s.gt_box) continue;
        Box3D box = *s.gt_box;
        if (s.normalized) {
            box.center = rotate_y(box.center, s.frustum_angle);
            box.yaw = wrap_pi(box.yaw + s.frustum_angle);
        }
        out[s.frame_id].push_back({box, s.frame_id});
    }
    return out;
}

}  // namespace ffkit::net
