#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ffkit/binio.hpp"
#include "ffkit/cli.hpp"

using ffkit::cli::RunConfig;

int main(int argc, char** argv) {
    CLI::App app{"ffkit: frustum-fusion 3D detection pipeline (synthetic data, preprocessing, "
                 "training, inference, evaluation)"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, synth_spec_path;
    uint64_t seed = 0;
    int threads = -1;
    app.add_option("--config", config_path, "run configuration JSON")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "master random seed");
    auto* threads_opt = app.add_option("--threads", threads, "worker thread count (0 = default)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic KITTI-layout dataset");
    std::string out_dir;
    int scenes = 50;
    synth->add_option("--out", out_dir, "output dataset directory")->required();
    synth->add_option("--scenes", scenes, "number of frames to generate");
    synth->add_option("--spec", synth_spec_path, "synthetic scene spec JSON")
        ->check(CLI::ExistingFile);

    auto* pre = app.add_subcommand("preprocess", "build frustum samples from a dataset split");
    std::string data_dir, split = "train", mode = "train", detections_dir, out_path;
    pre->add_option("--data", data_dir, "dataset directory")->required();
    pre->add_option("--split", split, "train|val|test");
    pre->add_option("--mode", mode, "train (5 perturbations/object) or eval (as given)");
    pre->add_option("--detections", detections_dir,
                    "external 2D detections directory (replaces ground-truth boxes)");
    pre->add_option("--out", out_path, "output sample container")->required();

    auto* train = app.add_subcommand("train", "train the fusion network");
    std::string samples_path, val_samples_path, ckpt_path;
    int epochs = -1, batch = -1, val_every = -1;
    double lr = -1.0, lambda = -1.0;
    std::string precision;
    train->add_option("--samples", samples_path, "training sample container")->required();
    train->add_option("--val-samples", val_samples_path, "validation sample container");
    train->add_option("--out", ckpt_path, "output checkpoint path")->required();
    train->add_option("--epochs", epochs, "training epochs");
    train->add_option("--lr", lr, "Adam learning rate");
    train->add_option("--batch", batch, "batch size");
    train->add_option("--lambda", lambda, "box loss weight");
    train->add_option("--precision", precision, "f32 or f64");
    train->add_option("--val-every", val_every, "epochs between validation AP evaluations");

    auto* infer = app.add_subcommand("infer", "run inference and write detection files");
    std::string infer_samples, infer_ckpt, infer_out;
    infer->add_option("--samples", infer_samples, "sample container")->required();
    infer->add_option("--ckpt", infer_ckpt, "checkpoint")->required();
    infer->add_option("--out", infer_out, "output detections directory")->required();

    auto* evalc = app.add_subcommand("eval", "evaluate detections against a dataset split");
    std::string pred_dir, eval_data, eval_split = "val", report_path = "report.json";
    evalc->add_option("--pred", pred_dir, "detections directory")->required();
    evalc->add_option("--data", eval_data, "dataset directory")->required();
    evalc->add_option("--split", eval_split, "train|val|test");
    evalc->add_option("--out", report_path, "metrics report JSON path");

    auto* report = app.add_subcommand("report", "render a metrics report as a table");
    std::string report_in;
    report->add_option("--report", report_in, "metrics report JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.apply_json(ffkit::read_file_text(config_path));
        if (seed_opt->count() > 0) cfg.seed = seed;
        if (threads_opt->count() > 0) cfg.threads = threads;
        if (!synth_spec_path.empty())
            cfg.synth = ffkit::io::SynthSpec::from_json(ffkit::read_file_text(synth_spec_path));
        if (epochs >= 0) cfg.epochs = epochs;
        if (lr >= 0.0) cfg.lr = lr;
        if (batch > 0) cfg.batch_size = batch;
        if (lambda >= 0.0) cfg.lambda_box = lambda;
        if (!precision.empty()) cfg.precision = precision;
        if (val_every >= 0) cfg.val_every = val_every;

        if (synth->parsed()) ffkit::cli::cmd_synth(cfg, out_dir, scenes);
        if (pre->parsed())
            ffkit::cli::cmd_preprocess(cfg, data_dir, split, mode, detections_dir, out_path);
        if (train->parsed()) ffkit::cli::cmd_train(cfg, samples_path, val_samples_path, ckpt_path);
        if (infer->parsed()) ffkit::cli::cmd_infer(cfg, infer_samples, infer_ckpt, infer_out);
        if (evalc->parsed()) ffkit::cli::cmd_eval(cfg, pred_dir, eval_data, eval_split, report_path);
        if (report->parsed()) ffkit::cli::cmd_report(report_in);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ffkit::cli::exit_code_for(e);
    }
    return 0;
}
