// Command-line front end. Exit codes: 0 success, 1 domain error, 2 usage error.

#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aneuseg/checkpoint.hpp"
#include "aneuseg/config.hpp"
#include "aneuseg/files.hpp"
#include "aneuseg/inference.hpp"
#include "aneuseg/nifti.hpp"
#include "aneuseg/patch_plan.hpp"
#include "aneuseg/pipeline.hpp"
#include "aneuseg/render.hpp"
#include "aneuseg/report.hpp"

using namespace aneuseg;
using nlohmann::json;

namespace {

constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

Index3 to_index3(const std::vector<std::int64_t>& v)
{
    return Index3(v[0], v[1], v[2]);
}

json stats_json(const Eigen::ArrayXd& v)
{
    const double mean = v.mean();
    return {{"min", v.minCoeff()},
            {"max", v.maxCoeff()},
            {"mean", mean},
            {"std", std::sqrt((v - mean).square().mean())}};
}

json geometry_json(const Geometry& g)
{
    return {{"dims", {g.dims.x(), g.dims.y(), g.dims.z()}},
            {"spacing", {g.spacing.x(), g.spacing.y(), g.spacing.z()}},
            {"origin", {g.origin.x(), g.origin.y(), g.origin.z()}}};
}

void write_prediction(const Prediction& p, const std::string& mask_path, const std::string& prob_path)
{
    nifti::write(p.mask, mask_path);
    if (!prob_path.empty())
        nifti::write(p.probability, prob_path);
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Cerebral aneurysm segmentation pipeline"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "Print geometry and intensity statistics of a NIfTI file");
    std::string inspect_path;
    bool inspect_label = false;
    inspect->add_option("file", inspect_path, "NIfTI file")->required();
    inspect->add_flag("--label", inspect_label, "Read as a binary mask");

    // preprocess
    auto* prep = app.add_subcommand("preprocess", "Resample to a common spacing and z-score normalise");
    std::string prep_in, prep_out;
    std::vector<double> prep_spacing{0.5429, 0.5429, 0.5429};
    int prep_order = 3;
    bool prep_label = false;
    bool prep_no_norm = false;
    prep->add_option("input", prep_in, "Input NIfTI")->required();
    prep->add_option("output", prep_out, "Output NIfTI")->required();
    prep->add_option("--spacing", prep_spacing, "Target spacing in mm, a,b,c")->delimiter(',')->expected(3);
    prep->add_option("--order", prep_order, "Image interpolation order")->check(CLI::IsMember({0, 1, 3}));
    prep->add_flag("--label", prep_label, "Input is a mask (nearest neighbour, no normalisation)");
    prep->add_flag("--no-normalize", prep_no_norm, "Skip z-score normalisation");

    // plan
    auto* plan = app.add_subcommand("plan", "Validate a patch size and estimate activation memory");
    std::vector<std::int64_t> plan_patch;
    int plan_res = 6, plan_batch = 2, plan_base = 4, plan_cap = 320, plan_bytes = 4, plan_minb = 4;
    plan->add_option("--patch", plan_patch, "Patch size x,y,z")->delimiter(',')->expected(3)->required();
    plan->add_option("--resolutions", plan_res, "Number of resolutions")->check(CLI::PositiveNumber);
    plan->add_option("--batch", plan_batch, "Batch size")->check(CLI::PositiveNumber);
    plan->add_option("--base-channels", plan_base, "Channels at full resolution")->check(CLI::PositiveNumber);
    plan->add_option("--channel-cap", plan_cap, "Channel cap")->check(CLI::PositiveNumber);
    plan->add_option("--bytes", plan_bytes, "Bytes per scalar")->check(CLI::PositiveNumber);
    plan->add_option("--min-bottleneck", plan_minb, "Smallest bottleneck extent")->check(CLI::PositiveNumber);

    // split
    auto* split = app.add_subcommand("split", "Deterministic k-fold split of case ids");
    std::string split_images, split_out;
    std::vector<std::string> split_ids;
    int split_k = 5;
    std::uint64_t split_seed = 0;
    auto* split_src_dir = split->add_option("--images", split_images, "Directory whose NIfTI stems are the case ids");
    split->add_option("--ids", split_ids, "Explicit case ids")->delimiter(',')->excludes(split_src_dir);
    split->add_option("-k,--folds", split_k, "Number of folds");
    split->add_option("--seed", split_seed, "Seed");
    split->add_option("--out", split_out, "Output JSON (default: stdout)");

    // train
    auto* train = app.add_subcommand("train", "Train fold models");
    std::string train_cfg, train_images, train_labels, train_dir;
    std::vector<int> train_folds;
    train->add_option("--config", train_cfg, "JSON run configuration")->required()->check(CLI::ExistingFile);
    train->add_option("--fold", train_folds, "Fold(s) to train (default: all)");
    train->add_option("--images", train_images, "Overrides paths.images");
    train->add_option("--labels", train_labels, "Overrides paths.labels");
    train->add_option("--run-dir", train_dir, "Overrides paths.run_dir");

    // predict
    auto* predict = app.add_subcommand("predict", "Segment one volume with one checkpoint");
    std::string pred_ckpt, pred_in, pred_out, pred_prob;
    InferConfig pred_infer;
    predict->add_option("--checkpoint", pred_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    predict->add_option("--input", pred_in, "Image NIfTI")->required()->check(CLI::ExistingFile);
    predict->add_option("--output", pred_out, "Output mask NIfTI")->required();
    predict->add_option("--probability", pred_prob, "Optional foreground probability NIfTI");
    predict->add_option("--overlap", pred_infer.overlap, "Tile overlap fraction");
    predict->add_option("--sigma-scale", pred_infer.sigma_scale, "Gaussian window sigma / patch size");

    // ensemble-predict
    auto* ens = app.add_subcommand("ensemble-predict", "Segment with the mean probability of several checkpoints");
    std::vector<std::string> ens_ckpts;
    std::string ens_in, ens_out, ens_prob, ens_cv, ens_images;
    InferConfig ens_infer;
    ens->add_option("--checkpoint", ens_ckpts, "Checkpoint files")->check(CLI::ExistingFile);
    ens->add_option("--input", ens_in, "Image NIfTI");
    ens->add_option("--output", ens_out, "Output mask NIfTI");
    ens->add_option("--probability", ens_prob, "Optional foreground probability NIfTI");
    ens->add_option("--cross-validate", ens_cv,
                    "Run directory: predict every case of --images with the models that did not train on it");
    ens->add_option("--images", ens_images, "Image directory for --cross-validate");
    ens->add_option("--overlap", ens_infer.overlap, "Tile overlap fraction");
    ens->add_option("--sigma-scale", ens_infer.sigma_scale, "Gaussian window sigma / patch size");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Per-case and cohort metrics");
    std::string eval_pred, eval_ref, eval_out;
    double eval_hd = 100.0;
    eval->add_option("--pred", eval_pred, "Prediction directory")->required();
    eval->add_option("--ref", eval_ref, "Reference directory")->required();
    eval->add_option("--out", eval_out, "Output directory")->required();
    eval->add_option("--hd-percentile", eval_hd, "Hausdorff percentile (100 = maximum)")
        ->check(CLI::Range(0.0, 100.0));

    // report
    auto* report = app.add_subcommand("report", "Fold table and cohort summary of an evaluated run");
    std::string report_dir;
    report->add_option("run_dir", report_dir, "Run directory")->required();

    // render
    auto* render = app.add_subcommand("render", "Slice overlay as a PGM image");
    std::string render_img, render_mask, render_out, render_axis = "z";
    std::int64_t render_index = -1;
    render->add_option("--image", render_img, "Image NIfTI")->required()->check(CLI::ExistingFile);
    render->add_option("--mask", render_mask, "Mask NIfTI (default: no overlay)")->check(CLI::ExistingFile);
    render->add_option("--axis", render_axis, "x, y or z")->check(CLI::IsMember({"x", "y", "z"}));
    render->add_option("--index", render_index, "Slice index (default: middle)");
    render->add_option("--out", render_out, "Output PGM")->required();

    // synth
    auto* synth = app.add_subcommand("synth", "Write the bright-sphere benchmark cases");
    std::string synth_out;
    SyntheticConfig synth_cfg;
    synth->add_option("--out", synth_out, "Output directory (images/, labels/)")->required();
    synth->add_option("--cases", synth_cfg.cases, "Number of cases")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_cfg.seed, "Seed");

    // benchmark
    auto* bench = app.add_subcommand("benchmark", "Synthetic data, cross-validated training, evaluation and report");
    std::string bench_out, bench_cfg;
    bench->add_option("--out", bench_out, "Output directory")->required();
    bench->add_option("--config", bench_cfg, "JSON run configuration (default: the desk-scale preset)")
        ->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    try {
        if (*inspect) {
            json out;
            if (inspect_label) {
                const LabelMask m = nifti::read_mask(inspect_path);
                out = geometry_json(m.geom);
                out["foreground_voxels"] = m.count();
                out["foreground_mm3"] = static_cast<double>(m.count()) * m.geom.voxel_volume();
            } else {
                const Volume3 v = nifti::read_volume(inspect_path);
                out = geometry_json(v.geom);
                out["intensity"] = stats_json(v.voxels.cast<double>());
            }
            std::cout << out.dump(2) << "\n";
        } else if (*prep) {
            PreprocessConfig cfg;
            cfg.target_spacing = Vec3(prep_spacing[0], prep_spacing[1], prep_spacing[2]);
            cfg.image_order = prep_order;
            cfg.validate();
            std::vector<std::string> warnings;
            if (prep_label) {
                nifti::write(resample_mask(nifti::read_mask(prep_in), cfg, &warnings), prep_out);
            } else {
                Volume3 v = resample_image(nifti::read_volume(prep_in), cfg, &warnings);
                if (!prep_no_norm)
                    v = znormalize(v);
                nifti::write(v, prep_out);
            }
            for (const auto& w : warnings)
                std::cerr << "warning: " << w << "\n";
        } else if (*plan) {
            const PatchSpec spec = validate_patch(to_index3(plan_patch), plan_res, plan_minb, plan_batch);
            const Index3 b = spec.bottleneck();
            const std::uint64_t bytes = estimate_activation_memory(spec, plan_base, plan_cap, plan_bytes);
            const json out = {{"valid", true},
                              {"patch", plan_patch},
                              {"resolutions", plan_res},
                              {"batch", plan_batch},
                              {"divisor", spec.divisor()},
                              {"bottleneck", {b.x(), b.y(), b.z()}},
                              {"base_channels", plan_base},
                              {"channel_cap", plan_cap},
                              {"bytes_per_scalar", plan_bytes},
                              {"activation_bytes", bytes},
                              {"activation_gib", static_cast<double>(bytes) / (1024.0 * 1024.0 * 1024.0)}};
            std::cout << out.dump(2) << "\n";
        } else if (*split) {
            std::vector<std::string> ids = split_ids;
            if (!split_images.empty())
                for (const auto& c : list_cases(split_images))
                    ids.push_back(c.id);
            if (ids.empty())
                throw CLI::RequiredError("split needs --images or --ids");
            const std::string doc = split_to_json(split_folds(ids, split_k, split_seed)).dump(2) + "\n";
            if (split_out.empty())
                std::cout << doc;
            else
                write_text(split_out, doc);
        } else if (*train) {
            RunConfig cfg = load_config(train_cfg);
            if (!train_images.empty())
                cfg.paths.images = train_images;
            if (!train_labels.empty())
                cfg.paths.labels = train_labels;
            if (!train_dir.empty())
                cfg.paths.run_dir = train_dir;
            if (cfg.paths.images.empty() || cfg.paths.labels.empty() || cfg.paths.run_dir.empty())
                throw Error("train: paths.images, paths.labels and paths.run_dir are required");
            const auto files = list_cases(cfg.paths.images, cfg.paths.labels);
            const fs::path run = cfg.paths.run_dir;
            FoldSplit s;
            if (fs::exists(run / "split.json")) {
                s = split_from_json(read_json(run / "split.json"));
            } else {
                std::vector<std::string> ids;
                for (const auto& f : files)
                    ids.push_back(f.id);
                s = split_folds(ids, cfg.folds, cfg.seed());
            }
            train_run(cfg, load_training_cases(files, cfg.preprocess), s, run, train_folds, &std::cerr);
        } else if (*predict) {
            const Checkpoint ck = load_checkpoint(pred_ckpt);
            write_prediction(ensemble_predict(std::vector<Checkpoint>{ck}, nifti::read_volume(pred_in), pred_infer),
                             pred_out, pred_prob);
        } else if (*ens) {
            if (!ens_cv.empty()) {
                if (ens_images.empty() || !ens_ckpts.empty() || !ens_in.empty())
                    throw CLI::ValidationError("--cross-validate takes --images and no --checkpoint/--input");
                crossval_predict(ens_cv, list_cases(ens_images), ens_infer);
            } else {
                if (ens_ckpts.empty() || ens_in.empty() || ens_out.empty())
                    throw CLI::RequiredError("ensemble-predict needs --checkpoint, --input and --output");
                std::vector<Checkpoint> cks;
                for (const auto& p : ens_ckpts)
                    cks.push_back(load_checkpoint(p));
                write_prediction(ensemble_predict(cks, nifti::read_volume(ens_in), ens_infer), ens_out, ens_prob);
            }
        } else if (*eval) {
            const auto rows = evaluate_dirs(eval_pred, eval_ref, eval_out, eval_hd);
            std::cerr << "evaluated " << rows.size() << " cases\n";
        } else if (*report) {
            write_report(report_dir);
            std::cout << read_text(fs::path(report_dir) / "report.txt");
        } else if (*render) {
            const Volume3 v = nifti::read_volume(render_img);
            const LabelMask m = render_mask.empty() ? LabelMask(v.geom) : nifti::read_mask(render_mask);
            const Axis axis = parse_axis(render_axis);
            const std::int64_t index = render_index >= 0 ? render_index : v.geom.dims[static_cast<int>(axis)] / 2;
            write_pgm(render_overlay(v, m, axis, index), render_out);
        } else if (*synth) {
            write_synthetic(make_synthetic(synth_cfg), synth_out);
        } else if (*bench) {
            const RunConfig cfg = bench_cfg.empty() ? synthetic_run_config() : load_config(bench_cfg);
            SyntheticConfig data;
            data.seed = cfg.seed();
            run_synthetic_benchmark(cfg, data, bench_out, &std::cerr);
            std::cout << read_text(fs::path(bench_out) / "run" / "report.txt");
        }
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const MissingInputs& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDomainError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDomainError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDomainError;
    }
    return 0;
}
