#include "aneuseg/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <mutex>
#include <set>

#include "aneuseg/checkpoint.hpp"
#include "aneuseg/files.hpp"
#include "aneuseg/inference.hpp"
#include "aneuseg/nifti.hpp"
#include "aneuseg/report.hpp"
#include "aneuseg/workers.hpp"

namespace aneuseg {

using nlohmann::json;

int worker_count()
{
    if (const char* env = std::getenv("ANEUSEG_WORKERS")) {
        const int n = std::atoi(env);
        if (n >= 1)
            return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

std::map<std::string, fs::path> nifti_files(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw Error("not a directory: " + dir.string());
    std::map<std::string, fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (!entry.is_regular_file() || name.size() < 4)
            continue;
        if (name.ends_with(".nii") || name.ends_with(".nii.gz")) {
            const std::string id = case_stem(entry.path());
            if (!out.emplace(id, entry.path()).second)
                throw Error("duplicate case id " + id + " in " + dir.string());
        }
    }
    return out;
}

std::string fold_dir_name(int fold)
{
    return "fold_" + std::to_string(fold);
}

}  // namespace

std::vector<CaseFiles> list_cases(const fs::path& images, const fs::path& labels)
{
    const auto imgs = nifti_files(images);
    std::vector<CaseFiles> out;
    if (labels.empty()) {
        for (const auto& [id, p] : imgs)
            out.push_back({id, p, {}});
        return out;
    }
    const auto labs = nifti_files(labels);
    std::string unmatched;
    for (const auto& [id, p] : imgs) {
        const auto it = labs.find(id);
        if (it == labs.end())
            unmatched += " " + id;
        else
            out.push_back({id, p, it->second});
    }
    for (const auto& [id, p] : labs)
        if (!imgs.count(id))
            unmatched += " " + id;
    if (!unmatched.empty())
        throw Error("cases without an image/label partner:" + unmatched);
    return out;
}

std::vector<Case> load_training_cases(const std::vector<CaseFiles>& files, const PreprocessConfig& cfg)
{
    cfg.validate();
    std::vector<std::optional<Case>> slots(files.size());
    parallel_for(files.size(), [&](std::size_t i) {
        const CaseFiles& f = files[i];
        if (f.label.empty())
            throw Error("case " + f.id + " has no label");
        const Volume3 image = nifti::read_volume(f.image);
        const LabelMask label = nifti::read_mask(f.label);
        require_same_grid(image.geom, label.geom, "case " + f.id);
        slots[i] = Case{f.id, znormalize(resample_image(image, cfg)), resample_mask(label, cfg)};
    });
    std::vector<Case> out;
    for (auto& s : slots)
        out.push_back(std::move(*s));
    return out;
}

void write_synthetic(const std::vector<Case>& cases, const fs::path& dir)
{
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "labels");
    for (const Case& c : cases) {
        nifti::write(c.image, dir / "images" / (c.id + ".nii.gz"));
        nifti::write(c.label, dir / "labels" / (c.id + ".nii.gz"));
    }
}

fs::path checkpoint_path(const fs::path& run_dir, int fold)
{
    return run_dir / fold_dir_name(fold) / "checkpoint.ansg";
}

void train_run(const RunConfig& cfg, const std::vector<Case>& data, const FoldSplit& split, const fs::path& run_dir,
               std::vector<int> folds, std::ostream* progress)
{
    cfg.validate();
    if (split.k != cfg.folds)
        throw Error("train: split has " + std::to_string(split.k) + " folds, config asks for " +
                    std::to_string(cfg.folds));
    if (folds.empty())
        for (int f = 0; f < split.k; ++f)
            folds.push_back(f);
    for (int f : folds)
        if (f < 0 || f >= split.k)
            throw Error("train: fold " + std::to_string(f) + " out of range");

    const json resolved = to_json(cfg);
    write_json(run_dir / "config.json", resolved);
    write_json(run_dir / "split.json", split_to_json(split));

    std::mutex out_mu;
    parallel_for(folds.size(), [&](std::size_t i) {
        const int fold = folds[i];
        const fs::path dir = run_dir / fold_dir_name(fold);
        std::string log;
        const TrainResult result = train_fold(data, split, fold, cfg.train, [&](const EpochLog& e) {
            json line = {{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}};
            line["val_dice"] = e.val_dice ? json(*e.val_dice) : json(nullptr);
            log += line.dump() + "\n";
            if (progress) {
                std::lock_guard<std::mutex> lock(out_mu);
                *progress << "fold " << fold << " epoch " << e.epoch << " loss " << e.train_loss;
                if (e.val_dice)
                    *progress << " val_dice " << *e.val_dice;
                *progress << "\n" << std::flush;
            }
        });
        write_text(dir / "epochs.jsonl", log);

        Checkpoint ck;
        ck.net = cfg.train.net;
        ck.patch_size = cfg.train.patch_size;
        ck.preprocess = cfg.preprocess;
        ck.seed = cfg.seed();
        ck.epoch = cfg.train.epochs;
        ck.fold = fold;
        ck.params = result.params;
        fs::create_directories(dir);
        save_checkpoint(ck, checkpoint_path(run_dir, fold));

        std::vector<std::string> train_ids;
        for (int f = 0; f < split.k; ++f)
            if (f != fold)
                train_ids.insert(train_ids.end(), split.folds[f].begin(), split.folds[f].end());
        std::sort(train_ids.begin(), train_ids.end());
        json manifest;
        manifest["config"] = resolved;
        manifest["fold"] = fold;
        manifest["train_cases"] = train_ids;
        manifest["validation_cases"] = split.folds[fold];
        manifest["preprocessing"] = "resample to target spacing, then z-score over the whole volume";
        manifest["random_streams"] = {{"init", "derive_seed(seed, \"net\", fold)"},
                                      {"sampling", "derive_seed(seed, \"train.sample\", fold)"},
                                      {"augment", "derive_seed(seed, \"augment\", fold << 40 ^ patch_index)"},
                                      {"split", "derive_seed(seed, \"split\", 0)"}};
        manifest["steps"] = result.steps;
        manifest["first_iteration_loss"] = result.first_iteration_loss;
        manifest["final_train_loss"] = result.log.back().train_loss;
        manifest["checkpoint"] = checkpoint_path(run_dir, fold).filename().string();
        write_json(dir / "manifest.json", manifest);
    });
}

void crossval_predict(const fs::path& run_dir, const std::vector<CaseFiles>& files, const InferConfig& infer)
{
    const FoldSplit split = split_from_json(read_json(run_dir / "split.json"));
    std::vector<Checkpoint> models;
    for (int f = 0; f < split.k; ++f)
        models.push_back(load_checkpoint(checkpoint_path(run_dir, f)));
    fs::create_directories(run_dir / "predictions");
    parallel_for(files.size(), [&](std::size_t i) {
        const int fold = split.fold_of(files[i].id);
        if (fold < 0)
            throw Error("case " + files[i].id + " is not in the split");
        const Volume3 image = nifti::read_volume(files[i].image);
        const Prediction p = ensemble_predict(std::vector<Checkpoint>{models[fold]}, image, infer);
        nifti::write(p.mask, run_dir / "predictions" / (files[i].id + ".nii.gz"));
    });
}

std::vector<CaseMetrics> evaluate_dirs(const fs::path& pred_dir, const fs::path& ref_dir, const fs::path& out_dir,
                                       double hd_percentile)
{
    const std::vector<CaseFiles> pairs = list_cases(pred_dir, ref_dir);
    if (pairs.empty())
        throw Error("evaluate: no cases in " + pred_dir.string());
    std::vector<CaseMetrics> rows(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) {
        rows[i] = evaluate_case(pairs[i].id, nifti::read_mask(pairs[i].image), nifti::read_mask(pairs[i].label),
                                hd_percentile);
    });
    write_text(out_dir / "metrics.csv", metrics_csv(rows));
    write_json(out_dir / "cohort.json", cohort_json(volume_stats(rows), hd_percentile));
    return rows;
}

std::vector<CaseMetrics> run_synthetic_benchmark(const RunConfig& cfg, const SyntheticConfig& data_cfg,
                                                 const fs::path& root, std::ostream* progress)
{
    write_synthetic(make_synthetic(data_cfg), root / "data");
    const std::vector<CaseFiles> files = list_cases(root / "data" / "images", root / "data" / "labels");
    std::vector<std::string> ids;
    for (const auto& f : files)
        ids.push_back(f.id);
    const FoldSplit split = split_folds(ids, cfg.folds, cfg.seed());
    const fs::path run = root / "run";
    train_run(cfg, load_training_cases(files, cfg.preprocess), split, run, {}, progress);
    crossval_predict(run, files, cfg.train.infer);
    const auto rows = evaluate_dirs(run / "predictions", root / "data" / "labels", run, cfg.metrics.hd_percentile);
    write_report(run);
    return rows;
}

}  // namespace aneuseg
