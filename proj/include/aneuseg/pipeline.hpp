#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "aneuseg/config.hpp"
#include "aneuseg/metrics.hpp"
#include "aneuseg/synthetic.hpp"
#include "aneuseg/trainer.hpp"

namespace aneuseg {

namespace fs = std::filesystem;

struct CaseFiles {
    std::string id;
    fs::path image;
    fs::path label;  // empty when no label directory was given
};

/// NIfTI files of `images` (and `labels`, matched by file stem), sorted by id.
/// Throws Error listing ids that lack a partner.
std::vector<CaseFiles> list_cases(const fs::path& images, const fs::path& labels = {});

/// Reads each pair, resamples the image (configured order) and the mask
/// (nearest), then z-scores the image. Runs on the worker pool.
std::vector<Case> load_training_cases(const std::vector<CaseFiles>& files, const PreprocessConfig& cfg);

/// Writes images/<id>.nii.gz and labels/<id>.nii.gz under `dir`.
void write_synthetic(const std::vector<Case>& cases, const fs::path& dir);

/// Trains the listed folds (all when empty) in parallel. Writes
/// run_dir/config.json, run_dir/split.json and, per fold,
/// fold_<k>/{checkpoint.ansg, epochs.jsonl, manifest.json}.
void train_run(const RunConfig& cfg, const std::vector<Case>& data, const FoldSplit& split, const fs::path& run_dir,
               std::vector<int> folds = {}, std::ostream* progress = nullptr);

fs::path checkpoint_path(const fs::path& run_dir, int fold);

/// Predicts every case with the models that never saw it during training
/// (the checkpoint of its own fold) and writes
/// run_dir/predictions/<id>.nii.gz.
void crossval_predict(const fs::path& run_dir, const std::vector<CaseFiles>& files, const InferConfig& infer);

/// Matches predictions to references by stem, writes metrics.csv and
/// cohort.json into out_dir, and returns the per-case rows in id order.
std::vector<CaseMetrics> evaluate_dirs(const fs::path& pred_dir, const fs::path& ref_dir, const fs::path& out_dir,
                                       double hd_percentile);

/// The whole benchmark: synthetic data -> split -> train -> held-out
/// prediction -> evaluate -> report, all under `root`.
std::vector<CaseMetrics> run_synthetic_benchmark(const RunConfig& cfg, const SyntheticConfig& data_cfg,
                                                 const fs::path& root, std::ostream* progress = nullptr);

}  // namespace aneuseg
