#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "aneuseg/preprocess.hpp"
#include "aneuseg/trainer.hpp"

namespace aneuseg {

struct MetricsConfig {
    double hd_percentile = 100.0;
};

struct PathsConfig {
    std::string images;  // directory of image volumes
    std::string labels;  // directory of reference masks, matched by file stem
    std::string run_dir;
};

/// The whole pipeline configuration. JSON sections: preprocess, patch, net,
/// optimizer, augment, train, infer, metrics, paths, plus the top-level seed.
/// Missing keys take their defaults; unknown keys are errors.
struct RunConfig {
    PreprocessConfig preprocess;
    TrainRunConfig train;  // patch, net, optimizer, augment, infer and seed live here
    int folds = 5;
    MetricsConfig metrics;
    PathsConfig paths;

    std::uint64_t seed() const { return train.seed; }
    void validate() const;
};

/// Desk-scale settings used by the synthetic benchmark: R=3, C0=4, 32^3
/// patches, 50 epochs x 25 iterations.
RunConfig synthetic_run_config();

/// Fully resolved document, defaults included.
nlohmann::json to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace aneuseg
