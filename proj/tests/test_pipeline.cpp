#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "aneuseg/files.hpp"
#include "aneuseg/nifti.hpp"
#include "aneuseg/pipeline.hpp"

using namespace aneuseg;
using nlohmann::json;

namespace {

RunConfig tiny_run()
{
    RunConfig cfg = synthetic_run_config();
    cfg.folds = 2;
    cfg.train.epochs = 2;
    cfg.train.iterations_per_epoch = 2;
    cfg.train.val_every = 1;
    cfg.train.seed = 17;
    return cfg;
}

SyntheticConfig tiny_data()
{
    SyntheticConfig d;
    d.cases = 4;
    d.dims = Index3(32, 32, 32);
    d.min_radius = 3.0;
    d.max_radius = 6.0;
    d.seed = 17;
    return d;
}

std::string bytes(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("synthetic generator")
{
    SyntheticConfig d = tiny_data();
    d.cases = 6;
    const std::vector<Case> a = make_synthetic(d), b = make_synthetic(d);
    REQUIRE(a.size() == 6);
    CHECK(a[0].id == "case_000");
    CHECK(a[5].id == "case_005");
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image.geom.dims == d.dims);
        CHECK(a[i].image.geom.spacing == Vec3::Constant(0.5));
        CHECK(a[i].label.count() > 0);
        CHECK((a[i].image.voxels == b[i].image.voxels).all());
        CHECK((a[i].label.voxels == b[i].label.voxels).all());
        // foreground sits about `contrast` above the unit-noise background
        double fg = 0.0, bg = 0.0;
        for (Eigen::Index v = 0; v < a[i].label.voxels.size(); ++v)
            (a[i].label.voxels[v] ? fg : bg) += a[i].image.voxels[v];
        fg /= static_cast<double>(a[i].label.count());
        bg /= static_cast<double>(a[i].label.voxels.size() - a[i].label.count());
        CHECK(std::abs(fg - bg - 3.0) < 0.3);
    }
    d.dims = Index3(10, 32, 32);
    CHECK_THROWS_AS(make_synthetic(d), Error);
}

TEST_CASE("case listing pairs images and labels by stem")
{
    const fs::path root = fs::temp_directory_path() / "aneuseg_test_pipeline" / "listing";
    fs::remove_all(root);
    SyntheticConfig d = tiny_data();
    d.cases = 3;
    write_synthetic(make_synthetic(d), root);
    const auto files = list_cases(root / "images", root / "labels");
    REQUIRE(files.size() == 3);
    CHECK(files[1].id == "case_001");
    CHECK(files[1].label.filename() == "case_001.nii.gz");
    fs::remove(root / "labels" / "case_002.nii.gz");
    CHECK_THROWS_AS(list_cases(root / "images", root / "labels"), Error);
    CHECK(list_cases(root / "images").size() == 3);
}

TEST_CASE("tiny end-to-end run and manifest replay")
{
    const fs::path root = fs::temp_directory_path() / "aneuseg_test_pipeline" / "tiny";
    fs::remove_all(root);
    const RunConfig cfg = tiny_run();
    const auto rows = run_synthetic_benchmark(cfg, tiny_data(), root);
    CHECK(rows.size() == 4);
    const fs::path run = root / "run";
    for (const char* f : {"config.json", "split.json", "metrics.csv", "cohort.json", "report.txt", "report.csv",
                          "report_cohort.csv", "report_full.csv"})
        CHECK(fs::is_regular_file(run / f));
    for (const auto& r : rows) {
        const LabelMask pred = nifti::read_mask(run / "predictions" / (r.case_id + ".nii.gz"));
        CHECK(pred.geom.dims == Index3(32, 32, 32));
    }
    CHECK(config_from_json(read_json(run / "config.json")) == cfg);

    // the manifest alone reproduces its checkpoint
    const json manifest = read_json(run / "fold_1" / "manifest.json");
    const RunConfig replay_cfg = config_from_json(manifest.at("config"));
    CHECK(replay_cfg == cfg);
    CHECK(manifest.at("steps").get<int>() == 4);
    const auto files = list_cases(root / "data" / "images", root / "data" / "labels");
    const std::vector<Case> data = load_training_cases(files, replay_cfg.preprocess);
    std::vector<std::size_t> train_idx, val_idx;
    const auto train_ids = manifest.at("train_cases").get<std::vector<std::string>>();
    const auto val_ids = manifest.at("validation_cases").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (std::find(train_ids.begin(), train_ids.end(), data[i].id) != train_ids.end())
            train_idx.push_back(i);
        if (std::find(val_ids.begin(), val_ids.end(), data[i].id) != val_ids.end())
            val_idx.push_back(i);
    }
    const TrainResult again = train_cases(data, train_idx, val_idx, replay_cfg.train,
                                          static_cast<std::uint64_t>(manifest.at("fold").get<int>()));
    const Checkpoint saved = load_checkpoint(checkpoint_path(run, 1));
    CHECK(saved.fold == 1);
    for (std::size_t i = 0; i < saved.params.tensors.size(); ++i)
        CHECK((saved.params.tensors[i].array() == again.params.tensors[i].array()).all());

    const std::string log = read_text(run / "fold_1" / "epochs.jsonl");
    CHECK(std::count(log.begin(), log.end(), '\n') == 2);

    // a second run with the same seed is byte-identical
    const fs::path root2 = fs::temp_directory_path() / "aneuseg_test_pipeline" / "tiny2";
    fs::remove_all(root2);
    run_synthetic_benchmark(cfg, tiny_data(), root2);
    for (const fs::path rel : {fs::path("fold_0/checkpoint.ansg"), fs::path("fold_1/checkpoint.ansg"),
                               fs::path("fold_0/manifest.json"), fs::path("metrics.csv"), fs::path("report.csv"),
                               fs::path("predictions/case_002.nii.gz")})
        CHECK(bytes(run / rel) == bytes(root2 / "run" / rel));
}
