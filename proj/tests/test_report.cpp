#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "aneuseg/config.hpp"
#include "aneuseg/files.hpp"
#include "aneuseg/report.hpp"

using namespace aneuseg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

CaseMetrics row(const std::string& id, double j, double d, double p, double r)
{
    CaseMetrics c;
    c.case_id = id;
    c.jaccard = j;
    c.dice = d;
    c.precision = p;
    c.recall = r;
    return c;
}

fs::path fresh_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "aneuseg_test_report" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::string> lines(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);)
        out.push_back(l);
    return out;
}

}  // namespace

TEST_CASE("equal folds reproduce the reference cross-validation average")
{
    const double fold_rows[5][4] = {{0.7901, 0.8737, 0.8970, 0.8742},
                                    {0.8335, 0.9034, 0.9046, 0.9173},
                                    {0.7966, 0.8805, 0.8611, 0.9163},
                                    {0.7718, 0.8470, 0.8661, 0.8904},
                                    {0.8638, 0.9256, 0.9384, 0.9197}};
    std::vector<CaseMetrics> cases;
    std::map<std::string, int> fold_of;
    for (int f = 0; f < 5; ++f)
        for (int i = 0; i < 22; ++i) {
            // symmetric spread around the fold mean
            const double s = (i % 2 ? 1.0 : -1.0) * 0.01 * (i / 2 % 3);
            const std::string id = "c" + std::to_string(f) + "_" + std::to_string(i);
            cases.push_back(row(id, fold_rows[f][0] + s, fold_rows[f][1] - s, fold_rows[f][2] + s, fold_rows[f][3]));
            fold_of[id] = f;
        }
    const FoldTable t = aggregate_table(cases, fold_of);
    REQUIRE(t.rows.size() == 6);
    for (int f = 0; f < 5; ++f) {
        CHECK(t.rows[f].fold == std::to_string(f));
        CHECK(t.rows[f].cases == 22);
        CHECK(t.rows[f].jaccard == doctest::Approx(fold_rows[f][0]).epsilon(1e-12));
    }
    CHECK(t.avg().fold == "AVG");
    CHECK(std::abs(t.avg().jaccard - 0.8112) <= 0.001);
    CHECK(std::abs(t.avg().dice - 0.8861) <= 0.001);
    CHECK(std::abs(t.avg().precision - 0.8934) <= 0.001);
    CHECK(std::abs(t.avg().recall - 0.9036) <= 0.001);
    CHECK(std::abs(t.avg().jaccard - 0.8112) <= 0.0005);
}

TEST_CASE("the average is case weighted")
{
    const std::vector<CaseMetrics> cases{row("a", 1, 1, 1, 1), row("b", 0, 0, 0, 0), row("c", 0, 0, 0, 0),
                                         row("d", 0, 0, 0, 0)};
    const FoldTable t = aggregate_table(cases, {{"a", 0}, {"b", 1}, {"c", 1}, {"d", 1}});
    CHECK(t.rows[0].jaccard == 1.0);
    CHECK(t.rows[1].jaccard == 0.0);
    CHECK(t.avg().jaccard == 0.25);
    CHECK(t.avg().cases == 4);

    const FoldTable one = aggregate_table({row("x", 0.3, 0.4, 0.5, 0.6)}, {{"x", 0}});
    REQUIRE(one.rows.size() == 2);
    CHECK(one.rows[0].jaccard == one.avg().jaccard);
    CHECK(one.rows[0].recall == 0.6);
    CHECK(one.avg().precision == 0.5);

    CHECK_THROWS_AS(aggregate_table(cases, {{"a", 0}}), Error);
}

TEST_CASE("aggregation ignores case order")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u;
    std::vector<CaseMetrics> cases;
    std::map<std::string, int> fold_of;
    for (int i = 0; i < 37; ++i) {
        const std::string id = "k" + std::to_string(i);
        cases.push_back(row(id, u(rng), u(rng), u(rng), u(rng)));
        fold_of[id] = i % 5;
    }
    const std::string reference = table_csv(aggregate_table(cases, fold_of), -1);
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(cases.begin(), cases.end(), rng);
        CHECK(table_csv(aggregate_table(cases, fold_of), -1) == reference);
    }
}

TEST_CASE("rendered table is the rounded sidecar")
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u;
    std::vector<CaseMetrics> cases;
    std::map<std::string, int> fold_of;
    for (int i = 0; i < 23; ++i) {
        const std::string id = "r" + std::to_string(i);
        cases.push_back(row(id, u(rng), u(rng), u(rng), u(rng)));
        fold_of[id] = i % 4;
    }
    const FoldTable t = aggregate_table(cases, fold_of);
    const auto shown = lines(table_csv(t));
    const auto full = lines(table_csv(t, -1));
    REQUIRE(shown.size() == full.size());
    CHECK(shown[0] == "Fold,Jaccard,Dice,Precision,Recall");
    CHECK(full[0] == shown[0]);
    for (std::size_t i = 1; i < shown.size(); ++i) {
        std::istringstream a(shown[i]), b(full[i]);
        std::string fa, fb;
        std::getline(a, fa, ',');
        std::getline(b, fb, ',');
        CHECK(fa == fb);
        while (std::getline(a, fa, ',') && std::getline(b, fb, ',')) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.4f", std::stod(fb));
            CHECK(fa == buf);
        }
    }
}

TEST_CASE("per-case metrics csv round trip")
{
    CaseMetrics a = row("a", 1.0 / 3.0, 0.5, 0.1 + 0.2, 1e-17);
    a.hausdorff_mm = 4.97;
    a.mean_distance_mm = 3.54;
    a.vol_pred_mm3 = 75.8;
    a.vol_ref_mm3 = 0.0;
    const CaseMetrics b = row("b", 0, 0, 1, 0);
    const std::string text = metrics_csv({a, b});
    const auto ls = lines(text);
    REQUIRE(ls.size() == 3);
    CHECK(ls[0] == "case_id,jaccard,dice,precision,recall,hausdorff_mm,mean_distance_mm,vol_pred_mm3,vol_ref_mm3");
    CHECK(ls[2].find("undefined,undefined") != std::string::npos);
    CHECK(text.find('\r') == std::string::npos);
    const auto back = parse_metrics_csv(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].jaccard == a.jaccard);
    CHECK(back[0].precision == a.precision);
    CHECK(back[0].recall == a.recall);
    CHECK(*back[0].hausdorff_mm == 4.97);
    CHECK(back[0].vol_pred_mm3 == 75.8);
    CHECK_FALSE(back[1].hausdorff_mm.has_value());
    CHECK(metrics_csv(back) == text);
    CHECK_THROWS_AS(parse_metrics_csv("nonsense\n"), Error);
    CHECK_THROWS_AS(parse_metrics_csv(ls[0] + "\nx,1,2\n"), Error);
}

TEST_CASE("report of a four-case run")
{
    const fs::path dir = fresh_dir("four");
    std::vector<CaseMetrics> cases{row("a", 0.5, 2.0 / 3.0, 0.6, 0.8), row("b", 1, 1, 1, 1),
                                   row("c", 0.25, 0.4, 0.5, 0.5), row("d", 0, 0, 1, 0)};
    const double vp[4] = {10, 20, 30, 0}, vr[4] = {12, 20, 25, 8};
    for (int i = 0; i < 4; ++i) {
        cases[i].vol_pred_mm3 = vp[i];
        cases[i].vol_ref_mm3 = vr[i];
        if (i < 3) {
            cases[i].hausdorff_mm = 1.0 + i;
            cases[i].mean_distance_mm = 0.5 + i;
        }
    }
    write_text(dir / "metrics.csv", metrics_csv(cases));
    write_json(dir / "cohort.json", cohort_json(volume_stats(cases), 100.0));
    FoldSplit split;
    split.k = 2;
    split.folds = {{"a", "b"}, {"c", "d"}};
    write_json(dir / "split.json", split_to_json(split));

    write_report(dir);
    const auto table = lines(read_text(dir / "report.csv"));
    REQUIRE(table.size() == 4);
    CHECK(table[1] == "0,0.7500,0.8333,0.8000,0.9000");
    CHECK(table[2] == "1,0.1250,0.2000,0.7500,0.2500");
    CHECK(table[3] == "AVG,0.4375,0.5167,0.7750,0.5750");

    const auto cohort = lines(read_text(dir / "report_cohort.csv"));
    CHECK(cohort[0] == "Metric,Value");
    CHECK(cohort[1] == "Jaccard,0.4375");
    CHECK(cohort[2] == "Volume Bias,-1.2500");
    CHECK(cohort[3] == "Mean Distance,1.5000");
    CHECK(cohort[5] == "Hausdorff Distance,2.0000");
    const std::string text = read_text(dir / "report.txt");
    CHECK(text.find("AVG") != std::string::npos);
    CHECK(text.find("Volume Pearson R") != std::string::npos);
    CHECK(fs::exists(dir / "report_full.csv"));
}

TEST_CASE("report of perfect predictions with constant volumes")
{
    const fs::path dir = fresh_dir("perfect");
    std::vector<CaseMetrics> cases{row("p", 1, 1, 1, 1), row("q", 1, 1, 1, 1)};
    for (auto& c : cases) {
        c.hausdorff_mm = 0.0;
        c.mean_distance_mm = 0.0;
        c.vol_pred_mm3 = c.vol_ref_mm3 = 6.0;
    }
    write_text(dir / "metrics.csv", metrics_csv(cases));
    write_json(dir / "cohort.json", cohort_json(volume_stats(cases), 100.0));
    FoldSplit split;
    split.k = 2;
    split.folds = {{"p"}, {"q"}};
    write_json(dir / "split.json", split_to_json(split));
    write_report(dir);
    const std::string text = read_text(dir / "report.txt");
    CHECK(text.find("Jaccard             1.0000") != std::string::npos);
    CHECK(text.find("Volume Bias         0.0000") != std::string::npos);
    CHECK(text.find("Hausdorff Distance  0.0000") != std::string::npos);
    CHECK(text.find("undefined (constant volumes)") != std::string::npos);
    const json cohort = read_json(dir / "cohort.json");
    CHECK(cohort.at("pearson_r").is_null());
}

TEST_CASE("report lists every missing input")
{
    const fs::path dir = fresh_dir("empty");
    try {
        write_report(dir);
        FAIL("expected MissingInputs");
    } catch (const MissingInputs& e) {
        CHECK(e.missing.size() == 3);
        CHECK(std::string(e.what()).find("metrics.csv") != std::string::npos);
        CHECK(std::string(e.what()).find("split.json") != std::string::npos);
    }
}

TEST_CASE("run configuration documents")
{
    const RunConfig base = synthetic_run_config();
    CHECK(base.train.net.num_resolutions == 3);
    CHECK(base.train.net.base_channels == 4);
    CHECK(base.train.patch_size == Index3(32, 32, 32));
    CHECK(base.train.batch_size == 2);
    CHECK(base.train.epochs == 50);
    CHECK(base.train.iterations_per_epoch == 25);

    const json doc = to_json(base);
    for (const char* key : {"seed", "preprocess", "patch", "net", "optimizer", "augment", "train", "infer", "metrics"})
        CHECK(doc.contains(key));
    CHECK(config_from_json(doc) == base);
    CHECK(to_json(config_from_json(json::parse(doc.dump()))) == doc);

    RunConfig changed = base;
    changed.train.seed = 99;
    changed.train.optimizer.lr0 = 0.1 + 0.2;
    changed.train.augment.angle_deg = {-12.5, 7.0};
    changed.preprocess.target_spacing = Vec3(0.5, 0.6, 0.7);
    CHECK(config_from_json(json::parse(to_json(changed).dump())) == changed);
    CHECK_FALSE(changed == base);

    const RunConfig defaults = config_from_json(json::object());
    CHECK(defaults == RunConfig());

    json unknown = doc;
    unknown["net"]["width"] = 3;
    CHECK_THROWS_AS(config_from_json(unknown), Error);
    json top = doc;
    top["extra"] = true;
    CHECK_THROWS_AS(config_from_json(top), Error);
    json wrong = doc;
    wrong["train"]["epochs"] = "many";
    CHECK_THROWS_AS(config_from_json(wrong), Error);
    json invalid = doc;
    invalid["patch"]["size"] = {30, 32, 32};
    CHECK_THROWS_AS(config_from_json(invalid), Error);

    const fs::path dir = fresh_dir("config");
    write_json(dir / "c.json", to_json(changed));
    CHECK(load_config(dir / "c.json") == changed);
    write_text(dir / "broken.json", "{ not json");
    CHECK_THROWS_AS(load_config(dir / "broken.json"), Error);
}

TEST_CASE("shipped synthetic config matches the built-in one")
{
    CHECK(load_config(fs::path(ANEUSEG_CONFIG_DIR) / "synthetic.json") == synthetic_run_config());
}

TEST_CASE("file helpers")
{
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -0.0, 5e-324})
        CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
    CHECK(format_double(0.5) == "0.5");

    FoldSplit s;
    s.k = 3;
    s.seed = 12345678901234567890ull;
    s.folds = {{"a", "d"}, {"b"}, {"c"}};
    const FoldSplit back = split_from_json(json::parse(split_to_json(s).dump()));
    CHECK(back.k == 3);
    CHECK(back.seed == s.seed);
    CHECK(back.folds == s.folds);

    CHECK(case_stem("dir/case_001.nii.gz") == "case_001");
    CHECK(case_stem("x.nii") == "x");

    const fs::path dir = fresh_dir("files");
    write_text(dir / "nested" / "t.txt", "abc\n");
    CHECK(read_text(dir / "nested" / "t.txt") == "abc\n");
    CHECK_THROWS_AS(read_text(dir / "none.txt"), Error);
}
