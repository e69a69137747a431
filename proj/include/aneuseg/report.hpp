#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "aneuseg/metrics.hpp"

namespace aneuseg {

struct TableRow {
    std::string fold;  // fold index, or "AVG"
    std::size_t cases = 0;
    double jaccard = 0.0;
    double dice = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

/// Per-fold rows in fold order followed by the AVG row.
struct FoldTable {
    std::vector<TableRow> rows;
    const TableRow& avg() const { return rows.back(); }
};

/// Fold rows are unweighted means over each fold's cases; AVG is the mean over
/// all cases (case-weighted). Cases are summed in case-id order, so the result
/// does not depend on the input order. Throws Error for a case without a fold.
FoldTable aggregate_table(std::vector<CaseMetrics> cases, const std::map<std::string, int>& fold_of);

/// Columns Fold, Jaccard, Dice, Precision, Recall. `decimals` < 0 writes full
/// (round-trip) precision, used for the sidecar.
std::string table_csv(const FoldTable& table, int decimals = 4);

/// Per-case CSV: case_id, jaccard, dice, precision, recall, hausdorff_mm,
/// mean_distance_mm, vol_pred_mm3, vol_ref_mm3. Undefined distances are
/// written as "undefined". Values use round-trip precision.
std::string metrics_csv(const std::vector<CaseMetrics>& cases);
std::vector<CaseMetrics> parse_metrics_csv(const std::string& text);

nlohmann::json cohort_json(const CohortMetrics& cohort, double hd_percentile);

/// Fold table plus cohort block (Jaccard, Volume Bias, Mean Distance, Volume
/// Pearson R, Hausdorff) as plain text.
std::string report_text(const FoldTable& table, const nlohmann::json& cohort);

/// Thrown by write_report when inputs are absent; `missing` lists every path.
class MissingInputs : public Error {
public:
    explicit MissingInputs(std::vector<std::filesystem::path> paths);
    std::vector<std::filesystem::path> missing;
};

/// Reads metrics.csv, cohort.json and split.json from `run_dir` and writes
/// report.txt, report.csv (fold table), report_cohort.csv and
/// report_full.csv (fold table at full precision) next to them.
FoldTable write_report(const std::filesystem::path& run_dir);

}  // namespace aneuseg
