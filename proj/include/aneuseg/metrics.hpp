#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aneuseg/volume.hpp"

namespace aneuseg {

/// Voxel-count overlap scores.
///
/// J = TP / (TP + FP + FN), D = 2TP / (2TP + FP + FN),
/// precision = TP / (TP + FP), recall = TP / (TP + FN).
/// A ratio whose denominator is zero is 1: both masks empty scores 1
/// everywhere, an empty prediction has precision 1, an empty reference has
/// recall 1.
struct OverlapMetrics {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    double jaccard = 0.0;
    double dice = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

OverlapMetrics overlap_metrics(const LabelMask& pred, const LabelMask& ref);

struct SurfaceDistances {
    double hausdorff_mm = 0.0;
    double mean_distance_mm = 0.0;
};

/// Centres (mm, relative to the grid origin) of foreground voxels that have at
/// least one background 6-neighbour; outside the grid counts as background.
std::vector<Vec3> surface_points(const LabelMask& mask);

/// Symmetric surface distances between two nonempty masks on the same grid.
/// Hausdorff is the larger of the two directed `hd_percentile` percentiles
/// (100 = classic maximum); the mean is the average over the union of both
/// directed distance lists. Throws Error if either mask is empty.
SurfaceDistances surface_distances(const LabelMask& pred, const LabelMask& ref, double hd_percentile = 100.0);

struct CaseMetrics {
    std::string case_id;
    double jaccard = 0.0;
    double dice = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::optional<double> hausdorff_mm;
    std::optional<double> mean_distance_mm;
    double vol_pred_mm3 = 0.0;
    double vol_ref_mm3 = 0.0;
};

CaseMetrics evaluate_case(const std::string& case_id, const LabelMask& pred, const LabelMask& ref,
                          double hd_percentile = 100.0);

struct CohortMetrics {
    std::size_t cases = 0;
    double volume_bias_mm3 = 0.0;
    /// Empty when undefined; `pearson_note` then says why.
    std::optional<double> volume_pearson_r;
    std::string pearson_note;
    double mean_jaccard = 0.0;
    double mean_dice = 0.0;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    /// Means over cases where the distance is defined.
    std::optional<double> mean_hausdorff_mm;
    std::optional<double> mean_mean_distance_mm;
    std::size_t distance_cases = 0;
};

/// Sample Pearson correlation. Throws Error for fewer than 2 values or a
/// constant sequence.
double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

/// Cohort aggregation in the given case order. Pearson failures are recorded
/// in the result, not thrown.
CohortMetrics volume_stats(const std::vector<CaseMetrics>& cases);

}  // namespace aneuseg
