#include "aneuseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace aneuseg {

namespace {

double ratio_or_one(double num, double den)
{
    return den == 0.0 ? 1.0 : num / den;
}

// Linear-interpolated percentile of unsorted values (q in [0, 100]).
double percentile(std::vector<double> v, double q)
{
    std::sort(v.begin(), v.end());
    if (q >= 100.0)
        return v.back();
    const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<double> directed(const std::vector<Vec3>& from, const std::vector<Vec3>& to)
{
    std::vector<double> out;
    out.reserve(from.size());
    for (const Vec3& a : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec3& b : to)
            best = std::min(best, (a - b).squaredNorm());
        out.push_back(std::sqrt(best));
    }
    return out;
}

}  // namespace

OverlapMetrics overlap_metrics(const LabelMask& pred, const LabelMask& ref)
{
    require_same_grid(pred.geom, ref.geom, "overlap_metrics");
    OverlapMetrics m;
    for (Eigen::Index i = 0; i < pred.voxels.size(); ++i) {
        const bool p = pred.voxels[i] != 0;
        const bool r = ref.voxels[i] != 0;
        m.tp += p && r;
        m.fp += p && !r;
        m.fn += !p && r;
    }
    const auto tp = static_cast<double>(m.tp);
    const auto fp = static_cast<double>(m.fp);
    const auto fn = static_cast<double>(m.fn);
    m.jaccard = ratio_or_one(tp, tp + fp + fn);
    m.dice = ratio_or_one(2.0 * tp, 2.0 * tp + fp + fn);
    m.precision = ratio_or_one(tp, tp + fp);
    m.recall = ratio_or_one(tp, tp + fn);
    return m;
}

std::vector<Vec3> surface_points(const LabelMask& mask)
{
    const Index3& n = mask.geom.dims;
    auto fg = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
        if (x < 0 || y < 0 || z < 0 || x >= n.x() || y >= n.y() || z >= n.z())
            return false;
        return mask.at(x, y, z) != 0;
    };
    std::vector<Vec3> pts;
    for (std::int64_t z = 0; z < n.z(); ++z)
        for (std::int64_t y = 0; y < n.y(); ++y)
            for (std::int64_t x = 0; x < n.x(); ++x) {
                if (!fg(x, y, z))
                    continue;
                if (fg(x - 1, y, z) && fg(x + 1, y, z) && fg(x, y - 1, z) && fg(x, y + 1, z) && fg(x, y, z - 1) &&
                    fg(x, y, z + 1))
                    continue;
                pts.emplace_back(static_cast<double>(x) * mask.geom.spacing.x(),
                                 static_cast<double>(y) * mask.geom.spacing.y(),
                                 static_cast<double>(z) * mask.geom.spacing.z());
            }
    return pts;
}

SurfaceDistances surface_distances(const LabelMask& pred, const LabelMask& ref, double hd_percentile)
{
    require_same_grid(pred.geom, ref.geom, "surface_distances");
    if (!(hd_percentile > 0.0 && hd_percentile <= 100.0))
        throw Error("surface_distances: hd_percentile must be in (0, 100]");
    const std::vector<Vec3> sp = surface_points(pred);
    const std::vector<Vec3> sr = surface_points(ref);
    if (sp.empty() || sr.empty())
        throw Error("surface_distances: undefined for an empty mask");
    const std::vector<double> pr = directed(sp, sr);
    const std::vector<double> rp = directed(sr, sp);
    SurfaceDistances out;
    out.hausdorff_mm = std::max(percentile(pr, hd_percentile), percentile(rp, hd_percentile));
    double total = 0.0;
    for (double d : pr)
        total += d;
    for (double d : rp)
        total += d;
    out.mean_distance_mm = total / static_cast<double>(pr.size() + rp.size());
    return out;
}

CaseMetrics evaluate_case(const std::string& case_id, const LabelMask& pred, const LabelMask& ref, double hd_percentile)
{
    const OverlapMetrics o = overlap_metrics(pred, ref);
    CaseMetrics m;
    m.case_id = case_id;
    m.jaccard = o.jaccard;
    m.dice = o.dice;
    m.precision = o.precision;
    m.recall = o.recall;
    const double voxel = ref.geom.voxel_volume();
    m.vol_pred_mm3 = static_cast<double>(pred.count()) * voxel;
    m.vol_ref_mm3 = static_cast<double>(ref.count()) * voxel;
    if (pred.count() > 0 && ref.count() > 0) {
        const SurfaceDistances d = surface_distances(pred, ref, hd_percentile);
        m.hausdorff_mm = d.hausdorff_mm;
        m.mean_distance_mm = d.mean_distance_mm;
    }
    return m;
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2)
        throw Error("pearson: need two sequences of equal length >= 2");
    const auto n = static_cast<Eigen::Index>(x.size());
    const Eigen::Map<const Eigen::ArrayXd> a(x.data(), n);
    const Eigen::Map<const Eigen::ArrayXd> b(y.data(), n);
    const Eigen::ArrayXd da = a - a.mean();
    const Eigen::ArrayXd db = b - b.mean();
    const double saa = da.square().sum();
    const double sbb = db.square().sum();
    if (saa == 0.0 || sbb == 0.0)
        throw Error("pearson: undefined (constant volumes)");
    return (da * db).sum() / std::sqrt(saa * sbb);
}

CohortMetrics volume_stats(const std::vector<CaseMetrics>& cases)
{
    CohortMetrics c;
    c.cases = cases.size();
    if (cases.empty())
        throw Error("volume_stats: no cases");
    std::vector<double> pred;
    std::vector<double> ref;
    double hd = 0.0;
    double md = 0.0;
    for (const CaseMetrics& m : cases) {
        pred.push_back(m.vol_pred_mm3);
        ref.push_back(m.vol_ref_mm3);
        c.volume_bias_mm3 += m.vol_pred_mm3 - m.vol_ref_mm3;
        c.mean_jaccard += m.jaccard;
        c.mean_dice += m.dice;
        c.mean_precision += m.precision;
        c.mean_recall += m.recall;
        if (m.hausdorff_mm && m.mean_distance_mm) {
            hd += *m.hausdorff_mm;
            md += *m.mean_distance_mm;
            ++c.distance_cases;
        }
    }
    const auto n = static_cast<double>(cases.size());
    c.volume_bias_mm3 /= n;
    c.mean_jaccard /= n;
    c.mean_dice /= n;
    c.mean_precision /= n;
    c.mean_recall /= n;
    if (c.distance_cases > 0) {
        c.mean_hausdorff_mm = hd / static_cast<double>(c.distance_cases);
        c.mean_mean_distance_mm = md / static_cast<double>(c.distance_cases);
    }
    try {
        c.volume_pearson_r = pearson_r(pred, ref);
    } catch (const Error& e) {
        c.pearson_note = cases.size() < 2 ? "undefined (fewer than 2 cases)" : "undefined (constant volumes)";
    }
    return c;
}

}  // namespace aneuseg
