#include "aneuseg/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "aneuseg/files.hpp"

namespace aneuseg {

using nlohmann::json;

namespace {

std::string fixed(double v, int decimals)
{
    if (decimals < 0)
        return format_double(v);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

TableRow mean_row(const std::string& name, const std::vector<const CaseMetrics*>& cs)
{
    TableRow r;
    r.fold = name;
    r.cases = cs.size();
    for (const CaseMetrics* c : cs) {
        r.jaccard += c->jaccard;
        r.dice += c->dice;
        r.precision += c->precision;
        r.recall += c->recall;
    }
    const double n = static_cast<double>(cs.size());
    r.jaccard /= n;
    r.dice /= n;
    r.precision /= n;
    r.recall /= n;
    return r;
}

double parse_number(const std::string& field, int line)
{
    double v = 0.0;
    const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || end != field.data() + field.size())
        throw Error("metrics.csv line " + std::to_string(line) + ": bad number '" + field + "'");
    return v;
}

std::string opt_text(const json& v, int decimals, const char* unit = "")
{
    if (v.is_null())
        return "undefined";
    return fixed(v.get<double>(), decimals) + unit;
}

}  // namespace

FoldTable aggregate_table(std::vector<CaseMetrics> cases, const std::map<std::string, int>& fold_of)
{
    if (cases.empty())
        throw Error("aggregate: no cases");
    std::sort(cases.begin(), cases.end(),
              [](const CaseMetrics& a, const CaseMetrics& b) { return a.case_id < b.case_id; });
    std::map<int, std::vector<const CaseMetrics*>> by_fold;
    std::vector<const CaseMetrics*> all;
    for (const CaseMetrics& c : cases) {
        const auto it = fold_of.find(c.case_id);
        if (it == fold_of.end())
            throw Error("aggregate: case " + c.case_id + " has no fold assignment");
        by_fold[it->second].push_back(&c);
        all.push_back(&c);
    }
    FoldTable t;
    for (const auto& [fold, cs] : by_fold)
        t.rows.push_back(mean_row(std::to_string(fold), cs));
    t.rows.push_back(mean_row("AVG", all));
    return t;
}

std::string table_csv(const FoldTable& table, int decimals)
{
    std::string out = "Fold,Jaccard,Dice,Precision,Recall\n";
    for (const TableRow& r : table.rows)
        out += r.fold + "," + fixed(r.jaccard, decimals) + "," + fixed(r.dice, decimals) + "," +
               fixed(r.precision, decimals) + "," + fixed(r.recall, decimals) + "\n";
    return out;
}

std::string metrics_csv(const std::vector<CaseMetrics>& cases)
{
    std::string out =
        "case_id,jaccard,dice,precision,recall,hausdorff_mm,mean_distance_mm,vol_pred_mm3,vol_ref_mm3\n";
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("undefined"); };
    for (const CaseMetrics& c : cases)
        out += c.case_id + "," + format_double(c.jaccard) + "," + format_double(c.dice) + "," +
               format_double(c.precision) + "," + format_double(c.recall) + "," + opt(c.hausdorff_mm) + "," +
               opt(c.mean_distance_mm) + "," + format_double(c.vol_pred_mm3) + "," + format_double(c.vol_ref_mm3) +
               "\n";
    return out;
}

std::vector<CaseMetrics> parse_metrics_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("case_id,jaccard,dice,precision,recall", 0) != 0)
        throw Error("metrics.csv: missing or unexpected header");
    std::vector<CaseMetrics> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');)
            f.push_back(cell);
        if (f.size() != 9)
            throw Error("metrics.csv line " + std::to_string(lineno) + ": expected 9 fields");
        CaseMetrics c;
        c.case_id = f[0];
        c.jaccard = parse_number(f[1], lineno);
        c.dice = parse_number(f[2], lineno);
        c.precision = parse_number(f[3], lineno);
        c.recall = parse_number(f[4], lineno);
        if (f[5] != "undefined")
            c.hausdorff_mm = parse_number(f[5], lineno);
        if (f[6] != "undefined")
            c.mean_distance_mm = parse_number(f[6], lineno);
        c.vol_pred_mm3 = parse_number(f[7], lineno);
        c.vol_ref_mm3 = parse_number(f[8], lineno);
        out.push_back(std::move(c));
    }
    return out;
}

json cohort_json(const CohortMetrics& c, double hd_percentile)
{
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j;
    j["cases"] = c.cases;
    j["volume_bias"] = c.volume_bias_mm3;
    j["pearson_r"] = opt(c.volume_pearson_r);
    if (!c.volume_pearson_r)
        j["pearson_note"] = c.pearson_note;
    j["means"] = {{"jaccard", c.mean_jaccard},
                  {"dice", c.mean_dice},
                  {"precision", c.mean_precision},
                  {"recall", c.mean_recall},
                  {"hausdorff_mm", opt(c.mean_hausdorff_mm)},
                  {"mean_distance_mm", opt(c.mean_mean_distance_mm)}};
    j["distance_cases"] = c.distance_cases;
    j["conventions"] = {{"volume_unit", "mm3"},
                        {"volume_bias", "mean(pred - ref), signed"},
                        {"hausdorff", "symmetric, percentile " + format_double(hd_percentile)},
                        {"mean_distance", "average symmetric surface distance"},
                        {"surface", "6-neighbourhood, grid border counts as background"},
                        {"empty_masks", "a ratio with zero denominator is 1"}};
    return j;
}

std::string report_text(const FoldTable& table, const json& cohort)
{
    std::ostringstream out;
    out << "Cross-validation\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-6s %5s %9s %9s %9s %9s\n", "Fold", "Cases", "Jaccard", "Dice", "Precision",
                  "Recall");
    out << buf;
    for (const TableRow& r : table.rows) {
        std::snprintf(buf, sizeof(buf), "%-6s %5zu %9.4f %9.4f %9.4f %9.4f\n", r.fold.c_str(), r.cases, r.jaccard,
                      r.dice, r.precision, r.recall);
        out << buf;
    }
    const json& m = cohort.at("means");
    out << "\nCohort (" << cohort.at("cases").get<std::size_t>() << " cases)\n";
    out << "Jaccard             " << fixed(m.at("jaccard").get<double>(), 4) << "\n";
    out << "Volume Bias         " << fixed(cohort.at("volume_bias").get<double>(), 4) << " mm3\n";
    out << "Mean Distance       " << opt_text(m.at("mean_distance_mm"), 4, " mm") << "\n";
    out << "Volume Pearson R    "
        << (cohort.at("pearson_r").is_null() ? cohort.value("pearson_note", std::string("undefined"))
                                             : fixed(cohort.at("pearson_r").get<double>(), 4))
        << "\n";
    out << "Hausdorff Distance  " << opt_text(m.at("hausdorff_mm"), 4, " mm") << "\n";
    return out.str();
}

namespace {

std::string cohort_csv(const json& cohort)
{
    const json& m = cohort.at("means");
    std::string out = "Metric,Value\n";
    out += "Jaccard," + fixed(m.at("jaccard").get<double>(), 4) + "\n";
    out += "Volume Bias," + fixed(cohort.at("volume_bias").get<double>(), 4) + "\n";
    out += "Mean Distance," + opt_text(m.at("mean_distance_mm"), 4) + "\n";
    out += "Volume Pearson R," + opt_text(cohort.at("pearson_r"), 4) + "\n";
    out += "Hausdorff Distance," + opt_text(m.at("hausdorff_mm"), 4) + "\n";
    return out;
}

}  // namespace

MissingInputs::MissingInputs(std::vector<std::filesystem::path> paths)
    : Error([&] {
          std::string msg = "missing inputs:";
          for (const auto& p : paths)
              msg += "\n  " + p.string();
          return msg;
      }()),
      missing(std::move(paths))
{
}

FoldTable write_report(const std::filesystem::path& run_dir)
{
    const auto metrics_path = run_dir / "metrics.csv";
    const auto cohort_path = run_dir / "cohort.json";
    const auto split_path = run_dir / "split.json";
    std::vector<std::filesystem::path> missing;
    for (const auto& p : {metrics_path, cohort_path, split_path})
        if (!std::filesystem::is_regular_file(p))
            missing.push_back(p);
    if (!missing.empty())
        throw MissingInputs(std::move(missing));

    const std::vector<CaseMetrics> cases = parse_metrics_csv(read_text(metrics_path));
    const json cohort = read_json(cohort_path);
    const FoldSplit split = split_from_json(read_json(split_path));
    std::map<std::string, int> fold_of;
    for (std::size_t f = 0; f < split.folds.size(); ++f)
        for (const auto& id : split.folds[f])
            fold_of[id] = static_cast<int>(f);

    const FoldTable table = aggregate_table(cases, fold_of);
    write_text(run_dir / "report.txt", report_text(table, cohort));
    write_text(run_dir / "report.csv", table_csv(table));
    write_text(run_dir / "report_cohort.csv", cohort_csv(cohort));
    write_text(run_dir / "report_full.csv", table_csv(table, -1));
    return table;
}

}  // namespace aneuseg
