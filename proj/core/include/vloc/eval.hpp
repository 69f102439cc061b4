#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vloc/labels.hpp"
#include "vloc/landmarks.hpp"

namespace vloc::eval {

/// Labels whose channel maximum exceeds `threshold`, in stack order.
std::vector<std::string> detect_presence(const HeatmapStack& stack, double threshold);

struct LabelError {
    std::string label;
    double error_mm = 0.0;
};

/// Euclidean distance for every label present in both sets, in gt order.
std::vector<LabelError> localization_errors(const LandmarkSet& pred, const LandmarkSet& gt);

inline constexpr double kDefaultIdRadiusMm = 20.0;

struct Identification {
    std::string label;
    bool identified = false;
};

/// One entry per ground-truth-present label. A prediction is identified when it
/// lies closer than `radius_mm` to its own truth and no other present truth is
/// strictly closer to it.
std::vector<Identification> identifications(const LandmarkSet& pred, const LandmarkSet& gt,
                                            double radius_mm = kDefaultIdRadiusMm);

/// identified / ground-truth-present; 1.0 when gt has no present labels.
double identification_rate(const LandmarkSet& pred, const LandmarkSet& gt, double radius_mm = kDefaultIdRadiusMm);

struct CaseScore {
    std::vector<LabelError> errors;
    std::vector<Identification> ids;
};

CaseScore score_case(const LandmarkSet& pred, const LandmarkSet& gt, double radius_mm = kDefaultIdRadiusMm);

struct RegionStats {
    Region region = Region::All;
    std::size_t error_count = 0;
    std::size_t gt_count = 0;
    std::optional<double> mean_mm; // absent when no errors fall in the region
    std::optional<double> std_mm;  // population std
    std::optional<double> id_rate; // absent when no ground truth falls in the region
};

/// Regions reported: All, Cervical, Thoracic, Lumbar. Sacral labels count in All only.
inline constexpr Region kReportRegions[] = {Region::All, Region::Cervical, Region::Thoracic, Region::Lumbar};

/// Label to region assignments; labels not listed use the standard map.
using RegionMap = std::map<std::string, Region>;

struct EvalReport {
    std::string method;
    std::vector<RegionStats> regions;
    std::vector<CaseScore> cases;

    const RegionStats& region(Region r) const;
};

EvalReport region_report(const std::vector<CaseScore>& cases, std::string method, const RegionMap& regions = {});

/// CSV `region,method,mean_mm,std_mm,id_rate,n_errors,n_gt`; absent values are `NA`.
void write_report_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path);

/// Line plot of per-label mean error, one polyline per report.
void write_error_plot_svg(const std::vector<EvalReport>& reports, const std::vector<std::string>& labels,
                          const std::filesystem::path& path);

} // namespace vloc::eval
