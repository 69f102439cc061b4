#include "vloc/eval.hpp"

#include <cmath>
#include <limits>

#include "vloc/errors.hpp"

namespace vloc::eval {

std::vector<std::string> detect_presence(const HeatmapStack& stack, double threshold) {
    if (!(threshold > 0.0)) throw InvalidArgument("detect_presence: threshold must be positive");
    stack.validate();
    std::vector<std::string> out;
    for (std::size_t c = 0; c < stack.size(); ++c)
        if (stack.channels[c].max() > threshold) out.push_back(stack.labels[c]);
    return out;
}

std::vector<LabelError> localization_errors(const LandmarkSet& pred, const LandmarkSet& gt) {
    std::vector<LabelError> out;
    for (const auto& g : gt.entries()) {
        if (!g.present) continue;
        const Landmark* p = pred.find(g.label);
        if (p && p->present) out.push_back({g.label, distance(p->position, g.position)});
    }
    return out;
}

std::vector<Identification> identifications(const LandmarkSet& pred, const LandmarkSet& gt, double radius_mm) {
    if (!(radius_mm > 0.0)) throw InvalidArgument("identification radius must be positive");
    std::vector<Identification> out;
    for (const auto& g : gt.entries()) {
        if (!g.present) continue;
        Identification id{g.label, false};
        const Landmark* p = pred.find(g.label);
        if (p && p->present) {
            const double own = distance(p->position, g.position);
            bool nearest = true;
            for (const auto& other : gt.entries())
                if (other.present && other.label != g.label && distance(p->position, other.position) < own) {
                    nearest = false;
                    break;
                }
            id.identified = own < radius_mm && nearest;
        }
        out.push_back(std::move(id));
    }
    return out;
}

double identification_rate(const LandmarkSet& pred, const LandmarkSet& gt, double radius_mm) {
    const auto ids = identifications(pred, gt, radius_mm);
    if (ids.empty()) return 1.0;
    std::size_t n = 0;
    for (const auto& i : ids) n += i.identified ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(ids.size());
}

CaseScore score_case(const LandmarkSet& pred, const LandmarkSet& gt, double radius_mm) {
    return {localization_errors(pred, gt), identifications(pred, gt, radius_mm)};
}

const RegionStats& EvalReport::region(Region r) const {
    for (const auto& s : regions)
        if (s.region == r) return s;
    throw InvalidArgument("EvalReport: region not reported");
}

namespace {

bool in_region(Region r, const std::string& label, const RegionMap& regions) {
    if (r == Region::All) return true;
    const auto it = regions.find(label);
    return (it != regions.end() ? it->second : region_of(label)) == r;
}

} // namespace

EvalReport region_report(const std::vector<CaseScore>& cases, std::string method, const RegionMap& regions) {
    EvalReport rep;
    rep.method = std::move(method);
    rep.cases = cases;
    for (Region r : kReportRegions) {
        RegionStats s;
        s.region = r;
        double sum = 0.0;
        std::vector<double> values;
        std::size_t identified = 0;
        for (const auto& c : cases) {
            for (const auto& e : c.errors)
                if (in_region(r, e.label, regions)) values.push_back(e.error_mm);
            for (const auto& i : c.ids)
                if (in_region(r, i.label, regions)) {
                    ++s.gt_count;
                    identified += i.identified ? 1 : 0;
                }
        }
        s.error_count = values.size();
        if (!values.empty()) {
            for (double v : values) sum += v;
            const double mean = sum / static_cast<double>(values.size());
            double ss = 0.0;
            for (double v : values) ss += (v - mean) * (v - mean);
            s.mean_mm = mean;
            s.std_mm = std::sqrt(ss / static_cast<double>(values.size()));
        }
        if (s.gt_count > 0) s.id_rate = static_cast<double>(identified) / static_cast<double>(s.gt_count);
        rep.regions.push_back(s);
    }
    return rep;
}

} // namespace vloc::eval
