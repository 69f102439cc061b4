#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "vloc/errors.hpp"
#include "vloc/eval.hpp"

namespace vloc::eval {

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string opt(const std::optional<double>& v) { return v ? fixed(*v, 4) : "NA"; }

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError(IoError::Kind::Open, "cannot write " + path.string());
    return os;
}

} // namespace

void write_report_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
    auto os = open_out(path);
    os << "region,method,mean_mm,std_mm,id_rate,n_errors,n_gt\n";
    for (Region r : kReportRegions)
        for (const auto& rep : reports) {
            const auto& s = rep.region(r);
            os << region_name(r) << ',' << rep.method << ',' << opt(s.mean_mm) << ',' << opt(s.std_mm) << ','
               << opt(s.id_rate) << ',' << s.error_count << ',' << s.gt_count << '\n';
        }
}

void write_error_plot_svg(const std::vector<EvalReport>& reports, const std::vector<std::string>& labels,
                          const std::filesystem::path& path) {
    static const char* const colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"};
    const double w = 640, h = 360, left = 50, right = 150, top = 20, bottom = 40;
    const double pw = w - left - right, ph = h - top - bottom;

    std::vector<std::vector<std::optional<double>>> means;
    double ymax = 1.0;
    for (const auto& rep : reports) {
        std::map<std::string, std::pair<double, std::size_t>> acc;
        for (const auto& c : rep.cases)
            for (const auto& e : c.errors) {
                acc[e.label].first += e.error_mm;
                acc[e.label].second += 1;
            }
        auto& row = means.emplace_back();
        for (const auto& l : labels) {
            auto it = acc.find(l);
            if (it == acc.end()) {
                row.emplace_back();
                continue;
            }
            const double m = it->second.first / static_cast<double>(it->second.second);
            ymax = std::max(ymax, m);
            row.emplace_back(m);
        }
    }
    auto px = [&](std::size_t i) {
        return left + (labels.size() > 1 ? pw * static_cast<double>(i) / static_cast<double>(labels.size() - 1) : 0.0);
    };
    auto py = [&](double v) { return top + ph * (1.0 - v / ymax); };

    auto os = open_out(path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"5\" y=\"" << top + 10 << "\" font-size=\"10\">" << fixed(ymax, 1) << " mm</text>\n";
    os << "<text x=\"5\" y=\"" << top + ph << "\" font-size=\"10\">0</text>\n";
    for (std::size_t i = 0; i < labels.size(); ++i)
        os << "<text x=\"" << px(i) - 8 << "\" y=\"" << top + ph + 15 << "\" font-size=\"9\">" << labels[i]
           << "</text>\n";
    for (std::size_t r = 0; r < reports.size(); ++r) {
        const char* color = colors[r % std::size(colors)];
        std::string points;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (!means[r][i]) continue;
            points += fixed(px(i), 1) + "," + fixed(py(*means[r][i]), 1) + " ";
        }
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << points << "\"/>\n";
        os << "<text x=\"" << left + pw + 10 << "\" y=\"" << top + 15 + 15 * static_cast<double>(r)
           << "\" font-size=\"11\" fill=\"" << color << "\">" << reports[r].method << "</text>\n";
    }
    os << "</svg>\n";
}

} // namespace vloc::eval
