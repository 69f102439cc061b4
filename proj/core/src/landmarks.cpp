#include "vloc/landmarks.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "vloc/errors.hpp"
#include "vloc/labels.hpp"
#include "vloc/text_util.hpp"

namespace vloc {

// ---- labels ---------------------------------------------------------------

std::string_view region_name(Region r) {
    switch (r) {
    case Region::All: return "All";
    case Region::Cervical: return "Cervical";
    case Region::Thoracic: return "Thoracic";
    case Region::Lumbar: return "Lumbar";
    case Region::Sacral: return "Sacral";
    }
    return "?";
}

const std::vector<std::string>& standard_labels() {
    static const std::vector<std::string> labels = {
        "C1", "C2", "C3", "C4", "C5", "C6", "C7",  "T1",  "T2", "T3", "T4", "T5", "T6",
        "T7", "T8", "T9", "T10", "T11", "T12", "L1", "L2", "L3", "L4", "L5", "S1", "S2",
    };
    return labels;
}

std::vector<std::string> desk_labels() {
    const auto& all = standard_labels();
    const auto first = std::find(all.begin(), all.end(), "T6");
    return {first, first + 12};
}

bool is_standard_label(std::string_view label) {
    const auto& all = standard_labels();
    return std::find(all.begin(), all.end(), label) != all.end();
}

Region region_of(std::string_view label) {
    if (!is_standard_label(label))
        throw InvalidArgument("unknown vertebra label '" + std::string(label) + "'");
    switch (label.front()) {
    case 'C': return Region::Cervical;
    case 'T': return Region::Thoracic;
    case 'L': return Region::Lumbar;
    default: return Region::Sacral;
    }
}

void validate_label_ordering(const std::vector<std::string>& labels) {
    if (labels.empty()) throw InvalidArgument("label ordering is empty");
    const auto& all = standard_labels();
    std::ptrdiff_t prev = -1;
    for (const auto& l : labels) {
        const auto it = std::find(all.begin(), all.end(), l);
        if (it == all.end()) throw InvalidArgument("unknown vertebra label '" + l + "'");
        const auto pos = it - all.begin();
        if (pos <= prev) throw InvalidArgument("labels must be unique and in chain order near '" + l + "'");
        prev = pos;
    }
}

// ---- LandmarkSet ----------------------------------------------------------

LandmarkSet::LandmarkSet(std::vector<Landmark> entries) : entries_(std::move(entries)) {}

const Landmark* LandmarkSet::find(std::string_view label) const {
    for (const auto& e : entries_)
        if (e.label == label) return &e;
    return nullptr;
}

Landmark* LandmarkSet::find(std::string_view label) {
    for (auto& e : entries_)
        if (e.label == label) return &e;
    return nullptr;
}

std::vector<std::string> LandmarkSet::labels() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.label);
    return out;
}

std::size_t LandmarkSet::present_count() const {
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(), [](const Landmark& e) { return e.present; }));
}

void LandmarkSet::validate(const std::vector<std::string>& ordering) const {
    std::ptrdiff_t prev = -1;
    for (const auto& e : entries_) {
        const auto it = std::find(ordering.begin(), ordering.end(), e.label);
        if (it == ordering.end())
            throw InvalidArgument("landmark label '" + e.label + "' not in configured ordering");
        const auto pos = it - ordering.begin();
        if (pos <= prev) throw InvalidArgument("landmark labels must be unique and in chain order");
        prev = pos;
    }
}

void write_landmarks_csv(const LandmarkSet& set, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError(IoError::Kind::Open, "cannot write " + path.string());
    os << "label,x_mm,y_mm,z_mm,present\n";
    for (const auto& e : set.entries()) {
        os << e.label << ',' << format_double(e.position.x) << ',' << format_double(e.position.y) << ','
           << format_double(e.position.z) << ',' << (e.present ? 1 : 0) << '\n';
    }
    if (!os) throw IoError(IoError::Kind::UnreadablePayload, "write failed for " + path.string());
}

LandmarkSet read_landmarks_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError(IoError::Kind::Open, "cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || trim(line) != "label,x_mm,y_mm,z_mm,present")
        throw IoError(IoError::Kind::MalformedHeader, path.string() + ": expected landmark CSV header");
    std::vector<Landmark> entries;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cols = split(trim(line), ',');
        if (cols.size() != 5)
            throw IoError(IoError::Kind::MalformedHeader,
                          path.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
        Landmark lm;
        lm.label = std::string(trim(cols[0]));
        auto num = [&](std::string_view s) {
            double v = 0.0;
            if (!parse_double(s, v))
                throw IoError(IoError::Kind::MalformedHeader,
                              path.string() + ":" + std::to_string(lineno) + ": bad number '" + std::string(s) + "'");
            return v;
        };
        lm.position = {num(cols[1]), num(cols[2]), num(cols[3])};
        const auto pres = trim(cols[4]);
        if (pres == "1" || pres == "true")
            lm.present = true;
        else if (pres == "0" || pres == "false")
            lm.present = false;
        else
            throw IoError(IoError::Kind::MalformedHeader,
                          path.string() + ":" + std::to_string(lineno) + ": bad presence flag");
        entries.push_back(std::move(lm));
    }
    return LandmarkSet(std::move(entries));
}

// ---- HeatmapStack ---------------------------------------------------------

std::optional<std::size_t> HeatmapStack::index_of(std::string_view label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return i;
    return std::nullopt;
}

void HeatmapStack::validate() const {
    if (channels.size() != labels.size())
        throw InvalidArgument("HeatmapStack: channel count differs from label count");
    for (std::size_t i = 1; i < channels.size(); ++i)
        if (!channels[i].same_geometry(channels[0]))
            throw InvalidArgument("HeatmapStack: channels must share dims, spacing and origin");
}

} // namespace vloc
