#include "vloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vloc/errors.hpp"
#include "vloc/labels.hpp"
#include "vloc/rng.hpp"
#include "vloc/text_util.hpp"

namespace vloc::synth {

void SpineModel::validate() const {
    validate_label_ordering(labels);
    if (!(nominal_spacing_mm > 0.0)) throw InvalidArgument("SpineModel: spacing must be positive");
    if (!gap_spacing_mm.empty()) {
        if (gap_spacing_mm.size() + 1 != labels.size())
            throw InvalidArgument("SpineModel: need one gap spacing per adjacent label pair");
        for (double g : gap_spacing_mm)
            if (!(g > 0.0)) throw InvalidArgument("SpineModel: spacing must be positive");
    }
    if (spacing_jitter < 0.0 || global_jitter_mm < 0.0 || curvature_jitter_mm < 0.0 || jitter_mm < 0.0)
        throw InvalidArgument("SpineModel: jitter values must be >= 0");
    if (!(fov_min_z_mm <= fov_max_z_mm)) throw InvalidArgument("SpineModel: empty FOV window");
}

SpineModel desk_model() {
    SpineModel m;
    m.labels = desk_labels();
    return m;
}

Volume3D desk_template() { return Volume3D({16, 16, 48}, {4.0, 4.0, 4.0}, {0.0, 0.0, 0.0}); }

LandmarkSet sample_spine(const SpineModel& model, std::uint64_t seed) {
    model.validate();
    Rng rng(seed);
    const std::size_t m = model.labels.size();
    const Vec3 shift{rng.normal(0.0, model.global_jitter_mm), rng.normal(0.0, model.global_jitter_mm),
                     rng.normal(0.0, model.global_jitter_mm)};
    std::array<double, 3> lat = model.lateral_coeffs;
    std::array<double, 3> sag = model.sagittal_coeffs;
    for (auto& c : lat) c += rng.normal(0.0, model.curvature_jitter_mm);
    for (auto& c : sag) c += rng.normal(0.0, model.curvature_jitter_mm);
    auto cubic = [](const std::array<double, 3>& c, double s) { return s * (c[0] + s * (c[1] + s * c[2])); };

    std::vector<Landmark> entries;
    double z = model.first_position_mm.z + shift.z;
    for (std::size_t i = 0; i < m; ++i) {
        if (i > 0) {
            const double gap = model.gap_spacing_mm.empty() ? model.nominal_spacing_mm : model.gap_spacing_mm[i - 1];
            const double factor = std::max(0.2, 1.0 + model.spacing_jitter * rng.normal());
            z -= gap * factor;
        }
        const double s = m > 1 ? static_cast<double>(i) / static_cast<double>(m - 1) : 0.0;
        const double x = model.first_position_mm.x + shift.x + cubic(lat, s) + rng.normal(0.0, model.jitter_mm);
        const double y = model.first_position_mm.y + shift.y + cubic(sag, s) + rng.normal(0.0, model.jitter_mm);
        Landmark lm;
        lm.label = model.labels[i];
        lm.position = {x, y, z};
        lm.present = z >= model.fov_min_z_mm && z <= model.fov_max_z_mm;
        entries.push_back(std::move(lm));
    }
    return LandmarkSet(std::move(entries));
}

Volume3D render_volume(const LandmarkSet& landmarks, const Volume3D& templ, double blob_sigma_mm, double noise_sigma,
                       std::uint64_t seed) {
    if (!(blob_sigma_mm > 0.0)) throw InvalidArgument("render_volume: blob sigma must be positive");
    if (noise_sigma < 0.0) throw InvalidArgument("render_volume: noise sigma must be >= 0");
    Volume3D out = Volume3D::zeros_like(templ);
    const double inv = 1.0 / (2.0 * blob_sigma_mm * blob_sigma_mm);
    const Dims d = templ.dims();
    for (const auto& lm : landmarks.entries()) {
        if (!lm.present) continue;
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x) {
                    const Vec3 r = voxel_to_world(Index3{x, y, z}, templ) - lm.position;
                    out.at(x, y, z) += std::exp(-(r.x * r.x + r.y * r.y + r.z * r.z) * inv);
                }
    }
    Rng rng(seed);
    for (double& v : out.data()) {
        if (noise_sigma > 0.0) v += rng.normal(0.0, noise_sigma);
        v = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

HeatmapStack corrupt_stack(const HeatmapStack& stack, const std::vector<std::string>& drop,
                           const std::vector<Injection>& inject, double sigma_mm) {
    stack.validate();
    if (!(sigma_mm > 0.0)) throw InvalidArgument("corrupt_stack: sigma must be positive");
    HeatmapStack out = stack;
    auto channel = [&](const std::string& label) {
        const auto i = stack.index_of(label);
        if (!i) throw InvalidArgument("corrupt_stack: unknown label " + label);
        return *i;
    };
    std::vector<double> peaks;
    for (const auto& c : stack.channels) peaks.push_back(c.empty() ? 0.0 : c.max());
    for (const auto& l : drop) {
        auto& c = out.channels[channel(l)];
        std::fill(c.data().begin(), c.data().end(), 0.0);
    }
    const double inv = 1.0 / (2.0 * sigma_mm * sigma_mm);
    const double cutoff2 = std::pow(kHeatmapCutoffSigmas * sigma_mm, 2);
    for (const auto& inj : inject) {
        const std::size_t i = channel(inj.label);
        auto& c = out.channels[i];
        const double height = inj.amplitude * peaks[i];
        const Dims d = c.dims();
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x) {
                    const Vec3 r = voxel_to_world(Index3{x, y, z}, c) - inj.position;
                    const double d2 = r.x * r.x + r.y * r.y + r.z * r.z;
                    if (d2 <= cutoff2) c.at(x, y, z) += height * std::exp(-d2 * inv);
                }
    }
    return out;
}

void write_manifest(const std::vector<DatasetEntry>& entries, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError(IoError::Kind::Open, "cannot write " + path.string());
    os << "volume,landmarks\n";
    for (const auto& e : entries) os << e.volume.generic_string() << ',' << e.landmarks.generic_string() << '\n';
}

std::vector<DatasetEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError(IoError::Kind::Open, "cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || trim(line) != "volume,landmarks")
        throw IoError(IoError::Kind::MalformedHeader, path.string() + ": expected header 'volume,landmarks'");
    const auto base = path.parent_path();
    std::vector<DatasetEntry> out;
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        const auto f = split(trim(line), ',');
        if (f.size() != 2) throw IoError(IoError::Kind::MalformedHeader, path.string() + ": expected 2 columns");
        auto resolve = [&](std::string_view s) {
            std::filesystem::path p{std::string(trim(s))};
            return p.is_relative() ? base / p : p;
        };
        out.push_back({resolve(f[0]), resolve(f[1])});
    }
    return out;
}

} // namespace vloc::synth
