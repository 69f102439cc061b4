#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vloc/landmarks.hpp"

namespace vloc::synth {

/// Generative model for synthetic spines. Positions run head to foot with z
/// strictly decreasing; x (lateral) and y (sagittal) follow cubic offset curves
/// c1*s + c2*s^2 + c3*s^3 in the chain parameter s in [0, 1].
struct SpineModel {
    std::vector<std::string> labels;
    double nominal_spacing_mm = 14.0;
    std::vector<double> gap_spacing_mm; // per gap (labels-1); overrides nominal when non-empty
    double spacing_jitter = 0.05;       // relative sd of each gap
    Vec3 first_position_mm{30.0, 30.0, 171.0};
    double global_jitter_mm = 3.0;      // sd of a per-sample translation, each axis
    std::array<double, 3> lateral_coeffs{0.0, 0.0, 0.0};
    std::array<double, 3> sagittal_coeffs{8.0, -8.0, 0.0};
    double curvature_jitter_mm = 2.0;   // sd of per-sample coefficient perturbations
    double jitter_mm = 1.0;             // sd of independent x/y jitter per landmark
    double fov_min_z_mm = -1e9;         // labels with z outside [min, max] are absent
    double fov_max_z_mm = 1e9;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Twelve labels (T6-L5) sized for a 16x16x48 grid at 4 mm.
SpineModel desk_model();

/// 16x16x48 zero volume at 4 mm isotropic spacing, origin 0.
Volume3D desk_template();

LandmarkSet sample_spine(const SpineModel& model, std::uint64_t seed);
inline LandmarkSet sample_spine(const SpineModel& model) { return sample_spine(model, model.seed); }

/// Sum of unit-amplitude Gaussian blobs at present centroids plus seeded
/// Gaussian noise, clamped to [0, 1].
Volume3D render_volume(const LandmarkSet& landmarks, const Volume3D& templ, double blob_sigma_mm,
                       double noise_sigma, std::uint64_t seed);

struct Injection {
    std::string label;
    Vec3 position;
    double amplitude = 0.8; // relative to the channel's original peak
};

/// Zeros dropped channels and adds Gaussian peaks (width sigma_mm, truncated at
/// 4 sigma) whose height is amplitude times the channel's original maximum.
HeatmapStack corrupt_stack(const HeatmapStack& stack, const std::vector<std::string>& drop,
                           const std::vector<Injection>& inject, double sigma_mm);

struct DatasetEntry {
    std::filesystem::path volume;    // .svh
    std::filesystem::path landmarks; // .csv
};

/// CSV `volume,landmarks`; relative paths are resolved against the manifest directory.
void write_manifest(const std::vector<DatasetEntry>& entries, const std::filesystem::path& path);
std::vector<DatasetEntry> read_manifest(const std::filesystem::path& path);

} // namespace vloc::synth
