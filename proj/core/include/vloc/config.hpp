#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vloc/labels.hpp"
#include "vloc/volume.hpp"

namespace vloc {

/// Flat key/value configuration. Empty path values resolve under `out_dir`.
struct PipelineConfig {
    // paths
    std::filesystem::path out_dir = "vloc_out";
    std::filesystem::path train_manifest;
    std::filesystem::path test_manifest;
    std::filesystem::path model;
    std::filesystem::path kernels;
    std::filesystem::path dictionary_prefix; // <prefix>_x.csv, _y.csv, _z.csv

    std::uint64_t seed = 1;
    std::vector<std::string> labels = desk_labels();
    std::map<std::string, Region> region_overrides;

    // synthetic data
    int n_train = 50;
    int n_test = 10;
    Dims dims{16, 16, 48};
    double spacing_mm = 4.0;
    double blob_sigma_mm = 5.0;
    double noise_sigma = 0.02;
    double nominal_spacing_mm = 14.0;
    double spacing_jitter = 0.05;
    Vec3 first_position_mm{30.0, 30.0, 171.0};
    double global_jitter_mm = 3.0;
    std::vector<double> lateral_coeffs{0.0, 0.0, 0.0};
    std::vector<double> sagittal_coeffs{8.0, -8.0, 0.0};
    double curvature_jitter_mm = 2.0;
    double jitter_mm = 1.0;
    double fov_min_z_mm = -1e9;
    double fov_max_z_mm = 1e9;

    // network
    std::vector<int> widths{8, 16};
    int bottleneck_convs = 2;
    double learning_rate = 0.3;
    int epochs = 30;
    int batch_size = 1;
    double sigma_mm = 12.0;
    double target_gain = 30.0;

    // message passing
    double alpha = 0.5;
    int iterations = 3;
    double kernel_smoothing_sigma = 1.0;
    int kernel_half_width = 0; // 0 derives it from the training displacements
    bool message_passing = true;

    // presence and refinement
    double presence_threshold = 0.01;
    double lambda = -1.0; // < 0 selects lambda_ratio * lambda_max per axis
    double lambda_ratio = 0.01;
    bool z_descending = true;

    // evaluation
    double id_radius_mm = 20.0;
    std::string corruption = "standard"; // standard | none

    std::filesystem::path train_manifest_path() const;
    std::filesystem::path test_manifest_path() const;
    std::filesystem::path model_path() const;
    std::filesystem::path kernels_path() const;
    std::filesystem::path dictionary_path(char axis) const;

    Region region(const std::string& label) const;

    /// Throws ConfigError for out-of-range values.
    void validate() const;
};

/// Sets one key from its textual value. Throws ConfigError on unknown keys or
/// unparsable values.
void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value);

/// Parses `key = value` lines; `#` starts a comment. Later keys override earlier ones.
PipelineConfig parse_config(const std::string& text, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});

/// Every key with its current value, one per line, preceded by a short comment.
std::string dump_config(const PipelineConfig& cfg);

} // namespace vloc
