#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vloc/volume.hpp"

namespace vloc {

struct Landmark {
    std::string label;
    Vec3 position;         // mm
    bool present = true;
    bool extrapolated = false; // set by refinement for rows outside the fitted subspace
};

/// Labeled centroids in anatomical chain order.
class LandmarkSet {
public:
    LandmarkSet() = default;
    explicit LandmarkSet(std::vector<Landmark> entries);

    const std::vector<Landmark>& entries() const { return entries_; }
    std::vector<Landmark>& entries() { return entries_; }
    std::size_t size() const { return entries_.size(); }

    const Landmark* find(std::string_view label) const;
    Landmark* find(std::string_view label);
    std::vector<std::string> labels() const;
    std::size_t present_count() const;

    /// Throws InvalidArgument unless labels are unique and follow `ordering`.
    void validate(const std::vector<std::string>& ordering) const;

private:
    std::vector<Landmark> entries_;
};

/// CSV with header `label,x_mm,y_mm,z_mm,present`.
void write_landmarks_csv(const LandmarkSet& set, const std::filesystem::path& path);
LandmarkSet read_landmarks_csv(const std::filesystem::path& path);

/// Multi-channel probability maps, one channel per label.
struct HeatmapStack {
    std::vector<Volume3D> channels;
    std::vector<std::string> labels;

    std::size_t size() const { return channels.size(); }
    std::optional<std::size_t> index_of(std::string_view label) const;
    void validate() const;
};

} // namespace vloc
