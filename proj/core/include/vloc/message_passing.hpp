#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vloc/landmarks.hpp"

namespace vloc::mp {

/// Nonnegative displacement distribution on a voxel grid. Entry (a, b, c)
/// represents the offset (a - anchor.x, b - anchor.y, c - anchor.z) voxels.
struct Kernel3D {
    Dims dims;
    Index3 anchor;
    std::vector<double> weights;

    Kernel3D() = default;
    /// Zero kernel with odd side lengths 2*half+1 anchored at its center.
    explicit Kernel3D(Index3 half_width);

    double& at_offset(Index3 d) { return weights[dims.linear({d.x + anchor.x, d.y + anchor.y, d.z + anchor.z})]; }
    double at_offset(Index3 d) const { return weights[dims.linear({d.x + anchor.x, d.y + anchor.y, d.z + anchor.z})]; }
    bool contains_offset(Index3 d) const { return dims.contains({d.x + anchor.x, d.y + anchor.y, d.z + anchor.z}); }
    double sum() const;
    /// Offset of the largest weight (lowest linear index on ties).
    Index3 mode_offset() const;

    /// Throws InvalidArgument unless dims are odd, the anchor lies inside,
    /// weights are nonnegative and sum to 1 within `tol`.
    void validate(double tol = 1e-6) const;

    friend bool operator==(const Kernel3D&, const Kernel3D&) = default;
};

/// Chain of labels with a kernel on every directed edge between chain neighbours.
struct ChainGraph {
    std::vector<std::string> nodes;
    std::map<std::pair<int, int>, Kernel3D> kernels; // (from j, to i) -> k(v_i | v_j)
    double alpha = 0.5;
    int iterations = 3;

    std::vector<int> neighbors(int i) const;
    const Kernel3D& kernel(int from, int to) const;
    void validate(double kernel_tol = 1e-6) const;
};

struct KernelOptions {
    double smoothing_sigma = 1.0; // voxels; 0 disables the blur
};

/// Normalized histogram of voxel-quantized displacements mu_to - mu_from over
/// training sets where both labels are present, optionally Gaussian-blurred and
/// renormalized. Displacements outside the support are clamped to its border.
/// Throws InvalidArgument when no training set has both labels.
Kernel3D learn_kernel(std::span<const LandmarkSet> train, const std::string& from, const std::string& to,
                      Vec3 spacing, Index3 half_width, const KernelOptions& options = {});

/// Half-width per axis: ceil(1.5 * largest observed displacement magnitude) voxels
/// over all chain edges, identical on every axis.
Index3 default_half_width(std::span<const LandmarkSet> train, const std::vector<std::string>& nodes, Vec3 spacing);

struct GraphOptions {
    double alpha = 0.5;
    int iterations = 3;
    double smoothing_sigma = 1.0;
    std::optional<Index3> half_width; // default_half_width when unset
};

ChainGraph learn_chain_graph(std::span<const LandmarkSet> train, const std::vector<std::string>& nodes, Vec3 spacing,
                             const GraphOptions& options = {});

/// Message from a neighbour map: unit mass at voxel p contributes k(d) to voxel
/// p + d; mass pushed outside the grid is dropped.
Volume3D apply_message(const Volume3D& source, const Kernel3D& kernel);

struct PassResult {
    HeatmapStack maps;
    std::vector<bool> flagged; // channel had zero mass before normalization
};

/// One simultaneous update of every channel:
///   new_i = normalize(alpha * mean_{j in nbrs(i)} apply_message(P_j, k_{j->i}) + P_i)
/// with normalize dividing by the channel sum.
PassResult pass_once(const HeatmapStack& maps, const ChainGraph& graph);

/// graph.iterations applications of pass_once. A channel is flagged if it was
/// flagged in the last pass.
PassResult run_passing(const HeatmapStack& maps, const ChainGraph& graph);

/// Clamps negative responses to zero and rescales each channel to unit mass;
/// channels with no positive mass are left all-zero.
HeatmapStack to_probability_maps(const HeatmapStack& stack);

inline constexpr int kKernelBundleVersion = 1;

/// Text manifest (alpha, iterations, node list, one `edge` line per kernel with
/// dims and anchor) then float32 little-endian kernel weights in edge order.
void write_kernel_bundle(const ChainGraph& graph, const std::filesystem::path& path);
ChainGraph read_kernel_bundle(const std::filesystem::path& path);

} // namespace vloc::mp
