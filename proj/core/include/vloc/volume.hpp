#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace vloc {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

double norm(Vec3 v);
double distance(Vec3 a, Vec3 b);

struct Index3 {
    int x = 0;
    int y = 0;
    int z = 0;

    friend bool operator==(const Index3&, const Index3&) = default;
};

struct Dims {
    int nx = 0;
    int ny = 0;
    int nz = 0;

    std::size_t count() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
    }
    bool contains(Index3 i) const {
        return i.x >= 0 && i.y >= 0 && i.z >= 0 && i.x < nx && i.y < ny && i.z < nz;
    }
    std::size_t linear(Index3 i) const {
        return (static_cast<std::size_t>(i.z) * static_cast<std::size_t>(ny) + static_cast<std::size_t>(i.y)) *
                   static_cast<std::size_t>(nx) +
               static_cast<std::size_t>(i.x);
    }
    Index3 unravel(std::size_t linear_index) const;

    friend bool operator==(const Dims&, const Dims&) = default;
};

/// Dense scalar grid with physical geometry. Voxel data is stored x-fastest,
/// then y, then z. Samples are held in double precision; files carry float32.
class Volume3D {
public:
    Volume3D() = default;
    Volume3D(Dims dims, Vec3 spacing, Vec3 origin = {}, double fill = 0.0);

    /// Zero-filled volume sharing the geometry of `other`.
    static Volume3D zeros_like(const Volume3D& other);

    const Dims& dims() const { return dims_; }
    const Vec3& spacing() const { return spacing_; }
    const Vec3& origin() const { return origin_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    double& at(int x, int y, int z) { return data_[dims_.linear({x, y, z})]; }
    double at(int x, int y, int z) const { return data_[dims_.linear({x, y, z})]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool same_geometry(const Volume3D& other) const;
    double sum() const;
    double max() const;

    friend bool operator==(const Volume3D&, const Volume3D&) = default;

private:
    Dims dims_{};
    Vec3 spacing_{1.0, 1.0, 1.0};
    Vec3 origin_{};
    std::vector<double> data_;
};

Vec3 voxel_to_world(Vec3 continuous_index, const Volume3D& vol);
Vec3 voxel_to_world(Index3 index, const Volume3D& vol);
Vec3 world_to_voxel(Vec3 position, const Volume3D& vol);
/// Rounds the continuous voxel coordinate of `position`; may fall outside the grid.
Index3 nearest_voxel(Vec3 position, const Volume3D& vol);

struct Peak {
    Index3 index;
    double value = 0.0;
};

/// Location of the maximum. Ties resolve to the lowest linear index.
Peak argmax_location(const Volume3D& vol);

/// Radius, in units of sigma, beyond which heatmaps are exactly zero.
inline constexpr double kHeatmapCutoffSigmas = 4.0;

/// Gaussian target 1/(sigma*sqrt(2*pi)) * exp(-|x - mu|^2 / (2 sigma^2)) sampled at
/// every voxel's world position and truncated to 0 beyond 4 sigma.
Volume3D make_gaussian_heatmap(Vec3 mu, double sigma, const Volume3D& templ);

} // namespace vloc
