#include "vloc/volume.hpp"

#include <cmath>
#include <numbers>

#include "vloc/errors.hpp"

namespace vloc {

double norm(Vec3 v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

double distance(Vec3 a, Vec3 b) { return norm(a - b); }

Index3 Dims::unravel(std::size_t linear_index) const {
    const auto sx = static_cast<std::size_t>(nx);
    const auto sxy = sx * static_cast<std::size_t>(ny);
    return {static_cast<int>(linear_index % sx), static_cast<int>((linear_index % sxy) / sx),
            static_cast<int>(linear_index / sxy)};
}

Volume3D::Volume3D(Dims dims, Vec3 spacing, Vec3 origin, double fill)
    : dims_(dims), spacing_(spacing), origin_(origin) {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0)
        throw InvalidArgument("Volume3D: dims must be positive");
    if (!(spacing.x > 0.0) || !(spacing.y > 0.0) || !(spacing.z > 0.0))
        throw InvalidArgument("Volume3D: spacing must be positive");
    data_.assign(dims.count(), fill);
}

Volume3D Volume3D::zeros_like(const Volume3D& other) {
    return Volume3D(other.dims_, other.spacing_, other.origin_, 0.0);
}

bool Volume3D::same_geometry(const Volume3D& other) const {
    return dims_ == other.dims_ && spacing_ == other.spacing_ && origin_ == other.origin_;
}

double Volume3D::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

double Volume3D::max() const { return argmax_location(*this).value; }

Vec3 voxel_to_world(Vec3 c, const Volume3D& vol) {
    const Vec3& o = vol.origin();
    const Vec3& s = vol.spacing();
    return {o.x + c.x * s.x, o.y + c.y * s.y, o.z + c.z * s.z};
}

Vec3 voxel_to_world(Index3 index, const Volume3D& vol) {
    return voxel_to_world(Vec3{static_cast<double>(index.x), static_cast<double>(index.y),
                               static_cast<double>(index.z)},
                          vol);
}

Vec3 world_to_voxel(Vec3 p, const Volume3D& vol) {
    const Vec3& o = vol.origin();
    const Vec3& s = vol.spacing();
    return {(p.x - o.x) / s.x, (p.y - o.y) / s.y, (p.z - o.z) / s.z};
}

Index3 nearest_voxel(Vec3 position, const Volume3D& vol) {
    const Vec3 c = world_to_voxel(position, vol);
    return {static_cast<int>(std::lround(c.x)), static_cast<int>(std::lround(c.y)),
            static_cast<int>(std::lround(c.z))};
}

Peak argmax_location(const Volume3D& vol) {
    if (vol.empty()) throw InvalidArgument("argmax_location: empty volume");
    const auto data = vol.data();
    std::size_t best = 0;
    for (std::size_t i = 1; i < data.size(); ++i)
        if (data[i] > data[best]) best = i;
    return {vol.dims().unravel(best), data[best]};
}

Volume3D make_gaussian_heatmap(Vec3 mu, double sigma, const Volume3D& templ) {
    if (!(sigma > 0.0)) throw InvalidArgument("make_gaussian_heatmap: sigma must be positive");
    Volume3D out = Volume3D::zeros_like(templ);
    const double peak = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
    const double cutoff2 = (kHeatmapCutoffSigmas * sigma) * (kHeatmapCutoffSigmas * sigma);
    const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
    const Dims d = templ.dims();
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const Vec3 p = voxel_to_world(Index3{x, y, z}, templ);
                const Vec3 r = p - mu;
                const double d2 = r.x * r.x + r.y * r.y + r.z * r.z;
                if (d2 > cutoff2) continue;
                out.at(x, y, z) = peak * std::exp(-d2 * inv_two_var);
            }
    return out;
}

} // namespace vloc
