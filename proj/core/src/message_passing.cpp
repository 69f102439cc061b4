#include "vloc/message_passing.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "vloc/errors.hpp"

namespace vloc::mp {

Kernel3D::Kernel3D(Index3 h) {
    if (h.x < 0 || h.y < 0 || h.z < 0) throw InvalidArgument("Kernel3D: negative half-width");
    dims = {2 * h.x + 1, 2 * h.y + 1, 2 * h.z + 1};
    anchor = h;
    weights.assign(dims.count(), 0.0);
}

double Kernel3D::sum() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

Index3 Kernel3D::mode_offset() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < weights.size(); ++i)
        if (weights[i] > weights[best]) best = i;
    const Index3 p = dims.unravel(best);
    return {p.x - anchor.x, p.y - anchor.y, p.z - anchor.z};
}

void Kernel3D::validate(double tol) const {
    if (dims.nx % 2 == 0 || dims.ny % 2 == 0 || dims.nz % 2 == 0 || dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0)
        throw InvalidArgument("kernel side lengths must be odd and positive");
    if (!dims.contains(anchor)) throw InvalidArgument("kernel anchor outside support");
    if (weights.size() != dims.count()) throw InvalidArgument("kernel storage does not match dims");
    for (double w : weights)
        if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("kernel weights must be finite and nonnegative");
    if (std::abs(sum() - 1.0) > tol) throw InvalidArgument("kernel must sum to 1");
}

std::vector<int> ChainGraph::neighbors(int i) const {
    std::vector<int> out;
    if (i > 0) out.push_back(i - 1);
    if (i + 1 < static_cast<int>(nodes.size())) out.push_back(i + 1);
    return out;
}

const Kernel3D& ChainGraph::kernel(int from, int to) const {
    const auto it = kernels.find({from, to});
    if (it == kernels.end())
        throw InvalidArgument("no kernel for edge " + std::to_string(from) + " -> " + std::to_string(to));
    return it->second;
}

void ChainGraph::validate(double kernel_tol) const {
    if (nodes.size() < 2) throw InvalidArgument("ChainGraph: need at least two nodes");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("ChainGraph: alpha must lie in (0, 1)");
    if (iterations < 1) throw InvalidArgument("ChainGraph: iterations must be >= 1");
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i)
        for (int j : neighbors(i)) kernel(j, i).validate(kernel_tol);
    if (kernels.size() != 2 * (nodes.size() - 1)) throw InvalidArgument("ChainGraph: unexpected extra kernels");
}

namespace {

Index3 quantize(Vec3 d, Vec3 spacing) {
    return {static_cast<int>(std::lround(d.x / spacing.x)), static_cast<int>(std::lround(d.y / spacing.y)),
            static_cast<int>(std::lround(d.z / spacing.z))};
}

// Separable Gaussian blur with zero padding, truncated at 3 sigma.
std::vector<double> blur(const std::vector<double>& w, const Dims& d, double sigma) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> taps(2 * r + 1);
    for (int i = -r; i <= r; ++i) taps[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    auto pass = [&](const std::vector<double>& src, int axis) {
        std::vector<double> dst(src.size(), 0.0);
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x) {
                    const double v = src[d.linear({x, y, z})];
                    if (v == 0.0) continue;
                    for (int t = -r; t <= r; ++t) {
                        Index3 q{x, y, z};
                        (axis == 0 ? q.x : axis == 1 ? q.y : q.z) += t;
                        if (d.contains(q)) dst[d.linear(q)] += v * taps[t + r];
                    }
                }
        return dst;
    };
    return pass(pass(pass(w, 0), 1), 2);
}

} // namespace

Kernel3D learn_kernel(std::span<const LandmarkSet> train, const std::string& from, const std::string& to,
                      Vec3 spacing, Index3 half_width, const KernelOptions& options) {
    if (options.smoothing_sigma < 0.0) throw InvalidArgument("learn_kernel: smoothing sigma must be >= 0");
    Kernel3D k(half_width);
    std::size_t count = 0;
    std::size_t clamped = 0;
    for (const auto& set : train) {
        const Landmark* a = set.find(from);
        const Landmark* b = set.find(to);
        if (!a || !b || !a->present || !b->present) continue;
        Index3 d = quantize(b->position - a->position, spacing);
        const Index3 c{std::clamp(d.x, -half_width.x, half_width.x), std::clamp(d.y, -half_width.y, half_width.y),
                       std::clamp(d.z, -half_width.z, half_width.z)};
        if (!(c == d)) ++clamped;
        k.at_offset(c) += 1.0;
        ++count;
    }
    if (count == 0)
        throw InvalidArgument("learn_kernel: no training sample with both " + from + " and " + to + " present");
    if (clamped)
        std::clog << "warning: " << clamped << " displacement(s) for edge " << from << " -> " << to
                  << " clamped to the kernel support\n";
    if (options.smoothing_sigma > 0.0) k.weights = blur(k.weights, k.dims, options.smoothing_sigma);
    const double s = k.sum();
    for (double& w : k.weights) w /= s;
    return k;
}

Index3 default_half_width(std::span<const LandmarkSet> train, const std::vector<std::string>& nodes, Vec3 spacing) {
    double longest = 0.0;
    for (const auto& set : train)
        for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
            const Landmark* a = set.find(nodes[i]);
            const Landmark* b = set.find(nodes[i + 1]);
            if (!a || !b || !a->present || !b->present) continue;
            const Vec3 d = b->position - a->position;
            const Vec3 v{d.x / spacing.x, d.y / spacing.y, d.z / spacing.z};
            longest = std::max(longest, norm(v));
        }
    const int h = std::max(1, static_cast<int>(std::ceil(1.5 * longest)));
    return {h, h, h};
}

ChainGraph learn_chain_graph(std::span<const LandmarkSet> train, const std::vector<std::string>& nodes, Vec3 spacing,
                             const GraphOptions& options) {
    ChainGraph g;
    g.nodes = nodes;
    g.alpha = options.alpha;
    g.iterations = options.iterations;
    const Index3 hw = options.half_width ? *options.half_width : default_half_width(train, nodes, spacing);
    const KernelOptions ko{options.smoothing_sigma};
    for (int i = 0; i + 1 < static_cast<int>(nodes.size()); ++i) {
        g.kernels[{i, i + 1}] = learn_kernel(train, nodes[i], nodes[i + 1], spacing, hw, ko);
        g.kernels[{i + 1, i}] = learn_kernel(train, nodes[i + 1], nodes[i], spacing, hw, ko);
    }
    g.validate();
    return g;
}

Volume3D apply_message(const Volume3D& src, const Kernel3D& k) {
    Volume3D out = Volume3D::zeros_like(src);
    const Dims& d = src.dims();
    const auto in = src.data();
    auto dst = out.data();
    for (int kz = 0; kz < k.dims.nz; ++kz)
        for (int ky = 0; ky < k.dims.ny; ++ky)
            for (int kx = 0; kx < k.dims.nx; ++kx) {
                const double w = k.weights[k.dims.linear({kx, ky, kz})];
                if (w == 0.0) continue;
                const int ox = kx - k.anchor.x, oy = ky - k.anchor.y, oz = kz - k.anchor.z;
                // dst[p + o] += w * src[p] for p and p + o both inside
                const int x0 = std::max(0, -ox), x1 = std::min(d.nx, d.nx - ox);
                const int y0 = std::max(0, -oy), y1 = std::min(d.ny, d.ny - oy);
                const int z0 = std::max(0, -oz), z1 = std::min(d.nz, d.nz - oz);
                if (x0 >= x1) continue;
                for (int z = z0; z < z1; ++z)
                    for (int y = y0; y < y1; ++y) {
                        const double* s = in.data() + d.linear({x0, y, z});
                        double* t = dst.data() + d.linear({x0 + ox, y + oy, z + oz});
                        for (int x = 0; x < x1 - x0; ++x) t[x] += w * s[x];
                    }
            }
    return out;
}

PassResult pass_once(const HeatmapStack& maps, const ChainGraph& graph) {
    maps.validate();
    if (maps.labels != graph.nodes) throw InvalidArgument("pass_once: channel order must match graph nodes");
    const int n = static_cast<int>(maps.size());
    PassResult r;
    r.maps.labels = maps.labels;
    r.maps.channels.resize(n);
    r.flagged.assign(n, false);
    for (int i = 0; i < n; ++i) {
        const auto nbrs = graph.neighbors(i);
        Volume3D acc = Volume3D::zeros_like(maps.channels[i]);
        for (int j : nbrs) {
            const Volume3D m = apply_message(maps.channels[j], graph.kernel(j, i));
            for (std::size_t v = 0; v < acc.size(); ++v) acc[v] += m[v];
        }
        const double scale = graph.alpha / static_cast<double>(nbrs.size());
        const auto own = maps.channels[i].data();
        for (std::size_t v = 0; v < acc.size(); ++v) acc[v] = scale * acc[v] + own[v];
        const double z = acc.sum();
        if (z > 0.0) {
            for (double& v : acc.data()) v /= z;
        } else {
            std::fill(acc.data().begin(), acc.data().end(), 0.0);
            r.flagged[i] = true;
        }
        r.maps.channels[i] = std::move(acc);
    }
    return r;
}

PassResult run_passing(const HeatmapStack& maps, const ChainGraph& graph) {
    if (graph.iterations < 1) throw InvalidArgument("run_passing: iterations must be >= 1");
    PassResult r = pass_once(maps, graph);
    for (int t = 1; t < graph.iterations; ++t) r = pass_once(r.maps, graph);
    return r;
}

HeatmapStack to_probability_maps(const HeatmapStack& stack) {
    stack.validate();
    HeatmapStack out = stack;
    for (auto& ch : out.channels) {
        double s = 0.0;
        for (double& v : ch.data()) {
            v = v > 0.0 ? v : 0.0;
            s += v;
        }
        if (s > 0.0)
            for (double& v : ch.data()) v /= s;
    }
    return out;
}

} // namespace vloc::mp
