#include <algorithm>
#include <array>

#include "vloc/errors.hpp"
#include "vloc/tensor.hpp"

namespace vloc::net {

Tensor::Tensor(int channels, Dims dims, double fill) : channels_(channels), dims_(dims) {
    if (channels < 0 || dims.nx < 0 || dims.ny < 0 || dims.nz < 0)
        throw InvalidArgument("Tensor: negative extent");
    data_.assign(static_cast<std::size_t>(channels) * dims.count(), fill);
}

ConvKernel::ConvKernel(int in, int out, int k) : in_channels(in), out_channels(out), size(k) {
    if (in <= 0 || out <= 0) throw InvalidArgument("ConvKernel: channel counts must be positive");
    if (k <= 0 || k % 2 == 0) throw InvalidArgument("ConvKernel: kernel size must be odd");
    weights.assign(static_cast<std::size_t>(out) * in * k * k * k, 0.0);
    bias.assign(static_cast<std::size_t>(out), 0.0);
}

#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__)
#define VLOC_MULTIVERSION __attribute__((target_clones("avx2", "default")))
#define VLOC_ALWAYS_INLINE __attribute__((always_inline))
#else
#define VLOC_MULTIVERSION
#define VLOC_ALWAYS_INLINE
#endif

namespace {

// Blocks in the forward kernel run up to this many doubles past a channel's span.
constexpr std::size_t kSlack = 16;

// Zero-padded copy of a tensor. Each channel occupies `stride` doubles; the padded
// grid starts `margin` doubles into its slot so that every shifted read issued by
// the convolution loops stays in bounds.
struct PaddedLayout {
    int r = 0;
    std::size_t px = 0, py = 0, pz = 0;
    std::size_t plane = 0;
    std::size_t margin = 0;
    std::size_t stride = 0;
    std::size_t span_begin = 0; // padded index of (x=0, y=r, z=r)
    std::size_t span_len = 0;   // up to padded index of (x=0, y=ny+r, z=nz+r-1)
    std::vector<std::ptrdiff_t> offsets; // per tap, [kz][ky][kx] order

    PaddedLayout(const Dims& d, int k) : r(k / 2) {
        px = static_cast<std::size_t>(d.nx + 2 * r);
        py = static_cast<std::size_t>(d.ny + 2 * r);
        pz = static_cast<std::size_t>(d.nz + 2 * r);
        plane = px * py;
        margin = static_cast<std::size_t>(r);
        stride = plane * pz + 2 * margin + kSlack;
        span_begin = (static_cast<std::size_t>(r) * py + static_cast<std::size_t>(r)) * px;
        const std::size_t span_end =
            ((static_cast<std::size_t>(d.nz + r - 1)) * py + static_cast<std::size_t>(d.ny + r)) * px;
        span_len = span_end - span_begin;
        for (int kz = 0; kz < k; ++kz)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx)
                    offsets.push_back(static_cast<std::ptrdiff_t>(kz - r) * static_cast<std::ptrdiff_t>(plane) +
                                      static_cast<std::ptrdiff_t>(ky - r) * static_cast<std::ptrdiff_t>(px) +
                                      static_cast<std::ptrdiff_t>(kx - r));
    }

    std::size_t index(int x, int y, int z) const {
        return margin + (static_cast<std::size_t>(z + r) * py + static_cast<std::size_t>(y + r)) * px +
               static_cast<std::size_t>(x + r);
    }
};

std::vector<double> pad(const Tensor& t, const PaddedLayout& L) {
    std::vector<double> buf(L.stride * static_cast<std::size_t>(t.channels()) + kSlack, 0.0);
    const Dims& d = t.dims();
    for (int c = 0; c < t.channels(); ++c) {
        const auto src = t.channel(c);
        double* dst = buf.data() + L.stride * static_cast<std::size_t>(c);
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                std::copy_n(src.data() + d.linear({0, y, z}), d.nx, dst + L.index(0, y, z));
    }
    return buf;
}

void unpad_into(const std::vector<double>& buf, const PaddedLayout& L, Tensor& t) {
    const Dims& d = t.dims();
    for (int c = 0; c < t.channels(); ++c) {
        auto dst = t.channel(c);
        const double* src = buf.data() + L.stride * static_cast<std::size_t>(c);
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                std::copy_n(src + L.index(0, y, z), d.nx, dst.data() + d.linear({0, y, z}));
    }
}

constexpr std::size_t kBlock = 256;

void check_conv_shapes(const Tensor& input, const ConvKernel& k) {
    if (input.channels() != k.in_channels)
        throw InvalidArgument("conv3d: input has " + std::to_string(input.channels()) + " channels, kernel expects " +
                              std::to_string(k.in_channels));
    const std::size_t taps = static_cast<std::size_t>(k.size) * k.size * k.size;
    if (k.weights.size() != taps * k.in_channels * k.out_channels || k.bias.size() != static_cast<std::size_t>(k.out_channels))
        throw InvalidArgument("conv3d: kernel storage does not match its declared shape");
}

} // namespace

namespace {

// Forward kernel. Blocks of JB consecutive voxels for OB output channels at once
// keep the accumulators in registers while input channels and taps stream past.
// Output goes to a padded buffer and is unpadded afterwards. Summation order per
// voxel (input channel, then tap) matches a plain loop, so results do not depend
// on the blocking.
struct ForwardArgs {
    const double* in; // padded input
    const PaddedLayout* L;
    const ConvKernel* k;
    double* out; // padded output, same layout
};

template <int OB, int JB>
VLOC_ALWAYS_INLINE inline void forward_run(const ForwardArgs& a, int o0, std::size_t j0) {
    const PaddedLayout& L = *a.L;
    const ConvKernel& k = *a.k;
    const int taps = static_cast<int>(L.offsets.size());
    const std::ptrdiff_t* off = L.offsets.data();
    const std::size_t wstride = static_cast<std::size_t>(k.in_channels) * taps;
    const double* w0 = k.weights.data() + static_cast<std::size_t>(o0) * wstride;
    const std::size_t pos = L.margin + L.span_begin + j0;
    double acc[OB][JB] = {};
    for (int i = 0; i < k.in_channels; ++i) {
        const double* ip = a.in + L.stride * static_cast<std::size_t>(i) + pos;
        const double* wi = w0 + static_cast<std::size_t>(i) * taps;
        for (int t = 0; t < taps; ++t) {
            const double* src = ip + off[t];
            for (int ob = 0; ob < OB; ++ob) {
                const double wt = wi[ob * wstride + t];
                for (int u = 0; u < JB; ++u) acc[ob][u] += wt * src[u];
            }
        }
    }
    for (int ob = 0; ob < OB; ++ob) {
        double* dst = a.out + L.stride * static_cast<std::size_t>(o0 + ob) + pos;
        const double b = k.bias[static_cast<std::size_t>(o0 + ob)];
        for (int u = 0; u < JB; ++u) dst[u] = acc[ob][u] + b;
    }
}

// With nx a multiple of JB only interior rows are visited; otherwise the whole
// span is swept, halo included.
template <int OB, int JB>
VLOC_ALWAYS_INLINE inline void forward_block(const ForwardArgs& a, int o0, const Dims& d) {
    const PaddedLayout& L = *a.L;
    if (d.nx % JB != 0) {
        for (std::size_t j0 = 0; j0 < L.span_len; j0 += JB) forward_run<OB, JB>(a, o0, j0);
        return;
    }
    const std::size_t base = L.margin + L.span_begin;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y) {
            const std::size_t r0 = L.index(0, y, z) - base;
            for (int x = 0; x < d.nx; x += JB) forward_run<OB, JB>(a, o0, r0 + static_cast<std::size_t>(x));
        }
}

template <int JB>
VLOC_ALWAYS_INLINE inline void forward_all(const ForwardArgs& a, const Dims& d) {
    const int outs = a.k->out_channels;
    int o = 0;
    for (; o + 4 <= outs; o += 4) forward_block<4, JB>(a, o, d);
    for (; o + 2 <= outs; o += 2) forward_block<2, JB>(a, o, d);
    for (; o < outs; ++o) forward_block<1, JB>(a, o, d);
}

// One clone set per row width; a single dispatcher holding all three inlined
// ran the narrower widths at half speed.
VLOC_MULTIVERSION void forward_kernel8(const ForwardArgs& a, const Dims& d) { forward_all<8>(a, d); }
VLOC_MULTIVERSION void forward_kernel4(const ForwardArgs& a, const Dims& d) { forward_all<4>(a, d); }
VLOC_MULTIVERSION void forward_kernel2(const ForwardArgs& a, const Dims& d) { forward_all<2>(a, d); }

void forward_kernel(const ForwardArgs& a, const Dims& d) {
    if (d.nx % 8 == 0)
        forward_kernel8(a, d);
    else if (d.nx % 4 == 0 || d.nx % 2 != 0)
        forward_kernel4(a, d);
    else
        forward_kernel2(a, d);
}

} // namespace

Tensor conv3d_forward(const Tensor& input, const ConvKernel& k) {
    check_conv_shapes(input, k);
    const PaddedLayout L(input.dims(), k.size);
    const auto in = pad(input, L);
    std::vector<double> out(L.stride * static_cast<std::size_t>(k.out_channels) + kSlack, 0.0);
    forward_kernel({in.data(), &L, &k, out.data()}, input.dims());
    Tensor result(k.out_channels, input.dims());
    unpad_into(out, L, result);
    return result;
}

ConvGrads conv3d_backward(const Tensor& input, const ConvKernel& k, const Tensor& grad_output, bool want_input) {
    check_conv_shapes(input, k);
    if (grad_output.channels() != k.out_channels || !(grad_output.dims() == input.dims()))
        throw InvalidArgument("conv3d_backward: upstream gradient shape mismatch");

    const PaddedLayout L(input.dims(), k.size);
    const auto in = pad(input, L);
    const auto g = pad(grad_output, L); // zero outside the interior
    const std::size_t taps = L.offsets.size();

    ConvGrads grads;
    grads.weights.assign(k.weights.size(), 0.0);
    grads.bias.assign(k.bias.size(), 0.0);

    for (int o = 0; o < k.out_channels; ++o) {
        double s = 0.0;
        for (double v : grad_output.channel(o)) s += v;
        grads.bias[o] = s;
    }

    std::vector<double> acc(taps);
    for (int o = 0; o < k.out_channels; ++o) {
        const double* gp = g.data() + L.stride * o + L.margin + L.span_begin;
        for (int i = 0; i < k.in_channels; ++i) {
            const double* ip = in.data() + L.stride * i + L.margin + L.span_begin;
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t b0 = 0; b0 < L.span_len; b0 += kBlock) {
                const std::size_t n = std::min(kBlock, L.span_len - b0);
                for (std::size_t t = 0; t < taps; ++t) {
                    const double* src = ip + b0 + L.offsets[t];
                    const double* gg = gp + b0;
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += gg[j] * src[j];
                    acc[t] += s;
                }
            }
            double* gw = grads.weights.data() + k.weight_index(o, i, 0, 0, 0);
            for (std::size_t t = 0; t < taps; ++t) gw[t] = acc[t];
        }
    }

    if (want_input) {
        std::vector<double> gin(L.stride * static_cast<std::size_t>(k.in_channels), 0.0);
        for (int i = 0; i < k.in_channels; ++i) {
            double* dst = gin.data() + L.stride * i + L.margin + L.span_begin;
            for (std::size_t b0 = 0; b0 < L.span_len; b0 += kBlock) {
                const std::size_t n = std::min(kBlock, L.span_len - b0);
                double* a = dst + b0;
                for (int o = 0; o < k.out_channels; ++o) {
                    const double* gp = g.data() + L.stride * o + L.margin + L.span_begin + b0;
                    const double* w = k.weights.data() + k.weight_index(o, i, 0, 0, 0);
                    for (std::size_t t = 0; t < taps; ++t) {
                        const double wt = w[t];
                        if (wt == 0.0) continue;
                        const double* src = gp - L.offsets[t];
                        for (std::size_t j = 0; j < n; ++j) a[j] += wt * src[j];
                    }
                }
            }
        }
        grads.input = Tensor(k.in_channels, input.dims());
        unpad_into(gin, L, grads.input);
    }
    return grads;
}

Tensor relu(const Tensor& t) {
    Tensor out = t;
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& output, const Tensor& grad_output) {
    if (output.size() != grad_output.size()) throw InvalidArgument("relu_backward: shape mismatch");
    Tensor g = grad_output;
    const auto o = output.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < gd.size(); ++i)
        if (!(o[i] > 0.0)) gd[i] = 0.0;
    return g;
}

PoolResult maxpool2(const Tensor& t) {
    const Dims& d = t.dims();
    if (d.nx % 2 || d.ny % 2 || d.nz % 2)
        throw InvalidArgument("maxpool2: dims must be even, got " + std::to_string(d.nx) + "x" + std::to_string(d.ny) +
                              "x" + std::to_string(d.nz));
    const Dims h{d.nx / 2, d.ny / 2, d.nz / 2};
    PoolResult r{Tensor(t.channels(), h), {}};
    r.argmax.resize(r.output.size());
    const auto src = t.data();
    std::size_t out_i = 0;
    for (int c = 0; c < t.channels(); ++c) {
        const std::size_t base = static_cast<std::size_t>(c) * t.voxels();
        for (int z = 0; z < h.nz; ++z)
            for (int y = 0; y < h.ny; ++y)
                for (int x = 0; x < h.nx; ++x, ++out_i) {
                    std::size_t best = base + d.linear({2 * x, 2 * y, 2 * z});
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const std::size_t idx = base + d.linear({2 * x + dx, 2 * y + dy, 2 * z + dz});
                                if (src[idx] > src[best]) best = idx;
                            }
                    r.output.data()[out_i] = src[best];
                    r.argmax[out_i] = best;
                }
    }
    return r;
}

Tensor maxpool2_backward(const PoolResult& pooled, const Dims& input_dims, const Tensor& grad_output) {
    if (grad_output.size() != pooled.argmax.size()) throw InvalidArgument("maxpool2_backward: shape mismatch");
    Tensor g(grad_output.channels(), input_dims);
    auto gd = g.data();
    const auto go = grad_output.data();
    for (std::size_t i = 0; i < go.size(); ++i) gd[pooled.argmax[i]] += go[i];
    return g;
}

namespace {

// One-axis x2 linear upsampling (or its transpose) on a tensor.
enum class Axis { X, Y, Z };

Tensor upsample_axis(const Tensor& t, Axis axis) {
    const Dims& d = t.dims();
    Dims od = d;
    int n = 0;
    std::size_t step = 0;
    switch (axis) {
    case Axis::X: od.nx *= 2; n = d.nx; step = 1; break;
    case Axis::Y: od.ny *= 2; n = d.ny; step = static_cast<std::size_t>(d.nx); break;
    case Axis::Z: od.nz *= 2; n = d.nz; step = static_cast<std::size_t>(d.nx) * d.ny; break;
    }
    Tensor out(t.channels(), od);
    const std::size_t ostep = axis == Axis::X ? 1 : axis == Axis::Y ? static_cast<std::size_t>(od.nx)
                                                                    : static_cast<std::size_t>(od.nx) * od.ny;
    for (int c = 0; c < t.channels(); ++c) {
        const auto src = t.channel(c);
        auto dst = out.channel(c);
        // iterate over all lines along the axis
        const Dims lines = axis == Axis::X ? Dims{1, d.ny, d.nz} : axis == Axis::Y ? Dims{d.nx, 1, d.nz} : Dims{d.nx, d.ny, 1};
        for (int lz = 0; lz < lines.nz; ++lz)
            for (int ly = 0; ly < lines.ny; ++ly)
                for (int lx = 0; lx < lines.nx; ++lx) {
                    const std::size_t sb = d.linear({lx, ly, lz});
                    const std::size_t db = od.linear({lx, ly, lz});
                    for (int i = 0; i < n; ++i) {
                        const double xc = src[sb + step * i];
                        const double xl = src[sb + step * std::max(i - 1, 0)];
                        const double xr = src[sb + step * std::min(i + 1, n - 1)];
                        dst[db + ostep * (2 * i)] = 0.75 * xc + 0.25 * xl;
                        dst[db + ostep * (2 * i + 1)] = 0.75 * xc + 0.25 * xr;
                    }
                }
    }
    return out;
}

Tensor upsample_axis_backward(const Tensor& g, Axis axis) {
    const Dims& od = g.dims();
    Dims d = od;
    switch (axis) {
    case Axis::X: d.nx /= 2; break;
    case Axis::Y: d.ny /= 2; break;
    case Axis::Z: d.nz /= 2; break;
    }
    const int n = axis == Axis::X ? d.nx : axis == Axis::Y ? d.ny : d.nz;
    const std::size_t step = axis == Axis::X ? 1 : axis == Axis::Y ? static_cast<std::size_t>(d.nx)
                                                                   : static_cast<std::size_t>(d.nx) * d.ny;
    const std::size_t ostep = axis == Axis::X ? 1 : axis == Axis::Y ? static_cast<std::size_t>(od.nx)
                                                                    : static_cast<std::size_t>(od.nx) * od.ny;
    Tensor out(g.channels(), d);
    for (int c = 0; c < g.channels(); ++c) {
        const auto src = g.channel(c);
        auto dst = out.channel(c);
        const Dims lines = axis == Axis::X ? Dims{1, d.ny, d.nz} : axis == Axis::Y ? Dims{d.nx, 1, d.nz} : Dims{d.nx, d.ny, 1};
        for (int lz = 0; lz < lines.nz; ++lz)
            for (int ly = 0; ly < lines.ny; ++ly)
                for (int lx = 0; lx < lines.nx; ++lx) {
                    const std::size_t sb = od.linear({lx, ly, lz});
                    const std::size_t db = d.linear({lx, ly, lz});
                    for (int i = 0; i < n; ++i) {
                        const double ge = src[sb + ostep * (2 * i)];
                        const double go = src[sb + ostep * (2 * i + 1)];
                        dst[db + step * i] += 0.75 * (ge + go);
                        dst[db + step * std::max(i - 1, 0)] += 0.25 * ge;
                        dst[db + step * std::min(i + 1, n - 1)] += 0.25 * go;
                    }
                }
    }
    return out;
}

} // namespace

Tensor upsample2(const Tensor& t) {
    return upsample_axis(upsample_axis(upsample_axis(t, Axis::X), Axis::Y), Axis::Z);
}

Tensor upsample2_backward(const Tensor& grad_output) {
    const Dims& d = grad_output.dims();
    if (d.nx % 2 || d.ny % 2 || d.nz % 2) throw InvalidArgument("upsample2_backward: dims must be even");
    return upsample_axis_backward(upsample_axis_backward(upsample_axis_backward(grad_output, Axis::Z), Axis::Y),
                                  Axis::X);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (b.channels() == 0) return a;
    if (a.channels() == 0) return b;
    if (!(a.dims() == b.dims())) throw InvalidArgument("concat_channels: spatial dims differ");
    Tensor out(a.channels() + b.channels(), a.dims());
    auto dst = out.data();
    std::copy(a.data().begin(), a.data().end(), dst.begin());
    std::copy(b.data().begin(), b.data().end(), dst.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& t, int first_channels) {
    if (first_channels < 0 || first_channels > t.channels()) throw InvalidArgument("split_channels: bad split");
    Tensor a(first_channels, t.dims());
    Tensor b(t.channels() - first_channels, t.dims());
    const auto src = t.data();
    std::copy_n(src.begin(), a.size(), a.data().begin());
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(a.size()), src.end(), b.data().begin());
    return {std::move(a), std::move(b)};
}

} // namespace vloc::net
