#include "vloc/network.hpp"

#include <cmath>

#include "vloc/binary_io.hpp"
#include "vloc/errors.hpp"
#include "vloc/rng.hpp"

namespace vloc::net {

void NetworkSpec::validate() const {
    if (input_channels != 1) throw InvalidArgument("NetworkSpec: input_channels must be 1");
    if (widths.empty()) throw InvalidArgument("NetworkSpec: at least one encoder level required");
    for (int w : widths)
        if (w <= 0) throw InvalidArgument("NetworkSpec: channel widths must be positive");
    if (bottleneck_convs < 0) throw InvalidArgument("NetworkSpec: bottleneck_convs must be >= 0");
    if (output_channels <= 0) throw InvalidArgument("NetworkSpec: output_channels must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw InvalidArgument("NetworkSpec: learning_rate must be positive");
    if (!(target_gain > 0.0) || !std::isfinite(target_gain))
        throw InvalidArgument("NetworkSpec: target_gain must be positive");
}

void NetworkSpec::check_input(const Dims& d) const {
    const int f = 1 << levels();
    if (d.nx % f || d.ny % f || d.nz % f)
        throw InvalidArgument("input dims " + std::to_string(d.nx) + "x" + std::to_string(d.ny) + "x" +
                              std::to_string(d.nz) + " not divisible by " + std::to_string(f));
}

std::size_t NetworkParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.parameter_count();
    return n;
}

std::vector<double> NetworkParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& l : layers) {
        flat.insert(flat.end(), l.weights.begin(), l.weights.end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void NetworkParams::assign(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw InvalidArgument("NetworkParams::assign: size mismatch");
    std::size_t k = 0;
    for (auto& l : layers) {
        for (double& w : l.weights) w = flat[k++];
        for (double& b : l.bias) b = flat[k++];
    }
}

bool NetworkParams::all_finite() const {
    for (const auto& l : layers) {
        for (double w : l.weights)
            if (!std::isfinite(w)) return false;
        for (double b : l.bias)
            if (!std::isfinite(b)) return false;
    }
    return true;
}

NetworkParams zero_params(const NetworkSpec& spec) {
    spec.validate();
    const int L = spec.levels();
    const int M = spec.output_channels;
    NetworkParams p;
    p.layers.resize(static_cast<std::size_t>(LayerIndex::count(spec)));
    int in = spec.input_channels;
    for (int l = 0; l < L; ++l) {
        p.layers[LayerIndex::encoder(spec, l)] = ConvKernel(in, spec.widths[l], 3);
        in = spec.widths[l];
    }
    for (int b = 0; b < spec.bottleneck_convs; ++b) p.layers[LayerIndex::bottleneck(spec, b)] = ConvKernel(in, in, 3);
    for (int l = L - 1; l >= 0; --l) {
        p.layers[LayerIndex::decoder(spec, l)] = ConvKernel(in + spec.widths[l], spec.widths[l], 3);
        in = spec.widths[l];
    }
    for (int l = L - 1; l >= 0; --l) p.layers[LayerIndex::branch(spec, l)] = ConvKernel(spec.widths[l], M, 1);
    p.layers[LayerIndex::final_head(spec)] = ConvKernel(L * M, M, 1);
    return p;
}

NetworkParams init_params(const NetworkSpec& spec) {
    NetworkParams p = zero_params(spec);
    Rng rng(spec.seed);
    for (auto& l : p.layers) {
        const double fan_in = static_cast<double>(l.in_channels) * l.size * l.size * l.size;
        const double bound = 1.0 / std::sqrt(fan_in);
        for (double& w : l.weights) w = detail::round_to_f32(rng.uniform(-bound, bound));
        for (double& b : l.bias) b = detail::round_to_f32(rng.uniform(-bound, bound));
    }
    return p;
}

void check_params(const NetworkSpec& spec, const NetworkParams& params) {
    const NetworkParams ref = zero_params(spec);
    if (ref.layers.size() != params.layers.size()) throw InvalidArgument("NetworkParams: wrong layer count");
    for (std::size_t i = 0; i < ref.layers.size(); ++i) {
        const auto& a = ref.layers[i];
        const auto& b = params.layers[i];
        if (a.in_channels != b.in_channels || a.out_channels != b.out_channels || a.size != b.size ||
            a.weights.size() != b.weights.size() || a.bias.size() != b.bias.size())
            throw InvalidArgument("NetworkParams: layer " + std::to_string(i) + " does not match spec");
    }
}

namespace {

struct Cache {
    std::vector<Tensor> enc_in;     // input of each encoder conv
    std::vector<Tensor> enc_out;    // relu output per encoder level (skip source)
    std::vector<PoolResult> pools;  // pooled encoder outputs
    std::vector<Tensor> bott_in;    // input of each bottleneck conv
    std::vector<Tensor> bott_out;   // relu output of each bottleneck conv
    std::vector<Tensor> dec_in;     // concat input per decoder level
    std::vector<Tensor> dec_out;    // relu output per decoder level
    Tensor final_in;                // relu(concat(branches))
    ForwardOutput out;
};

Tensor upsample_times(Tensor t, int n) {
    for (int i = 0; i < n; ++i) t = upsample2(t);
    return t;
}

void run_forward(const NetworkSpec& spec, const NetworkParams& p, const Tensor& input, Cache& c) {
    spec.validate();
    check_params(spec, p);
    if (input.channels() != spec.input_channels) throw InvalidArgument("forward: wrong input channel count");
    spec.check_input(input.dims());

    const int L = spec.levels();
    c.enc_in.resize(L);
    c.enc_out.resize(L);
    c.pools.resize(L);
    c.dec_in.resize(L);
    c.dec_out.resize(L);
    c.bott_in.resize(spec.bottleneck_convs);
    c.bott_out.resize(spec.bottleneck_convs);

    Tensor x = input;
    for (int l = 0; l < L; ++l) {
        c.enc_in[l] = x;
        c.enc_out[l] = relu(conv3d_forward(x, p.layers[LayerIndex::encoder(spec, l)]));
        c.pools[l] = maxpool2(c.enc_out[l]);
        x = c.pools[l].output;
    }
    for (int b = 0; b < spec.bottleneck_convs; ++b) {
        c.bott_in[b] = x;
        c.bott_out[b] = relu(conv3d_forward(x, p.layers[LayerIndex::bottleneck(spec, b)]));
        x = c.bott_out[b];
    }
    c.out.branches.clear();
    for (int l = L - 1; l >= 0; --l) {
        c.dec_in[l] = concat_channels(upsample2(x), c.enc_out[l]);
        c.dec_out[l] = relu(conv3d_forward(c.dec_in[l], p.layers[LayerIndex::decoder(spec, l)]));
        x = c.dec_out[l];
        c.out.branches.push_back(upsample_times(conv3d_forward(x, p.layers[LayerIndex::branch(spec, l)]), l));
    }
    Tensor cat;
    for (const auto& b : c.out.branches) cat = concat_channels(cat, b);
    c.final_in = relu(cat);
    c.out.final = conv3d_forward(c.final_in, p.layers[LayerIndex::final_head(spec)]);
}

void check_target(const Tensor& out, const Tensor& target) {
    if (out.channels() != target.channels() || !(out.dims() == target.dims()))
        throw InvalidArgument("loss: output and target shapes differ");
}

Tensor output_loss_grad(const Tensor& out, const Tensor& target) {
    check_target(out, target);
    Tensor g(out.channels(), out.dims());
    const double scale = 2.0 / static_cast<double>(out.voxels());
    const auto o = out.data();
    const auto t = target.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] = scale * (o[i] - t[i]);
    return g;
}

void add_into(Tensor& acc, const Tensor& g) {
    if (acc.size() == 0) {
        acc = g;
        return;
    }
    auto a = acc.data();
    const auto b = g.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void store(ConvKernel& dst, const ConvGrads& g) {
    dst.weights = g.weights;
    dst.bias = g.bias;
}

} // namespace

ForwardOutput forward(const NetworkSpec& spec, const NetworkParams& params, const Tensor& input) {
    Cache c;
    run_forward(spec, params, input, c);
    return std::move(c.out);
}

double output_loss(const Tensor& output, const Tensor& target) {
    check_target(output, target);
    const std::size_t n = output.voxels();
    double total = 0.0;
    for (int ch = 0; ch < output.channels(); ++ch) {
        const auto o = output.channel(ch);
        const auto t = target.channel(ch);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = o[i] - t[i];
            s += d * d;
        }
        total += s / static_cast<double>(n);
    }
    return total;
}

double loss_total(const std::vector<Tensor>& branches, const Tensor& final, const Tensor& target) {
    double total = output_loss(final, target);
    for (const auto& b : branches) total += output_loss(b, target);
    return total;
}

double loss_and_gradient(const NetworkSpec& spec, const NetworkParams& params, const Tensor& input,
                         const Tensor& target, NetworkParams& grad) {
    Cache c;
    run_forward(spec, params, input, c);
    const double loss = loss_total(c.out.branches, c.out.final, target);

    const int L = spec.levels();
    const int M = spec.output_channels;
    grad = zero_params(spec);

    // final head
    auto gf = conv3d_backward(c.final_in, params.layers[LayerIndex::final_head(spec)],
                              output_loss_grad(c.out.final, target));
    store(grad.layers[LayerIndex::final_head(spec)], gf);
    const Tensor g_cat = relu_backward(c.final_in, gf.input);

    // branch heads; branches[k] belongs to decoder level L-1-k
    std::vector<Tensor> g_dec(L);
    for (int k = 0; k < L; ++k) {
        const int l = L - 1 - k;
        Tensor g = output_loss_grad(c.out.branches[k], target);
        const auto parts = split_channels(g_cat, k * M);
        const auto mine = split_channels(parts.second, M).first;
        add_into(g, mine);
        for (int u = 0; u < l; ++u) g = upsample2_backward(g);
        auto gb = conv3d_backward(c.dec_out[l], params.layers[LayerIndex::branch(spec, l)], g);
        store(grad.layers[LayerIndex::branch(spec, l)], gb);
        add_into(g_dec[l], gb.input);
    }

    // decoder, shallow to deep
    std::vector<Tensor> g_skip(L);
    Tensor g_below; // gradient w.r.t. the tensor that was upsampled into the current level
    for (int l = 0; l < L; ++l) {
        Tensor g = relu_backward(c.dec_out[l], g_dec[l]);
        auto gd = conv3d_backward(c.dec_in[l], params.layers[LayerIndex::decoder(spec, l)], g);
        store(grad.layers[LayerIndex::decoder(spec, l)], gd);
        const int up_channels = c.dec_in[l].channels() - c.enc_out[l].channels();
        auto [g_up, g_sk] = split_channels(gd.input, up_channels);
        g_skip[l] = std::move(g_sk);
        g_below = upsample2_backward(g_up);
        if (l + 1 < L) {
            add_into(g_dec[l + 1], g_below);
            g_below = Tensor();
        }
    }

    // bottleneck, deep to shallow
    Tensor g = std::move(g_below);
    for (int b = spec.bottleneck_convs - 1; b >= 0; --b) {
        g = relu_backward(c.bott_out[b], g);
        auto gb = conv3d_backward(c.bott_in[b], params.layers[LayerIndex::bottleneck(spec, b)], g);
        store(grad.layers[LayerIndex::bottleneck(spec, b)], gb);
        g = std::move(gb.input);
    }

    // encoder, deep to shallow
    for (int l = L - 1; l >= 0; --l) {
        Tensor ge = maxpool2_backward(c.pools[l], c.enc_out[l].dims(), g);
        add_into(ge, g_skip[l]);
        ge = relu_backward(c.enc_out[l], ge);
        auto gc = conv3d_backward(c.enc_in[l], params.layers[LayerIndex::encoder(spec, l)], ge, l > 0);
        store(grad.layers[LayerIndex::encoder(spec, l)], gc);
        g = std::move(gc.input);
    }
    return loss;
}

Tensor to_tensor(const Volume3D& vol) {
    Tensor t(1, vol.dims());
    std::copy(vol.data().begin(), vol.data().end(), t.data().begin());
    return t;
}

Tensor to_tensor(const HeatmapStack& stack) {
    stack.validate();
    if (stack.channels.empty()) return {};
    Tensor t(static_cast<int>(stack.size()), stack.channels[0].dims());
    for (std::size_t c = 0; c < stack.size(); ++c)
        std::copy(stack.channels[c].data().begin(), stack.channels[c].data().end(),
                  t.channel(static_cast<int>(c)).begin());
    return t;
}

HeatmapStack to_stack(const Tensor& t, const Volume3D& geometry, const std::vector<std::string>& labels) {
    if (static_cast<std::size_t>(t.channels()) != labels.size())
        throw InvalidArgument("to_stack: label count differs from channel count");
    if (!(t.dims() == geometry.dims())) throw InvalidArgument("to_stack: geometry dims differ");
    HeatmapStack s;
    s.labels = labels;
    for (int c = 0; c < t.channels(); ++c) {
        Volume3D v = Volume3D::zeros_like(geometry);
        std::copy(t.channel(c).begin(), t.channel(c).end(), v.data().begin());
        s.channels.push_back(std::move(v));
    }
    return s;
}

HeatmapStack predict(const NetworkSpec& spec, const NetworkParams& params, const Volume3D& volume,
                     const std::vector<std::string>& labels) {
    auto out = forward(spec, params, to_tensor(volume));
    const double inv = 1.0 / spec.target_gain;
    for (double& v : out.final.data()) v *= inv;
    return to_stack(out.final, volume, labels);
}

} // namespace vloc::net
