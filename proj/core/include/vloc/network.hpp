#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vloc/landmarks.hpp"
#include "vloc/tensor.hpp"

namespace vloc::net {

/// Architecture and optimizer settings of the encoder-decoder.
///
/// Layout for L = widths.size() levels:
///   encoder level l:   conv3 -> relu -> maxpool2           (widths[l] channels)
///   bottleneck:        bottleneck_convs x (conv3 -> relu)  (widths[L-1] channels)
///   decoder level l:   upsample2 -> concat(encoder l) -> conv3 -> relu
///   branch per decoder level l: conv1 to M channels, then upsample2 applied l times
///   final:             conv1 over relu(concat(all branch outputs))
struct NetworkSpec {
    int input_channels = 1;
    std::vector<int> widths{8, 16};
    int bottleneck_convs = 2;
    int output_channels = 12;
    double learning_rate = 0.3;
    double target_gain = 30.0; // training targets are gain * heatmap; predict divides it out
    std::uint64_t seed = 42;

    int levels() const { return static_cast<int>(widths.size()); }
    int branches() const { return levels(); }
    /// Throws InvalidArgument on a bad configuration.
    void validate() const;
    /// Throws InvalidArgument unless each dim is divisible by 2^levels.
    void check_input(const Dims& dims) const;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Convolution layers in declared order: encoders (shallow to deep), bottleneck,
/// decoders (deep to shallow), branch heads (deep to shallow), final head.
struct NetworkParams {
    std::vector<ConvKernel> layers;

    std::size_t parameter_count() const;
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
    bool all_finite() const;

    friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

struct LayerIndex {
    static int encoder(const NetworkSpec&, int level) { return level; }
    static int bottleneck(const NetworkSpec& s, int i) { return s.levels() + i; }
    static int decoder(const NetworkSpec& s, int level) {
        return s.levels() + s.bottleneck_convs + (s.levels() - 1 - level);
    }
    static int branch(const NetworkSpec& s, int level) {
        return 2 * s.levels() + s.bottleneck_convs + (s.levels() - 1 - level);
    }
    static int final_head(const NetworkSpec& s) { return 3 * s.levels() + s.bottleneck_convs; }
    static int count(const NetworkSpec& s) { return 3 * s.levels() + s.bottleneck_convs + 1; }
};

/// Shapes for `spec` with every weight and bias zero.
NetworkParams zero_params(const NetworkSpec& spec);

/// Uniform in +-1/sqrt(fan_in) for weights and biases, seeded by spec.seed and
/// rounded to float32 so that model files round-trip exactly.
NetworkParams init_params(const NetworkSpec& spec);

/// Throws InvalidArgument when `params` does not match `spec`.
void check_params(const NetworkSpec& spec, const NetworkParams& params);

struct ForwardOutput {
    std::vector<Tensor> branches; // deepest decoder level first
    Tensor final;
};

ForwardOutput forward(const NetworkSpec& spec, const NetworkParams& params, const Tensor& input);

/// Sum over outputs of the per-channel mean squared error, summed over channels.
double output_loss(const Tensor& output, const Tensor& target);
/// Total training loss: sum of branch losses plus the final-output loss.
double loss_total(const std::vector<Tensor>& branches, const Tensor& final, const Tensor& target);

/// Forward + backward. Returns the total loss and writes dLoss/dParams into `grad`
/// (same layout as params).
double loss_and_gradient(const NetworkSpec& spec, const NetworkParams& params, const Tensor& input,
                         const Tensor& target, NetworkParams& grad);

Tensor to_tensor(const Volume3D& vol);
Tensor to_tensor(const HeatmapStack& stack);
/// Splits channels into volumes sharing `geometry`'s spacing and origin.
HeatmapStack to_stack(const Tensor& t, const Volume3D& geometry, const std::vector<std::string>& labels);

/// Final-output heatmaps for a volume.
HeatmapStack predict(const NetworkSpec& spec, const NetworkParams& params, const Volume3D& volume,
                     const std::vector<std::string>& labels);

} // namespace vloc::net
