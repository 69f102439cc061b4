#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vloc/volume.hpp"

namespace vloc::net {

/// Channel stack of equally-sized 3D grids; channel-major, x-fastest within a channel.
class Tensor {
public:
    Tensor() = default;
    Tensor(int channels, Dims dims, double fill = 0.0);

    int channels() const { return channels_; }
    const Dims& dims() const { return dims_; }
    std::size_t voxels() const { return dims_.count(); }
    std::size_t size() const { return data_.size(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::span<double> channel(int c) { return std::span<double>(data_).subspan(c * voxels(), voxels()); }
    std::span<const double> channel(int c) const {
        return std::span<const double>(data_).subspan(c * voxels(), voxels());
    }

    double& at(int c, int x, int y, int z) { return data_[c * voxels() + dims_.linear({x, y, z})]; }
    double at(int c, int x, int y, int z) const { return data_[c * voxels() + dims_.linear({x, y, z})]; }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    int channels_ = 0;
    Dims dims_{};
    std::vector<double> data_;
};

/// Convolution weights laid out [out][in][kz][ky][kx] with one bias per output channel.
struct ConvKernel {
    int in_channels = 0;
    int out_channels = 0;
    int size = 3; // odd spatial extent

    std::vector<double> weights;
    std::vector<double> bias;

    ConvKernel() = default;
    ConvKernel(int in, int out, int k);

    std::size_t weight_index(int o, int i, int kx, int ky, int kz) const {
        return ((((static_cast<std::size_t>(o) * in_channels + i) * size + kz) * size + ky) * size) + kx;
    }
    std::size_t parameter_count() const { return weights.size() + bias.size(); }

    friend bool operator==(const ConvKernel&, const ConvKernel&) = default;
};

struct ConvGrads {
    Tensor input;
    std::vector<double> weights;
    std::vector<double> bias;
};

// Stride 1, zero padding of size/2 on every side so output dims equal input dims.
Tensor conv3d_forward(const Tensor& input, const ConvKernel& kernel);
// Gradients of conv3d_forward given the upstream gradient. With want_input=false
// the input gradient is left empty.
ConvGrads conv3d_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_output,
                          bool want_input = true);

Tensor relu(const Tensor& t);
// Gradient masked by the forward output (passes where output > 0).
Tensor relu_backward(const Tensor& output, const Tensor& grad_output);

struct PoolResult {
    Tensor output;
    std::vector<std::size_t> argmax; // flat input index per output element
};

/// 2x2x2 max pooling with stride 2; all dims must be even. Ties pick the first
/// element in x-fastest window order.
PoolResult maxpool2(const Tensor& t);
Tensor maxpool2_backward(const PoolResult& pooled, const Dims& input_dims, const Tensor& grad_output);

/// Trilinear upsampling by 2 per axis, half-voxel-centered alignment. Along each
/// axis, output 2i = 0.75 x[i] + 0.25 x[i-1] and output 2i+1 = 0.75 x[i] + 0.25 x[i+1],
/// with indices clamped to the border.
Tensor upsample2(const Tensor& t);
Tensor upsample2_backward(const Tensor& grad_output);

/// Channels of `a` followed by channels of `b`. An empty `b` returns `a`.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Inverse of concat: first `first_channels` channels and the rest.
std::pair<Tensor, Tensor> split_channels(const Tensor& t, int first_channels);

} // namespace vloc::net
