#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vloc/landmarks.hpp"
#include "vloc/network.hpp"

namespace vloc::net {

struct Sample {
    Volume3D volume;
    LandmarkSet landmarks;
};

struct TrainOptions {
    int epochs = 30;
    int batch_size = 1;     // gradients averaged over the batch in fixed sample order
    double sigma_mm = 12.0; // target Gaussian width
};

struct TrainResult {
    NetworkParams params;
    std::vector<double> epoch_loss; // mean per-sample loss_total over each epoch
};

/// One channel per label; present landmarks get gain times a Gaussian heatmap, absent ones zeros.
Tensor make_target(const LandmarkSet& landmarks, const std::vector<std::string>& labels, double sigma_mm,
                   const Volume3D& geometry, double gain = 1.0);

/// Mini-batch SGD without momentum. Parameters are kept at float32 precision
/// after each update. Throws NumericError when the loss becomes non-finite.
TrainResult train(const NetworkSpec& spec, std::span<const Sample> dataset, const std::vector<std::string>& labels,
                  const TrainOptions& options, const NetworkParams* initial = nullptr,
                  const std::function<void(int epoch, double loss)>& on_epoch = {});

/// Gradient averaged over `batch` (in the given order) at fixed parameters.
double batch_gradient(const NetworkSpec& spec, const NetworkParams& params, std::span<const Tensor> inputs,
                      std::span<const Tensor> targets, NetworkParams& grad);

void write_training_log(const std::vector<double>& epoch_loss, const std::filesystem::path& path);

} // namespace vloc::net
