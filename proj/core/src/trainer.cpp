#include "vloc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vloc/binary_io.hpp"
#include "vloc/errors.hpp"
#include "vloc/text_util.hpp"

namespace vloc::net {

Tensor make_target(const LandmarkSet& landmarks, const std::vector<std::string>& labels, double sigma_mm,
                   const Volume3D& geometry, double gain) {
    Tensor t(static_cast<int>(labels.size()), geometry.dims());
    for (std::size_t c = 0; c < labels.size(); ++c) {
        const Landmark* lm = landmarks.find(labels[c]);
        if (!lm || !lm->present) continue;
        const Volume3D h = make_gaussian_heatmap(lm->position, sigma_mm, geometry);
        std::transform(h.data().begin(), h.data().end(), t.channel(static_cast<int>(c)).begin(),
                       [gain](double v) { return gain * v; });
    }
    return t;
}

double batch_gradient(const NetworkSpec& spec, const NetworkParams& params, std::span<const Tensor> inputs,
                      std::span<const Tensor> targets, NetworkParams& grad) {
    if (inputs.size() != targets.size() || inputs.empty())
        throw InvalidArgument("batch_gradient: need matching, non-empty inputs and targets");
    grad = zero_params(spec);
    std::vector<double> acc(grad.parameter_count(), 0.0);
    double loss = 0.0;
    NetworkParams g;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        loss += loss_and_gradient(spec, params, inputs[i], targets[i], g);
        const auto flat = g.flatten();
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += flat[k];
    }
    const double inv = 1.0 / static_cast<double>(inputs.size());
    for (double& a : acc) a *= inv;
    grad.assign(acc);
    return loss * inv;
}

TrainResult train(const NetworkSpec& spec, std::span<const Sample> dataset, const std::vector<std::string>& labels,
                  const TrainOptions& options, const NetworkParams* initial,
                  const std::function<void(int, double)>& on_epoch) {
    spec.validate();
    if (dataset.empty()) throw InvalidArgument("train: dataset is empty");
    if (options.epochs < 0) throw InvalidArgument("train: epochs must be >= 0");
    if (options.batch_size <= 0) throw InvalidArgument("train: batch_size must be positive");
    if (static_cast<int>(labels.size()) != spec.output_channels)
        throw InvalidArgument("train: label count differs from output channels");

    TrainResult result;
    result.params = initial ? *initial : init_params(spec);
    check_params(spec, result.params);
    if (options.epochs == 0) return result;

    std::vector<Tensor> inputs, targets;
    inputs.reserve(dataset.size());
    targets.reserve(dataset.size());
    for (const auto& s : dataset) {
        spec.check_input(s.volume.dims());
        inputs.push_back(to_tensor(s.volume));
        targets.push_back(make_target(s.landmarks, labels, options.sigma_mm, s.volume, spec.target_gain));
    }

    auto flat = result.params.flatten();
    NetworkParams grad;
    const std::size_t n = dataset.size();
    const std::size_t bs = static_cast<std::size_t>(options.batch_size);
    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t count = std::min(bs, n - start);
            const double loss = batch_gradient(spec, result.params, std::span(inputs).subspan(start, count),
                                               std::span(targets).subspan(start, count), grad);
            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "training diverged: non-finite loss at epoch " << epoch << ", sample " << start
                    << " (learning rate " << spec.learning_rate << ")";
                throw NumericError(msg.str(), loss);
            }
            epoch_loss += loss * static_cast<double>(count);
            const auto g = grad.flatten();
            for (std::size_t k = 0; k < flat.size(); ++k)
                flat[k] = detail::round_to_f32(flat[k] - spec.learning_rate * g[k]);
            result.params.assign(flat);
        }
        epoch_loss /= static_cast<double>(n);
        if (!result.params.all_finite())
            throw NumericError("training diverged: non-finite parameters after epoch " + std::to_string(epoch),
                               epoch_loss);
        result.epoch_loss.push_back(epoch_loss);
        if (on_epoch) on_epoch(epoch, epoch_loss);
    }
    return result;
}

void write_training_log(const std::vector<double>& epoch_loss, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError(IoError::Kind::Open, "cannot write " + path.string());
    os << "epoch,loss\n";
    for (std::size_t i = 0; i < epoch_loss.size(); ++i) os << (i + 1) << ',' << format_double(epoch_loss[i]) << '\n';
}

} // namespace vloc::net
