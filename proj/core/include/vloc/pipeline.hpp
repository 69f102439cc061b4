#pragma once

#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vloc/config.hpp"
#include "vloc/eval.hpp"
#include "vloc/message_passing.hpp"
#include "vloc/model_io.hpp"
#include "vloc/sparse_refine.hpp"
#include "vloc/synth.hpp"
#include "vloc/trainer.hpp"

namespace vloc::pipeline {

enum ExitCode : int {
    kOk = 0,
    kConfigFailure = 2,
    kIoFailure = 3,
    kNumericFailure = 4,
    kInvalidInput = 5,
};

/// Maps the library's error classes to process exit codes.
int exit_code_for(const std::exception& e);

net::NetworkSpec network_spec(const PipelineConfig& cfg);
synth::SpineModel spine_model(const PipelineConfig& cfg);
Volume3D volume_template(const PipelineConfig& cfg);
mp::GraphOptions graph_options(const PipelineConfig& cfg);
sparse::RefineOptions refine_options(const PipelineConfig& cfg);
eval::RegionMap region_map(const PipelineConfig& cfg);

/// Argmax per channel; a label is present when its label is in `present`.
LandmarkSet stack_to_landmarks(const HeatmapStack& stack, const std::vector<std::string>& present);

/// Labels strictly between the first and last entry of `present` in chain order.
std::vector<std::string> fill_gaps(const std::vector<std::string>& labels, const std::vector<std::string>& present);

struct CorruptionPlan {
    std::vector<std::string> drop;
    std::vector<synth::Injection> inject;
};

/// One interior channel dropped, one remote false positive at 1.5x the true
/// peak and one at 4x, each three inter-vertebra gaps away along z.
CorruptionPlan standard_corruption(const LandmarkSet& truth, const Volume3D& geometry, double gap_mm,
                                   std::uint64_t seed);

struct Artifacts {
    net::Model model;
    mp::ChainGraph graph;
    sparse::ShapeDictionary dictionary;
};

Artifacts load_artifacts(const PipelineConfig& cfg);

struct StageResult {
    HeatmapStack net_maps; // network output after any corruption
    HeatmapStack mp_maps;
    LandmarkSet net;
    LandmarkSet mp;
    LandmarkSet refined;
    bool refine_skipped = false;
};

StageResult run_stages(const Artifacts& art, const Volume3D& volume, const PipelineConfig& cfg,
                       const CorruptionPlan* corruption = nullptr);

void write_stack(const HeatmapStack& stack, const std::filesystem::path& dir);
HeatmapStack read_stack(const std::filesystem::path& dir, const std::vector<std::string>& labels);

/// Format versions of every artifact, one `name version` per line.
std::string format_versions();

void cmd_synth(const PipelineConfig& cfg);
void cmd_train(const PipelineConfig& cfg);
void cmd_learn_kernels(const PipelineConfig& cfg);
StageResult cmd_infer(const PipelineConfig& cfg, const std::filesystem::path& volume);
LandmarkSet cmd_refine(const PipelineConfig& cfg, const std::filesystem::path& landmarks);

/// Scores the test manifest through every stage. With `predictions` (CSV
/// `prediction,ground_truth`) the given landmark files are scored instead.
std::vector<eval::EvalReport> cmd_eval(const PipelineConfig& cfg,
                                       const std::optional<std::filesystem::path>& predictions = std::nullopt);

} // namespace vloc::pipeline
