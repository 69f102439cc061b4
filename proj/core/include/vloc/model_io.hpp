#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vloc/network.hpp"

namespace vloc::net {

inline constexpr int kModelFormatVersion = 1;

struct Model {
    NetworkSpec spec;
    std::vector<std::string> labels;
    NetworkParams params;
};

/// Text header terminated by `end_header`, followed by the parameters as
/// little-endian float32 in declared layer order (weights then bias per layer).
void write_model(const Model& model, const std::filesystem::path& path);
Model read_model(const std::filesystem::path& path);

} // namespace vloc::net
