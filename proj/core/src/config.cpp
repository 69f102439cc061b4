#include "vloc/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "vloc/errors.hpp"
#include "vloc/text_util.hpp"

namespace vloc {

namespace fs = std::filesystem;

namespace {

fs::path under(const PipelineConfig& c, const fs::path& p, const char* fallback) {
    return p.empty() ? c.out_dir / fallback : p;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

double to_double(const std::string& key, const std::string& v) {
    double d = 0.0;
    if (!parse_double(v, d)) bad_value(key, v, "a number");
    return d;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
    Int i{};
    if (!parse_int(v, i)) bad_value(key, v, "an integer");
    return i;
}

bool to_bool(const std::string& key, const std::string& v) {
    const auto t = trim(v);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    bad_value(key, v, "a boolean");
}

// Lists accept commas and/or whitespace as separators.
std::vector<std::string> to_list(const std::string& v) {
    std::string s = v;
    for (char& ch : s)
        if (ch == ',') ch = ' ';
    std::vector<std::string> out;
    for (auto t : tokens(s)) out.emplace_back(t);
    return out;
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& t : to_list(v)) out.push_back(to_double(key, t));
    return out;
}

template <typename T>
std::string join(const std::vector<T>& xs, const char* sep = ",") {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += sep;
        if constexpr (std::is_same_v<T, std::string>)
            out += xs[i];
        else if constexpr (std::is_floating_point_v<T>)
            out += format_double(xs[i]);
        else
            out += std::to_string(xs[i]);
    }
    return out;
}

Region to_region(const std::string& key, const std::string& v) {
    for (Region r : {Region::Cervical, Region::Thoracic, Region::Lumbar, Region::Sacral})
        if (trim(v) == region_name(r)) return r;
    bad_value(key, v, "a region (Cervical, Thoracic, Lumbar, Sacral)");
}

struct Entry {
    const char* key;
    const char* doc;
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string& key, const std::string&)> set;
};

#define VLOC_DOUBLE(name, field, doc)                                                                  \
    Entry {                                                                                            \
        name, doc, [](const PipelineConfig& c) { return format_double(c.field); },                     \
            [](PipelineConfig& c, const std::string& k, const std::string& v) { c.field = to_double(k, v); } \
    }
#define VLOC_INT(name, field, doc)                                                                     \
    Entry {                                                                                            \
        name, doc, [](const PipelineConfig& c) { return std::to_string(c.field); },                    \
            [](PipelineConfig& c, const std::string& k, const std::string& v) {                        \
                c.field = to_int<decltype(c.field)>(k, v);                                             \
            }                                                                                          \
    }
#define VLOC_BOOL(name, field, doc)                                                                    \
    Entry {                                                                                            \
        name, doc, [](const PipelineConfig& c) { return std::string(c.field ? "true" : "false"); },    \
            [](PipelineConfig& c, const std::string& k, const std::string& v) { c.field = to_bool(k, v); } \
    }
#define VLOC_PATH(name, field, doc)                                                                    \
    Entry {                                                                                            \
        name, doc, [](const PipelineConfig& c) { return c.field.generic_string(); },                   \
            [](PipelineConfig& c, const std::string&, const std::string& v) { c.field = std::string(trim(v)); } \
    }

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        VLOC_PATH("out_dir", out_dir, "all outputs are written below this directory"),
        VLOC_PATH("train_manifest", train_manifest, "empty: <out_dir>/data/train_manifest.csv"),
        VLOC_PATH("test_manifest", test_manifest, "empty: <out_dir>/data/test_manifest.csv"),
        VLOC_PATH("model", model, "empty: <out_dir>/model.vnet"),
        VLOC_PATH("kernels", kernels, "empty: <out_dir>/kernels.vkb"),
        VLOC_PATH("dictionary_prefix", dictionary_prefix, "empty: <out_dir>/dictionary"),
        VLOC_INT("seed", seed, "master seed; every stage derives its own stream"),
        Entry{"labels", "chain order, head to foot",
              [](const PipelineConfig& c) { return join(c.labels); },
              [](PipelineConfig& c, const std::string&, const std::string& v) { c.labels = to_list(v); }},
        Entry{"region_overrides", "label:Region pairs replacing the standard region map",
              [](const PipelineConfig& c) {
                  std::vector<std::string> xs;
                  for (const auto& [l, r] : c.region_overrides) xs.push_back(l + ":" + std::string(region_name(r)));
                  return join(xs);
              },
              [](PipelineConfig& c, const std::string& k, const std::string& v) {
                  c.region_overrides.clear();
                  for (const auto& item : to_list(v)) {
                      const auto parts = split(item, ':');
                      if (parts.size() != 2) bad_value(k, item, "label:Region");
                      c.region_overrides[std::string(parts[0])] = to_region(k, std::string(parts[1]));
                  }
              }},
        VLOC_INT("n_train", n_train, "synthetic training volumes"),
        VLOC_INT("n_test", n_test, "synthetic test volumes"),
        Entry{"dims", "volume grid nx ny nz",
              [](const PipelineConfig& c) {
                  return std::to_string(c.dims.nx) + " " + std::to_string(c.dims.ny) + " " + std::to_string(c.dims.nz);
              },
              [](PipelineConfig& c, const std::string& k, const std::string& v) {
                  const auto xs = to_list(v);
                  if (xs.size() != 3) bad_value(k, v, "three integers");
                  c.dims = {to_int<int>(k, xs[0]), to_int<int>(k, xs[1]), to_int<int>(k, xs[2])};
              }},
        VLOC_DOUBLE("spacing_mm", spacing_mm, "isotropic voxel spacing"),
        VLOC_DOUBLE("blob_sigma_mm", blob_sigma_mm, "width of rendered vertebra blobs"),
        VLOC_DOUBLE("noise_sigma", noise_sigma, "additive Gaussian noise before clamping to [0,1]"),
        VLOC_DOUBLE("spine.nominal_spacing_mm", nominal_spacing_mm, "distance between adjacent centroids"),
        VLOC_DOUBLE("spine.spacing_jitter", spacing_jitter, "relative sd of each gap"),
        Entry{"spine.first_position_mm", "centroid of the first label before jitter",
              [](const PipelineConfig& c) {
                  return join(std::vector<double>{c.first_position_mm.x, c.first_position_mm.y, c.first_position_mm.z});
              },
              [](PipelineConfig& c, const std::string& k, const std::string& v) {
                  const auto xs = to_doubles(k, v);
                  if (xs.size() != 3) bad_value(k, v, "three numbers");
                  c.first_position_mm = {xs[0], xs[1], xs[2]};
              }},
        VLOC_DOUBLE("spine.global_jitter_mm", global_jitter_mm, "sd of a per-spine translation"),
        Entry{"spine.lateral_coeffs", "cubic x offset c1,c2,c3 (mm)",
              [](const PipelineConfig& c) { return join(c.lateral_coeffs); },
              [](PipelineConfig& c, const std::string& k, const std::string& v) { c.lateral_coeffs = to_doubles(k, v); }},
        Entry{"spine.sagittal_coeffs", "cubic y offset c1,c2,c3 (mm)",
              [](const PipelineConfig& c) { return join(c.sagittal_coeffs); },
              [](PipelineConfig& c, const std::string& k, const std::string& v) { c.sagittal_coeffs = to_doubles(k, v); }},
        VLOC_DOUBLE("spine.curvature_jitter_mm", curvature_jitter_mm, "sd added to each curve coefficient"),
        VLOC_DOUBLE("spine.jitter_mm", jitter_mm, "independent x/y jitter per centroid"),
        VLOC_DOUBLE("spine.fov_min_z_mm", fov_min_z_mm, "labels below this z are absent"),
        VLOC_DOUBLE("spine.fov_max_z_mm", fov_max_z_mm, "labels above this z are absent"),
        Entry{"widths", "encoder channel widths, one per level",
              [](const PipelineConfig& c) { return join(c.widths); },
              [](PipelineConfig& c, const std::string& k, const std::string& v) {
                  c.widths.clear();
                  for (const auto& t : to_list(v)) c.widths.push_back(to_int<int>(k, t));
              }},
        VLOC_INT("bottleneck_convs", bottleneck_convs, "3x3x3 convolutions at the coarsest level"),
        VLOC_DOUBLE("learning_rate", learning_rate, "plain SGD step"),
        VLOC_INT("epochs", epochs, "passes over the training set"),
        VLOC_INT("batch_size", batch_size, "samples per SGD step"),
        VLOC_DOUBLE("sigma_mm", sigma_mm, "target heatmap sigma"),
        VLOC_DOUBLE("target_gain", target_gain, "constant factor on training targets; undone at inference"),
        VLOC_DOUBLE("alpha", alpha, "message weight, in (0,1)"),
        VLOC_INT("iterations", iterations, "message passing rounds"),
        VLOC_DOUBLE("kernel_smoothing_sigma", kernel_smoothing_sigma, "blur of learned kernels (voxels)"),
        VLOC_INT("kernel_half_width", kernel_half_width, "kernel half extent in voxels; 0 derives it from data"),
        VLOC_BOOL("message_passing", message_passing, "run message passing during infer"),
        VLOC_DOUBLE("presence_threshold", presence_threshold, "channel max above this marks a label present"),
        VLOC_DOUBLE("lambda", lambda, "LASSO penalty; negative selects lambda_ratio"),
        VLOC_DOUBLE("lambda_ratio", lambda_ratio, "penalty as a fraction of lambda_max per axis"),
        VLOC_BOOL("z_descending", z_descending, "z decreases head to foot"),
        VLOC_DOUBLE("id_radius_mm", id_radius_mm, "identification radius"),
        Entry{"corruption", "eval corruption suite: standard or none",
              [](const PipelineConfig& c) { return c.corruption; },
              [](PipelineConfig& c, const std::string&, const std::string& v) { c.corruption = std::string(trim(v)); }},
    };
    return table;
}

#undef VLOC_DOUBLE
#undef VLOC_INT
#undef VLOC_BOOL
#undef VLOC_PATH

} // namespace

fs::path PipelineConfig::train_manifest_path() const { return under(*this, train_manifest, "data/train_manifest.csv"); }
fs::path PipelineConfig::test_manifest_path() const { return under(*this, test_manifest, "data/test_manifest.csv"); }
fs::path PipelineConfig::model_path() const { return under(*this, model, "model.vnet"); }
fs::path PipelineConfig::kernels_path() const { return under(*this, kernels, "kernels.vkb"); }

fs::path PipelineConfig::dictionary_path(char axis) const {
    const fs::path prefix = under(*this, dictionary_prefix, "dictionary");
    return prefix.parent_path() / (prefix.filename().string() + "_" + axis + ".csv");
}

Region PipelineConfig::region(const std::string& label) const {
    const auto it = region_overrides.find(label);
    return it != region_overrides.end() ? it->second : region_of(label);
}

void PipelineConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(!out_dir.empty(), "out_dir must not be empty");
    try {
        validate_label_ordering(labels);
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("labels: ") + e.what());
    }
    require(n_train >= 1 && n_test >= 0, "n_train must be >= 1 and n_test >= 0");
    require(dims.nx > 0 && dims.ny > 0 && dims.nz > 0, "dims must be positive");
    const int step = 1 << widths.size();
    require(dims.nx % step == 0 && dims.ny % step == 0 && dims.nz % step == 0,
            "dims must be divisible by 2^levels");
    require(spacing_mm > 0.0, "spacing_mm must be > 0");
    require(blob_sigma_mm > 0.0, "blob_sigma_mm must be > 0");
    require(noise_sigma >= 0.0, "noise_sigma must be >= 0");
    require(nominal_spacing_mm > 0.0, "spine.nominal_spacing_mm must be > 0");
    require(spacing_jitter >= 0.0 && global_jitter_mm >= 0.0 && curvature_jitter_mm >= 0.0 && jitter_mm >= 0.0,
            "spine jitter values must be >= 0");
    require(lateral_coeffs.size() == 3 && sagittal_coeffs.size() == 3, "curve coefficients need three values");
    require(fov_min_z_mm <= fov_max_z_mm, "spine.fov_min_z_mm must not exceed spine.fov_max_z_mm");
    require(!widths.empty(), "widths must list at least one level");
    for (int w : widths) require(w > 0, "widths must be positive");
    require(bottleneck_convs >= 0, "bottleneck_convs must be >= 0");
    require(learning_rate > 0.0, "learning_rate must be > 0");
    require(epochs >= 0, "epochs must be >= 0");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(sigma_mm > 0.0, "sigma_mm must be > 0");
    require(target_gain > 0.0, "target_gain must be > 0");
    require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
    require(iterations >= 1, "iterations must be >= 1");
    require(kernel_smoothing_sigma >= 0.0, "kernel_smoothing_sigma must be >= 0");
    require(kernel_half_width >= 0, "kernel_half_width must be >= 0");
    require(presence_threshold > 0.0, "presence_threshold must be > 0");
    require(lambda_ratio >= 0.0, "lambda_ratio must be >= 0");
    require(id_radius_mm > 0.0, "id_radius_mm must be > 0");
    require(corruption == "standard" || corruption == "none", "corruption must be 'standard' or 'none'");
}

void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& e : entries())
        if (key == e.key) {
            e.set(cfg, key, value);
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

PipelineConfig parse_config(const std::string& text, PipelineConfig base) {
    std::istringstream is(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(is, raw)) {
        ++lineno;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        try {
            set_config_value(base, key, std::string(trim(line.substr(eq + 1))));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

PipelineConfig load_config(const fs::path& path, PipelineConfig base) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::string dump_config(const PipelineConfig& cfg) {
    std::string out;
    for (const auto& e : entries()) {
        out += "# ";
        out += e.doc;
        out += '\n';
        out += e.key;
        out += " = ";
        out += e.get(cfg);
        out += '\n';
    }
    return out;
}

} // namespace vloc
