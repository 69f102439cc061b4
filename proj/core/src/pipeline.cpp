#include "vloc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "vloc/errors.hpp"
#include "vloc/rng.hpp"
#include "vloc/text_util.hpp"
#include "vloc/volume_io.hpp"

namespace vloc::pipeline {

namespace fs = std::filesystem;

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t {
    kSpineStream = 1,
    kRenderStream = 2,
    kCorruptionStream = 3,
    kInitStream = 4,
};

// Rethrows with the failing stage prefixed, keeping the error class.
template <typename F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
    const std::string p = std::string(stage) + ": ";
    try {
        return f();
    } catch (const IoError& e) {
        throw IoError(e.kind(), p + e.what());
    } catch (const NumericError& e) {
        throw NumericError(p + e.what(), e.residual());
    } catch (const ConfigError& e) {
        throw ConfigError(p + e.what());
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(p + e.what());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(IoError::Kind::Open, "cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
    ensure_dir(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream os(path);
    if (!os) throw IoError(IoError::Kind::Open, "cannot write " + path.string());
    return os;
}

void write_effective_config(const PipelineConfig& cfg) {
    open_out(cfg.out_dir / "effective_config.cfg") << dump_config(cfg);
}

std::vector<net::Sample> load_samples(const fs::path& manifest) {
    std::vector<net::Sample> out;
    for (const auto& e : synth::read_manifest(manifest))
        out.push_back({read_volume(e.volume), read_landmarks_csv(e.landmarks)});
    if (out.empty()) throw InvalidArgument("manifest " + manifest.string() + " lists no cases");
    return out;
}

std::vector<LandmarkSet> landmarks_of(const std::vector<net::Sample>& samples) {
    std::vector<LandmarkSet> out;
    for (const auto& s : samples) out.push_back(s.landmarks);
    return out;
}

bool contains(const std::vector<std::string>& xs, const std::string& x) {
    return std::find(xs.begin(), xs.end(), x) != xs.end();
}

} // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kConfigFailure;
    if (dynamic_cast<const IoError*>(&e)) return kIoFailure;
    if (dynamic_cast<const NumericError*>(&e)) return kNumericFailure;
    return kInvalidInput;
}

net::NetworkSpec network_spec(const PipelineConfig& cfg) {
    net::NetworkSpec s;
    s.widths = cfg.widths;
    s.bottleneck_convs = cfg.bottleneck_convs;
    s.output_channels = static_cast<int>(cfg.labels.size());
    s.learning_rate = cfg.learning_rate;
    s.target_gain = cfg.target_gain;
    s.seed = derive_seed(cfg.seed, kInitStream);
    return s;
}

synth::SpineModel spine_model(const PipelineConfig& cfg) {
    synth::SpineModel m;
    m.labels = cfg.labels;
    m.nominal_spacing_mm = cfg.nominal_spacing_mm;
    m.spacing_jitter = cfg.spacing_jitter;
    m.first_position_mm = cfg.first_position_mm;
    m.global_jitter_mm = cfg.global_jitter_mm;
    std::copy_n(cfg.lateral_coeffs.begin(), 3, m.lateral_coeffs.begin());
    std::copy_n(cfg.sagittal_coeffs.begin(), 3, m.sagittal_coeffs.begin());
    m.curvature_jitter_mm = cfg.curvature_jitter_mm;
    m.jitter_mm = cfg.jitter_mm;
    m.fov_min_z_mm = cfg.fov_min_z_mm;
    m.fov_max_z_mm = cfg.fov_max_z_mm;
    m.seed = derive_seed(cfg.seed, kSpineStream);
    return m;
}

Volume3D volume_template(const PipelineConfig& cfg) {
    return Volume3D(cfg.dims, {cfg.spacing_mm, cfg.spacing_mm, cfg.spacing_mm});
}

mp::GraphOptions graph_options(const PipelineConfig& cfg) {
    mp::GraphOptions o;
    o.alpha = cfg.alpha;
    o.iterations = cfg.iterations;
    o.smoothing_sigma = cfg.kernel_smoothing_sigma;
    if (cfg.kernel_half_width > 0) o.half_width = Index3{cfg.kernel_half_width, cfg.kernel_half_width, cfg.kernel_half_width};
    return o;
}

sparse::RefineOptions refine_options(const PipelineConfig& cfg) {
    sparse::RefineOptions o;
    if (cfg.lambda >= 0.0) o.lambda = cfg.lambda;
    o.lambda_ratio = cfg.lambda_ratio;
    o.z_descending = cfg.z_descending;
    return o;
}

eval::RegionMap region_map(const PipelineConfig& cfg) { return cfg.region_overrides; }

LandmarkSet stack_to_landmarks(const HeatmapStack& stack, const std::vector<std::string>& present) {
    stack.validate();
    std::vector<Landmark> out;
    for (std::size_t c = 0; c < stack.size(); ++c) {
        const auto& ch = stack.channels[c];
        Landmark lm;
        lm.label = stack.labels[c];
        lm.position = voxel_to_world(argmax_location(ch).index, ch);
        lm.present = contains(present, lm.label);
        out.push_back(std::move(lm));
    }
    return LandmarkSet(std::move(out));
}

std::vector<std::string> fill_gaps(const std::vector<std::string>& labels, const std::vector<std::string>& present) {
    std::optional<std::size_t> first, last;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (contains(present, labels[i])) {
            if (!first) first = i;
            last = i;
        }
    std::vector<std::string> out;
    if (!first) return out;
    for (std::size_t i = *first; i <= *last; ++i) out.push_back(labels[i]);
    return out;
}

CorruptionPlan standard_corruption(const LandmarkSet& truth, const Volume3D& geometry, double gap_mm,
                                   std::uint64_t seed) {
    const auto& e = truth.entries();
    std::vector<std::size_t> interior, present;
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (!e[i].present) continue;
        present.push_back(i);
        if (i > 0 && i + 1 < e.size() && e[i - 1].present && e[i + 1].present) interior.push_back(i);
    }
    CorruptionPlan plan;
    if (interior.empty() || present.size() < 3) return plan;
    Rng rng(seed);
    const std::size_t dropped = interior[rng.below(interior.size())];
    plan.drop.push_back(e[dropped].label);

    std::vector<std::size_t> pool;
    for (std::size_t i : present)
        if (i != dropped) pool.push_back(i);
    const double z_lo = geometry.origin().z;
    const double z_hi = z_lo + geometry.spacing().z * (geometry.dims().nz - 1);
    for (double amplitude : {1.5, 4.0}) {
        const std::size_t pick = rng.below(pool.size());
        const std::size_t i = pool[pick];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
        Vec3 p = e[i].position;
        const double up = p.z + 3.0 * gap_mm, down = p.z - 3.0 * gap_mm;
        p.z = z_hi - up >= down - z_lo ? std::min(up, z_hi) : std::max(down, z_lo);
        plan.inject.push_back({e[i].label, p, amplitude});
    }
    return plan;
}

Artifacts load_artifacts(const PipelineConfig& cfg) {
    Artifacts a;
    a.model = net::read_model(cfg.model_path());
    a.graph = mp::read_kernel_bundle(cfg.kernels_path());
    a.dictionary = sparse::read_dictionary(cfg.dictionary_path('x'), cfg.dictionary_path('y'), cfg.dictionary_path('z'));
    if (a.model.labels != cfg.labels || a.graph.nodes != cfg.labels || a.dictionary.labels != cfg.labels)
        throw ConfigError("model, kernel bundle and dictionary labels must match the configured labels");
    // Run-time hyperparameters come from the config, not from the bundle.
    a.graph.alpha = cfg.alpha;
    a.graph.iterations = cfg.iterations;
    return a;
}

StageResult run_stages(const Artifacts& art, const Volume3D& volume, const PipelineConfig& cfg,
                       const CorruptionPlan* corruption) {
    StageResult r;
    r.net_maps = net::predict(art.model.spec, art.model.params, volume, art.model.labels);
    if (corruption)
        r.net_maps = synth::corrupt_stack(r.net_maps, corruption->drop, corruption->inject, cfg.sigma_mm);
    const auto present = eval::detect_presence(r.net_maps, cfg.presence_threshold);
    r.net = stack_to_landmarks(r.net_maps, present);

    auto passed = mp::run_passing(mp::to_probability_maps(r.net_maps), art.graph);
    r.mp_maps = std::move(passed.maps);
    std::vector<std::string> mp_present;
    for (const auto& l : fill_gaps(art.model.labels, present))
        if (!passed.flagged[*r.mp_maps.index_of(l)]) mp_present.push_back(l);
    r.mp = stack_to_landmarks(r.mp_maps, mp_present);

    const auto refined = sparse::refine(r.mp, art.dictionary, refine_options(cfg));
    r.refined = refined.landmarks;
    r.refine_skipped = refined.skipped;
    return r;
}

void write_stack(const HeatmapStack& stack, const fs::path& dir) {
    stack.validate();
    ensure_dir(dir);
    for (std::size_t c = 0; c < stack.size(); ++c) write_volume(stack.channels[c], dir / (stack.labels[c] + ".svh"));
}

HeatmapStack read_stack(const fs::path& dir, const std::vector<std::string>& labels) {
    HeatmapStack s;
    for (const auto& l : labels) {
        s.channels.push_back(read_volume(dir / (l + ".svh")));
        s.labels.push_back(l);
    }
    s.validate();
    return s;
}

std::string format_versions() {
    std::ostringstream os;
    os << "volume(.svh) " << kVolumeFormatVersion << '\n'
       << "model(.vnet) " << net::kModelFormatVersion << '\n'
       << "kernels(.vkb) " << mp::kKernelBundleVersion << '\n'
       << "dictionary(csv) " << sparse::kDictionaryFormatVersion << '\n';
    return os.str();
}

void cmd_synth(const PipelineConfig& cfg) {
    staged("synth", [&] {
        cfg.validate();
        const auto model = spine_model(cfg);
        const auto templ = volume_template(cfg);
        const fs::path data = cfg.out_dir / "data";
        for (const char* split : {"train", "test"}) {
            const bool train = split[1] == 'r';
            const int n = train ? cfg.n_train : cfg.n_test;
            const std::uint64_t base = train ? 0 : 1'000'000;
            ensure_dir(data / split);
            std::vector<synth::DatasetEntry> entries;
            for (int i = 0; i < n; ++i) {
                const std::uint64_t id = base + static_cast<std::uint64_t>(i);
                const auto lm = synth::sample_spine(model, derive_seed(model.seed, id));
                const auto vol = synth::render_volume(lm, templ, cfg.blob_sigma_mm, cfg.noise_sigma,
                                                      derive_seed(derive_seed(cfg.seed, kRenderStream), id));
                char stem[32];
                std::snprintf(stem, sizeof stem, "case_%04d", i);
                const fs::path rel = fs::path(split) / stem;
                write_volume(vol, data / (rel.string() + ".svh"));
                write_landmarks_csv(lm, data / (rel.string() + ".csv"));
                entries.push_back({rel.string() + ".svh", rel.string() + ".csv"});
            }
            synth::write_manifest(entries, data / (std::string(split) + "_manifest.csv"));
        }
        std::ofstream spine = open_out(data / "spine_model.cfg");
        for (const char* key : {"labels", "spine.nominal_spacing_mm", "spine.spacing_jitter", "spine.first_position_mm",
                                "spine.global_jitter_mm", "spine.lateral_coeffs", "spine.sagittal_coeffs",
                                "spine.curvature_jitter_mm", "spine.jitter_mm", "spine.fov_min_z_mm",
                                "spine.fov_max_z_mm", "seed"}) {
            const std::string dump = dump_config(cfg);
            const std::string needle = std::string("\n") + key + " = ";
            const auto at = dump.find(needle);
            spine << dump.substr(at + 1, dump.find('\n', at + 1) - at) ;
        }
        write_effective_config(cfg);
    });
}

void cmd_train(const PipelineConfig& cfg) {
    staged("train", [&] {
        cfg.validate();
        const auto samples = load_samples(cfg.train_manifest_path());
        const auto spec = network_spec(cfg);
        net::TrainOptions opt;
        opt.epochs = cfg.epochs;
        opt.batch_size = cfg.batch_size;
        opt.sigma_mm = cfg.sigma_mm;
        const auto result = net::train(spec, samples, cfg.labels, opt, nullptr, [](int epoch, double loss) {
            std::clog << "epoch " << epoch << " loss " << format_double(loss) << '\n';
        });
        ensure_dir(cfg.out_dir);
        net::write_model({spec, cfg.labels, result.params}, cfg.model_path());
        net::write_training_log(result.epoch_loss, cfg.out_dir / "train_log.csv");
        write_effective_config(cfg);
    });
}

void cmd_learn_kernels(const PipelineConfig& cfg) {
    staged("learn-kernels", [&] {
        cfg.validate();
        const auto sets = landmarks_of(load_samples(cfg.train_manifest_path()));
        const Vec3 spacing{cfg.spacing_mm, cfg.spacing_mm, cfg.spacing_mm};
        const auto graph = mp::learn_chain_graph(sets, cfg.labels, spacing, graph_options(cfg));
        ensure_dir(cfg.out_dir);
        mp::write_kernel_bundle(graph, cfg.kernels_path());
        const auto dict = sparse::build_dictionary(sets, cfg.labels);
        ensure_dir(cfg.dictionary_path('x').parent_path());
        sparse::write_dictionary(dict, cfg.dictionary_path('x'), cfg.dictionary_path('y'), cfg.dictionary_path('z'));
        write_effective_config(cfg);
    });
}

StageResult cmd_infer(const PipelineConfig& cfg, const fs::path& volume) {
    return staged("infer", [&] {
        cfg.validate();
        const auto art = load_artifacts(cfg);
        const auto vol = read_volume(volume);
        auto r = run_stages(art, vol, cfg);
        const fs::path dir = cfg.out_dir / "infer" / volume.stem();
        write_stack(r.net_maps, dir / "net");
        write_landmarks_csv(r.net, dir / "net_landmarks.csv");
        if (cfg.message_passing) {
            write_stack(r.mp_maps, dir / "mp");
            write_landmarks_csv(r.mp, dir / "mp_landmarks.csv");
        }
        write_landmarks_csv(cfg.message_passing ? r.mp : r.net, dir / "landmarks.csv");
        return r;
    });
}

LandmarkSet cmd_refine(const PipelineConfig& cfg, const fs::path& landmarks) {
    return staged("refine", [&] {
        cfg.validate();
        const auto dict =
            sparse::read_dictionary(cfg.dictionary_path('x'), cfg.dictionary_path('y'), cfg.dictionary_path('z'));
        const auto raw = read_landmarks_csv(landmarks);
        const auto result = sparse::refine(raw, dict, refine_options(cfg));
        if (result.skipped) std::clog << "refine: fewer than two present landmarks, output equals input\n";
        const fs::path out = cfg.out_dir / "refine" / (landmarks.stem().string() + "_refined.csv");
        ensure_dir(out.parent_path());
        write_landmarks_csv(result.landmarks, out);
        return result.landmarks;
    });
}

namespace {

void write_case_errors(const std::vector<eval::EvalReport>& reports, const fs::path& path) {
    auto os = open_out(path);
    os << "case,method,label,error_mm,identified\n";
    for (const auto& rep : reports)
        for (std::size_t c = 0; c < rep.cases.size(); ++c) {
            const auto& cs = rep.cases[c];
            for (const auto& id : cs.ids) {
                const auto it = std::find_if(cs.errors.begin(), cs.errors.end(),
                                             [&](const eval::LabelError& e) { return e.label == id.label; });
                os << c << ',' << rep.method << ',' << id.label << ','
                   << (it != cs.errors.end() ? format_double(it->error_mm) : std::string("NA")) << ','
                   << (id.identified ? 1 : 0) << '\n';
            }
        }
}

std::vector<eval::EvalReport> eval_predictions(const PipelineConfig& cfg, const fs::path& manifest) {
    std::ifstream is(manifest);
    if (!is) throw IoError(IoError::Kind::Open, "cannot open " + manifest.string());
    std::string line;
    if (!std::getline(is, line) || trim(line) != "prediction,ground_truth")
        throw IoError(IoError::Kind::MalformedHeader, manifest.string() + ": expected header 'prediction,ground_truth'");
    std::vector<eval::CaseScore> cases;
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        const auto f = split(trim(line), ',');
        if (f.size() != 2) throw IoError(IoError::Kind::MalformedHeader, manifest.string() + ": expected 2 columns");
        auto resolve = [&](std::string_view s) {
            fs::path p{std::string(trim(s))};
            return p.is_relative() ? manifest.parent_path() / p : p;
        };
        cases.push_back(eval::score_case(read_landmarks_csv(resolve(f[0])), read_landmarks_csv(resolve(f[1])),
                                         cfg.id_radius_mm));
    }
    return {eval::region_report(cases, "provided", region_map(cfg))};
}

} // namespace

std::vector<eval::EvalReport> cmd_eval(const PipelineConfig& cfg, const std::optional<fs::path>& predictions) {
    return staged("eval", [&] {
        cfg.validate();
        std::vector<eval::EvalReport> reports;
        if (predictions) {
            reports = eval_predictions(cfg, *predictions);
        } else {
            const auto art = load_artifacts(cfg);
            const auto cases = load_samples(cfg.test_manifest_path());
            std::vector<eval::CaseScore> net_scores, mp_scores, sparse_scores;
            for (std::size_t i = 0; i < cases.size(); ++i) {
                const auto& c = cases[i];
                std::optional<CorruptionPlan> plan;
                if (cfg.corruption == "standard")
                    plan = standard_corruption(c.landmarks, c.volume, cfg.nominal_spacing_mm,
                                               derive_seed(derive_seed(cfg.seed, kCorruptionStream), i));
                const auto r = run_stages(art, c.volume, cfg, plan ? &*plan : nullptr);
                net_scores.push_back(eval::score_case(r.net, c.landmarks, cfg.id_radius_mm));
                mp_scores.push_back(eval::score_case(r.mp, c.landmarks, cfg.id_radius_mm));
                sparse_scores.push_back(eval::score_case(r.refined, c.landmarks, cfg.id_radius_mm));
            }
            const auto regions = region_map(cfg);
            reports = {eval::region_report(net_scores, "DI2IN", regions),
                       eval::region_report(mp_scores, "DI2IN+MP", regions),
                       eval::region_report(sparse_scores, "DI2IN+MP+Sparsity", regions)};
        }
        const fs::path dir = cfg.out_dir / "eval";
        ensure_dir(dir);
        eval::write_report_csv(reports, dir / "report.csv");
        eval::write_error_plot_svg(reports, cfg.labels, dir / "errors.svg");
        write_case_errors(reports, dir / "case_errors.csv");
        return reports;
    });
}

} // namespace vloc::pipeline
