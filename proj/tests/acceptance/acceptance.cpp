// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: vloc_acceptance <work_dir>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "unit/oracles.hpp"
#include "vloc/message_passing.hpp"
#include "vloc/network.hpp"
#include "vloc/pipeline.hpp"
#include "vloc/rng.hpp"
#include "vloc/sparse_refine.hpp"
#include "vloc/synth.hpp"
#include "vloc/trainer.hpp"
#include "vloc/volume_io.hpp"

namespace fs = std::filesystem;
using namespace vloc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

template <class... T>
std::string fmt(const char* f, T... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------- 1: gradients

// (L(a) - L(b)) for two forward results, summed per voxel as (a-b)(a+b-2t) so
// that the large common part of the two losses never has to cancel.
double loss_difference(const net::Tensor& a, const net::Tensor& b, const net::Tensor& t) {
    const std::size_t n = a.voxels();
    double total = 0.0;
    for (int c = 0; c < a.channels(); ++c) {
        const auto x = a.channel(c), y = b.channel(c), z = t.channel(c);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += (x[i] - y[i]) * ((x[i] - z[i]) + (y[i] - z[i]));
        total += s / static_cast<double>(n);
    }
    return total;
}

double loss_difference(const net::ForwardOutput& a, const net::ForwardOutput& b, const net::Tensor& t) {
    double d = loss_difference(a.final, b.final, t);
    for (std::size_t i = 0; i < a.branches.size(); ++i) d += loss_difference(a.branches[i], b.branches[i], t);
    return d;
}

Outcome gradient_check() {
    const auto t0 = Clock::now();
    net::NetworkSpec spec;
    spec.output_channels = 2;
    net::NetworkParams params = net::init_params(spec);
    const Dims d{8, 8, 8};
    net::Tensor input(1, d), target(2, d);
    Rng rng(2024);
    for (double& v : input.data()) v = rng.uniform();
    for (double& v : target.data()) v = rng.uniform();

    net::NetworkParams grad;
    net::loss_and_gradient(spec, params, input, target, grad);
    double gmax = 0.0;
    for (const auto& L : grad.layers) {
        for (double g : L.weights) gmax = std::max(gmax, std::abs(g));
        for (double g : L.bias) gmax = std::max(gmax, std::abs(g));
    }
    // Components smaller than this are compared at absolute precision; the
    // forward pass itself is only accurate to about 1e-16 of the output scale.
    const double floor = 1e-7 * std::max(gmax, 1.0);

    const double h = 1e-6;
    double worst = 0.0, worst_unfloored = 0.0;
    std::size_t checked = 0, below_floor = 0;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        for (int part = 0; part < 2; ++part) {
            auto& p = part ? params.layers[l].bias : params.layers[l].weights;
            const auto& g = part ? grad.layers[l].bias : grad.layers[l].weights;
            for (std::size_t j = 0; j < p.size(); ++j) {
                const double w = p[j];
                p[j] = w + h;
                const auto up = net::forward(spec, params, input);
                p[j] = w - h;
                const auto down = net::forward(spec, params, input);
                p[j] = w;
                const double fd = loss_difference(up, down, target) / (2.0 * h);
                const double diff = std::abs(fd - g[j]);
                const double mag = std::max(std::abs(fd), std::abs(g[j]));
                worst = std::max(worst, diff / std::max(mag, floor));
                worst_unfloored = std::max(worst_unfloored, test::relative_error(g[j], fd));
                below_floor += mag < floor;
                ++checked;
            }
        }
    }
    const double sec = seconds_since(t0);
    const bool ok = checked == params.parameter_count() && worst < 1e-4 && sec < 60.0;
    return {ok, fmt("%zu params, max rel err %.3g (floor %.2g, %zu below; with floor 1e-8: %.3g), %.1f s", checked,
                    worst, floor, below_floor, worst_unfloored, sec)};
}

// ---------------------------------------------------------------- 2: conv oracle

Outcome conv_oracle() {
    Rng rng(7);
    double worst = 0.0;
    for (int c = 0; c < 50; ++c) {
        const int size = std::array{1, 3, 5}[rng.below(3)];
        net::ConvKernel k(1 + static_cast<int>(rng.below(6)), 1 + static_cast<int>(rng.below(6)), size);
        for (double& w : k.weights) w = rng.uniform(-1, 1);
        for (double& b : k.bias) b = rng.uniform(-1, 1);
        const Dims d{1 + static_cast<int>(rng.below(17)), 1 + static_cast<int>(rng.below(9)),
                     1 + static_cast<int>(rng.below(9))};
        net::Tensor in(k.in_channels, d);
        for (double& v : in.data()) v = rng.uniform(-2, 2);
        worst = std::max(worst, test::max_abs_diff(net::conv3d_forward(in, k), test::naive_conv(in, k)));
    }
    return {worst <= 1e-6, fmt("50 cases, max abs diff %.3g", worst)};
}

// ---------------------------------------------------------------- 3, 9, 10: pipeline

struct PipelineRun {
    PipelineConfig cfg;
    double train_seconds = 0.0;
};

PipelineConfig pipeline_config(const fs::path& work) {
    PipelineConfig cfg;
    cfg.out_dir = work / "pipeline";
    return cfg;
}

Outcome overfit_and_heldout(const fs::path& work, PipelineRun& run) {
    const auto t0 = Clock::now();

    // one volume
    const auto model = synth::desk_model();
    const Volume3D templ = synth::desk_template();
    const auto lm = synth::sample_spine(model, 11);
    const std::vector<net::Sample> one{{synth::render_volume(lm, templ, 5.0, 0.02, 12), lm}};
    net::NetworkSpec spec;
    net::TrainOptions opt;
    opt.epochs = 50;
    const auto fit = net::train(spec, one, model.labels, opt);
    const net::Tensor target = net::make_target(lm, model.labels, opt.sigma_mm, templ, spec.target_gain);
    const auto out = net::forward(spec, fit.params, net::to_tensor(one[0].volume));
    const double initial = fit.epoch_loss.front();
    const double final_loss = net::loss_total(out.branches, out.final, target);
    const double drop = initial / final_loss;

    // 50 volumes
    run.cfg = pipeline_config(work);
    fs::remove_all(run.cfg.out_dir);
    pipeline::cmd_synth(run.cfg);
    pipeline::cmd_train(run.cfg);
    const auto model_file = net::read_model(run.cfg.model_path());
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& e : synth::read_manifest(run.cfg.test_manifest_path())) {
        const Volume3D vol = read_volume(e.volume);
        const LandmarkSet gt = read_landmarks_csv(e.landmarks);
        const HeatmapStack maps = net::predict(model_file.spec, model_file.params, vol, model_file.labels);
        for (std::size_t c = 0; c < maps.size(); ++c) {
            const Landmark* g = gt.find(maps.labels[c]);
            if (!g || !g->present) continue;
            sum += distance(voxel_to_world(argmax_location(maps.channels[c]).index, vol), g->position);
            ++n;
        }
    }
    const double mean = n ? sum / static_cast<double>(n) : INFINITY;
    run.train_seconds = seconds_since(t0);
    const bool ok = drop >= 100.0 && mean <= 8.0 && run.train_seconds < 900.0;
    return {ok, fmt("single-volume loss %.4g -> %.4g (%.0fx); held-out mean error %.2f mm over %zu; %.0f s", initial,
                    final_loss, drop, mean, n, run.train_seconds)};
}

Outcome ablation(PipelineRun& run) {
    pipeline::cmd_learn_kernels(run.cfg);
    const auto reports = pipeline::cmd_eval(run.cfg);
    if (reports.size() != 3) return {false, "expected three stage reports"};
    std::ostringstream os;
    bool ok = true;
    double prev = INFINITY;
    for (const auto& r : reports) {
        const auto& all = r.region(Region::All);
        if (!all.mean_mm) return {false, r.method + " has no errors"};
        ok = ok && *all.mean_mm <= prev;
        prev = *all.mean_mm;
        os << (os.tellp() ? ", " : "") << r.method << fmt(" %.2f mm", *all.mean_mm);
    }
    return {ok, os.str()};
}

Outcome throughput(PipelineRun& run) {
    const auto cases = synth::read_manifest(run.cfg.test_manifest_path());
    if (cases.empty()) return {false, "no test volume"};
    auto cfg = run.cfg;
    cfg.corruption = "none";
    const auto t0 = Clock::now();
    const auto r = pipeline::cmd_infer(cfg, cases.front().volume);
    const double sec = seconds_since(t0);
    const auto d = read_volume(cases.front().volume).dims();
    const bool ok = sec < 30.0 && r.refined.size() == 12 && d == (Dims{16, 16, 48});
    return {ok, fmt("%dx%dx%d, M=%zu, infer+MP+refine %.2f s", d.nx, d.ny, d.nz, r.refined.size(), sec)};
}

// ---------------------------------------------------------------- 4, 5: message passing

struct MpSetup {
    synth::SpineModel model = synth::desk_model();
    Volume3D templ = synth::desk_template();
    mp::ChainGraph graph;
    double sigma = 12.0;
};

MpSetup mp_setup() {
    MpSetup s;
    std::vector<LandmarkSet> train;
    for (std::uint64_t i = 0; i < 20; ++i) train.push_back(synth::sample_spine(s.model, derive_seed(91, i)));
    mp::GraphOptions opt;
    opt.alpha = 0.5;
    opt.iterations = 3;
    s.graph = mp::learn_chain_graph(train, s.model.labels, s.templ.spacing(), opt);
    return s;
}

HeatmapStack truth_maps(const LandmarkSet& lm, const MpSetup& s) {
    HeatmapStack st;
    for (const auto& l : lm.entries()) {
        st.labels.push_back(l.label);
        st.channels.push_back(make_gaussian_heatmap(l.position, s.sigma, s.templ));
    }
    return st;
}

int chebyshev(Index3 a, Index3 b) { return std::max({std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.z - b.z)}); }

Outcome mp_repair(const MpSetup& s) {
    int ok = 0;
    const auto m = s.model.labels.size();
    for (std::uint64_t t = 0; t < 100; ++t) {
        const auto lm = synth::sample_spine(s.model, derive_seed(92, t));
        const std::size_t c = 1 + t % (m - 2);
        const auto maps = synth::corrupt_stack(truth_maps(lm, s), {s.model.labels[c]}, {}, s.sigma);
        const auto r = mp::run_passing(mp::to_probability_maps(maps), s.graph);
        const Index3 got = argmax_location(r.maps.channels[c]).index;
        ok += chebyshev(got, nearest_voxel(lm.entries()[c].position, s.templ)) <= 1;
    }
    return {ok >= 95, fmt("%d/100 zeroed channels restored within 1 voxel", ok)};
}

Outcome mp_suppression(const MpSetup& s) {
    int ok = 0, exact = 0;
    const auto m = s.model.labels.size();
    const double z_lo = s.templ.origin().z, z_hi = z_lo + s.templ.spacing().z * (s.templ.dims().nz - 1);
    for (std::uint64_t t = 0; t < 100; ++t) {
        const auto lm = synth::sample_spine(s.model, derive_seed(93, t));
        const std::size_t c = t % m;
        const Vec3 p = lm.entries()[c].position;
        // three gaps away, towards whichever end has room
        const double dz = 3.0 * s.model.nominal_spacing_mm;
        const double z = p.z + dz <= z_hi ? p.z + dz : std::max(p.z - dz, z_lo);
        const auto maps = synth::corrupt_stack(truth_maps(lm, s), {}, {{s.model.labels[c], {p.x, p.y, z}, 0.8}}, s.sigma);
        const auto r = mp::run_passing(mp::to_probability_maps(maps), s.graph);
        // the injection sits about ten voxels away; fusion may move the true peak by one
        const int d = chebyshev(argmax_location(r.maps.channels[c]).index, nearest_voxel(p, s.templ));
        ok += d <= 1;
        exact += d == 0;
    }
    return {ok >= 95, fmt("%d/100 maxima within 1 voxel of the truth (%d exact)", ok, exact)};
}

// ---------------------------------------------------------------- 6: LASSO

struct Brute {
    double objective = INFINITY;
    std::vector<double> a;
};

// Every support of size <= 2 with every sign pattern; the stationary point of
// the sign-fixed quadratic is kept when its signs agree.
Brute brute_force_small_support(const sparse::Matrix& D, const std::vector<double>& v, double lambda) {
    const std::size_t n = D.cols();
    Brute best;
    auto consider = [&](const std::vector<double>& a) {
        const double f = sparse::lasso_objective(D, v, a, lambda);
        if (f < best.objective) best = {f, a};
    };
    consider(std::vector<double>(n, 0.0));
    auto col_dot = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t r = 0; r < D.rows(); ++r) s += D(r, i) * D(r, j);
        return s;
    };
    auto col_v = [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t r = 0; r < D.rows(); ++r) s += D(r, i) * v[r];
        return s;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (double si : {-1.0, 1.0}) {
            const double ai = (col_v(i) - lambda * si) / col_dot(i, i);
            if (ai * si <= 0) continue;
            std::vector<double> a(n, 0.0);
            a[i] = ai;
            consider(a);
        }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            for (double si : {-1.0, 1.0})
                for (double sj : {-1.0, 1.0}) {
                    const double g11 = col_dot(i, i), g12 = col_dot(i, j), g22 = col_dot(j, j);
                    const double det = g11 * g22 - g12 * g12;
                    if (std::abs(det) < 1e-12 * g11 * g22) continue;
                    const double b1 = col_v(i) - lambda * si, b2 = col_v(j) - lambda * sj;
                    const double ai = (g22 * b1 - g12 * b2) / det, aj = (g11 * b2 - g12 * b1) / det;
                    if (ai * si <= 0 || aj * sj <= 0) continue;
                    std::vector<double> a(n, 0.0);
                    a[i] = ai;
                    a[j] = aj;
                    consider(a);
                }
    return best;
}

Outcome lasso_certification() {
    Rng rng(61);
    int instances = 0, drawn = 0;
    double worst_kkt = 0.0, worst_gap = 0.0;
    while (instances < 100) {
        ++drawn;
        const std::size_t rows = 3 + rng.below(6), cols = 1 + rng.below(5);
        sparse::Matrix D(rows, cols);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) D(r, c) = rng.normal();
        std::vector<double> v(rows);
        for (double& x : v) x = rng.normal();
        const double lambda = rng.uniform(0.05, 3.0);
        // Only instances whose optimum provably has support <= 2 count: the
        // brute-force candidate must itself satisfy the optimality conditions.
        const Brute b = brute_force_small_support(D, v, lambda);
        if (sparse::lasso_kkt_residual(D, v, b.a, lambda) > 1e-9) continue;
        const auto code = sparse::lasso_solve(D, v, lambda);
        worst_kkt = std::max(worst_kkt, sparse::lasso_kkt_residual(D, v, code.a, lambda));
        worst_gap = std::max(worst_gap, std::abs(sparse::lasso_objective(D, v, code.a, lambda) - b.objective));
        ++instances;
    }
    return {worst_kkt <= 1e-6 && worst_gap <= 1e-8,
            fmt("100 instances (%d drawn), max KKT %.3g, max objective gap %.3g", drawn, worst_kkt, worst_gap)};
}

// ---------------------------------------------------------------- 7: subsequence DP

Outcome subsequence_dp() {
    Rng rng(71);
    int mismatches = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t m = rng.below(13);
        std::vector<double> v(m);
        // small integer range so that ties and equal runs are common
        for (double& x : v) x = static_cast<double>(rng.below(8));
        std::vector<int> best;
        for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
            std::vector<int> idx;
            for (std::size_t i = 0; i < m; ++i)
                if (mask >> i & 1u) idx.push_back(static_cast<int>(i));
            bool dec = true;
            for (std::size_t i = 1; i < idx.size() && dec; ++i) dec = v[idx[i - 1]] - v[idx[i]] > 1e-9;
            if (!dec) continue;
            if (idx.size() > best.size() || (idx.size() == best.size() && idx < best)) best = idx;
        }
        mismatches += sparse::max_descending_subsequence(v) != best;
    }
    return {mismatches == 0, fmt("1000 vectors, %d mismatches", mismatches)};
}

// ---------------------------------------------------------------- 8: refinement

double max_error(const LandmarkSet& a, const LandmarkSet& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, distance(a.entries()[i].position, b.entries()[i].position));
    return m;
}

// Mean max error before / after refinement with a 40 mm outlier on `axis`
// (0 x, 1 y, 2 z; -1 picks x or y at random).
double refinement_ratio(const sparse::ShapeDictionary& dict, const synth::SpineModel& model, int axis, double& before_mm,
                        double& after_mm) {
    Rng rng(82);
    double before = 0.0, after = 0.0;
    for (std::uint64_t t = 0; t < 100; ++t) {
        const auto truth = synth::sample_spine(model, derive_seed(83, t));
        LandmarkSet pred = truth;
        for (auto& l : pred.entries())
            l.position = l.position + Vec3{rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)};
        auto& out = pred.entries()[rng.below(pred.size())].position;
        const double shift = rng.uniform() < 0.5 ? -40.0 : 40.0;
        const int a = axis >= 0 ? axis : static_cast<int>(rng.below(2));
        (a == 0 ? out.x : a == 1 ? out.y : out.z) += shift;
        before += max_error(pred, truth);
        after += max_error(sparse::refine(pred, dict).landmarks, truth);
    }
    before_mm = before / 100;
    after_mm = after / 100;
    return before / after;
}

// Outliers go along z, the axis the subsequence filter screens. x/y outliers
// are reported alongside; only the fit can absorb those.
Outcome refinement_effect() {
    const auto model = synth::desk_model();
    std::vector<LandmarkSet> train;
    for (std::uint64_t i = 0; i < 50; ++i) train.push_back(synth::sample_spine(model, derive_seed(81, i)));
    const auto dict = sparse::build_dictionary(train, model.labels);
    double b = 0, a = 0, bxy = 0, axy = 0;
    const double ratio = refinement_ratio(dict, model, 2, b, a);
    const double ratio_xy = refinement_ratio(dict, model, -1, bxy, axy);
    return {ratio >= 4.0, fmt("z outliers: mean max error %.2f -> %.2f mm (%.1fx); x/y outliers: %.2f -> %.2f mm (%.2fx)",
                              b, a, ratio, bxy, axy, ratio_xy)};
}

} // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: vloc_acceptance <work_dir>\n";
        return 2;
    }
    const fs::path work = argv[1];
    fs::create_directories(work);
    std::clog.setstate(std::ios::failbit); // pipeline progress lines

    PipelineRun run;
    bool pipeline_ok = false;
    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient check", gradient_check},
        {"conv oracle", conv_oracle},
        {"overfit sanity",
         [&] {
             auto o = overfit_and_heldout(work, run);
             pipeline_ok = true;
             return o;
         }},
        {"mp repair", [] { return mp_repair(mp_setup()); }},
        {"mp suppression", [] { return mp_suppression(mp_setup()); }},
        {"lasso certification", lasso_certification},
        {"subsequence dp", subsequence_dp},
        {"refinement effect", refinement_effect},
        {"ablation monotone",
         [&]() -> Outcome { return pipeline_ok ? ablation(run) : Outcome{false, "pipeline did not run"}; }},
        {"throughput", [&]() -> Outcome { return pipeline_ok ? throughput(run) : Outcome{false, "pipeline did not run"}; }},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    return failed ? 1 : 0;
}
