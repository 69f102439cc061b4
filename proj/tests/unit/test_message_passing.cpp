#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vloc/errors.hpp"
#include "vloc/message_passing.hpp"

namespace vloc {
namespace {

using mp::ChainGraph;
using mp::Kernel3D;

LandmarkSet pair_set(Vec3 a, Vec3 b) {
    return LandmarkSet({{"A", a, true, false}, {"B", b, true, false}});
}

Kernel3D delta_kernel(Index3 half, Index3 offset) {
    Kernel3D k(half);
    k.at_offset(offset) = 1.0;
    return k;
}

Kernel3D random_kernel(Index3 half, std::uint64_t seed) {
    Kernel3D k(half);
    Rng rng(seed);
    double s = 0.0;
    for (double& w : k.weights) s += (w = rng.uniform());
    for (double& w : k.weights) w /= s;
    return k;
}

Volume3D normalized(Volume3D v) {
    const double s = v.sum();
    for (double& x : v.data()) x /= s;
    return v;
}

ChainGraph chain(std::vector<std::string> nodes, double alpha, int iterations, Index3 half, std::uint64_t seed) {
    ChainGraph g;
    g.nodes = std::move(nodes);
    g.alpha = alpha;
    g.iterations = iterations;
    for (int i = 0; i + 1 < static_cast<int>(g.nodes.size()); ++i) {
        g.kernels[{i, i + 1}] = random_kernel(half, seed + 2 * i);
        g.kernels[{i + 1, i}] = random_kernel(half, seed + 2 * i + 1);
    }
    return g;
}

HeatmapStack random_stack(const std::vector<std::string>& labels, Dims d, std::uint64_t seed) {
    HeatmapStack s;
    s.labels = labels;
    for (std::size_t i = 0; i < labels.size(); ++i)
        s.channels.push_back(normalized(test::random_volume(d, seed + i, 0.0, 1.0)));
    return s;
}

// Straight transcription of the update: out(q) = sum_p src(p) k(q - p).
Volume3D message_oracle(const Volume3D& src, const Kernel3D& k) {
    Volume3D out = Volume3D::zeros_like(src);
    const Dims d = src.dims();
    for (int qz = 0; qz < d.nz; ++qz)
        for (int qy = 0; qy < d.ny; ++qy)
            for (int qx = 0; qx < d.nx; ++qx)
                for (int pz = 0; pz < d.nz; ++pz)
                    for (int py = 0; py < d.ny; ++py)
                        for (int px = 0; px < d.nx; ++px) {
                            const Index3 off{qx - px, qy - py, qz - pz};
                            if (k.contains_offset(off)) out.at(qx, qy, qz) += src.at(px, py, pz) * k.at_offset(off);
                        }
    return out;
}

HeatmapStack pass_oracle(const HeatmapStack& in, const ChainGraph& g) {
    HeatmapStack out = in;
    const int n = static_cast<int>(in.size());
    for (int i = 0; i < n; ++i) {
        std::vector<Volume3D> msgs;
        if (i > 0) msgs.push_back(message_oracle(in.channels[i - 1], g.kernels.at({i - 1, i})));
        if (i + 1 < n) msgs.push_back(message_oracle(in.channels[i + 1], g.kernels.at({i + 1, i})));
        Volume3D& o = out.channels[i];
        double z = 0.0;
        for (std::size_t v = 0; v < o.size(); ++v) {
            double m = 0.0;
            for (const auto& msg : msgs) m += msg[v];
            o[v] = g.alpha * m / static_cast<double>(msgs.size()) + in.channels[i][v];
            z += o[v];
        }
        for (double& x : o.data()) x /= z;
    }
    return out;
}

double max_diff(const Volume3D& a, const Volume3D& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

TEST(LearnKernel, SingleDisplacementGivesDelta) {
    const std::vector<LandmarkSet> train{pair_set({10, 10, 50}, {10, 14, 42})};
    const Kernel3D k = mp::learn_kernel(train, "A", "B", {4, 4, 4}, {3, 3, 3}, {.smoothing_sigma = 0.0});
    EXPECT_DOUBLE_EQ(k.at_offset({0, 1, -2}), 1.0);
    EXPECT_DOUBLE_EQ(k.sum(), 1.0);
    EXPECT_EQ(k.mode_offset(), (Index3{0, 1, -2}));
}

TEST(LearnKernel, TwoDisplacementsSplitMass) {
    const std::vector<LandmarkSet> train{pair_set({0, 0, 0}, {0, 0, -8}), pair_set({0, 0, 0}, {0, 0, -12})};
    const Kernel3D k = mp::learn_kernel(train, "A", "B", {4, 4, 4}, {1, 1, 4}, {.smoothing_sigma = 0.0});
    EXPECT_DOUBLE_EQ(k.at_offset({0, 0, -2}), 0.5);
    EXPECT_DOUBLE_EQ(k.at_offset({0, 0, -3}), 0.5);
}

TEST(LearnKernel, SmoothedKernelIsNormalized) {
    std::vector<LandmarkSet> train;
    Rng rng(3);
    for (int i = 0; i < 20; ++i) train.push_back(pair_set({0, 0, 0}, {rng.uniform(-4, 4), 0, -14 + rng.uniform(-2, 2)}));
    const Kernel3D k = mp::learn_kernel(train, "A", "B", {4, 4, 4}, {5, 5, 5}, {.smoothing_sigma = 1.0});
    EXPECT_NEAR(k.sum(), 1.0, 1e-12);
    for (double w : k.weights) EXPECT_GE(w, 0.0);
    EXPECT_NO_THROW(k.validate());
}

TEST(LearnKernel, OutOfSupportDisplacementIsClamped) {
    const std::vector<LandmarkSet> train{pair_set({0, 0, 0}, {0, 0, -40})};
    const Kernel3D k = mp::learn_kernel(train, "A", "B", {4, 4, 4}, {2, 2, 2}, {.smoothing_sigma = 0.0});
    EXPECT_DOUBLE_EQ(k.at_offset({0, 0, -2}), 1.0);
}

TEST(LearnKernel, ThrowsWithoutCoPresentPairs) {
    std::vector<LandmarkSet> train{pair_set({0, 0, 0}, {0, 0, -8})};
    train[0].entries()[1].present = false;
    EXPECT_THROW(mp::learn_kernel(train, "A", "B", {4, 4, 4}, {2, 2, 2}), InvalidArgument);
}

TEST(LearnKernel, DefaultHalfWidthCoversLongestEdge) {
    const std::vector<LandmarkSet> train{pair_set({0, 0, 0}, {0, 0, -14}), pair_set({0, 0, 0}, {0, 0, -18})};
    // 18 mm / 4 mm = 4.5 voxels, times 1.5 -> ceil(6.75) = 7
    EXPECT_EQ(mp::default_half_width(train, {"A", "B"}, {4, 4, 4}), (Index3{7, 7, 7}));
}

TEST(LearnKernel, ChainGraphHasMirroredEdges) {
    const std::vector<LandmarkSet> train{pair_set({0, 0, 0}, {4, 0, -8})};
    const ChainGraph g = mp::learn_chain_graph(train, {"A", "B"}, {4, 4, 4}, {.smoothing_sigma = 0.0});
    EXPECT_DOUBLE_EQ(g.kernel(0, 1).at_offset({1, 0, -2}), 1.0);
    EXPECT_DOUBLE_EQ(g.kernel(1, 0).at_offset({-1, 0, 2}), 1.0);
    EXPECT_NO_THROW(g.validate());
}

TEST(Kernel, ValidateRejectsBadKernels) {
    Kernel3D k = delta_kernel({1, 1, 1}, {0, 0, 0});
    EXPECT_NO_THROW(k.validate());
    k.weights[0] = -0.1;
    EXPECT_THROW(k.validate(), InvalidArgument);
    Kernel3D unnormalized(Index3{1, 1, 1});
    unnormalized.weights[3] = 0.5;
    EXPECT_THROW(unnormalized.validate(), InvalidArgument);
    Kernel3D even = delta_kernel({1, 1, 1}, {0, 0, 0});
    even.dims = {2, 3, 3};
    EXPECT_THROW(even.validate(), InvalidArgument);
}

TEST(ApplyMessage, DeltaMovesByKernelOffset) {
    Volume3D p({8, 8, 8}, {1, 1, 1});
    p.at(3, 3, 3) = 1.0;
    const Volume3D out = mp::apply_message(p, delta_kernel({2, 2, 2}, {1, 0, -2}));
    EXPECT_DOUBLE_EQ(out.at(4, 3, 1), 1.0);
    EXPECT_DOUBLE_EQ(out.sum(), 1.0);
}

TEST(ApplyMessage, InteriorMassIsConserved) {
    Volume3D p({10, 10, 10}, {1, 1, 1});
    Rng rng(5);
    for (int z = 2; z < 8; ++z)
        for (int y = 2; y < 8; ++y)
            for (int x = 2; x < 8; ++x) p.at(x, y, z) = rng.uniform();
    const Volume3D out = mp::apply_message(p, random_kernel({2, 2, 2}, 9));
    EXPECT_NEAR(out.sum(), p.sum(), 1e-12 * p.sum());
}

TEST(ApplyMessage, MatchesNestedLoopOracle) {
    for (int trial = 0; trial < 6; ++trial) {
        const Volume3D p = test::random_volume({6, 5, 7}, 100 + trial, 0.0, 1.0);
        const Index3 half{1 + trial % 2, 1, 1 + (trial / 2) % 3};
        const Kernel3D k = random_kernel(half, 200 + trial);
        EXPECT_LT(max_diff(mp::apply_message(p, k), message_oracle(p, k)), 1e-14) << "trial " << trial;
    }
}

TEST(PassOnce, TinyAlphaReturnsOwnMap) {
    const std::vector<std::string> labels{"A", "B", "C"};
    const HeatmapStack s = random_stack(labels, {6, 6, 6}, 7);
    const ChainGraph g = chain(labels, 1e-12, 1, {1, 1, 1}, 11);
    const auto r = mp::pass_once(s, g);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_LT(max_diff(r.maps.channels[i], s.channels[i]), 1e-12);
}

TEST(PassOnce, ConsistentDeltasAreAFixedPoint) {
    Volume3D a({8, 8, 8}, {1, 1, 1}), b({8, 8, 8}, {1, 1, 1});
    a.at(4, 4, 6) = 1.0;
    b.at(4, 5, 3) = 1.0;
    ChainGraph g;
    g.nodes = {"A", "B"};
    g.kernels[{0, 1}] = delta_kernel({3, 3, 3}, {0, 1, -3});
    g.kernels[{1, 0}] = delta_kernel({3, 3, 3}, {0, -1, 3});
    const HeatmapStack s{{a, b}, {"A", "B"}};
    g.iterations = 5;
    const auto r = mp::run_passing(s, g);
    EXPECT_DOUBLE_EQ(r.maps.channels[0].at(4, 4, 6), 1.0);
    EXPECT_DOUBLE_EQ(r.maps.channels[1].at(4, 5, 3), 1.0);
    EXPECT_FALSE(r.flagged[0] || r.flagged[1]);
}

TEST(PassOnce, MatchesScalarReferenceOnThreeNodeChain) {
    const std::vector<std::string> labels{"A", "B", "C"};
    const HeatmapStack s = random_stack(labels, {8, 8, 8}, 21);
    const ChainGraph g = chain(labels, 0.7, 1, {1, 1, 1}, 31);
    const auto r = mp::pass_once(s, g);
    const HeatmapStack ref = pass_oracle(s, g);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_LT(max_diff(r.maps.channels[i], ref.channels[i]), 1e-15);
}

TEST(PassOnce, RejectsMismatchedChannelOrder) {
    const HeatmapStack s = random_stack({"B", "A"}, {4, 4, 4}, 1);
    EXPECT_THROW(mp::pass_once(s, chain({"A", "B"}, 0.5, 1, {1, 1, 1}, 1)), InvalidArgument);
}

TEST(RunPassing, IteratesPassOnce) {
    const std::vector<std::string> labels{"A", "B", "C", "D"};
    const HeatmapStack s = random_stack(labels, {6, 6, 6}, 41);
    ChainGraph g = chain(labels, 0.5, 1, {1, 1, 1}, 51);
    const auto one = mp::run_passing(s, g);
    const auto ref1 = mp::pass_once(s, g);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(one.maps.channels[i], ref1.maps.channels[i]);

    g.iterations = 3;
    const auto three = mp::run_passing(s, g);
    const auto ref3 = mp::pass_once(mp::pass_once(ref1.maps, g).maps, g);
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_EQ(three.maps.channels[i], ref3.maps.channels[i]);
        for (double v : three.maps.channels[i].data()) EXPECT_GE(v, 0.0);
        EXPECT_NEAR(three.maps.channels[i].sum(), 1.0, 1e-12);
    }
    g.iterations = 0;
    EXPECT_THROW(mp::run_passing(s, g), InvalidArgument);
}

TEST(RunPassing, InformationTravelsOneEdgePerIteration) {
    const std::vector<std::string> labels{"A", "B", "C"};
    HeatmapStack s = random_stack(labels, {6, 6, 6}, 61);
    HeatmapStack t = s;
    t.channels[2] = normalized(test::random_volume({6, 6, 6}, 999, 0.0, 1.0));
    ChainGraph g = chain(labels, 0.5, 1, {1, 1, 1}, 71);
    EXPECT_EQ(mp::run_passing(s, g).maps.channels[0], mp::run_passing(t, g).maps.channels[0]);
    g.iterations = 2;
    EXPECT_GT(max_diff(mp::run_passing(s, g).maps.channels[0], mp::run_passing(t, g).maps.channels[0]), 0.0);
}

TEST(RunPassing, EmptyChannelIsRepairedByNeighbours) {
    const std::vector<std::string> labels{"A", "B", "C"};
    HeatmapStack s = random_stack(labels, {6, 6, 6}, 81);
    s.channels[1] = Volume3D::zeros_like(s.channels[1]);
    const auto r = mp::run_passing(s, chain(labels, 0.5, 1, {1, 1, 1}, 91));
    EXPECT_FALSE(r.flagged[1]);
    EXPECT_NEAR(r.maps.channels[1].sum(), 1.0, 1e-12);
}

TEST(RunPassing, IsolatedEmptyChannelIsFlagged) {
    const std::vector<std::string> labels{"A", "B", "C"};
    HeatmapStack s = random_stack(labels, {6, 6, 6}, 81);
    s.channels[0] = Volume3D::zeros_like(s.channels[0]);
    s.channels[1] = Volume3D::zeros_like(s.channels[1]);
    ChainGraph g = chain(labels, 0.5, 1, {1, 1, 1}, 91);
    const auto r = mp::pass_once(s, g);
    EXPECT_TRUE(r.flagged[0]);
    EXPECT_FALSE(r.flagged[1]);
    EXPECT_DOUBLE_EQ(r.maps.channels[0].sum(), 0.0);
}

TEST(ProbabilityMaps, ClampsAndNormalizes) {
    HeatmapStack s;
    s.labels = {"A", "B"};
    Volume3D a({2, 1, 1}, {1, 1, 1});
    a[0] = -1.0;
    a[1] = 3.0;
    Volume3D b({2, 1, 1}, {1, 1, 1}, {}, -2.0);
    s.channels = {a, b};
    const HeatmapStack p = mp::to_probability_maps(s);
    EXPECT_DOUBLE_EQ(p.channels[0][0], 0.0);
    EXPECT_DOUBLE_EQ(p.channels[0][1], 1.0);
    EXPECT_DOUBLE_EQ(p.channels[1].sum(), 0.0);
}

} // namespace
} // namespace vloc
