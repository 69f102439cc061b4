#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vloc/errors.hpp"
#include "vloc/sparse_refine.hpp"

namespace vloc {
namespace {

using sparse::Matrix;

std::vector<int> brute_force_descending(const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    std::vector<int> best;
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        std::vector<int> idx;
        for (int i = 0; i < n; ++i)
            if (mask & (1u << i)) idx.push_back(i);
        bool ok = true;
        for (std::size_t k = 1; k < idx.size() && ok; ++k) ok = v[idx[k - 1]] - v[idx[k]] > 1e-9;
        if (!ok) continue;
        if (idx.size() > best.size() || (idx.size() == best.size() && idx < best)) best = idx;
    }
    return best;
}

// Gaussian elimination with partial pivoting; returns false if singular.
bool solve_dense(std::vector<std::vector<double>> A, std::vector<double> b, std::vector<double>& x) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t p = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(A[r][c]) > std::abs(A[p][c])) p = r;
        if (std::abs(A[p][c]) < 1e-12) return false;
        std::swap(A[p], A[c]);
        std::swap(b[p], b[c]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = A[r][c] / A[c][c];
            for (std::size_t k = c; k < n; ++k) A[r][k] -= f * A[c][k];
            b[r] -= f * b[c];
        }
    }
    x.assign(n, 0.0);
    for (std::size_t c = n; c-- > 0;) {
        double s = b[c];
        for (std::size_t k = c + 1; k < n; ++k) s -= A[c][k] * x[k];
        x[c] = s / A[c][c];
    }
    return true;
}

// Enumerates every support and sign pattern; each candidate solves the
// stationarity equations restricted to the support. The best objective wins.
std::vector<double> brute_force_lasso(const Matrix& D, const std::vector<double>& v, double lambda) {
    const std::size_t n = D.cols();
    std::vector<double> best(n, 0.0);
    double best_obj = sparse::lasso_objective(D, v, best, lambda);
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        std::vector<int> S;
        for (std::size_t k = 0; k < n; ++k)
            if (mask & (1u << k)) S.push_back(static_cast<int>(k));
        for (unsigned signs = 0; signs < (1u << S.size()); ++signs) {
            std::vector<std::vector<double>> G(S.size(), std::vector<double>(S.size(), 0.0));
            std::vector<double> rhs(S.size(), 0.0);
            for (std::size_t i = 0; i < S.size(); ++i) {
                const double s = (signs & (1u << i)) ? -1.0 : 1.0;
                for (std::size_t r = 0; r < D.rows(); ++r) rhs[i] += D(r, S[i]) * v[r];
                rhs[i] -= lambda * s;
                for (std::size_t j = 0; j < S.size(); ++j)
                    for (std::size_t r = 0; r < D.rows(); ++r) G[i][j] += D(r, S[i]) * D(r, S[j]);
            }
            std::vector<double> xs;
            if (!solve_dense(G, rhs, xs)) continue;
            std::vector<double> a(n, 0.0);
            for (std::size_t i = 0; i < S.size(); ++i) a[S[i]] = xs[i];
            const double obj = sparse::lasso_objective(D, v, a, lambda);
            if (obj < best_obj) {
                best_obj = obj;
                best = a;
            }
        }
    }
    return best;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

std::vector<std::string> labels_n(int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back("L" + std::to_string(i));
    return out;
}

// Dictionary with `atoms` smooth vertical spines of `rows` landmarks.
sparse::ShapeDictionary spine_dictionary(int rows, int atoms, std::uint64_t seed) {
    Rng rng(seed);
    sparse::ShapeDictionary d;
    d.labels = labels_n(rows);
    d.x = Matrix(rows, atoms);
    d.y = Matrix(rows, atoms);
    d.z = Matrix(rows, atoms);
    for (int c = 0; c < atoms; ++c) {
        const double gap = 14.0 + rng.uniform(-1.5, 1.5);
        const double z0 = 160.0 + rng.uniform(-5, 5);
        const double bend = rng.uniform(-6, 6);
        for (int m = 0; m < rows; ++m) {
            const double t = static_cast<double>(m) / (rows - 1);
            d.x(m, c) = 30.0 + bend * t * t + rng.uniform(-0.5, 0.5);
            d.y(m, c) = 30.0 + 8.0 * std::sin(3.0 * t + bend * 0.1) + rng.uniform(-0.5, 0.5);
            d.z(m, c) = z0 - gap * m + rng.uniform(-1, 1);
        }
    }
    return d;
}

LandmarkSet column_as_landmarks(const sparse::ShapeDictionary& d, int c) {
    std::vector<Landmark> e;
    for (std::size_t m = 0; m < d.landmarks(); ++m) e.push_back({d.labels[m], {d.x(m, c), d.y(m, c), d.z(m, c)}});
    return LandmarkSet(e);
}

TEST(Subsequence, SpecExample) {
    const std::vector<double> v{5, 4, 6, 3, 2};
    EXPECT_EQ(sparse::max_descending_subsequence(v), (std::vector<int>{0, 1, 3, 4}));
}

TEST(Subsequence, EdgeCases) {
    EXPECT_TRUE(sparse::max_descending_subsequence(std::vector<double>{}).empty());
    EXPECT_EQ(sparse::max_descending_subsequence(std::vector<double>{1, 2, 3}), (std::vector<int>{0}));
    EXPECT_EQ(sparse::max_descending_subsequence(std::vector<double>{3, 2, 1}), (std::vector<int>{0, 1, 2}));
    EXPECT_EQ(sparse::max_descending_subsequence(std::vector<double>{2, 2, 1}), (std::vector<int>{0, 2}));
}

TEST(Subsequence, MatchesEnumeration) {
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(10));
        std::vector<double> v(n);
        for (double& x : v) x = static_cast<double>(rng.below(6)); // plenty of ties
        EXPECT_EQ(sparse::max_descending_subsequence(v), brute_force_descending(v)) << "trial " << trial;
    }
}

TEST(Lasso, IdentitySoftThresholds) {
    Matrix I(2, 2);
    I(0, 0) = I(1, 1) = 1.0;
    const std::vector<double> v{3.0, 0.5};
    const auto code = sparse::lasso_solve(I, v, 1.0);
    EXPECT_NEAR(code.a[0], 2.0, 1e-12);
    EXPECT_EQ(code.a[1], 0.0);
    EXPECT_EQ(code.support(), (std::vector<int>{0}));
}

TEST(Lasso, LambdaAtMaxGivesZero) {
    Rng rng(2);
    const Matrix D = random_matrix(6, 4, rng);
    std::vector<double> v(6);
    for (double& x : v) x = rng.normal();
    double lmax = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < 6; ++r) s += D(r, c) * v[r];
        lmax = std::max(lmax, std::abs(s));
    }
    for (double scale : {1.0, 2.0}) {
        const auto code = sparse::lasso_solve(D, v, scale * lmax);
        EXPECT_TRUE(code.support().empty());
    }
}

TEST(Lasso, ZeroLambdaInvertsSquareSystem) {
    Matrix D(3, 3);
    const double vals[3][3] = {{2, 1, 0}, {0, 3, 1}, {1, 0, 4}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) D(i, j) = vals[i][j];
    const std::vector<double> a_true{1.0, -2.0, 0.5};
    const std::vector<double> v = D.multiply(a_true);
    const auto code = sparse::lasso_solve(D, v, 0.0);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(code.a[k], a_true[k], 1e-9);
}

TEST(Lasso, KktAndBruteForceAgree) {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t rows = 3 + rng.below(5);
        const std::size_t cols = 1 + rng.below(std::min<std::size_t>(4, rows));
        const Matrix D = random_matrix(rows, cols, rng);
        std::vector<double> v(rows);
        for (double& x : v) x = rng.normal() * 3.0;
        const double lambda = rng.uniform(0.01, 2.0);
        const auto code = sparse::lasso_solve(D, v, lambda);
        EXPECT_LE(sparse::lasso_kkt_residual(D, v, code.a, lambda), 1e-6);
        const auto ref = brute_force_lasso(D, v, lambda);
        EXPECT_NEAR(sparse::lasso_objective(D, v, code.a, lambda), sparse::lasso_objective(D, v, ref, lambda), 1e-8);
        for (std::size_t k = 0; k < cols; ++k) EXPECT_NEAR(code.a[k], ref[k], 1e-5) << "trial " << trial;
    }
}

TEST(Lasso, ObjectiveValue) {
    Matrix I(2, 2);
    I(0, 0) = I(1, 1) = 1.0;
    // 0.5 * (1^2 + 0.5^2) + 1 * (2 + 0)
    EXPECT_DOUBLE_EQ(sparse::lasso_objective(I, std::vector<double>{3.0, 0.5}, std::vector<double>{2.0, 0.0}, 1.0),
                     2.625);
}

TEST(Lasso, RejectsBadProblems) {
    Matrix I(2, 2);
    EXPECT_THROW(sparse::lasso_solve(I, std::vector<double>{1.0}, 0.1), InvalidArgument);
    EXPECT_THROW(sparse::lasso_solve(I, std::vector<double>{1.0, 2.0}, -1.0), InvalidArgument);
}

TEST(Dictionary, BuildUsesCompleteSetsOnly) {
    const auto labels = labels_n(3);
    std::vector<LandmarkSet> train;
    for (int n = 0; n < 4; ++n) {
        std::vector<Landmark> e;
        for (int m = 0; m < 3; ++m) e.push_back({labels[m], {1.0 * n, 2.0 * n, 100.0 - 10 * m}});
        train.emplace_back(e);
    }
    train[2].entries()[1].present = false;
    const auto d = sparse::build_dictionary(train, labels);
    ASSERT_EQ(d.atoms(), 3u);
    EXPECT_DOUBLE_EQ(d.x(0, 2), 3.0);
    EXPECT_DOUBLE_EQ(d.z(2, 1), 80.0);
}

TEST(Refine, ReproducesDictionaryColumn) {
    const auto d = spine_dictionary(10, 4, 8);
    const LandmarkSet pred = column_as_landmarks(d, 2);
    const auto r = sparse::refine(pred, d, {.lambda = 0.0});
    ASSERT_FALSE(r.skipped);
    for (std::size_t m = 0; m < pred.size(); ++m)
        EXPECT_LT(distance(r.landmarks.entries()[m].position, pred.entries()[m].position), 1e-6);
}

TEST(Refine, IsIdempotentOnCleanInput) {
    const auto d = spine_dictionary(10, 6, 9);
    LandmarkSet pred = column_as_landmarks(d, 1);
    for (auto& lm : pred.entries()) lm.position.x += 0.7;
    const auto once = sparse::refine(pred, d, {.lambda = 0.0});
    const auto twice = sparse::refine(once.landmarks, d, {.lambda = 0.0});
    for (std::size_t m = 0; m < pred.size(); ++m)
        EXPECT_LT(distance(once.landmarks.entries()[m].position, twice.landmarks.entries()[m].position), 1e-6);
}

TEST(Refine, OutlierIsExcludedAndRepaired) {
    const auto d = spine_dictionary(10, 4, 10);
    const LandmarkSet truth = column_as_landmarks(d, 0);
    LandmarkSet pred = truth;
    pred.entries()[4].position.z += 40.0;
    const auto r = sparse::refine(pred, d, {.lambda = 0.0});
    EXPECT_EQ(r.subset, (std::vector<int>{0, 1, 2, 3, 5, 6, 7, 8, 9}));
    EXPECT_LT(distance(r.landmarks.entries()[4].position, truth.entries()[4].position), 1e-6);
}

TEST(Refine, AbsentRowsAreExtrapolated) {
    const auto d = spine_dictionary(8, 3, 11);
    const LandmarkSet truth = column_as_landmarks(d, 1);
    LandmarkSet pred = truth;
    pred.entries()[7].present = false;
    pred.entries()[7].position = {};
    const auto r = sparse::refine(pred, d, {.lambda = 0.0});
    EXPECT_TRUE(r.landmarks.entries()[7].extrapolated);
    EXPECT_FALSE(r.landmarks.entries()[6].extrapolated);
    EXPECT_LT(distance(r.landmarks.entries()[7].position, truth.entries()[7].position), 1e-6);
}

TEST(Refine, SkipsWithTooFewLandmarks) {
    const auto d = spine_dictionary(5, 3, 12);
    LandmarkSet pred = column_as_landmarks(d, 0);
    for (auto& lm : pred.entries()) lm.present = false;
    auto r = sparse::refine(pred, d);
    EXPECT_TRUE(r.skipped);
    pred.entries()[2].present = true;
    r = sparse::refine(pred, d);
    EXPECT_TRUE(r.skipped);
    EXPECT_EQ(r.landmarks.entries()[2].position, pred.entries()[2].position);
}

TEST(Refine, DataScaledLambdaShrinksTowardsMean) {
    const auto d = spine_dictionary(8, 5, 13);
    const LandmarkSet pred = column_as_landmarks(d, 3);
    const auto r = sparse::refine(pred, d, {.lambda_ratio = 1.0});
    for (const auto& code : r.codes) {
        ASSERT_EQ(code.a.size(), d.atoms() + 1);
        for (std::size_t k = 0; k < d.atoms(); ++k) EXPECT_EQ(code.a[k], 0.0);
    }
    double mean_z = 0.0;
    for (const auto& lm : pred.entries()) mean_z += lm.position.z / 8.0;
    EXPECT_NEAR(r.intercept[2], mean_z, 1e-9);
}

TEST(Refine, RejectsLabelMismatch) {
    const auto d = spine_dictionary(5, 3, 14);
    LandmarkSet pred = column_as_landmarks(d, 0);
    pred.entries()[0].label = "other";
    EXPECT_THROW(sparse::refine(pred, d), InvalidArgument);
}

} // namespace
} // namespace vloc
