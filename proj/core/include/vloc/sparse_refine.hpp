#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vloc/landmarks.hpp"

namespace vloc::sparse {

/// Small dense row-major matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    Matrix select_rows(std::span<const int> rows) const;
    std::vector<double> multiply(std::span<const double> a) const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Per-axis coordinate matrices: row m is landmark m, column n is training spine n.
struct ShapeDictionary {
    std::vector<std::string> labels;
    Matrix x, y, z;
    bool constant_column = true; // append an unpenalized all-ones atom during refinement

    std::size_t landmarks() const { return labels.size(); }
    std::size_t atoms() const { return z.cols(); }
    const Matrix& axis(int a) const { return a == 0 ? x : a == 1 ? y : z; }
    void validate() const;
};

/// Columns from every training set that has all `labels` present.
ShapeDictionary build_dictionary(std::span<const LandmarkSet> train, const std::vector<std::string>& labels);

/// Longest strictly decreasing subsequence (successive drop > tol), by O(M^2)
/// dynamic programming. Among equally long solutions the lexicographically
/// smallest index set is returned. Empty input gives an empty set.
std::vector<int> max_descending_subsequence(std::span<const double> values, double tol = 1e-9);

struct LassoOptions {
    double tolerance = 1e-8; // KKT residual
    int max_sweeps = 10000;
};

struct SparseCode {
    std::vector<double> a;
    double lambda = 0.0;
    double kkt_residual = 0.0;
    int sweeps = 0;

    /// Indices with |a_k| > 1e-12.
    std::vector<int> support() const;
};

double lasso_objective(const Matrix& D, std::span<const double> v, std::span<const double> a, double lambda);

/// Largest violation of the optimality conditions of 0.5*|v - D a|^2 + lambda*|a|_1.
double lasso_kkt_residual(const Matrix& D, std::span<const double> v, std::span<const double> a, double lambda);

/// Cyclic coordinate descent with exact soft-threshold updates, with periodic
/// least-squares polishing on the current support. Throws NumericError carrying
/// the final KKT residual if the tolerance is not reached within max_sweeps.
SparseCode lasso_solve(const Matrix& D, std::span<const double> v, double lambda, const LassoOptions& options = {});

struct RefineOptions {
    std::optional<double> lambda; // fixed penalty for all axes
    double lambda_ratio = 0.01;   // otherwise lambda = ratio * |D_S^T v_S|_inf per axis
    bool z_descending = true;     // false flips z before the subsequence search
    LassoOptions lasso;
};

struct RefineResult {
    LandmarkSet landmarks;
    bool skipped = false;
    std::vector<int> subset;                  // dictionary rows used for fitting
    std::array<SparseCode, 3> codes;          // per axis; last entry of a is the offset when constant_column
    std::array<double, 3> intercept{0, 0, 0};
};

/// Refines predicted centroids: subsequence on z, per-axis LASSO on the shared
/// row subset, reconstruction of every row from the full dictionary. Absent
/// predictions are excluded from fitting and come back marked extrapolated.
/// With fewer than two present landmarks the input is returned with skipped set.
RefineResult refine(const LandmarkSet& prediction, const ShapeDictionary& dict, const RefineOptions& options = {});

inline constexpr int kDictionaryFormatVersion = 1;

/// One CSV per axis: a `# VLOCDICT <version>` line, the header `label,s0,s1,...`,
/// then one row per landmark.
void write_dictionary(const ShapeDictionary& dict, const std::filesystem::path& x_path,
                      const std::filesystem::path& y_path, const std::filesystem::path& z_path);
ShapeDictionary read_dictionary(const std::filesystem::path& x_path, const std::filesystem::path& y_path,
                                const std::filesystem::path& z_path);

} // namespace vloc::sparse
