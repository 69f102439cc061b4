#include "vloc/sparse_refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "vloc/errors.hpp"

namespace vloc::sparse {

Matrix Matrix::select_rows(std::span<const int> rows) const {
    Matrix out(rows.size(), cols_);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols_; ++c) out(r, c) = (*this)(static_cast<std::size_t>(rows[r]), c);
    return out;
}

std::vector<double> Matrix::multiply(std::span<const double> a) const {
    if (a.size() != cols_) throw InvalidArgument("Matrix::multiply: size mismatch");
    std::vector<double> out(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols_; ++c) s += (*this)(r, c) * a[c];
        out[r] = s;
    }
    return out;
}

void ShapeDictionary::validate() const {
    const std::size_t m = labels.size();
    for (const Matrix* mat : {&x, &y, &z})
        if (mat->rows() != m || mat->cols() != z.cols())
            throw InvalidArgument("ShapeDictionary: axis matrices must share dims and match the label count");
    if (z.cols() == 0) throw InvalidArgument("ShapeDictionary: no atoms");
}

ShapeDictionary build_dictionary(std::span<const LandmarkSet> train, const std::vector<std::string>& labels) {
    std::vector<const LandmarkSet*> complete;
    for (const auto& s : train) {
        bool ok = true;
        for (const auto& l : labels) {
            const Landmark* lm = s.find(l);
            ok = ok && lm && lm->present;
        }
        if (ok) complete.push_back(&s);
    }
    if (complete.empty()) throw InvalidArgument("build_dictionary: no training set has every label present");
    ShapeDictionary d;
    d.labels = labels;
    d.x = Matrix(labels.size(), complete.size());
    d.y = d.x;
    d.z = d.x;
    for (std::size_t n = 0; n < complete.size(); ++n)
        for (std::size_t m = 0; m < labels.size(); ++m) {
            const Vec3 p = complete[n]->find(labels[m])->position;
            d.x(m, n) = p.x;
            d.y(m, n) = p.y;
            d.z(m, n) = p.z;
        }
    return d;
}

std::vector<int> max_descending_subsequence(std::span<const double> v, double tol) {
    const int m = static_cast<int>(v.size());
    if (m == 0) return {};
    // best[i]: length of the longest decreasing subsequence starting at i
    std::vector<int> best(m, 1);
    for (int i = m - 1; i >= 0; --i)
        for (int j = i + 1; j < m; ++j)
            if (v[i] - v[j] > tol) best[i] = std::max(best[i], best[j] + 1);
    const int length = *std::max_element(best.begin(), best.end());

    std::vector<int> out;
    int need = length;
    int prev = -1;
    for (int i = 0; i < m && need > 0; ++i) {
        if (best[i] != need) continue;
        if (prev >= 0 && !(v[prev] - v[i] > tol)) continue;
        out.push_back(i);
        prev = i;
        --need;
    }
    return out;
}

std::vector<int> SparseCode::support() const {
    std::vector<int> s;
    for (std::size_t k = 0; k < a.size(); ++k)
        if (std::abs(a[k]) > 1e-12) s.push_back(static_cast<int>(k));
    return s;
}

namespace {

void check_problem(const Matrix& D, std::span<const double> v, double lambda) {
    if (D.rows() != v.size()) throw InvalidArgument("lasso: dictionary rows differ from vector length");
    if (D.rows() == 0) throw InvalidArgument("lasso: empty problem");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lasso: lambda must be >= 0");
}

std::vector<double> residual(const Matrix& D, std::span<const double> v, std::span<const double> a) {
    auto r = D.multiply(a);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = v[i] - r[i];
    return r;
}

double column_dot(const Matrix& D, std::size_t k, std::span<const double> r) {
    double s = 0.0;
    for (std::size_t i = 0; i < D.rows(); ++i) s += D(i, k) * r[i];
    return s;
}

double kkt_from_residual(const Matrix& D, std::span<const double> r, std::span<const double> a, double lambda) {
    double worst = 0.0;
    for (std::size_t k = 0; k < D.cols(); ++k) {
        const double g = column_dot(D, k, r);
        const double viol = a[k] != 0.0 ? std::abs(g - lambda * (a[k] > 0.0 ? 1.0 : -1.0))
                                        : std::max(0.0, std::abs(g) - lambda);
        worst = std::max(worst, viol);
    }
    return worst;
}

// Exact minimizer with the support and signs of `a` held fixed. Returns false
// if the Gram matrix is singular or a sign flips.
bool polish(const Matrix& D, std::span<const double> v, double lambda, std::vector<double>& a) {
    std::vector<std::size_t> act;
    for (std::size_t k = 0; k < a.size(); ++k)
        if (a[k] != 0.0) act.push_back(k);
    const std::size_t n = act.size();
    if (n == 0 || n > D.rows()) return false;
    Eigen::MatrixXd G(n, n);
    Eigen::VectorXd rhs(n);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q <= p; ++q) {
            double s = 0.0;
            for (std::size_t i = 0; i < D.rows(); ++i) s += D(i, act[p]) * D(i, act[q]);
            G(p, q) = G(q, p) = s;
        }
        rhs(p) = column_dot(D, act[p], v) - lambda * (a[act[p]] > 0.0 ? 1.0 : -1.0);
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success) return false;
    const Eigen::VectorXd x = llt.solve(rhs);
    for (std::size_t p = 0; p < n; ++p)
        if (!std::isfinite(x(p)) || (x(p) > 0.0) != (a[act[p]] > 0.0) || x(p) == 0.0) return false;
    for (std::size_t p = 0; p < n; ++p) a[act[p]] = x(p);
    return true;
}

// Feature-sign search: an exact active-set method. Each step solves the
// sign-constrained least squares on the active set, then line-searches towards
// it, stopping at every zero crossing. Finite, and robust to near-collinear
// atoms where coordinate descent crawls.
std::vector<double> feature_sign(const Matrix& D, std::span<const double> v, double lambda, double tol) {
    const std::size_t n = D.cols();
    std::vector<double> a(n, 0.0), theta(n, 0.0);
    auto objective = [&](const std::vector<double>& x) {
        const auto r = residual(D, v, x);
        double q = 0.0, l1 = 0.0;
        for (double e : r) q += e * e;
        for (double e : x) l1 += std::abs(e);
        return 0.5 * q + lambda * l1;
    };
    const int max_steps = 50 * static_cast<int>(n) + 100;
    bool stalled = false; // active set is as optimal as rounding allows
    for (int step = 0; step < max_steps; ++step) {
        const auto r = residual(D, v, a);
        std::vector<double> grad(n); // d/da of the quadratic part
        for (std::size_t k = 0; k < n; ++k) grad[k] = -column_dot(D, k, r);

        bool active_ok = true;
        for (std::size_t k = 0; k < n && active_ok && !stalled; ++k)
            if (a[k] != 0.0 && std::abs(grad[k] + lambda * theta[k]) > tol) active_ok = false;
        if (active_ok) {
            std::size_t best = n;
            double worst = lambda + tol;
            for (std::size_t k = 0; k < n; ++k)
                if (a[k] == 0.0 && std::abs(grad[k]) > worst) {
                    worst = std::abs(grad[k]);
                    best = k;
                }
            if (best == n) break;
            theta[best] = grad[best] > 0.0 ? -1.0 : 1.0;
        }

        std::vector<std::size_t> act;
        for (std::size_t k = 0; k < n; ++k)
            if (theta[k] != 0.0) act.push_back(k);
        const std::size_t m = act.size();
        Eigen::MatrixXd G(m, m);
        Eigen::VectorXd rhs(m);
        for (std::size_t p = 0; p < m; ++p) {
            for (std::size_t q = 0; q <= p; ++q) {
                double s = 0.0;
                for (std::size_t i = 0; i < D.rows(); ++i) s += D(i, act[p]) * D(i, act[q]);
                G(p, q) = G(q, p) = s;
            }
            rhs(p) = column_dot(D, act[p], v) - lambda * theta[act[p]];
        }
        std::vector<double> best_a = a;
        double best_f = objective(a);
        auto consider = [&](const std::vector<double>& c) {
            const double f = objective(c);
            if (f < best_f) {
                best_f = f;
                best_a = c;
            }
        };
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
        const Eigen::VectorXd& ev = eig.eigenvalues(); // ascending
        if (ev(0) <= 1e-10 * std::max(ev(m - 1), 1e-300)) {
            // Dependent atoms: the residual is constant along the null vector, so
            // only the l1 term moves. Try every point where a coordinate hits zero.
            // The best breakpoint is never worse than the current point, so it
            // is taken even on a tie; that is what lets lambda = 0 make progress.
            const Eigen::VectorXd z = eig.eigenvectors().col(0);
            best_f = std::numeric_limits<double>::infinity();
            for (std::size_t p = 0; p < m; ++p) {
                if (a[act[p]] == 0.0 || z(p) == 0.0) continue;
                const double t = -a[act[p]] / z(p);
                std::vector<double> c = a;
                for (std::size_t q = 0; q < m; ++q) c[act[q]] += t * z(q);
                c[act[p]] = 0.0;
                consider(c);
            }
        } else {
            // Sign-fixed minimizer, then every zero crossing on the way there.
            const Eigen::VectorXd target = eig.eigenvectors() *
                                           (eig.eigenvectors().transpose() * rhs).cwiseQuotient(ev);
            auto along = [&](double t, std::size_t snap) {
                std::vector<double> c = a;
                for (std::size_t q = 0; q < m; ++q) c[act[q]] = a[act[q]] + t * (target(q) - a[act[q]]);
                if (snap < m) c[act[snap]] = 0.0;
                consider(c);
            };
            along(1.0, m);
            for (std::size_t p = 0; p < m; ++p) {
                const double from = a[act[p]], to = target(p);
                if (from != 0.0 && (from > 0.0) != (to > 0.0)) along(from / (from - to), p);
            }
        }
        if (best_a == a) {
            if (active_ok) break;
            stalled = true;
            continue;
        }
        stalled = false;
        a = std::move(best_a);
        for (std::size_t k = 0; k < n; ++k) theta[k] = a[k] > 0.0 ? 1.0 : a[k] < 0.0 ? -1.0 : 0.0;
    }
    return a;
}

} // namespace

double lasso_objective(const Matrix& D, std::span<const double> v, std::span<const double> a, double lambda) {
    const auto r = residual(D, v, a);
    double q = 0.0, l1 = 0.0;
    for (double x : r) q += x * x;
    for (double x : a) l1 += std::abs(x);
    return 0.5 * q + lambda * l1;
}

double lasso_kkt_residual(const Matrix& D, std::span<const double> v, std::span<const double> a, double lambda) {
    check_problem(D, v, lambda);
    const auto r = residual(D, v, a);
    return kkt_from_residual(D, r, a, lambda);
}

SparseCode lasso_solve(const Matrix& D, std::span<const double> v, double lambda, const LassoOptions& options) {
    check_problem(D, v, lambda);
    const std::size_t n = D.cols();
    SparseCode code;
    code.lambda = lambda;
    code.a.assign(n, 0.0);
    std::vector<double> col_sq(n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < D.rows(); ++i) col_sq[k] += D(i, k) * D(i, k);

    std::vector<double> r(v.begin(), v.end());
    auto& a = code.a;
    double kkt = kkt_from_residual(D, r, a, lambda);
    constexpr int kPolishEvery = 10;
    int sweep = 0;
    while (kkt > options.tolerance && sweep < options.max_sweeps) {
        ++sweep;
        for (std::size_t k = 0; k < n; ++k) {
            if (col_sq[k] == 0.0) continue;
            const double rho = column_dot(D, k, r) + col_sq[k] * a[k];
            const double shrunk = std::abs(rho) > lambda ? (rho > 0 ? rho - lambda : rho + lambda) : 0.0;
            const double next = shrunk / col_sq[k];
            const double delta = next - a[k];
            if (delta == 0.0) continue;
            for (std::size_t i = 0; i < D.rows(); ++i) r[i] -= delta * D(i, k);
            a[k] = next;
        }
        if (sweep % kPolishEvery == 0) {
            std::vector<double> candidate = a;
            if (polish(D, v, lambda, candidate)) {
                const auto rc = residual(D, v, candidate);
                if (kkt_from_residual(D, rc, candidate, lambda) < kkt_from_residual(D, residual(D, v, a), a, lambda)) {
                    a = std::move(candidate);
                    r = rc;
                }
            }
            r = residual(D, v, a); // limit drift of the incremental residual
        }
        kkt = kkt_from_residual(D, r, a, lambda);
    }
    code.sweeps = sweep;
    code.kkt_residual = kkt_from_residual(D, residual(D, v, a), a, lambda);
    if (code.kkt_residual > options.tolerance) {
        auto exact = feature_sign(D, v, lambda, 0.1 * options.tolerance);
        const double k2 = kkt_from_residual(D, residual(D, v, exact), exact, lambda);
        if (k2 < code.kkt_residual) {
            a = std::move(exact);
            code.kkt_residual = k2;
        }
    }
    if (code.kkt_residual > options.tolerance)
        throw NumericError("lasso_solve: no convergence after " + std::to_string(sweep) +
                               " sweeps, KKT residual " + std::to_string(code.kkt_residual),
                           code.kkt_residual);
    return code;
}

RefineResult refine(const LandmarkSet& prediction, const ShapeDictionary& dict, const RefineOptions& options) {
    dict.validate();
    if (prediction.labels() != dict.labels)
        throw InvalidArgument("refine: prediction labels must match dictionary rows");
    if (options.lambda && !(*options.lambda >= 0.0)) throw InvalidArgument("refine: lambda must be >= 0");
    if (!(options.lambda_ratio >= 0.0)) throw InvalidArgument("refine: lambda_ratio must be >= 0");

    RefineResult result;
    result.landmarks = prediction;
    std::vector<int> present;
    for (std::size_t m = 0; m < prediction.size(); ++m)
        if (prediction.entries()[m].present) present.push_back(static_cast<int>(m));
    if (present.size() < 2) {
        result.skipped = true;
        return result;
    }

    std::vector<double> vz;
    for (int m : present) {
        const double z = prediction.entries()[m].position.z;
        vz.push_back(options.z_descending ? z : -z);
    }
    for (int idx : max_descending_subsequence(vz)) result.subset.push_back(present[idx]);

    const std::size_t M = dict.landmarks();
    std::array<std::vector<double>, 3> refined;
    for (int axis = 0; axis < 3; ++axis) {
        Matrix Ds = dict.axis(axis).select_rows(result.subset);
        std::vector<double> vs;
        for (int m : result.subset) {
            const Vec3& p = prediction.entries()[m].position;
            vs.push_back(axis == 0 ? p.x : axis == 1 ? p.y : p.z);
        }
        // The unpenalized constant atom is eliminated by centering over the subset rows.
        std::vector<double> col_mean(Ds.cols(), 0.0);
        double v_mean = 0.0;
        if (dict.constant_column) {
            const double inv = 1.0 / static_cast<double>(Ds.rows());
            for (std::size_t i = 0; i < Ds.rows(); ++i) {
                v_mean += vs[i] * inv;
                for (std::size_t c = 0; c < Ds.cols(); ++c) col_mean[c] += Ds(i, c) * inv;
            }
            for (std::size_t i = 0; i < Ds.rows(); ++i) {
                vs[i] -= v_mean;
                for (std::size_t c = 0; c < Ds.cols(); ++c) Ds(i, c) -= col_mean[c];
            }
        }
        double lambda = 0.0;
        if (options.lambda) {
            lambda = *options.lambda;
        } else {
            double lmax = 0.0;
            for (std::size_t c = 0; c < Ds.cols(); ++c) lmax = std::max(lmax, std::abs(column_dot(Ds, c, vs)));
            lambda = options.lambda_ratio * lmax;
        }
        SparseCode code = lasso_solve(Ds, vs, lambda, options.lasso);
        double offset = 0.0;
        if (dict.constant_column) {
            offset = v_mean;
            for (std::size_t c = 0; c < col_mean.size(); ++c) offset -= col_mean[c] * code.a[c];
            code.a.push_back(offset);
        }
        result.intercept[axis] = offset;
        const std::span<const double> atoms(code.a.data(), dict.atoms());
        refined[axis] = dict.axis(axis).multiply(atoms);
        for (double& r : refined[axis]) r += offset;
        result.codes[axis] = std::move(code);
    }

    for (std::size_t m = 0; m < M; ++m) {
        Landmark& lm = result.landmarks.entries()[m];
        lm.position = {refined[0][m], refined[1][m], refined[2][m]};
        lm.extrapolated = !lm.present;
    }
    return result;
}

} // namespace vloc::sparse
