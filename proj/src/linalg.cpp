// SPDX-License-Identifier: Apache-2.0
#include "ctxrep/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ctxrep/error.hpp"

namespace ctxrep {

namespace {

constexpr double kAsymmetryTolerance = 1e-9;
constexpr double kOffDiagonalTolerance = 1e-14;
constexpr double kSignThreshold = 1e-12;

}  // namespace

SymMatrix::SymMatrix(std::size_t dim, std::vector<double> entries)
    : dim_(dim), entries_(std::move(entries)) {
    if (dim_ == 0) fail(ErrorKind::InvalidArgument, "SymMatrix: dimension must be positive");
    if (entries_.size() != dim_ * dim_) {
        fail(ErrorKind::DimensionMismatch,
             "SymMatrix: expected " + std::to_string(dim_ * dim_) + " entries, got " +
                 std::to_string(entries_.size()));
    }
    double scale = 1.0;
    for (double v : entries_) {
        if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, "SymMatrix: non-finite entry");
        scale = std::max(scale, std::abs(v));
    }
    for (std::size_t i = 0; i < dim_; ++i) {
        for (std::size_t j = i + 1; j < dim_; ++j) {
            double& a = entries_[i * dim_ + j];
            double& b = entries_[j * dim_ + i];
            if (std::abs(a - b) > kAsymmetryTolerance * scale) {
                fail(ErrorKind::InvalidArgument,
                     "SymMatrix: entries (" + std::to_string(i) + "," + std::to_string(j) +
                         ") are not symmetric");
            }
            const double mid = 0.5 * (a + b);
            a = mid;
            b = mid;
        }
    }
}

SymMatrix SymMatrix::identity(std::size_t dim) {
    std::vector<double> e(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) e[i * dim + i] = 1.0;
    return SymMatrix(dim, std::move(e));
}

SymMatrix SymMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t n = rows.size();
    std::vector<double> e;
    e.reserve(n * n);
    for (const auto& r : rows) {
        if (r.size() != n) fail(ErrorKind::DimensionMismatch, "SymMatrix: rows must be square");
        e.insert(e.end(), r.begin(), r.end());
    }
    return SymMatrix(n, std::move(e));
}

double SymMatrix::max_abs() const {
    double m = 0.0;
    for (double v : entries_) m = std::max(m, std::abs(v));
    return m;
}

ContextBatch::ContextBatch(std::size_t batch_size, std::size_t vector_dim, std::vector<double> values)
    : ContextBatch(batch_size, vector_dim, std::move(values), false) {}

ContextBatch::ContextBatch(std::size_t batch_size, std::size_t vector_dim, std::vector<double> values, bool point_set)
    : point_set_(point_set), batch_size_(batch_size), vector_dim_(vector_dim), values_(std::move(values)) {
    if (batch_size_ == 0) fail(ErrorKind::InvalidArgument, "ContextBatch: batch size must be >= 1");
    if (vector_dim_ == 0) fail(ErrorKind::InvalidArgument, "ContextBatch: vector dim must be >= 1");
    if (values_.size() != batch_size_ * vector_dim_) {
        fail(ErrorKind::DimensionMismatch, "ContextBatch: value count does not match B x ND");
    }
    for (double v : values_) {
        if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, "ContextBatch: non-finite value");
    }
    for (std::size_t i = 0; i < batch_size_ && !point_set_; ++i) {
        if (norm(row(i)) == 0.0) {
            fail(ErrorKind::DegenerateVector,
                 "ContextBatch: sample " + std::to_string(i) + " has zero norm");
        }
    }
}

namespace {

std::vector<double> flatten_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) fail(ErrorKind::InvalidArgument, "ContextBatch: batch size must be >= 1");
    const std::size_t nd = rows.front().size();
    std::vector<double> v;
    v.reserve(rows.size() * nd);
    for (const auto& r : rows) {
        if (r.size() != nd) fail(ErrorKind::DimensionMismatch, "ContextBatch: ragged rows");
        v.insert(v.end(), r.begin(), r.end());
    }
    return v;
}

}  // namespace

ContextBatch ContextBatch::from_rows(const std::vector<std::vector<double>>& rows) {
    auto v = flatten_rows(rows);
    return ContextBatch(rows.size(), rows.front().size(), std::move(v));
}

ContextBatch ContextBatch::points(std::size_t batch_size, std::size_t vector_dim, std::vector<double> values) {
    return ContextBatch(batch_size, vector_dim, std::move(values), true);
}

ContextBatch ContextBatch::points_from_rows(const std::vector<std::vector<double>>& rows) {
    auto v = flatten_rows(rows);
    return points(rows.size(), rows.front().size(), std::move(v));
}

ContextBatch ContextBatch::with_values(std::vector<double> values) const {
    return ContextBatch(batch_size_, vector_dim_, std::move(values), point_set_);
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) fail(ErrorKind::LengthMismatch, "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

EigenDecomposition jacobi_eigh(const SymMatrix& m) {
    const std::size_t n = m.dim();
    if (n > kMaxEigenDim) {
        fail(ErrorKind::InvalidArgument, "jacobi_eigh: dimension exceeds " + std::to_string(kMaxEigenDim));
    }
    std::vector<double> a(m.entries().begin(), m.entries().end());
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    double frob2 = 0.0;
    for (double x : a) frob2 += x * x;
    const double tol = kOffDiagonalTolerance * std::sqrt(frob2);

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) s += a[p * n + q] * a[p * n + q];
        return std::sqrt(2.0 * s);
    };

    bool converged = false;
    for (int sweep = 0; sweep <= kMaxJacobiSweeps; ++sweep) {
        if (off_norm() <= tol) {
            converged = true;
            break;
        }
        if (sweep == kMaxJacobiSweeps) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p];
                const double aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                double t;
                if (std::abs(theta) > 1e150) {
                    t = 0.5 / theta;
                } else {
                    t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                }
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t r = 0; r < n; ++r) {
                    if (r == p || r == q) continue;
                    const double arp = a[r * n + p];
                    const double arq = a[r * n + q];
                    const double nrp = c * arp - s * arq;
                    const double nrq = s * arp + c * arq;
                    a[r * n + p] = nrp;
                    a[p * n + r] = nrp;
                    a[r * n + q] = nrq;
                    a[q * n + r] = nrq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                for (std::size_t r = 0; r < n; ++r) {
                    const double vrp = v[r * n + p];
                    const double vrq = v[r * n + q];
                    v[r * n + p] = c * vrp - s * vrq;
                    v[r * n + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    if (!converged) {
        fail(ErrorKind::NonConvergence,
             "jacobi_eigh: off-diagonal norm did not converge within " +
                 std::to_string(kMaxJacobiSweeps) + " sweeps");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a[x * n + x] > a[y * n + y]; });

    EigenDecomposition out;
    out.dim = n;
    out.eigenvalues.resize(n);
    out.eigenvectors.assign(n * n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        out.eigenvalues[k] = a[src * n + src];
        double sign = 1.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double x = v[r * n + src];
            if (std::abs(x) > kSignThreshold) {
                sign = x < 0.0 ? -1.0 : 1.0;
                break;
            }
        }
        for (std::size_t r = 0; r < n; ++r) out.eigenvectors[r * n + k] = sign * v[r * n + src];
    }
    return out;
}

SymMatrix cosine_kernel(const ContextBatch& batch) {
    const std::size_t b = batch.batch_size();
    std::vector<double> norms(b);
    for (std::size_t i = 0; i < b; ++i) {
        norms[i] = norm(batch.row(i));
        if (norms[i] == 0.0) fail(ErrorKind::DegenerateVector, "cosine_kernel: zero-norm sample");
    }
    std::vector<double> k(b * b, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        k[i * b + i] = 1.0;
        for (std::size_t j = i + 1; j < b; ++j) {
            const double c = std::clamp(dot(batch.row(i), batch.row(j)) / (norms[i] * norms[j]), -1.0, 1.0);
            k[i * b + j] = c;
            k[j * b + i] = c;
        }
    }
    return SymMatrix(b, std::move(k));
}

SymMatrix rbf_kernel(const ContextBatch& points, double bandwidth) {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
        fail(ErrorKind::InvalidArgument, "rbf_kernel: bandwidth must be positive");
    }
    const std::size_t b = points.batch_size();
    const double denom = 2.0 * bandwidth * bandwidth;
    std::vector<double> k(b * b, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        k[i * b + i] = 1.0;
        const auto xi = points.row(i);
        for (std::size_t j = i + 1; j < b; ++j) {
            const auto xj = points.row(j);
            double d2 = 0.0;
            for (std::size_t d = 0; d < xi.size(); ++d) {
                const double diff = xi[d] - xj[d];
                d2 += diff * diff;
            }
            const double v = std::exp(-d2 / denom);
            k[i * b + j] = v;
            k[j * b + i] = v;
        }
    }
    return SymMatrix(b, std::move(k));
}

}  // namespace ctxrep
