// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ctxrep {

// Dense symmetric matrix, row-major. Construction symmetrizes the input as
// (A + A^T) / 2 and rejects asymmetry above 1e-9 * max(1, |A|_max).
class SymMatrix {
public:
    SymMatrix() = default;
    SymMatrix(std::size_t dim, std::vector<double> entries);

    static SymMatrix identity(std::size_t dim);
    static SymMatrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t dim() const noexcept { return dim_; }
    double operator()(std::size_t i, std::size_t j) const { return entries_[i * dim_ + j]; }
    std::span<const double> entries() const noexcept { return entries_; }
    double max_abs() const;

private:
    std::size_t dim_ = 0;
    std::vector<double> entries_;
};

struct EigenDecomposition {
    std::size_t dim = 0;
    std::vector<double> eigenvalues;   // descending
    std::vector<double> eigenvectors;  // row-major dim x dim, column k pairs with eigenvalues[k]

    double vector_component(std::size_t row, std::size_t k) const {
        return eigenvectors[row * dim + k];
    }
};

// B flattened context vectors of length ND, stored contiguously. Zero-norm
// rows are rejected unless the batch is a point set (RBF inputs such as 2-D
// positions, where the origin is a valid point).
class ContextBatch {
public:
    ContextBatch() = default;
    ContextBatch(std::size_t batch_size, std::size_t vector_dim, std::vector<double> values);

    static ContextBatch from_rows(const std::vector<std::vector<double>>& rows);
    static ContextBatch points(std::size_t batch_size, std::size_t vector_dim, std::vector<double> values);
    static ContextBatch points_from_rows(const std::vector<std::vector<double>>& rows);

    bool is_point_set() const noexcept { return point_set_; }
    // Same shape and kind as this batch, new values.
    ContextBatch with_values(std::vector<double> values) const;

    std::size_t batch_size() const noexcept { return batch_size_; }
    std::size_t vector_dim() const noexcept { return vector_dim_; }
    std::span<const double> row(std::size_t i) const {
        return {values_.data() + i * vector_dim_, vector_dim_};
    }
    std::span<const double> values() const noexcept { return values_; }

    friend bool operator==(const ContextBatch& a, const ContextBatch& b) {
        return a.batch_size_ == b.batch_size_ && a.vector_dim_ == b.vector_dim_ && a.values_ == b.values_;
    }

private:
    ContextBatch(std::size_t batch_size, std::size_t vector_dim, std::vector<double> values, bool point_set);

    bool point_set_ = false;
    std::size_t batch_size_ = 0;
    std::size_t vector_dim_ = 0;
    std::vector<double> values_;
};

inline constexpr std::size_t kMaxEigenDim = 1024;
inline constexpr int kMaxJacobiSweeps = 100;

// Cyclic (row-by-row) Jacobi eigensolver. Eigenvalues are returned in
// descending order; each eigenvector's first component with magnitude above
// 1e-12 is made non-negative.
EigenDecomposition jacobi_eigh(const SymMatrix& m);

// K_ij = <c_i, c_j> / (|c_i| |c_j|), with an exact unit diagonal.
SymMatrix cosine_kernel(const ContextBatch& batch);

// K_ij = exp(-|x_i - x_j|^2 / (2 h^2)).
SymMatrix rbf_kernel(const ContextBatch& points, double bandwidth);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

}  // namespace ctxrep
