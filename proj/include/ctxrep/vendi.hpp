// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ctxrep/linalg.hpp"

namespace ctxrep {

// Eigenvalues of the normalized kernel below this floor are treated as zero
// in the entropy (0 log 0 = 0) and clamped to it inside the gradient's log.
inline constexpr double kEigenvalueFloor = 1e-12;

enum class KernelKind { cosine, rbf };

struct KernelSpec {
    KernelKind kind = KernelKind::cosine;
    double bandwidth = 1.0;  // rbf only

    static KernelSpec cosine() { return {}; }
    static KernelSpec rbf(double h) { return {KernelKind::rbf, h}; }
};

SymMatrix build_kernel(const ContextBatch& batch, const KernelSpec& spec);

// Von Neumann entropy of K/B (nats) and its exponential, the Vendi score.
struct DiversityValue {
    double entropy = 0.0;
    double score = 1.0;
};

// Per-sample gradient of the entropy with respect to the raw vectors.
struct BatchGradient {
    std::size_t batch_size = 0;
    std::size_t vector_dim = 0;
    std::vector<double> values;

    std::span<const double> row(std::size_t i) const {
        return {values.data() + i * vector_dim, vector_dim};
    }
    std::span<double> row(std::size_t i) { return {values.data() + i * vector_dim, vector_dim}; }
    double max_row_norm() const;
};

DiversityValue entropy_and_score(const SymMatrix& k);

// Analytic gradient of entropy_and_score(build_kernel(batch)).entropy.
// dL/dK~ is the matrix function -(log K~ + I); it is exact for repeated
// eigenvalues since L = tr f(K~) and d tr f(X) = tr(f'(X) dX).
BatchGradient entropy_gradient(const ContextBatch& batch, const KernelSpec& spec = {});

// Mean Vendi score over all unordered pairs; lies in [1, 2].
double average_pair_vendi(const ContextBatch& points, const KernelSpec& spec = {});

}  // namespace ctxrep
