// SPDX-License-Identifier: Apache-2.0
#include "ctxrep/vendi.hpp"

#include <cmath>

#include "ctxrep/error.hpp"

namespace ctxrep {

SymMatrix build_kernel(const ContextBatch& batch, const KernelSpec& spec) {
    switch (spec.kind) {
        case KernelKind::cosine: return cosine_kernel(batch);
        case KernelKind::rbf: return rbf_kernel(batch, spec.bandwidth);
    }
    fail(ErrorKind::InvalidArgument, "unknown kernel kind");
}

double BatchGradient::max_row_norm() const {
    double m = 0.0;
    for (std::size_t i = 0; i < batch_size; ++i) m = std::max(m, norm(row(i)));
    return m;
}

DiversityValue entropy_and_score(const SymMatrix& k) {
    const std::size_t b = k.dim();
    std::vector<double> scaled(k.entries().begin(), k.entries().end());
    for (double& v : scaled) v /= static_cast<double>(b);
    const auto eig = jacobi_eigh(SymMatrix(b, std::move(scaled)));

    double entropy = 0.0;
    for (double lambda : eig.eigenvalues) {
        if (lambda > kEigenvalueFloor) entropy -= lambda * std::log(lambda);
    }
    entropy = std::max(entropy, 0.0);
    return {entropy, std::exp(entropy)};
}

BatchGradient entropy_gradient(const ContextBatch& batch, const KernelSpec& spec) {
    const std::size_t b = batch.batch_size();
    const std::size_t nd = batch.vector_dim();
    if (b < 2) fail(ErrorKind::InvalidArgument, "entropy_gradient: batch size must be >= 2");

    const SymMatrix k = build_kernel(batch, spec);
    std::vector<double> scaled(k.entries().begin(), k.entries().end());
    for (double& v : scaled) v /= static_cast<double>(b);
    const auto eig = jacobi_eigh(SymMatrix(b, std::move(scaled)));

    // dL/dK = U diag(-(log lambda + 1)) U^T / B
    std::vector<double> fprime(b);
    for (std::size_t m = 0; m < b; ++m) {
        fprime[m] = -(std::log(std::max(eig.eigenvalues[m], kEigenvalueFloor)) + 1.0);
    }
    std::vector<double> dk(b * b, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = i; j < b; ++j) {
            double s = 0.0;
            for (std::size_t m = 0; m < b; ++m) {
                s += eig.vector_component(i, m) * fprime[m] * eig.vector_component(j, m);
            }
            s /= static_cast<double>(b);
            dk[i * b + j] = s;
            dk[j * b + i] = s;
        }
    }

    BatchGradient g{b, nd, std::vector<double>(b * nd, 0.0)};
    if (spec.kind == KernelKind::cosine) {
        std::vector<double> norms(b);
        for (std::size_t i = 0; i < b; ++i) norms[i] = norm(batch.row(i));
        for (std::size_t i = 0; i < b; ++i) {
            auto gi = g.row(i);
            const auto ci = batch.row(i);
            for (std::size_t j = 0; j < b; ++j) {
                if (j == i) continue;
                const auto cj = batch.row(j);
                const double w = 2.0 * dk[i * b + j];
                const double a = w / (norms[i] * norms[j]);
                const double c = w * k(i, j) / (norms[i] * norms[i]);
                for (std::size_t d = 0; d < nd; ++d) gi[d] += a * cj[d] - c * ci[d];
            }
        }
    } else {
        const double inv_h2 = 1.0 / (spec.bandwidth * spec.bandwidth);
        for (std::size_t i = 0; i < b; ++i) {
            auto gi = g.row(i);
            const auto xi = batch.row(i);
            for (std::size_t j = 0; j < b; ++j) {
                if (j == i) continue;
                const auto xj = batch.row(j);
                const double w = -2.0 * dk[i * b + j] * k(i, j) * inv_h2;
                for (std::size_t d = 0; d < nd; ++d) gi[d] += w * (xi[d] - xj[d]);
            }
        }
    }
    for (double v : g.values) {
        if (!std::isfinite(v)) fail(ErrorKind::NumericOverflow, "entropy_gradient: non-finite gradient");
    }
    return g;
}

double average_pair_vendi(const ContextBatch& points, const KernelSpec& spec) {
    const std::size_t b = points.batch_size();
    if (b < 2) fail(ErrorKind::InvalidArgument, "average_pair_vendi: batch size must be >= 2");
    const std::size_t nd = points.vector_dim();
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = i + 1; j < b; ++j) {
            std::vector<double> v;
            v.reserve(2 * nd);
            v.insert(v.end(), points.row(i).begin(), points.row(i).end());
            v.insert(v.end(), points.row(j).begin(), points.row(j).end());
            total += entropy_and_score(build_kernel(ContextBatch::points(2, nd, std::move(v)), spec)).score;
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

}  // namespace ctxrep
