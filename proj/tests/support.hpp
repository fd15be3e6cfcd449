// SPDX-License-Identifier: Apache-2.0
// Helpers shared by the test binaries. Reference values here are computed
// independently of the library code paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ctxrep/linalg.hpp"
#include "ctxrep/rng.hpp"
#include "ctxrep/vendi.hpp"

namespace testsupport {

inline std::vector<double> normals(std::uint64_t seed, std::size_t n) {
    ctxrep::SplitMix64 rng(ctxrep::mix_seed(seed, 0x7E57));
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

inline ctxrep::ContextBatch random_batch(std::uint64_t seed, std::size_t b, std::size_t d) {
    return ctxrep::ContextBatch(b, d, normals(seed, b * d));
}

inline ctxrep::SymMatrix random_symmetric(std::uint64_t seed, std::size_t n) {
    auto v = normals(seed, n * n);
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a[i * n + j] = 0.5 * (v[i * n + j] + v[j * n + i]);
    return ctxrep::SymMatrix(n, a);
}

// -x log x summed over the closed-form 2x2 spectrum (1 +- k) / 2.
inline double two_sample_entropy(double k12) {
    double h = 0.0;
    for (double lam : {0.5 * (1.0 + k12), 0.5 * (1.0 - k12)})
        if (lam > 0.0) h -= lam * std::log(lam);
    return h;
}

// Plain cosine similarity written out directly.
inline double cosine(std::span<const double> a, std::span<const double> b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

// Central finite differences of the cosine-kernel entropy.
inline std::vector<double> fd_entropy_gradient(const ctxrep::ContextBatch& batch, double step) {
    const std::size_t b = batch.batch_size(), d = batch.vector_dim();
    std::vector<double> x(batch.values().begin(), batch.values().end());
    std::vector<double> g(x.size());
    auto h = [&](const std::vector<double>& v) {
        return ctxrep::entropy_and_score(ctxrep::cosine_kernel(ctxrep::ContextBatch(b, d, v))).entropy;
    };
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double keep = x[k];
        x[k] = keep + step;
        const double up = h(x);
        x[k] = keep - step;
        const double dn = h(x);
        x[k] = keep;
        g[k] = (up - dn) / (2.0 * step);
    }
    return g;
}

inline double rel_inf_error(const std::vector<double>& a, const std::vector<double>& ref) {
    double err = 0, scale = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        err = std::max(err, std::abs(a[i] - ref[i]));
        scale = std::max(scale, std::abs(ref[i]));
    }
    return err / std::max(scale, 1e-12);
}

inline ctxrep::ContextBatch permute_rows(const ctxrep::ContextBatch& batch, const std::vector<std::size_t>& perm) {
    std::vector<double> v;
    for (auto p : perm) {
        const auto r = batch.row(p);
        v.insert(v.end(), r.begin(), r.end());
    }
    return ctxrep::ContextBatch(batch.batch_size(), batch.vector_dim(), v);
}

}  // namespace testsupport
