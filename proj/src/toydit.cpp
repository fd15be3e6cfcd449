// SPDX-License-Identifier: Apache-2.0
#include "ctxrep/toydit.hpp"

#include <cmath>
#include <numbers>

#include "ctxrep/error.hpp"
#include "ctxrep/rng.hpp"

namespace ctxrep::toydit {

namespace {

constexpr double kRmsEpsilon = 1e-6;

std::vector<double> random_matrix(SplitMix64& rng, std::size_t d) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> m(d * d);
    for (double& x : m) x = scale * rng.normal();
    return m;
}

Projections random_projections(SplitMix64& rng, std::size_t d) {
    Projections p;
    p.q = random_matrix(rng, d);
    p.k = random_matrix(rng, d);
    p.v = random_matrix(rng, d);
    p.o = random_matrix(rng, d);
    return p;
}

// out = x * W for one token.
void project(const double* x, const std::vector<double>& w, std::size_t d, double* out) {
    for (std::size_t c = 0; c < d; ++c) out[c] = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
        const double xr = x[r];
        const double* row = w.data() + r * d;
        for (std::size_t c = 0; c < d; ++c) out[c] += xr * row[c];
    }
}

void add_positions(std::vector<double>& image, std::size_t d) {
    const std::size_t n = image.size() / d;
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t c = 0; c < d; ++c) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (c / 2)) / static_cast<double>(d));
            const double angle = static_cast<double>(t) * freq;
            image[t * d + c] += (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
}

}  // namespace

void ToyDiTConfig::validate() const {
    if (n_text_tokens == 0 || n_image_tokens == 0 || token_dim == 0 || n_dual_blocks == 0 ||
        attention_heads == 0) {
        fail(ErrorKind::Config, "toydit: token counts, dim, dual blocks and heads must be >= 1");
    }
    if (token_dim % attention_heads != 0) {
        fail(ErrorKind::Config, "toydit: token_dim must be divisible by attention_heads");
    }
}

Weights init_weights(const ToyDiTConfig& cfg) {
    cfg.validate();
    SplitMix64 rng(cfg.weight_seed);
    Weights w;
    w.config = cfg;
    for (std::size_t b = 0; b < cfg.n_dual_blocks; ++b) {
        DualBlockWeights dw;
        dw.text = random_projections(rng, cfg.token_dim);
        dw.image = random_projections(rng, cfg.token_dim);
        w.dual.push_back(std::move(dw));
    }
    for (std::size_t b = 0; b < cfg.n_single_blocks; ++b) {
        w.single.push_back(random_projections(rng, cfg.token_dim));
    }
    return w;
}

PromptEncoding encode_prompt(const std::string& prompt_id, std::uint64_t seed, const ToyDiTConfig& cfg) {
    SplitMix64 rng(mix_seed(seed, fnv1a64(prompt_id)));
    PromptEncoding p{prompt_id, seed, std::vector<double>(cfg.n_text_tokens * cfg.token_dim)};
    for (double& x : p.tokens) x = rng.normal();
    return p;
}

std::vector<double> image_noise(std::uint64_t seed, const ToyDiTConfig& cfg) {
    SplitMix64 rng(mix_seed(seed, 0x1A6E));
    std::vector<double> v(cfg.n_image_tokens * cfg.token_dim);
    for (double& x : v) x = rng.normal();
    return v;
}

TokenState mm_block_forward(const TokenState& state, const Weights& weights, std::size_t block) {
    const auto& cfg = weights.config;
    const std::size_t d = cfg.token_dim;
    const std::size_t nt = cfg.n_text_tokens;
    const std::size_t ni = cfg.n_image_tokens;
    const std::size_t n = nt + ni;
    if (state.text.size() != nt * d || state.image.size() != ni * d) {
        fail(ErrorKind::DimensionMismatch, "mm_block_forward: token state does not match config");
    }
    if (block >= cfg.total_blocks()) fail(ErrorKind::DimensionMismatch, "mm_block_forward: block out of range");

    const bool dual = block < cfg.n_dual_blocks;
    auto proj_for = [&](std::size_t token) -> const Projections& {
        if (!dual) return weights.single[block - cfg.n_dual_blocks];
        return token < nt ? weights.dual[block].text : weights.dual[block].image;
    };

    std::vector<double> x(n * d);
    std::copy(state.text.begin(), state.text.end(), x.begin());
    std::copy(state.image.begin(), state.image.end(), x.begin() + static_cast<std::ptrdiff_t>(nt * d));

    std::vector<double> q(n * d), k(n * d), v(n * d);
    for (std::size_t t = 0; t < n; ++t) {
        const auto& p = proj_for(t);
        project(&x[t * d], p.q, d, &q[t * d]);
        project(&x[t * d], p.k, d, &k[t * d]);
        project(&x[t * d], p.v, d, &v[t * d]);
    }

    const std::size_t heads = cfg.attention_heads;
    const std::size_t hd = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<double> attn(n * d, 0.0);
    std::vector<double> scores(n);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * hd;
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -INFINITY;
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < hd; ++c) s += q[i * d + off + c] * k[j * d + off + c];
                scores[j] = s * inv_sqrt;
                mx = std::max(mx, scores[j]);
            }
            double denom = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                scores[j] = std::exp(scores[j] - mx);
                denom += scores[j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                const double a = scores[j] / denom;
                for (std::size_t c = 0; c < hd; ++c) attn[i * d + off + c] += a * v[j * d + off + c];
            }
        }
    }

    std::vector<double> out(n * d);
    std::vector<double> tmp(d);
    for (std::size_t t = 0; t < n; ++t) {
        project(&attn[t * d], proj_for(t).o, d, tmp.data());
        double ms = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double r = x[t * d + c] + tmp[c];
            out[t * d + c] = r;
            ms += r * r;
        }
        const double inv = 1.0 / std::sqrt(ms / static_cast<double>(d) + kRmsEpsilon);
        for (std::size_t c = 0; c < d; ++c) out[t * d + c] *= inv;
    }

    TokenState next;
    next.text.assign(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(nt * d));
    next.image.assign(out.begin() + static_cast<std::ptrdiff_t>(nt * d), out.end());
    next.block_index = block + 1;
    return next;
}

ContextBatch gather_stream(const std::vector<TokenState>& states, Stream stream) {
    if (states.empty()) fail(ErrorKind::InvalidArgument, "gather_stream: empty batch");
    std::vector<double> values;
    std::size_t nd = 0;
    for (const auto& s : states) {
        const std::size_t before = values.size();
        if (stream != Stream::image) values.insert(values.end(), s.text.begin(), s.text.end());
        if (stream != Stream::text) values.insert(values.end(), s.image.begin(), s.image.end());
        nd = values.size() - before;
    }
    return ContextBatch(states.size(), nd, std::move(values));
}

void scatter_stream(const ContextBatch& batch, Stream stream, std::vector<TokenState>& states) {
    if (batch.batch_size() != states.size()) fail(ErrorKind::DimensionMismatch, "scatter_stream: batch size");
    for (std::size_t i = 0; i < states.size(); ++i) {
        auto row = batch.row(i);
        std::size_t pos = 0;
        auto& s = states[i];
        const std::size_t expected = (stream != Stream::image ? s.text.size() : 0) +
                                     (stream != Stream::text ? s.image.size() : 0);
        if (row.size() != expected) fail(ErrorKind::DimensionMismatch, "scatter_stream: vector length");
        if (stream != Stream::image) {
            std::copy(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(s.text.size()), s.text.begin());
            pos = s.text.size();
        }
        if (stream != Stream::text) {
            std::copy(row.begin() + static_cast<std::ptrdiff_t>(pos), row.end(), s.image.begin());
        }
    }
}

ForwardResult forward_with_hooks(const Weights& weights, const std::vector<PromptEncoding>& prompts,
                                 const std::vector<std::vector<double>>& image_init,
                                 const RepulsionConfig& repulsion, const StepContext& step,
                                 const BlockHook& hook) {
    const auto& cfg = weights.config;
    const std::size_t d = cfg.token_dim;
    if (prompts.empty()) fail(ErrorKind::InvalidArgument, "forward_with_hooks: empty batch");
    if (prompts.size() != image_init.size()) {
        fail(ErrorKind::DimensionMismatch, "forward_with_hooks: prompt and image batch sizes differ");
    }
    repulsion.validate();

    std::vector<TokenState> states(prompts.size());
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        if (prompts[i].tokens.size() != cfg.n_text_tokens * d) {
            fail(ErrorKind::DimensionMismatch, "forward_with_hooks: prompt token count mismatch");
        }
        if (image_init[i].size() != cfg.n_image_tokens * d) {
            fail(ErrorKind::DimensionMismatch, "forward_with_hooks: image token count mismatch");
        }
        states[i].text = prompts[i].tokens;
        states[i].image = image_init[i];
        if (cfg.positional_encoding && step.step_index == 0) add_positions(states[i].image, d);
    }

    ForwardResult result;
    const std::size_t total = cfg.total_blocks();
    for (std::size_t block = 0; block < total; ++block) {
        for (auto& s : states) s = mm_block_forward(s, weights, block);

        const bool dual = block < cfg.n_dual_blocks;
        bool repulsed = false;
        if (dual) {
            for (Stream tag : {Stream::text, Stream::image, Stream::all_tokens}) {
                if (should_apply(step.step_index, step.total_steps, block, total, tag, repulsion)) {
                    scatter_stream(repulse(gather_stream(states, tag), repulsion), tag, states);
                    repulsed = true;
                }
            }
        } else {
            RepulsionConfig single_cfg = repulsion;
            if (repulsion.single_stream_all_tokens) single_cfg.target_stream = Stream::all_tokens;
            if (should_apply(step.step_index, step.total_steps, block, total, Stream::all_tokens, single_cfg)) {
                scatter_stream(repulse(gather_stream(states, Stream::all_tokens), single_cfg),
                               Stream::all_tokens, states);
                repulsed = true;
            }
        }
        if (hook) hook(step, block, states);
        result.snapshots.push_back({block, repulsed, states});
    }
    result.finals = std::move(states);
    return result;
}

SamplingRun sampling_run(const Weights& weights, const std::vector<PromptEncoding>& prompts,
                         const std::vector<std::vector<double>>& image_init,
                         const RepulsionConfig& repulsion, std::size_t total_steps,
                         const BlockHook& hook) {
    if (total_steps == 0) fail(ErrorKind::InvalidArgument, "sampling_run: total_steps must be >= 1");
    SamplingRun run;
    std::vector<std::vector<double>> image = image_init;
    for (std::size_t s = 0; s < total_steps; ++s) {
        run.steps.push_back(forward_with_hooks(weights, prompts, image, repulsion, {s, total_steps}, hook));
        for (std::size_t i = 0; i < image.size(); ++i) image[i] = run.steps.back().finals[i].image;
    }
    return run;
}

}  // namespace ctxrep::toydit
