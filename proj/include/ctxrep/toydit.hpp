// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ctxrep/linalg.hpp"
#include "ctxrep/repulsion.hpp"

namespace ctxrep::toydit {

struct ToyDiTConfig {
    std::size_t n_text_tokens = 8;
    std::size_t n_image_tokens = 16;
    std::size_t token_dim = 16;
    std::size_t n_dual_blocks = 4;
    std::size_t n_single_blocks = 2;
    std::size_t attention_heads = 2;
    std::uint64_t weight_seed = 0;
    bool positional_encoding = false;

    std::size_t total_blocks() const { return n_dual_blocks + n_single_blocks; }
    std::size_t total_tokens() const { return n_text_tokens + n_image_tokens; }
    void validate() const;
};

// Row-major D x D matrices applied as x * W.
struct Projections {
    std::vector<double> q, k, v, o;
};

struct DualBlockWeights {
    Projections text;
    Projections image;
};

struct Weights {
    ToyDiTConfig config;
    std::vector<DualBlockWeights> dual;
    std::vector<Projections> single;
};

struct TokenState {
    std::vector<double> text;   // n_text x D
    std::vector<double> image;  // n_image x D
    std::size_t block_index = 0;

    friend bool operator==(const TokenState&, const TokenState&) = default;
};

struct PromptEncoding {
    std::string prompt_id;
    std::uint64_t seed = 0;
    std::vector<double> tokens;  // n_text x D
};

// Fills every projection from one SplitMix64 stream (standard normals scaled
// by 1/sqrt(D)), in the order dual blocks (text q,k,v,o then image q,k,v,o)
// followed by single blocks.
Weights init_weights(const ToyDiTConfig& cfg);

PromptEncoding encode_prompt(const std::string& prompt_id, std::uint64_t seed, const ToyDiTConfig& cfg);
std::vector<double> image_noise(std::uint64_t seed, const ToyDiTConfig& cfg);

// Joint attention over text+image tokens with per-stream projections (dual
// blocks) or one shared projection set (single blocks, index >= n_dual),
// followed by residual addition and per-token RMS normalization.
TokenState mm_block_forward(const TokenState& state, const Weights& weights, std::size_t block);

struct StepContext {
    std::size_t step_index = 0;
    std::size_t total_steps = 1;
};

struct BlockSnapshot {
    std::size_t block = 0;
    bool repulsed = false;
    std::vector<TokenState> states;  // per sample, after any repulsion
};

struct ForwardResult {
    std::vector<TokenState> finals;
    std::vector<BlockSnapshot> snapshots;
};

// Invoked after each block (after repulsion, before the snapshot) with the
// mutable per-sample states.
using BlockHook =
    std::function<void(const StepContext& step, std::size_t block, std::vector<TokenState>& states)>;

ForwardResult forward_with_hooks(const Weights& weights, const std::vector<PromptEncoding>& prompts,
                                 const std::vector<std::vector<double>>& image_init,
                                 const RepulsionConfig& repulsion, const StepContext& step,
                                 const BlockHook& hook = {});

// Flattened per-sample vectors of the requested stream (text, image or
// text followed by image).
ContextBatch gather_stream(const std::vector<TokenState>& states, Stream stream);
void scatter_stream(const ContextBatch& batch, Stream stream, std::vector<TokenState>& states);

// Multi-step loop: the text stream is re-initialized from the prompt at every
// step and the image stream carries the previous step's output.
struct SamplingRun {
    std::vector<ForwardResult> steps;
};

SamplingRun sampling_run(const Weights& weights, const std::vector<PromptEncoding>& prompts,
                         const std::vector<std::vector<double>>& image_init,
                         const RepulsionConfig& repulsion, std::size_t total_steps,
                         const BlockHook& hook = {});

}  // namespace ctxrep::toydit
