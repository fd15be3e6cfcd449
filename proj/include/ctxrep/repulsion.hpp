// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctxrep/linalg.hpp"
#include "ctxrep/vendi.hpp"

namespace ctxrep {

// Half-open fraction [begin, end) of the sampling trajectory.
struct TimestepInterval {
    double begin = 0.0;
    double end = 1.0;

    bool contains(double fraction) const { return fraction >= begin && fraction < end; }
};

enum class BlockGroup { all, first_third, middle_third, last_third, explicit_list };

struct BlockSelector {
    BlockGroup group = BlockGroup::all;
    std::vector<std::size_t> blocks;  // explicit_list only

    bool selects(std::size_t block_index, std::size_t total_blocks) const;
};

enum class Stream { text, image, all_tokens };

struct RepulsionConfig {
    double eta = 0.0;
    int inner_steps = 1;
    TimestepInterval timestep_interval{};
    BlockSelector block_selector{};
    Stream target_stream = Stream::text;
    // Also repulse all tokens of single-stream blocks regardless of target_stream.
    bool single_stream_all_tokens = false;
    bool gradient_normalization = false;
    KernelSpec kernel{};

    void validate() const;
};

// Named presets carrying the production-model schedule: inner steps, the
// early-timestep window and the tuned eta range (eta defaults to the range's
// geometric mean).
struct RepulsionPreset {
    std::string name;
    RepulsionConfig config;
    int sampler_steps = 0;
    int active_steps = 0;
    double eta_min = 0.0;
    double eta_max = 0.0;
};

const std::vector<RepulsionPreset>& repulsion_presets();
std::optional<RepulsionPreset> find_preset(std::string_view name);

// M inner iterations of c_i <- c_i + (eta / M) g_i with a fresh entropy
// gradient per iteration. With gradient_normalization, g is divided by the
// largest per-sample gradient norm. B < 2 and eta == 0 return the input.
ContextBatch repulse(const ContextBatch& batch, const RepulsionConfig& cfg);

bool should_apply(std::size_t step_index, std::size_t total_steps, std::size_t block_index,
                  std::size_t total_blocks, Stream stream_tag, const RepulsionConfig& cfg);

std::string_view to_string(Stream s);
std::string_view to_string(BlockGroup g);
Stream parse_stream(std::string_view s);
BlockGroup parse_block_group(std::string_view s);

}  // namespace ctxrep
