// SPDX-License-Identifier: Apache-2.0
#include "ctxrep/repulsion.hpp"

#include <algorithm>
#include <cmath>

#include "ctxrep/error.hpp"

namespace ctxrep {

namespace {

constexpr double kOverflowLimit = 1e30;

RepulsionPreset make_preset(std::string name, int sampler_steps, int active_steps, int inner_steps,
                            double eta_min, double eta_max, bool single_stream) {
    RepulsionPreset p;
    p.name = std::move(name);
    p.sampler_steps = sampler_steps;
    p.active_steps = active_steps;
    p.eta_min = eta_min;
    p.eta_max = eta_max;
    p.config.eta = std::sqrt(eta_min * eta_max);
    p.config.inner_steps = inner_steps;
    p.config.timestep_interval = {0.0, static_cast<double>(active_steps) / sampler_steps};
    p.config.target_stream = Stream::text;
    p.config.single_stream_all_tokens = single_stream;
    p.config.gradient_normalization = false;
    return p;
}

}  // namespace

bool BlockSelector::selects(std::size_t block_index, std::size_t total_blocks) const {
    const std::size_t third = total_blocks / 3;
    const std::size_t two_thirds = (2 * total_blocks) / 3;
    switch (group) {
        case BlockGroup::all: return true;
        case BlockGroup::first_third: return block_index < third;
        case BlockGroup::middle_third: return block_index >= third && block_index < two_thirds;
        case BlockGroup::last_third: return block_index >= two_thirds;
        case BlockGroup::explicit_list:
            return std::find(blocks.begin(), blocks.end(), block_index) != blocks.end();
    }
    return false;
}

void RepulsionConfig::validate() const {
    if (!std::isfinite(eta) || eta < 0.0) fail(ErrorKind::Config, "repulsion: eta must be finite and >= 0");
    if (inner_steps < 1) fail(ErrorKind::Config, "repulsion: inner_steps must be >= 1");
    const auto& ti = timestep_interval;
    if (!(ti.begin >= 0.0 && ti.begin < ti.end && ti.end <= 1.0)) {
        fail(ErrorKind::Config, "repulsion: timestep interval must satisfy 0 <= a < b <= 1");
    }
    if (kernel.kind == KernelKind::rbf && !(kernel.bandwidth > 0.0)) {
        fail(ErrorKind::Config, "repulsion: rbf bandwidth must be positive");
    }
}

const std::vector<RepulsionPreset>& repulsion_presets() {
    static const std::vector<RepulsionPreset> presets = {
        make_preset("flux-dev", 20, 1, 50, 2.5e8, 5e10, true),
        make_preset("sd35-large", 28, 4, 100, 2.5e7, 5e8, false),
        make_preset("sd35-turbo", 4, 1, 100, 5e6, 1e8, false),
    };
    return presets;
}

std::optional<RepulsionPreset> find_preset(std::string_view name) {
    for (const auto& p : repulsion_presets()) {
        if (p.name == name) return p;
    }
    return std::nullopt;
}

ContextBatch repulse(const ContextBatch& batch, const RepulsionConfig& cfg) {
    cfg.validate();
    if (batch.batch_size() < 2 || cfg.eta == 0.0) return batch;

    const std::size_t b = batch.batch_size();
    const std::size_t nd = batch.vector_dim();
    const double step = cfg.eta / static_cast<double>(cfg.inner_steps);
    ContextBatch current = batch;
    for (int it = 0; it < cfg.inner_steps; ++it) {
        const BatchGradient g = entropy_gradient(current, cfg.kernel);
        double scale = step;
        if (cfg.gradient_normalization) {
            const double m = g.max_row_norm();
            if (m == 0.0) continue;
            scale = step / m;
        }
        std::vector<double> next(current.values().begin(), current.values().end());
        for (std::size_t i = 0; i < b * nd; ++i) {
            next[i] += scale * g.values[i];
            if (!(std::abs(next[i]) <= kOverflowLimit)) {
                fail(ErrorKind::NumericOverflow, "repulse: updated entry exceeds 1e30 in magnitude");
            }
        }
        current = current.with_values(std::move(next));
    }
    return current;
}

bool should_apply(std::size_t step_index, std::size_t total_steps, std::size_t block_index,
                  std::size_t total_blocks, Stream stream_tag, const RepulsionConfig& cfg) {
    if (total_steps == 0 || total_blocks == 0) return false;
    const double fraction = static_cast<double>(step_index) / static_cast<double>(total_steps);
    if (!cfg.timestep_interval.contains(fraction)) return false;
    if (!cfg.block_selector.selects(block_index, total_blocks)) return false;
    return stream_tag == cfg.target_stream;
}

std::string_view to_string(Stream s) {
    switch (s) {
        case Stream::text: return "text";
        case Stream::image: return "image";
        case Stream::all_tokens: return "all_tokens";
    }
    return "?";
}

std::string_view to_string(BlockGroup g) {
    switch (g) {
        case BlockGroup::all: return "all";
        case BlockGroup::first_third: return "first_third";
        case BlockGroup::middle_third: return "middle_third";
        case BlockGroup::last_third: return "last_third";
        case BlockGroup::explicit_list: return "explicit";
    }
    return "?";
}

Stream parse_stream(std::string_view s) {
    if (s == "text") return Stream::text;
    if (s == "image") return Stream::image;
    if (s == "all_tokens" || s == "all") return Stream::all_tokens;
    fail(ErrorKind::Config, "unknown stream '" + std::string(s) + "'");
}

BlockGroup parse_block_group(std::string_view s) {
    if (s == "all") return BlockGroup::all;
    if (s == "first_third") return BlockGroup::first_third;
    if (s == "middle_third") return BlockGroup::middle_third;
    if (s == "last_third") return BlockGroup::last_third;
    if (s == "explicit") return BlockGroup::explicit_list;
    fail(ErrorKind::Config, "unknown block group '" + std::string(s) + "'");
}

}  // namespace ctxrep
