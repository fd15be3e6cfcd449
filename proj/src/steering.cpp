// SPDX-License-Identifier: Apache-2.0
#include "ctxrep/steering.hpp"

#include <cmath>
#include <string>

#include "ctxrep/error.hpp"

namespace ctxrep::steering {

std::string_view to_string(Space s) { return s == Space::contextual ? "contextual" : "latent"; }

Space parse_space(std::string_view s) {
    if (s == "contextual") return Space::contextual;
    if (s == "latent") return Space::latent;
    fail(ErrorKind::Config, "unknown steering space '" + std::string(s) + "'");
}

std::vector<double> blend(std::span<const double> source, std::span<const double> target, double alpha) {
    if (source.size() != target.size()) fail(ErrorKind::LengthMismatch, "blend: vectors differ in length");
    if (!std::isfinite(alpha)) fail(ErrorKind::InvalidArgument, "blend: alpha must be finite");
    std::vector<double> out(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) out[i] = std::lerp(source[i], target[i], alpha);
    return out;
}

SteeredFlow steered_run(const gmm::MixtureWorld& world, const std::vector<double>& prompt,
                        std::uint64_t source_seed, std::uint64_t target_seed, const SteeringSpec& spec) {
    const auto plain = gmm::MethodParams::defaults(gmm::Method::none);
    const std::vector<std::vector<double>> prompts{prompt};
    SteeredFlow r;
    r.target = gmm::sample_batch(world, prompts, plain, target_seed).front();
    r.source = gmm::sample_batch(world, prompts, plain, source_seed).front();

    const auto& target = r.target;
    const std::size_t steps = world.n_steps;
    auto hook = [&](std::size_t step, std::vector<gmm::Vec2>& z, std::vector<std::vector<double>>& ctx) {
        const double frac = static_cast<double>(step) / static_cast<double>(steps);
        if (!spec.apply_interval.contains(frac)) return;
        if (spec.space == Space::contextual) {
            ctx[0] = blend(ctx[0], target.contexts[step], spec.alpha);
        } else {
            const auto b = blend(z[0], target.latents[step], spec.alpha);
            z[0] = {b[0], b[1]};
        }
    };
    r.steered = gmm::sample_batch(world, prompts, plain, source_seed, hook).front();
    return r;
}

SteeredToyRun steered_run(const toydit::Weights& weights, const toydit::PromptEncoding& prompt,
                          std::uint64_t source_seed, std::uint64_t target_seed, std::size_t total_steps,
                          const SteeringSpec& spec) {
    const auto& cfg = weights.config;
    const RepulsionConfig off{};
    const std::vector<toydit::PromptEncoding> prompts{prompt};
    const std::vector<std::vector<double>> source_init{toydit::image_noise(source_seed, cfg)};
    const std::vector<std::vector<double>> target_init{toydit::image_noise(target_seed, cfg)};

    SteeredToyRun r;
    r.target = toydit::sampling_run(weights, prompts, target_init, off, total_steps);
    r.source = toydit::sampling_run(weights, prompts, source_init, off, total_steps);

    const auto& target = r.target;
    auto hook = [&](const toydit::StepContext& step, std::size_t block, std::vector<toydit::TokenState>& states) {
        const double frac = static_cast<double>(step.step_index) / static_cast<double>(step.total_steps);
        if (!spec.apply_interval.contains(frac)) return;
        const auto& ref = target.steps[step.step_index].snapshots[block].states[0];
        auto& s = states[0];
        if (spec.space == Space::contextual) {
            s.text = blend(s.text, ref.text, spec.alpha);
        } else {
            s.image = blend(s.image, ref.image, spec.alpha);
        }
    };
    r.steered = toydit::sampling_run(weights, prompts, source_init, off, total_steps, hook);
    return r;
}

}  // namespace ctxrep::steering
