// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ctxrep/gmmflow.hpp"
#include "ctxrep/repulsion.hpp"
#include "ctxrep/toydit.hpp"

namespace ctxrep::steering {

enum class Space { contextual, latent };

std::string_view to_string(Space s);
Space parse_space(std::string_view s);

struct SteeringSpec {
    double alpha = 0.0;
    Space space = Space::contextual;
    TimestepInterval apply_interval{0.0, 1.0};
};

// source + alpha * (target - source); exact at alpha = 0 and alpha = 1.
std::vector<double> blend(std::span<const double> source, std::span<const double> target, double alpha);

struct SteeredFlow {
    gmm::SampleTrajectory source;  // plain source run
    gmm::SampleTrajectory target;  // plain target run
    gmm::SampleTrajectory steered;
};

// Records the target run, then re-runs the source from its own initial noise,
// replacing the chosen representation with blend(source, target, alpha) at
// every step inside apply_interval. No diversity intervention is applied.
SteeredFlow steered_run(const gmm::MixtureWorld& world, const std::vector<double>& prompt,
                        std::uint64_t source_seed, std::uint64_t target_seed, const SteeringSpec& spec);

struct SteeredToyRun {
    toydit::SamplingRun source;
    toydit::SamplingRun target;
    toydit::SamplingRun steered;
};

// Toy transformer analog: contextual blends the text tokens after every
// block, latent blends the image tokens.
SteeredToyRun steered_run(const toydit::Weights& weights, const toydit::PromptEncoding& prompt,
                          std::uint64_t source_seed, std::uint64_t target_seed, std::size_t total_steps,
                          const SteeringSpec& spec);

}  // namespace ctxrep::steering
