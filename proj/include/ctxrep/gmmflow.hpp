// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "ctxrep/repulsion.hpp"

namespace ctxrep::gmm {

using Vec2 = std::array<double, 2>;

// Context-conditioned 2-D Gaussian mixture sampled with a rectified flow
// x_t = (1 - t) x_0 + t eps. Mode weights are softmax(gamma * c) for a
// per-sample context c of K logits; gamma plays the role of guidance strength.
struct MixtureWorld {
    std::size_t n_modes = 8;
    double radius = 4.0;
    double mode_sigma = 0.25;
    double guidance_gamma = 1.0;
    std::size_t n_steps = 64;
    // Weight of the latent's per-mode log-likelihood absorbed into the
    // context at every step (the feedback that makes contexts per-sample).
    double context_feedback = 0.5;

    std::vector<Vec2> centers() const;
    double min_center_distance() const;
    void validate() const;
};

std::vector<double> conditional_weights(std::span<const double> logits, double gamma);

struct Posterior {
    Vec2 mean{};                        // E[x0 | z_t]
    std::vector<double> responsibilities;
};

Posterior posterior_denoiser(const Vec2& z, double t, std::span<const double> weights, const MixtureWorld& world);

// log p_t(z) and its gradient for the mixture marginal at time t.
double log_density(const Vec2& z, double t, std::span<const double> weights, const MixtureWorld& world);
Vec2 score(const Vec2& z, double t, std::span<const double> weights, const MixtureWorld& world);

// Per-mode log-likelihood of z at time t, centered to zero mean.
std::vector<double> mode_log_likelihood(const Vec2& z, double t, const MixtureWorld& world);

// Context seen by the denoiser before any intervention: centered prompt logits
// plus context_feedback times the centered mode log-likelihood of z.
std::vector<double> enrich_context(std::span<const double> prompt, const Vec2& z, double t,
                                   const MixtureWorld& world);

enum class Method { none, contextual, latent, cads };

std::string_view to_string(Method m);
Method parse_method(std::string_view s);

struct CadsParams {
    double scale = 10.0;
    // false: additive noise annealed linearly to zero across the intervention
    // interval. true: the tau1/tau2 schedule with psi rescaling.
    bool schedule = false;
    double tau1 = 0.3;
    double tau2 = 0.8;
    double psi = 1.0;
};

struct MethodParams {
    Method method = Method::none;
    // eta, inner steps, normalization and the timestep interval (which also
    // bounds the CADS window when schedule is off).
    RepulsionConfig repulsion{};
    double latent_bandwidth = 1.0;
    CadsParams cads{};

    static MethodParams defaults(Method m);
};

struct SampleTrajectory {
    std::vector<double> times;                  // T + 1 values from 1 down to 0
    std::vector<Vec2> latents;                  // T + 1
    std::vector<std::vector<double>> contexts;  // T + 1; entry j is the context used at step j
};

// Called at each step after the method's intervention and before the
// denoiser; may overwrite latents or contexts.
using StepHook = std::function<void(std::size_t step, std::vector<Vec2>& latents,
                                    std::vector<std::vector<double>>& contexts)>;

std::vector<SampleTrajectory> sample_batch(const MixtureWorld& world, const std::vector<std::vector<double>>& prompts,
                                           const MethodParams& params, std::uint64_t seed,
                                           const StepHook& hook = {});

struct RunMetrics {
    double vendi_rbf = 1.0;
    std::size_t mode_coverage = 0;
    double off_manifold_rate = 0.0;
    double mean_nearest_mode_distance = 0.0;
    double avg_pair_vendi = 1.0;
};

RunMetrics evaluate(const std::vector<Vec2>& final_samples, const MixtureWorld& world);
RunMetrics evaluate(const std::vector<SampleTrajectory>& trajectories, const MixtureWorld& world);

// B copies of scale * e_mode.
std::vector<std::vector<double>> one_hot_prompts(std::size_t batch, const MixtureWorld& world,
                                                 std::size_t mode = 0, double scale = 10.0);

std::size_t nearest_mode(const Vec2& x, const MixtureWorld& world);

}  // namespace ctxrep::gmm
