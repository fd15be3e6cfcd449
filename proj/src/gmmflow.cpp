// SPDX-License-Identifier: Apache-2.0
#include "ctxrep/gmmflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ctxrep/error.hpp"
#include "ctxrep/rng.hpp"
#include "ctxrep/vendi.hpp"

namespace ctxrep::gmm {

namespace {

constexpr std::uint64_t kNoiseStream = 1;
constexpr std::uint64_t kCadsStream = 2;

double variance_at(double t, double sigma) {
    const double a = 1.0 - t;
    return a * a * sigma * sigma + t * t;
}

double sq_dist(const Vec2& a, const Vec2& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    return dx * dx + dy * dy;
}

void center_in_place(std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double& x : v) x -= mean;
}

// Unnormalized log responsibilities; -inf for zero-weight modes.
std::vector<double> log_terms(const Vec2& z, double t, std::span<const double> weights,
                              const MixtureWorld& world, double s2) {
    const auto mu = world.centers();
    std::vector<double> lt(mu.size());
    for (std::size_t k = 0; k < mu.size(); ++k) {
        const Vec2 m{(1.0 - t) * mu[k][0], (1.0 - t) * mu[k][1]};
        lt[k] = weights[k] > 0.0 ? std::log(weights[k]) - sq_dist(z, m) / (2.0 * s2)
                                 : -std::numeric_limits<double>::infinity();
    }
    return lt;
}

double log_sum_exp(const std::vector<double>& v) {
    const double mx = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

void check_weights(std::span<const double> weights, const MixtureWorld& world) {
    if (weights.size() != world.n_modes) {
        fail(ErrorKind::LengthMismatch, "mixture weights must have one entry per mode");
    }
}

bool any_zero_norm(const std::vector<std::vector<double>>& rows) {
    return std::any_of(rows.begin(), rows.end(), [](const auto& r) { return norm(r) == 0.0; });
}

void apply_cads(std::vector<std::vector<double>>& contexts, const CadsParams& cads, double t,
                double anneal, SplitMix64& rng) {
    for (auto& c : contexts) {
        std::vector<double> noise(c.size());
        for (double& n : noise) n = rng.normal();
        if (!cads.schedule) {
            for (std::size_t k = 0; k < c.size(); ++k) c[k] += cads.scale * anneal * noise[k];
            continue;
        }
        double g;
        if (t <= cads.tau1) {
            g = 1.0;
        } else if (t >= cads.tau2) {
            g = 0.0;
        } else {
            g = (cads.tau2 - t) / (cads.tau2 - cads.tau1);
        }
        std::vector<double> y = c;
        std::vector<double> noisy(c.size());
        for (std::size_t k = 0; k < c.size(); ++k) {
            noisy[k] = std::sqrt(g) * y[k] + cads.scale * std::sqrt(1.0 - g) * noise[k];
        }
        auto moments = [](const std::vector<double>& v) {
            double m = 0.0;
            for (double x : v) m += x;
            m /= static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v) var += (x - m) * (x - m);
            return std::pair{m, std::sqrt(var / static_cast<double>(v.size()))};
        };
        const auto [my, sy] = moments(y);
        const auto [mn, sn] = moments(noisy);
        for (std::size_t k = 0; k < c.size(); ++k) {
            const double rescaled = sn > 0.0 ? (noisy[k] - mn) / sn * sy + my : noisy[k];
            c[k] = cads.psi * rescaled + (1.0 - cads.psi) * noisy[k];
        }
    }
}

}  // namespace

std::vector<Vec2> MixtureWorld::centers() const {
    std::vector<Vec2> c(n_modes);
    for (std::size_t k = 0; k < n_modes; ++k) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_modes);
        c[k] = {radius * std::cos(a), radius * std::sin(a)};
    }
    return c;
}

double MixtureWorld::min_center_distance() const {
    const auto c = centers();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t j = i + 1; j < c.size(); ++j) best = std::min(best, std::sqrt(sq_dist(c[i], c[j])));
    return best;
}

void MixtureWorld::validate() const {
    if (n_modes == 0) fail(ErrorKind::Config, "world: n_modes must be >= 1");
    if (!(radius > 0.0) && n_modes > 1) fail(ErrorKind::Config, "world: radius must be positive");
    if (!(mode_sigma > 0.0)) fail(ErrorKind::Config, "world: mode_sigma must be positive");
    if (!(guidance_gamma >= 0.0)) fail(ErrorKind::Config, "world: guidance_gamma must be >= 0");
    if (n_steps == 0) fail(ErrorKind::Config, "world: n_steps must be >= 1");
    if (!std::isfinite(context_feedback)) fail(ErrorKind::Config, "world: context_feedback must be finite");
    if (n_modes > 1 && !(mode_sigma < min_center_distance() / 6.0)) {
        fail(ErrorKind::Config, "world: modes are not separable (sigma >= min center distance / 6)");
    }
}

std::vector<double> conditional_weights(std::span<const double> logits, double gamma) {
    if (logits.empty()) fail(ErrorKind::InvalidArgument, "conditional_weights: empty logits");
    std::vector<double> w(logits.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (!std::isfinite(logits[k])) fail(ErrorKind::InvalidArgument, "conditional_weights: non-finite logit");
        w[k] = gamma * logits[k];
        mx = std::max(mx, w[k]);
    }
    double s = 0.0;
    for (double& x : w) {
        x = std::exp(x - mx);
        s += x;
    }
    for (double& x : w) x /= s;
    return w;
}

Posterior posterior_denoiser(const Vec2& z, double t, std::span<const double> weights, const MixtureWorld& world) {
    if (!(t > 0.0 && t <= 1.0)) fail(ErrorKind::InvalidArgument, "posterior_denoiser: t must be in (0, 1]");
    check_weights(weights, world);
    const double sigma2 = world.mode_sigma * world.mode_sigma;
    const double s2 = variance_at(t, world.mode_sigma);
    const auto lt = log_terms(z, t, weights, world, s2);
    const double lse = log_sum_exp(lt);
    if (!std::isfinite(lse)) fail(ErrorKind::InvalidArgument, "posterior_denoiser: all mixture weights are zero");

    const auto mu = world.centers();
    const double gain = (1.0 - t) * sigma2 / s2;
    Posterior p;
    p.responsibilities.resize(mu.size());
    for (std::size_t k = 0; k < mu.size(); ++k) {
        const double r = std::exp(lt[k] - lse);
        p.responsibilities[k] = r;
        for (int d = 0; d < 2; ++d) p.mean[d] += r * (mu[k][d] + gain * (z[d] - (1.0 - t) * mu[k][d]));
    }
    return p;
}

double log_density(const Vec2& z, double t, std::span<const double> weights, const MixtureWorld& world) {
    check_weights(weights, world);
    const double s2 = variance_at(t, world.mode_sigma);
    return log_sum_exp(log_terms(z, t, weights, world, s2)) - std::log(2.0 * std::numbers::pi * s2);
}

Vec2 score(const Vec2& z, double t, std::span<const double> weights, const MixtureWorld& world) {
    check_weights(weights, world);
    const double s2 = variance_at(t, world.mode_sigma);
    const auto lt = log_terms(z, t, weights, world, s2);
    const double lse = log_sum_exp(lt);
    const auto mu = world.centers();
    Vec2 g{0.0, 0.0};
    for (std::size_t k = 0; k < mu.size(); ++k) {
        const double r = std::exp(lt[k] - lse);
        for (int d = 0; d < 2; ++d) g[d] -= r * (z[d] - (1.0 - t) * mu[k][d]) / s2;
    }
    return g;
}

std::vector<double> mode_log_likelihood(const Vec2& z, double t, const MixtureWorld& world) {
    const double s2 = variance_at(t, world.mode_sigma);
    const auto mu = world.centers();
    std::vector<double> l(mu.size());
    for (std::size_t k = 0; k < mu.size(); ++k) {
        const Vec2 m{(1.0 - t) * mu[k][0], (1.0 - t) * mu[k][1]};
        l[k] = -sq_dist(z, m) / (2.0 * s2);
    }
    center_in_place(l);
    return l;
}

std::vector<double> enrich_context(std::span<const double> prompt, const Vec2& z, double t,
                                   const MixtureWorld& world) {
    if (prompt.size() != world.n_modes) fail(ErrorKind::LengthMismatch, "prompt length must equal n_modes");
    std::vector<double> c(prompt.begin(), prompt.end());
    center_in_place(c);
    if (world.context_feedback != 0.0) {
        const auto l = mode_log_likelihood(z, t, world);
        for (std::size_t k = 0; k < c.size(); ++k) c[k] += world.context_feedback * l[k];
    }
    return c;
}

std::string_view to_string(Method m) {
    switch (m) {
        case Method::none: return "none";
        case Method::contextual: return "contextual";
        case Method::latent: return "latent";
        case Method::cads: return "cads";
    }
    return "?";
}

Method parse_method(std::string_view s) {
    if (s == "none") return Method::none;
    if (s == "contextual") return Method::contextual;
    if (s == "latent") return Method::latent;
    if (s == "cads") return Method::cads;
    fail(ErrorKind::Config, "unknown method '" + std::string(s) + "'");
}

MethodParams MethodParams::defaults(Method m) {
    MethodParams p;
    p.method = m;
    p.repulsion.eta = m == Method::latent ? 0.1 : 20.0;
    p.repulsion.inner_steps = 10;
    p.repulsion.timestep_interval = {0.0, 0.375};
    p.repulsion.gradient_normalization = true;
    return p;
}

std::vector<SampleTrajectory> sample_batch(const MixtureWorld& world, const std::vector<std::vector<double>>& prompts,
                                           const MethodParams& params, std::uint64_t seed, const StepHook& hook) {
    world.validate();
    params.repulsion.validate();
    if (prompts.empty()) fail(ErrorKind::InvalidArgument, "sample_batch: empty batch");
    for (const auto& p : prompts) {
        if (p.size() != world.n_modes) fail(ErrorKind::LengthMismatch, "sample_batch: prompt length must equal n_modes");
    }
    const std::size_t b = prompts.size();
    const std::size_t steps = world.n_steps;
    const double dt = 1.0 / static_cast<double>(steps);

    SplitMix64 noise(mix_seed(seed, kNoiseStream));
    SplitMix64 cads_rng(mix_seed(seed, kCadsStream));

    std::vector<Vec2> z(b);
    for (auto& zi : z) zi = {noise.normal(), noise.normal()};

    std::vector<SampleTrajectory> out(b);
    for (auto& tr : out) {
        tr.times.reserve(steps + 1);
        tr.latents.reserve(steps + 1);
        tr.contexts.reserve(steps + 1);
    }

    RepulsionConfig ctx_cfg = params.repulsion;
    ctx_cfg.kernel = KernelSpec::cosine();
    RepulsionConfig lat_cfg = params.repulsion;
    lat_cfg.kernel = KernelSpec::rbf(params.latent_bandwidth);
    const auto& window = params.repulsion.timestep_interval;

    std::vector<std::vector<double>> contexts(b);
    for (std::size_t j = 0; j < steps; ++j) {
        const double t = 1.0 - static_cast<double>(j) * dt;
        for (std::size_t i = 0; i < b; ++i) contexts[i] = enrich_context(prompts[i], z[i], t, world);

        const bool active = should_apply(j, steps, 0, 1, params.repulsion.target_stream, params.repulsion);
        switch (params.method) {
            case Method::none: break;
            case Method::contextual:
                if (active && b >= 2 && !any_zero_norm(contexts)) {
                    const auto next = repulse(ContextBatch::from_rows(contexts), ctx_cfg);
                    for (std::size_t i = 0; i < b; ++i) {
                        auto r = next.row(i);
                        contexts[i].assign(r.begin(), r.end());
                    }
                }
                break;
            case Method::latent:
                if (active && b >= 2) {
                    std::vector<std::vector<double>> rows(b);
                    for (std::size_t i = 0; i < b; ++i) rows[i] = {z[i][0], z[i][1]};
                    const auto next = repulse(ContextBatch::points_from_rows(rows), lat_cfg);
                    for (std::size_t i = 0; i < b; ++i) z[i] = {next.row(i)[0], next.row(i)[1]};
                }
                break;
            case Method::cads: {
                const double frac = static_cast<double>(j) * dt;
                if (params.cads.schedule) {
                    apply_cads(contexts, params.cads, t, 1.0, cads_rng);
                } else if (window.contains(frac)) {
                    const double anneal = 1.0 - (frac - window.begin) / (window.end - window.begin);
                    apply_cads(contexts, params.cads, t, anneal, cads_rng);
                }
                break;
            }
        }
        if (hook) hook(j, z, contexts);

        for (std::size_t i = 0; i < b; ++i) {
            out[i].times.push_back(t);
            out[i].latents.push_back(z[i]);
            out[i].contexts.push_back(contexts[i]);
            const auto w = conditional_weights(contexts[i], world.guidance_gamma);
            const auto post = posterior_denoiser(z[i], t, w, world);
            for (int d = 0; d < 2; ++d) {
                const double v = (z[i][d] - post.mean[d]) / t;
                z[i][d] -= dt * v;
            }
            if (!std::isfinite(z[i][0]) || !std::isfinite(z[i][1])) {
                fail(ErrorKind::NumericOverflow, "sample_batch: non-finite latent");
            }
        }
    }
    for (std::size_t i = 0; i < b; ++i) {
        out[i].times.push_back(0.0);
        out[i].latents.push_back(z[i]);
        out[i].contexts.push_back(enrich_context(prompts[i], z[i], 0.0, world));
    }
    return out;
}

std::size_t nearest_mode(const Vec2& x, const MixtureWorld& world) {
    const auto mu = world.centers();
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < mu.size(); ++k) {
        const double d = sq_dist(x, mu[k]);
        if (d < bd) {
            bd = d;
            best = k;
        }
    }
    return best;
}

RunMetrics evaluate(const std::vector<Vec2>& final_samples, const MixtureWorld& world) {
    if (final_samples.empty()) fail(ErrorKind::InvalidArgument, "evaluate: empty batch");
    const auto mu = world.centers();
    const double threshold = 3.0 * world.mode_sigma;
    const std::size_t b = final_samples.size();

    RunMetrics m;
    std::vector<bool> hit(mu.size(), false);
    std::size_t off = 0;
    double dist_sum = 0.0;
    for (const auto& x : final_samples) {
        const std::size_t k = nearest_mode(x, world);
        const double d = std::sqrt(sq_dist(x, mu[k]));
        dist_sum += d;
        if (d <= threshold) {
            hit[k] = true;
        } else {
            ++off;
        }
    }
    m.mode_coverage = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), true));
    m.off_manifold_rate = static_cast<double>(off) / static_cast<double>(b);
    m.mean_nearest_mode_distance = dist_sum / static_cast<double>(b);

    std::vector<double> flat;
    flat.reserve(2 * b);
    for (const auto& x : final_samples) flat.insert(flat.end(), x.begin(), x.end());
    const auto points = ContextBatch::points(b, 2, std::move(flat));
    const KernelSpec kernel = KernelSpec::rbf(world.radius / 2.0);
    m.vendi_rbf = entropy_and_score(build_kernel(points, kernel)).score;
    m.avg_pair_vendi = b >= 2 ? average_pair_vendi(points, kernel) : 1.0;
    return m;
}

RunMetrics evaluate(const std::vector<SampleTrajectory>& trajectories, const MixtureWorld& world) {
    std::vector<Vec2> finals;
    finals.reserve(trajectories.size());
    for (const auto& tr : trajectories) {
        if (tr.latents.empty()) fail(ErrorKind::InvalidArgument, "evaluate: empty trajectory");
        finals.push_back(tr.latents.back());
    }
    return evaluate(finals, world);
}

std::vector<std::vector<double>> one_hot_prompts(std::size_t batch, const MixtureWorld& world, std::size_t mode,
                                                 double scale) {
    std::vector<double> p(world.n_modes, 0.0);
    p.at(mode) = scale;
    return std::vector<std::vector<double>>(batch, p);
}

}  // namespace ctxrep::gmm
