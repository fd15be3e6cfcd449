// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <limits>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctxrep/cli.hpp"
#include "ctxrep/error.hpp"
#include "ctxrep/rng.hpp"
#include "ctxrep/vendi.hpp"

namespace ctxrep::cli {

using nlohmann::json;

GradCheckResult gradient_check(std::size_t batch, std::size_t dim, std::size_t seeds, double fd_step,
                               std::uint64_t base_seed) {
    if (batch < 2) fail(ErrorKind::InvalidArgument, "grad-check: batch must be >= 2");
    if (dim < 1) fail(ErrorKind::InvalidArgument, "grad-check: dim must be >= 1");
    if (!(fd_step > 0.0) || !std::isfinite(fd_step)) fail(ErrorKind::InvalidArgument, "grad-check: fd-step must be > 0");

    GradCheckResult res;
    for (std::size_t s = 0; s < seeds; ++s) {
        SplitMix64 rng(mix_seed(base_seed + s, 0x6A7D));
        std::vector<double> x(batch * dim);
        for (auto& v : x) v = rng.normal();
        const ContextBatch cb(batch, dim, x);
        const auto g = entropy_gradient(cb);

        auto entropy_at = [&](const std::vector<double>& v) {
            return entropy_and_score(cosine_kernel(ContextBatch(batch, dim, v))).entropy;
        };
        double err = 0.0;
        double scale = 0.0;
        std::vector<double> probe = x;
        for (std::size_t k = 0; k < x.size(); ++k) {
            probe[k] = x[k] + fd_step;
            const double up = entropy_at(probe);
            probe[k] = x[k] - fd_step;
            const double dn = entropy_at(probe);
            probe[k] = x[k];
            const double fd = (up - dn) / (2.0 * fd_step);
            err = std::max(err, std::abs(g.values[k] - fd));
            scale = std::max(scale, std::abs(fd));
        }
        res.max_relative_error = std::max(res.max_relative_error, err / std::max(scale, 1e-12));
        ++res.batches;
    }
    return res;
}

namespace {

constexpr double kGradCheckLimit = 1e-4;

struct Usage : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json metrics_json(const gmm::RunMetrics& m) {
    return json{{"vendi_rbf", m.vendi_rbf},
                {"mode_coverage", m.mode_coverage},
                {"off_manifold_rate", m.off_manifold_rate},
                {"mean_nearest_mode_distance", m.mean_nearest_mode_distance},
                {"avg_pair_vendi", m.avg_pair_vendi}};
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; results stay in index order.
template <class T>
std::vector<T> run_indexed(std::size_t n, std::size_t jobs, const std::function<T(std::size_t)>& fn) {
    std::vector<T> out(n);
    if (jobs <= 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    for (std::size_t start = 0; start < n; start += jobs) {
        std::vector<std::future<T>> pending;
        const std::size_t stop = std::min(n, start + jobs);
        for (std::size_t i = start; i < stop; ++i) pending.push_back(std::async(std::launch::async, fn, i));
        for (std::size_t i = start; i < stop; ++i) out[i] = pending[i - start].get();
    }
    return out;
}

struct MeanMetrics {
    double vendi_rbf = 0, mode_coverage = 0, off_manifold_rate = 0, mean_nearest_mode_distance = 0, avg_pair_vendi = 0;
};

MeanMetrics mean_of(const std::vector<gmm::RunMetrics>& runs) {
    MeanMetrics m;
    for (const auto& r : runs) {
        m.vendi_rbf += r.vendi_rbf;
        m.mode_coverage += static_cast<double>(r.mode_coverage);
        m.off_manifold_rate += r.off_manifold_rate;
        m.mean_nearest_mode_distance += r.mean_nearest_mode_distance;
        m.avg_pair_vendi += r.avg_pair_vendi;
    }
    const double n = static_cast<double>(std::max<std::size_t>(runs.size(), 1));
    m.vendi_rbf /= n;
    m.mode_coverage /= n;
    m.off_manifold_rate /= n;
    m.mean_nearest_mode_distance /= n;
    m.avg_pair_vendi /= n;
    return m;
}

std::vector<std::uint64_t> seed_list(const ExperimentConfig& cfg, std::int64_t count_override) {
    const auto base = cfg.get_int("seeds.base", 0);
    const auto count = count_override > 0 ? count_override : cfg.get_int("seeds.count", 20);
    if (base < 0 || count <= 0) fail(ErrorKind::Config, "config: seeds.base must be >= 0 and seeds.count > 0");
    std::vector<std::uint64_t> seeds;
    for (std::int64_t i = 0; i < count; ++i) seeds.push_back(static_cast<std::uint64_t>(base + i));
    return seeds;
}

std::vector<gmm::RunMetrics> run_seeds(const gmm::MixtureWorld& world, const std::vector<std::vector<double>>& prompts,
                                       const gmm::MethodParams& params, const std::vector<std::uint64_t>& seeds,
                                       std::size_t jobs) {
    return run_indexed<gmm::RunMetrics>(seeds.size(), jobs, [&](std::size_t i) {
        return gmm::evaluate(gmm::sample_batch(world, prompts, params, seeds[i]), world);
    });
}

ExperimentConfig config_from(const std::string& path) {
    return path.empty() ? ExperimentConfig{} : ExperimentConfig::load(path);
}

// Writes to `path` when set, otherwise to `fallback`.
void with_output(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& body) {
    if (path.empty()) {
        body(fallback);
        return;
    }
    std::ofstream f(path);
    if (!f) fail(ErrorKind::InvalidArgument, "cannot write '" + path + "'");
    body(f);
}

std::size_t batch_size(const ExperimentConfig& cfg) {
    const auto b = cfg.get_int("batch.size", 8);
    if (b < 1) fail(ErrorKind::Config, "config: batch.size must be >= 1");
    return static_cast<std::size_t>(b);
}

struct ToySetup {
    toydit::Weights weights;
    std::vector<toydit::PromptEncoding> prompts;
    std::vector<std::vector<double>> images;
};

// Identical prompts; per-sample image noise from image_seed + sample index.
ToySetup toy_setup(const ExperimentConfig& cfg, std::uint64_t image_seed_offset) {
    ToySetup s;
    const auto tc = cfg.toy();
    s.weights = toydit::init_weights(tc);
    const auto batch = cfg.get_int("toy.batch", 4);
    if (batch < 1) fail(ErrorKind::Config, "config: toy.batch must be >= 1");
    const auto prompt = toydit::encode_prompt(cfg.get_string("toy.prompt", "a photo of a dog"),
                                              static_cast<std::uint64_t>(cfg.get_int("toy.prompt_seed", 0)), tc);
    const auto image_seed = static_cast<std::uint64_t>(cfg.get_int("toy.image_seed", 1000)) + image_seed_offset;
    for (std::int64_t i = 0; i < batch; ++i) {
        s.prompts.push_back(prompt);
        s.images.push_back(toydit::image_noise(image_seed + static_cast<std::uint64_t>(i), tc));
    }
    return s;
}

toydit::StepContext toy_step(const ExperimentConfig& cfg) {
    const auto steps = cfg.get_int("toy.steps", 4);
    if (steps < 1) fail(ErrorKind::Config, "config: toy.steps must be >= 1");
    return {0, static_cast<std::size_t>(steps)};
}

double text_vendi(const std::vector<toydit::TokenState>& states) {
    return entropy_and_score(cosine_kernel(toydit::gather_stream(states, Stream::text))).score;
}

// ---- subcommands ----

int cmd_vendi(const std::string& input, const std::string& kernel, double bandwidth, std::ostream& out) {
    const auto batch = read_batch_csv_file(input, kernel == "rbf");
    KernelSpec spec;
    if (kernel == "cosine") {
        spec = KernelSpec::cosine();
    } else if (kernel == "rbf") {
        spec = KernelSpec::rbf(bandwidth);
    } else {
        throw Usage("--kernel must be cosine or rbf");
    }
    const auto v = entropy_and_score(build_kernel(batch, spec));
    out << json{{"entropy", v.entropy}, {"score", v.score}}.dump() << '\n';
    return kExitOk;
}

int cmd_grad_check(std::size_t batch, std::size_t dim, std::size_t seeds, double fd_step, std::ostream& out) {
    const auto r = gradient_check(batch, dim, seeds, fd_step);
    const bool ok = r.max_relative_error <= kGradCheckLimit;
    out << json{{"max_relative_error", r.max_relative_error}, {"batches", r.batches}, {"pass", ok}}.dump() << '\n';
    return ok ? kExitOk : kExitNumeric;
}

int cmd_repulse(const std::string& input, double eta, int steps, bool normalize, const std::string& kernel,
                double bandwidth, const std::string& output, std::ostream& out) {
    if (kernel != "rbf" && kernel != "cosine") throw Usage("--kernel must be cosine or rbf");
    const auto batch = read_batch_csv_file(input, kernel == "rbf");
    RepulsionConfig rc;
    rc.eta = eta;
    rc.inner_steps = steps;
    rc.gradient_normalization = normalize;
    rc.kernel = kernel == "rbf" ? KernelSpec::rbf(bandwidth) : KernelSpec::cosine();
    rc.validate();
    const auto updated = repulse(batch, rc);
    with_output(output, out, [&](std::ostream& o) { write_batch_csv(o, updated); });
    return kExitOk;
}

int cmd_toy_run(const ExperimentConfig& cfg, const std::string& out_dir_flag, std::ostream& out) {
    const std::string out_dir = out_dir_flag.empty() ? cfg.get_string("output.dir", "") : out_dir_flag;
    const auto setup = toy_setup(cfg, 0);
    const auto step = toy_step(cfg);
    RepulsionConfig off = cfg.repulsion();
    off.eta = 0.0;
    const auto on_cfg = cfg.repulsion();
    const auto r_off = toydit::forward_with_hooks(setup.weights, setup.prompts, setup.images, off, step);
    const auto r_on = toydit::forward_with_hooks(setup.weights, setup.prompts, setup.images, on_cfg, step);

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const auto dim = setup.weights.config.token_dim;
        with_output((std::filesystem::path(out_dir) / "snapshots_off.csv").string(), out,
                    [&](std::ostream& o) { write_snapshot_csv(o, r_off.snapshots, dim); });
        with_output((std::filesystem::path(out_dir) / "snapshots_on.csv").string(), out,
                    [&](std::ostream& o) { write_snapshot_csv(o, r_on.snapshots, dim); });
    }
    for (std::size_t b = 0; b < r_on.snapshots.size(); ++b) {
        const auto& s_on = r_on.snapshots[b];
        const auto& s_off = r_off.snapshots[b];
        out << json{{"block", s_on.block},
                    {"repulsed", s_on.repulsed},
                    {"text_vendi_off", text_vendi(s_off.states)},
                    {"text_vendi_on", text_vendi(s_on.states)}}
                   .dump()
            << '\n';
    }
    return kExitOk;
}

int cmd_simulate(const ExperimentConfig& cfg, const std::string& method_name, std::int64_t seeds_flag,
                 std::size_t jobs, const std::string& output_flag, std::ostream& out) {
    const auto method = gmm::parse_method(method_name);
    const auto world = cfg.world();
    const auto prompts = cfg.prompts(batch_size(cfg));
    const auto params = cfg.method_params(method);
    const auto seeds = seed_list(cfg, seeds_flag);
    const auto runs = run_seeds(world, prompts, params, seeds, jobs);
    const std::string output = output_flag.empty() ? cfg.get_string("output.path", "") : output_flag;
    with_output(output, out, [&](std::ostream& o) {
        for (std::size_t i = 0; i < runs.size(); ++i) {
            json rec = metrics_json(runs[i]);
            rec["run"] = i;
            rec["seed"] = seeds[i];
            rec["method"] = std::string(gmm::to_string(method));
            o << rec.dump() << '\n';
        }
    });
    return kExitOk;
}

void write_sweep_row(std::ostream& o, const std::string& axis, const std::string& value, const MeanMetrics& m) {
    o << axis << ',' << value << ',' << m.vendi_rbf << ',' << m.mode_coverage << ',' << m.off_manifold_rate << ','
      << m.mean_nearest_mode_distance << ',' << m.avg_pair_vendi << '\n';
}

int cmd_ablate(const ExperimentConfig& cfg, const std::string& axis, std::int64_t seeds_flag, std::size_t jobs,
               const std::string& output_flag, std::ostream& out) {
    const std::string output = output_flag.empty() ? cfg.get_string("output.path", "") : output_flag;
    const auto seeds = seed_list(cfg, seeds_flag);

    if (axis == "blocks") {
        const auto groups = cfg.block_sweep();
        const auto step = toy_step(cfg);
        std::vector<std::pair<double, double>> rows;
        for (const auto group : groups) {
            auto on = cfg.repulsion();
            on.block_selector.group = group;
            on.block_selector.blocks.clear();
            if (group == BlockGroup::explicit_list) fail(ErrorKind::Config, "config: explicit block lists cannot be swept");
            auto off = on;
            off.eta = 0.0;
            const auto per_seed = run_indexed<std::pair<double, double>>(seeds.size(), jobs, [&](std::size_t i) {
                const auto setup = toy_setup(cfg, seeds[i] * 1000);
                const auto a = toydit::forward_with_hooks(setup.weights, setup.prompts, setup.images, off, step);
                const auto b = toydit::forward_with_hooks(setup.weights, setup.prompts, setup.images, on, step);
                return std::pair{text_vendi(a.finals), text_vendi(b.finals)};
            });
            double v_off = 0, v_on = 0;
            for (const auto& [a, b] : per_seed) {
                v_off += a;
                v_on += b;
            }
            rows.emplace_back(v_off / static_cast<double>(seeds.size()), v_on / static_cast<double>(seeds.size()));
        }
        with_output(output, out, [&](std::ostream& o) {
            const auto old = o.precision(std::numeric_limits<double>::max_digits10);
            o << "axis,value,text_vendi_off,text_vendi_on\n";
            for (std::size_t g = 0; g < groups.size(); ++g) {
                o << "blocks," << to_string(groups[g]) << ',' << rows[g].first << ',' << rows[g].second << '\n';
            }
            o.precision(old);
        });
        return kExitOk;
    }

    const auto method = gmm::parse_method(cfg.get_string("sweep.method", "contextual"));
    const auto world = cfg.world();
    const auto base = cfg.method_params(method);
    std::vector<std::pair<std::string, MeanMetrics>> rows;

    if (axis == "timestep") {
        const auto prompts = cfg.prompts(batch_size(cfg));
        for (const auto& ti : cfg.timestep_sweep()) {
            auto p = base;
            p.repulsion.timestep_interval = ti;
            std::ostringstream label;
            label << ti.begin << ':' << ti.end;
            rows.emplace_back(label.str(), mean_of(run_seeds(world, prompts, p, seeds, jobs)));
        }
    } else if (axis == "batch") {
        for (const auto b : cfg.batch_sweep()) {
            rows.emplace_back(std::to_string(b), mean_of(run_seeds(world, cfg.prompts(b), base, seeds, jobs)));
        }
    } else {
        throw Usage("--axis must be timestep, batch or blocks");
    }

    with_output(output, out, [&](std::ostream& o) {
        const auto old = o.precision(std::numeric_limits<double>::max_digits10);
        o << "axis,value,vendi_rbf,mode_coverage,off_manifold_rate,mean_nearest_mode_distance,avg_pair_vendi\n";
        for (const auto& [label, m] : rows) write_sweep_row(o, axis, label, m);
        o.precision(old);
    });
    return kExitOk;
}

int cmd_steer(const ExperimentConfig& cfg, double alpha, std::uint64_t source_seed, std::uint64_t target_seed,
              const std::string& space, const std::string& output_flag, std::ostream& out) {
    steering::SteeringSpec spec;
    spec.alpha = alpha;
    spec.space = steering::parse_space(space);
    spec.apply_interval = {cfg.get_double("steer.interval_begin", 0.0), cfg.get_double("steer.interval_end", 1.0)};
    const auto world = cfg.world();
    const auto prompt = cfg.prompts(1).front();
    const auto flow = steering::steered_run(world, prompt, source_seed, target_seed, spec);

    const auto centers = world.centers();
    const auto target_mode = centers[gmm::nearest_mode(flow.target.latents.back(), world)];
    const std::string output = output_flag.empty() ? cfg.get_string("output.path", "") : output_flag;
    with_output(output, out, [&](std::ostream& o) {
        const auto old = o.precision(std::numeric_limits<double>::max_digits10);
        o << "step,t,source_x,source_y,target_x,target_y,steered_x,steered_y,steered_distance_to_target_mode\n";
        for (std::size_t j = 0; j < flow.steered.times.size(); ++j) {
            const auto& a = flow.source.latents[j];
            const auto& b = flow.target.latents[j];
            const auto& c = flow.steered.latents[j];
            const double dist = std::hypot(c[0] - target_mode[0], c[1] - target_mode[1]);
            o << j << ',' << flow.steered.times[j] << ',' << a[0] << ',' << a[1] << ',' << b[0] << ',' << b[1] << ','
              << c[0] << ',' << c[1] << ',' << dist << '\n';
        }
        o.precision(old);
    });
    return kExitOk;
}

int exit_code_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::NonConvergence:
        case ErrorKind::NumericOverflow:
            return kExitNumeric;
        default:
            return kExitUsage;
    }
}

void report(std::ostream& err, std::string_view kind, std::string_view message) {
    err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Contextual-space repulsion toolkit", "ctxrep"};
    app.require_subcommand(1);

    std::string input, kernel = "cosine", config, output, out_dir, method = "contextual", axis, space = "contextual";
    double bandwidth = 1.0, eta = 0.0, fd_step = 1e-5, alpha = 0.0;
    int steps = 1;
    bool normalize = false;
    std::size_t batch = 4, dim = 16, seeds = 100, jobs = 1;
    std::int64_t sim_seeds = 0;
    std::uint64_t source_seed = 0, target_seed = 1;

    auto* vendi = app.add_subcommand("vendi", "Entropy and Vendi score of a batch CSV");
    vendi->add_option("--input", input)->required();
    vendi->add_option("--kernel", kernel)->check(CLI::IsMember({"cosine", "rbf"}));
    vendi->add_option("--bandwidth", bandwidth);

    auto* grad = app.add_subcommand("grad-check", "Analytic vs finite-difference entropy gradient");
    grad->add_option("--batch", batch);
    grad->add_option("--dim", dim);
    grad->add_option("--seeds", seeds);
    grad->add_option("--fd-step", fd_step);

    auto* rep = app.add_subcommand("repulse", "Apply repulsion steps to a batch CSV");
    rep->add_option("--input", input)->required();
    rep->add_option("--eta", eta)->required();
    rep->add_option("--steps", steps);
    rep->add_flag("--normalize", normalize);
    rep->add_option("--kernel", kernel)->check(CLI::IsMember({"cosine", "rbf"}));
    rep->add_option("--bandwidth", bandwidth);
    rep->add_option("--output", output);

    auto* toy = app.add_subcommand("toy-run", "Toy transformer forward with and without repulsion");
    toy->add_option("--config", config);
    toy->add_option("--out-dir", out_dir);

    auto* sim = app.add_subcommand("simulate", "Mixture-flow runs, one JSON record per seed");
    sim->add_option("--config", config);
    sim->add_option("--method", method)->check(CLI::IsMember({"none", "contextual", "latent", "cads"}));
    sim->add_option("--seeds", sim_seeds);
    sim->add_option("--jobs", jobs);
    sim->add_option("--output", output);

    auto* abl = app.add_subcommand("ablate", "Sweep CSV over one axis");
    abl->add_option("--axis", axis)->required()->check(CLI::IsMember({"timestep", "batch", "blocks"}));
    abl->add_option("--config", config);
    abl->add_option("--seeds", sim_seeds);
    abl->add_option("--jobs", jobs);
    abl->add_option("--output", output);

    auto* st = app.add_subcommand("steer", "Blend a source run toward a target run");
    st->add_option("--alpha", alpha)->required();
    st->add_option("--source-seed", source_seed)->required();
    st->add_option("--target-seed", target_seed)->required();
    st->add_option("--space", space)->check(CLI::IsMember({"contextual", "latent"}));
    st->add_option("--config", config);
    st->add_option("--output", output);

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
        if (jobs == 0) jobs = 1;

        if (vendi->parsed()) return cmd_vendi(input, kernel, bandwidth, out);
        if (grad->parsed()) return cmd_grad_check(batch, dim, seeds, fd_step, out);
        if (rep->parsed()) return cmd_repulse(input, eta, steps, normalize, kernel, bandwidth, output, out);
        if (toy->parsed()) return cmd_toy_run(config_from(config), out_dir, out);
        if (sim->parsed()) return cmd_simulate(config_from(config), method, sim_seeds, jobs, output, out);
        if (abl->parsed()) return cmd_ablate(config_from(config), axis, sim_seeds, jobs, output, out);
        if (st->parsed()) return cmd_steer(config_from(config), alpha, source_seed, target_seed, space, output, out);
        throw Usage("no subcommand");
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        report(err, "UsageError", e.what());
        return kExitUsage;
    } catch (const Usage& e) {
        report(err, "UsageError", e.what());
        return kExitUsage;
    } catch (const Error& e) {
        report(err, to_string(e.kind()), e.what());
        return exit_code_for(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        report(err, "IOError", e.what());
        return kExitUsage;
    }
}

}  // namespace ctxrep::cli
