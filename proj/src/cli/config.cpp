// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "ctxrep/cli.hpp"
#include "ctxrep/error.hpp"

namespace ctxrep::cli {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    double x = 0.0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || ptr != end) fail(ErrorKind::Config, "config: '" + key + "' expects a number, got '" + v + "'");
    return x;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    std::int64_t x = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || ptr != end) fail(ErrorKind::Config, "config: '" + key + "' expects an integer, got '" + v + "'");
    return x;
}

std::size_t parse_count(const std::string& key, std::int64_t v) {
    if (v < 0) fail(ErrorKind::Config, "config: '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
}

}  // namespace

const std::vector<std::string>& ExperimentConfig::known_keys() {
    static const std::vector<std::string> keys = {
        "world.n_modes", "world.radius", "world.sigma", "world.gamma", "world.steps", "world.feedback",
        "prompt.kind", "prompt.mode", "prompt.scale",
        "batch.size",
        "repulsion.preset", "repulsion.eta", "repulsion.inner_steps", "repulsion.interval_begin",
        "repulsion.interval_end", "repulsion.blocks", "repulsion.block_list", "repulsion.stream",
        "repulsion.normalize", "repulsion.single_stream_all_tokens",
        "latent.eta", "latent.bandwidth",
        "cads.scale", "cads.schedule", "cads.tau1", "cads.tau2", "cads.psi",
        "seeds.base", "seeds.count",
        "sweep.method", "sweep.timestep_intervals", "sweep.batch_sizes", "sweep.block_groups",
        "toy.n_text", "toy.n_image", "toy.dim", "toy.dual_blocks", "toy.single_blocks", "toy.heads",
        "toy.weight_seed", "toy.positions", "toy.batch", "toy.prompt", "toy.prompt_seed", "toy.image_seed",
        "toy.steps",
        "steer.interval_begin", "steer.interval_end",
        "output.path", "output.dir",
    };
    return keys;
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
    ExperimentConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            fail(ErrorKind::Config, "config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    if (cfg.has("repulsion.preset") && !find_preset(cfg.get_string("repulsion.preset", ""))) {
        fail(ErrorKind::Config, "config: unknown preset '" + cfg.get_string("repulsion.preset", "") + "'");
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorKind::Config, "cannot open config '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

void ExperimentConfig::set(const std::string& key, std::string value) {
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) fail(ErrorKind::Config, "config: unknown key '" + key + "'");
    values_[key] = std::move(value);
}

std::string ExperimentConfig::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double ExperimentConfig::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_double(key, it->second);
}

std::int64_t ExperimentConfig::get_int(const std::string& key, std::int64_t fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_int(key, it->second);
}

bool ExperimentConfig::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(ErrorKind::Config, "config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<double> ExperimentConfig::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (const auto& s : split_list(it->second)) out.push_back(parse_double(key, s));
    return out;
}

gmm::MixtureWorld ExperimentConfig::world() const {
    gmm::MixtureWorld w;
    w.n_modes = parse_count("world.n_modes", get_int("world.n_modes", static_cast<std::int64_t>(w.n_modes)));
    w.radius = get_double("world.radius", w.radius);
    w.mode_sigma = get_double("world.sigma", w.mode_sigma);
    w.guidance_gamma = get_double("world.gamma", w.guidance_gamma);
    w.n_steps = parse_count("world.steps", get_int("world.steps", static_cast<std::int64_t>(w.n_steps)));
    w.context_feedback = get_double("world.feedback", w.context_feedback);
    w.validate();
    return w;
}

std::vector<std::vector<double>> ExperimentConfig::prompts(std::size_t batch) const {
    const auto w = world();
    const std::string kind = get_string("prompt.kind", "one_hot");
    const double scale = get_double("prompt.scale", 10.0);
    if (kind == "one_hot") {
        const auto mode = parse_count("prompt.mode", get_int("prompt.mode", 0));
        if (mode >= w.n_modes) fail(ErrorKind::Config, "config: prompt.mode out of range");
        return gmm::one_hot_prompts(batch, w, mode, scale);
    }
    if (kind == "uniform") return std::vector<std::vector<double>>(batch, std::vector<double>(w.n_modes, 0.0));
    fail(ErrorKind::Config, "config: prompt.kind must be one_hot or uniform");
}

RepulsionConfig ExperimentConfig::repulsion() const {
    RepulsionConfig r = gmm::MethodParams::defaults(gmm::Method::contextual).repulsion;
    if (has("repulsion.preset")) {
        const auto preset = find_preset(get_string("repulsion.preset", ""));
        if (!preset) fail(ErrorKind::Config, "config: unknown preset");
        r = preset->config;
    }
    r.eta = get_double("repulsion.eta", r.eta);
    r.inner_steps = static_cast<int>(get_int("repulsion.inner_steps", r.inner_steps));
    r.timestep_interval.begin = get_double("repulsion.interval_begin", r.timestep_interval.begin);
    r.timestep_interval.end = get_double("repulsion.interval_end", r.timestep_interval.end);
    if (has("repulsion.blocks")) r.block_selector.group = parse_block_group(get_string("repulsion.blocks", "all"));
    if (has("repulsion.block_list")) {
        r.block_selector.group = BlockGroup::explicit_list;
        r.block_selector.blocks.clear();
        for (double b : get_doubles("repulsion.block_list", {})) {
            if (b < 0 || b != static_cast<double>(static_cast<std::size_t>(b))) {
                fail(ErrorKind::Config, "config: repulsion.block_list expects non-negative integers");
            }
            r.block_selector.blocks.push_back(static_cast<std::size_t>(b));
        }
    }
    if (has("repulsion.stream")) r.target_stream = parse_stream(get_string("repulsion.stream", "text"));
    r.gradient_normalization = get_bool("repulsion.normalize", r.gradient_normalization);
    r.single_stream_all_tokens = get_bool("repulsion.single_stream_all_tokens", r.single_stream_all_tokens);
    r.validate();
    return r;
}

gmm::MethodParams ExperimentConfig::method_params(gmm::Method m) const {
    auto p = gmm::MethodParams::defaults(m);
    const double latent_default_eta = p.method == gmm::Method::latent ? p.repulsion.eta
                                                                      : gmm::MethodParams::defaults(gmm::Method::latent).repulsion.eta;
    p.repulsion = repulsion();
    if (m == gmm::Method::latent) p.repulsion.eta = get_double("latent.eta", latent_default_eta);
    p.latent_bandwidth = get_double("latent.bandwidth", p.latent_bandwidth);
    p.cads.scale = get_double("cads.scale", p.cads.scale);
    p.cads.schedule = get_bool("cads.schedule", p.cads.schedule);
    p.cads.tau1 = get_double("cads.tau1", p.cads.tau1);
    p.cads.tau2 = get_double("cads.tau2", p.cads.tau2);
    p.cads.psi = get_double("cads.psi", p.cads.psi);
    if (!(p.cads.tau1 < p.cads.tau2)) fail(ErrorKind::Config, "config: cads.tau1 must be < cads.tau2");
    p.repulsion.validate();
    return p;
}

toydit::ToyDiTConfig ExperimentConfig::toy() const {
    toydit::ToyDiTConfig c;
    c.n_text_tokens = parse_count("toy.n_text", get_int("toy.n_text", static_cast<std::int64_t>(c.n_text_tokens)));
    c.n_image_tokens = parse_count("toy.n_image", get_int("toy.n_image", static_cast<std::int64_t>(c.n_image_tokens)));
    c.token_dim = parse_count("toy.dim", get_int("toy.dim", static_cast<std::int64_t>(c.token_dim)));
    c.n_dual_blocks = parse_count("toy.dual_blocks", get_int("toy.dual_blocks", static_cast<std::int64_t>(c.n_dual_blocks)));
    c.n_single_blocks =
        parse_count("toy.single_blocks", get_int("toy.single_blocks", static_cast<std::int64_t>(c.n_single_blocks)));
    c.attention_heads = parse_count("toy.heads", get_int("toy.heads", static_cast<std::int64_t>(c.attention_heads)));
    c.weight_seed = static_cast<std::uint64_t>(get_int("toy.weight_seed", 0));
    c.positional_encoding = get_bool("toy.positions", false);
    c.validate();
    return c;
}

std::vector<TimestepInterval> ExperimentConfig::timestep_sweep() const {
    if (!has("sweep.timestep_intervals")) {
        return {{0.0, 0.25}, {0.25, 0.5}, {0.5, 0.75}, {0.75, 1.0}, {0.0, 1.0}};
    }
    std::vector<TimestepInterval> out;
    for (const auto& item : split_list(get_string("sweep.timestep_intervals", ""))) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) fail(ErrorKind::Config, "config: intervals are written begin:end");
        TimestepInterval ti{parse_double("sweep.timestep_intervals", trim(item.substr(0, colon))),
                            parse_double("sweep.timestep_intervals", trim(item.substr(colon + 1)))};
        if (!(ti.begin >= 0.0 && ti.begin < ti.end && ti.end <= 1.0)) {
            fail(ErrorKind::Config, "config: interval '" + item + "' must satisfy 0 <= a < b <= 1");
        }
        out.push_back(ti);
    }
    return out;
}

std::vector<std::size_t> ExperimentConfig::batch_sweep() const {
    std::vector<std::size_t> out;
    for (double b : get_doubles("sweep.batch_sizes", {4, 8, 16})) {
        if (b < 2 || b != static_cast<double>(static_cast<std::size_t>(b))) {
            fail(ErrorKind::Config, "config: sweep.batch_sizes expects integers >= 2");
        }
        out.push_back(static_cast<std::size_t>(b));
    }
    return out;
}

std::vector<BlockGroup> ExperimentConfig::block_sweep() const {
    if (!has("sweep.block_groups")) {
        return {BlockGroup::first_third, BlockGroup::middle_third, BlockGroup::last_third, BlockGroup::all};
    }
    std::vector<BlockGroup> out;
    for (const auto& s : split_list(get_string("sweep.block_groups", ""))) out.push_back(parse_block_group(s));
    return out;
}

}  // namespace ctxrep::cli
