// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctxrep/error.hpp"
#include "ctxrep/toydit.hpp"
#include "support.hpp"

using namespace ctxrep;
using namespace ctxrep::toydit;
using namespace testsupport;

namespace {

struct Batch {
    Weights weights;
    std::vector<PromptEncoding> prompts;
    std::vector<std::vector<double>> images;
};

Batch make_batch(const ToyDiTConfig& cfg, std::size_t b, bool shared_prompt, std::uint64_t seed = 0) {
    Batch out{init_weights(cfg), {}, {}};
    for (std::size_t i = 0; i < b; ++i) {
        out.prompts.push_back(encode_prompt("a photo of a cat", shared_prompt ? seed : seed + i, cfg));
        out.images.push_back(image_noise(seed * 100 + i, cfg));
    }
    return out;
}

RepulsionConfig text_repulsion(double eta) {
    RepulsionConfig r;
    r.eta = eta;
    r.inner_steps = 1;
    r.gradient_normalization = true;
    return r;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

std::vector<const std::vector<double>*> all_matrices(const Weights& w) {
    std::vector<const std::vector<double>*> out;
    for (const auto& d : w.dual)
        for (const auto* p : {&d.text, &d.image}) out.insert(out.end(), {&p->q, &p->k, &p->v, &p->o});
    for (const auto& s : w.single) out.insert(out.end(), {&s.q, &s.k, &s.v, &s.o});
    return out;
}

}  // namespace

TEST_CASE("weights: deterministic and seed dependent") {
    ToyDiTConfig cfg;
    cfg.weight_seed = 1;
    const auto a = init_weights(cfg), b = init_weights(cfg);
    const auto ma = all_matrices(a), mb = all_matrices(b);
    for (std::size_t i = 0; i < ma.size(); ++i) CHECK(*ma[i] == *mb[i]);

    cfg.weight_seed = 2;
    const auto c = init_weights(cfg);
    const auto mc = all_matrices(c);
    double biggest = 0;
    for (std::size_t i = 0; i < ma.size(); ++i) biggest = std::max(biggest, max_abs_diff(*ma[i], *mc[i]));
    CHECK(biggest > 0.1);
}

TEST_CASE("weights: entry variance close to 1/D") {
    ToyDiTConfig cfg;
    cfg.n_dual_blocks = 5;
    cfg.n_single_blocks = 0;
    const auto w = init_weights(cfg);
    std::vector<double> all;
    for (const auto* m : all_matrices(w)) all.insert(all.end(), m->begin(), m->end());
    REQUIRE(all.size() >= 10000);
    all.resize(10000);
    double mean = 0;
    for (double x : all) mean += x;
    mean /= static_cast<double>(all.size());
    double var = 0;
    for (double x : all) var += (x - mean) * (x - mean);
    var /= static_cast<double>(all.size() - 1);
    const double target = 1.0 / static_cast<double>(cfg.token_dim);
    CHECK(std::abs(var - target) <= 0.2 * target);
}

TEST_CASE("config validation") {
    ToyDiTConfig cfg;
    cfg.attention_heads = 3;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.n_text_tokens = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("block: zero tokens pass through") {
    ToyDiTConfig cfg;
    const auto w = init_weights(cfg);
    TokenState zero;
    zero.text.assign(cfg.n_text_tokens * cfg.token_dim, 0.0);
    zero.image.assign(cfg.n_image_tokens * cfg.token_dim, 0.0);
    for (std::size_t b = 0; b < cfg.total_blocks(); ++b) {
        const auto out = mm_block_forward(zero, w, b);
        CHECK(out.text == zero.text);
        CHECK(out.image == zero.image);
    }
}

TEST_CASE("block: joint token permutation equivariance") {
    ToyDiTConfig cfg;
    const auto w = init_weights(cfg);
    const std::size_t d = cfg.token_dim;
    TokenState s;
    s.text = normals(1, cfg.n_text_tokens * d);
    s.image = normals(2, cfg.n_image_tokens * d);
    std::vector<std::size_t> perm(cfg.n_image_tokens);
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (i * 5 + 3) % perm.size();
    auto permute = [&](const std::vector<double>& img) {
        std::vector<double> out(img.size());
        for (std::size_t i = 0; i < perm.size(); ++i)
            std::copy_n(img.begin() + static_cast<std::ptrdiff_t>(perm[i] * d), d,
                        out.begin() + static_cast<std::ptrdiff_t>(i * d));
        return out;
    };
    for (std::size_t b = 0; b < cfg.total_blocks(); ++b) {
        TokenState p = s;
        p.image = permute(s.image);
        const auto o = mm_block_forward(s, w, b), op = mm_block_forward(p, w, b);
        CHECK(max_abs_diff(op.text, o.text) <= 1e-12);
        CHECK(max_abs_diff(op.image, permute(o.image)) <= 1e-12);
    }
}

TEST_CASE("block: text attends to image content") {
    ToyDiTConfig cfg;
    const auto w = init_weights(cfg);
    TokenState s;
    s.text = normals(3, cfg.n_text_tokens * cfg.token_dim);
    s.image = normals(4, cfg.n_image_tokens * cfg.token_dim);
    for (std::size_t b = 0; b < cfg.total_blocks(); ++b) {
        TokenState p = s;
        p.image[5] += 0.1;
        CHECK(max_abs_diff(mm_block_forward(s, w, b).text, mm_block_forward(p, w, b).text) > 0.0);
    }
}

TEST_CASE("forward: deterministic") {
    ToyDiTConfig cfg;
    const auto bt = make_batch(cfg, 4, true);
    const auto r = text_repulsion(0.05);
    const auto a = forward_with_hooks(bt.weights, bt.prompts, bt.images, r, {0, 4});
    const auto b = forward_with_hooks(bt.weights, bt.prompts, bt.images, r, {0, 4});
    CHECK(a.finals == b.finals);
}

TEST_CASE("forward: batch independence without repulsion") {
    ToyDiTConfig cfg;
    const auto bt = make_batch(cfg, 4, false, 7);
    const RepulsionConfig off;
    const auto all = forward_with_hooks(bt.weights, bt.prompts, bt.images, off, {0, 1});
    for (std::size_t i = 0; i < 4; ++i) {
        const auto one = forward_with_hooks(bt.weights, {bt.prompts[i]}, {bt.images[i]}, off, {0, 1});
        CHECK(one.finals[0] == all.finals[i]);
        for (std::size_t b = 0; b < all.snapshots.size(); ++b) CHECK(one.snapshots[b].states[0] == all.snapshots[b].states[i]);
    }
}

TEST_CASE("forward: identical inputs stay stationary under repulsion") {
    // Identical samples give an all-ones kernel whose entropy gradient is zero.
    ToyDiTConfig cfg;
    cfg.n_dual_blocks = 1;
    cfg.n_single_blocks = 0;
    const auto w = init_weights(cfg);
    const auto p = encode_prompt("x", 0, cfg);
    const auto img = image_noise(0, cfg);
    const auto r = forward_with_hooks(w, {p, p, p}, {img, img, img}, text_repulsion(1e-2), {0, 1});
    const auto v = entropy_and_score(cosine_kernel(gather_stream(r.finals, Stream::text)));
    CHECK(v.score == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.finals[0] == r.finals[1]);
}

TEST_CASE("forward: text repulsion on a shared prompt raises text diversity") {
    ToyDiTConfig cfg;
    const auto bt = make_batch(cfg, 4, true, 3);
    const RepulsionConfig off;
    const auto r0 = forward_with_hooks(bt.weights, bt.prompts, bt.images, off, {0, 1});
    const auto r1 = forward_with_hooks(bt.weights, bt.prompts, bt.images, text_repulsion(1e-2), {0, 1});
    const auto v0 = entropy_and_score(cosine_kernel(gather_stream(r0.finals, Stream::text))).score;
    const auto v1 = entropy_and_score(cosine_kernel(gather_stream(r1.finals, Stream::text))).score;
    CHECK(v1 > 1.0 + 1e-6);
    CHECK(v1 > v0);
}

TEST_CASE("forward: image-stream targeting never writes text") {
    ToyDiTConfig one;
    one.n_dual_blocks = 1;
    one.n_single_blocks = 0;
    {
        const auto bt = make_batch(one, 4, true, 5);
        auto r = text_repulsion(0.5);
        r.target_stream = Stream::image;
        const auto off = forward_with_hooks(bt.weights, bt.prompts, bt.images, RepulsionConfig{}, {0, 1});
        const auto on = forward_with_hooks(bt.weights, bt.prompts, bt.images, r, {0, 1});
        REQUIRE(on.snapshots[0].repulsed);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(on.snapshots[0].states[i].text == off.snapshots[0].states[i].text);
            CHECK(on.snapshots[0].states[i].image != off.snapshots[0].states[i].image);
        }
    }
    {
        ToyDiTConfig cfg;
        const auto bt = make_batch(cfg, 4, true, 5);
        auto r = text_repulsion(0.5);
        r.target_stream = Stream::image;
        const auto on = forward_with_hooks(bt.weights, bt.prompts, bt.images, r, {0, 1});
        for (std::size_t i = 0; i < 4; ++i) {
            TokenState prev;
            prev.text = bt.prompts[i].tokens;
            prev.image = bt.images[i];
            for (std::size_t b = 0; b < cfg.total_blocks(); ++b) {
                CHECK(mm_block_forward(prev, bt.weights, b).text == on.snapshots[b].states[i].text);
                prev = on.snapshots[b].states[i];
            }
        }
    }
}

TEST_CASE("forward: single-stream blocks repulse all tokens when asked") {
    ToyDiTConfig cfg;
    const auto bt = make_batch(cfg, 3, true, 2);
    auto r = text_repulsion(0.2);
    r.block_selector.group = BlockGroup::last_third;
    r.single_stream_all_tokens = true;
    const auto on = forward_with_hooks(bt.weights, bt.prompts, bt.images, r, {0, 1});
    for (std::size_t b = 0; b < cfg.total_blocks(); ++b) CHECK(on.snapshots[b].repulsed == (b >= 4));
    r.single_stream_all_tokens = false;
    const auto text_only = forward_with_hooks(bt.weights, bt.prompts, bt.images, r, {0, 1});
    for (std::size_t b = 0; b < cfg.total_blocks(); ++b) CHECK_FALSE(text_only.snapshots[b].repulsed);
}

TEST_CASE("gather/scatter keep token order") {
    ToyDiTConfig cfg;
    const std::size_t d = cfg.token_dim, k = 5, dim = 3;
    std::vector<TokenState> states(3);
    for (auto& s : states) {
        s.text = normals(8, cfg.n_text_tokens * d);
        s.image = normals(9, cfg.n_image_tokens * d);
        s.text[k * d + dim] = 1234.5;
    }
    const auto flat = gather_stream(states, Stream::text);
    for (std::size_t i = 0; i < 3; ++i) CHECK(flat.row(i)[k * d + dim] == 1234.5);
    const auto both = gather_stream(states, Stream::all_tokens);
    CHECK(both.vector_dim() == cfg.total_tokens() * d);
    for (std::size_t i = 0; i < 3; ++i) CHECK(both.row(i)[k * d + dim] == 1234.5);

    auto copy = states;
    scatter_stream(both, Stream::all_tokens, copy);
    for (std::size_t i = 0; i < 3; ++i) CHECK(copy[i] == states[i]);
}

TEST_CASE("marker survives the forward pass at its token offset") {
    ToyDiTConfig cfg;
    const std::size_t d = cfg.token_dim, k = 2;
    auto bt = make_batch(cfg, 4, true, 11);
    RepulsionConfig r = text_repulsion(0.0);
    std::vector<std::size_t> found;
    const auto res = forward_with_hooks(bt.weights, bt.prompts, bt.images, r, {0, 1},
                                        [&](const StepContext&, std::size_t block, std::vector<TokenState>& s) {
                                            if (block != 1) return;
                                            for (auto& st : s) st.text[k * d] = 1e3;
                                        });
    const auto flat = gather_stream(res.snapshots[1].states, Stream::text);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto row = flat.row(i);
        const auto it = std::max_element(row.begin(), row.end());
        CHECK(static_cast<std::size_t>(it - row.begin()) == k * d);
    }
}

TEST_CASE("text drifts away from the prompt through the dual blocks") {
    ToyDiTConfig cfg;
    std::size_t ok = 0;
    const std::size_t trials = 100;
    for (std::uint64_t s = 0; s < trials; ++s) {
        cfg.weight_seed = s;
        const auto w = init_weights(cfg);
        const auto p = encode_prompt("prompt", s, cfg);
        const auto res = forward_with_hooks(w, {p}, {image_noise(s, cfg)}, RepulsionConfig{}, {0, 1});
        double prev = 2.0;
        bool dec = true;
        for (std::size_t l = 0; l < 3; ++l) {
            const double c = cosine(res.snapshots[l].states[0].text, p.tokens);
            dec = dec && c < prev;
            prev = c;
        }
        ok += dec;
    }
    CHECK(ok >= trials * 95 / 100);
}

TEST_CASE("sampling run carries image tokens between steps") {
    ToyDiTConfig cfg;
    const auto bt = make_batch(cfg, 2, true, 1);
    const auto run = sampling_run(bt.weights, bt.prompts, bt.images, RepulsionConfig{}, 3);
    REQUIRE(run.steps.size() == 3);
    const auto second = forward_with_hooks(bt.weights, bt.prompts,
                                           {run.steps[0].finals[0].image, run.steps[0].finals[1].image},
                                           RepulsionConfig{}, {1, 3});
    CHECK(second.finals == run.steps[1].finals);
}
