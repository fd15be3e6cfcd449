// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctxrep/error.hpp"
#include "ctxrep/repulsion.hpp"
#include "support.hpp"

using namespace ctxrep;
using namespace testsupport;

namespace {

RepulsionConfig cfg_with(double eta, int m, bool normalize) {
    RepulsionConfig c;
    c.eta = eta;
    c.inner_steps = m;
    c.gradient_normalization = normalize;
    return c;
}

}  // namespace

TEST_CASE("repulse: zero eta and single sample are identities") {
    const auto b = random_batch(1, 4, 8);
    CHECK(repulse(b, cfg_with(0.0, 7, true)) == b);
    CHECK(repulse(b, cfg_with(0.0, 7, false)) == b);
    const auto one = random_batch(2, 1, 8);
    CHECK(repulse(one, cfg_with(5.0, 3, false)) == one);
}

TEST_CASE("repulse: splitting consistency is bitwise") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto b = random_batch(50 + s, 5, 6);
        for (bool normalize : {false, true}) {
            const double eta = normalize ? 0.3 : 1.7;
            for (int k : {1, 3}) {
                const auto whole = repulse(b, cfg_with(eta, 2 * k, normalize));
                const auto half = cfg_with(eta / 2, k, normalize);
                CHECK(whole == repulse(repulse(b, half), half));
            }
        }
    }
}

TEST_CASE("repulse: permutation equivariance") {
    const auto b = random_batch(77, 5, 4);
    const std::vector<std::size_t> perm{2, 4, 1, 0, 3};
    const auto c = cfg_with(0.5, 4, true);
    const auto lhs = repulse(permute_rows(b, perm), c);
    const auto rhs = permute_rows(repulse(b, c), perm);
    for (std::size_t k = 0; k < lhs.values().size(); ++k) CHECK(std::abs(lhs.values()[k] - rhs.values()[k]) <= 1e-12);
}

TEST_CASE("repulse: nearly identical pair separates") {
    auto a = normals(123, 16);
    auto noise = normals(124, 16);
    double na = 0, nn = 0, an = 0;
    for (std::size_t i = 0; i < 16; ++i) {
        na += a[i] * a[i];
        nn += noise[i] * noise[i];
        an += a[i] * noise[i];
    }
    // component of the noise orthogonal to a, scaled so the pair has cosine 0.9999
    std::vector<double> perp(16);
    for (std::size_t i = 0; i < 16; ++i) perp[i] = noise[i] - an / na * a[i];
    double np = 0;
    for (double x : perp) np += x * x;
    const double theta = std::acos(0.9999);
    std::vector<double> b2(16);
    for (std::size_t i = 0; i < 16; ++i) b2[i] = std::cos(theta) * a[i] + std::sin(theta) * std::sqrt(na / np) * perp[i];
    const auto batch = ContextBatch::from_rows({a, b2});
    REQUIRE(cosine(batch.row(0), batch.row(1)) == doctest::Approx(0.9999).epsilon(1e-12));

    const auto out = repulse(batch, cfg_with(1e-3, 1, true));
    CHECK(cosine(out.row(0), out.row(1)) < cosine(batch.row(0), batch.row(1)));
    CHECK(entropy_and_score(cosine_kernel(out)).score > entropy_and_score(cosine_kernel(batch)).score);
    (void)nn;
}

TEST_CASE("repulse: small normalized steps never lower the score") {
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto b = random_batch(900 + s, 2 + s % 7, 3 + s % 11);
        double mean_norm = 0;
        for (std::size_t i = 0; i < b.batch_size(); ++i) mean_norm += norm(b.row(i));
        mean_norm /= static_cast<double>(b.batch_size());
        const int m = 4;
        const auto out = repulse(b, cfg_with(1e-3 * mean_norm * m, m, true));
        CHECK(entropy_and_score(cosine_kernel(out)).score >= entropy_and_score(cosine_kernel(b)).score - 1e-9);
    }
}

TEST_CASE("repulse: overflow reported") {
    const auto b = random_batch(4, 3, 3);
    try {
        repulse(b, cfg_with(1e40, 1, true));
        FAIL("expected overflow");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NumericOverflow);
    }
}

TEST_CASE("repulse: invalid configs") {
    const auto b = random_batch(4, 3, 3);
    CHECK_THROWS_AS(repulse(b, cfg_with(-1.0, 1, false)), Error);
    CHECK_THROWS_AS(repulse(b, cfg_with(1.0, 0, false)), Error);
    auto c = cfg_with(1.0, 1, false);
    c.timestep_interval = {0.5, 0.5};
    CHECK_THROWS_AS(repulse(b, c), Error);
}

TEST_CASE("should_apply: early window of a 4-step sampler") {
    RepulsionConfig c;
    c.timestep_interval = {0.0, 0.25};
    CHECK(should_apply(0, 4, 0, 6, Stream::text, c));
    for (std::size_t s = 1; s < 4; ++s) CHECK_FALSE(should_apply(s, 4, 0, 6, Stream::text, c));
}

TEST_CASE("should_apply: block thirds") {
    RepulsionConfig c;
    c.block_selector.group = BlockGroup::middle_third;
    std::vector<std::size_t> hit;
    for (std::size_t b = 0; b < 6; ++b)
        if (should_apply(0, 1, b, 6, Stream::text, c)) hit.push_back(b);
    CHECK(hit == std::vector<std::size_t>{2, 3});

    c.block_selector.group = BlockGroup::first_third;
    CHECK(should_apply(0, 1, 0, 7, Stream::text, c));
    CHECK(should_apply(0, 1, 1, 7, Stream::text, c));
    CHECK_FALSE(should_apply(0, 1, 2, 7, Stream::text, c));
    c.block_selector.group = BlockGroup::last_third;
    CHECK_FALSE(should_apply(0, 1, 3, 7, Stream::text, c));
    CHECK(should_apply(0, 1, 4, 7, Stream::text, c));
    CHECK(should_apply(0, 1, 6, 7, Stream::text, c));

    c.block_selector.group = BlockGroup::explicit_list;
    c.block_selector.blocks = {1, 5};
    CHECK(should_apply(0, 1, 5, 7, Stream::text, c));
    CHECK_FALSE(should_apply(0, 1, 4, 7, Stream::text, c));
}

TEST_CASE("should_apply: full window and stream tags") {
    RepulsionConfig c;
    for (std::size_t s = 0; s < 28; ++s)
        for (std::size_t b = 0; b < 6; ++b) CHECK(should_apply(s, 28, b, 6, Stream::text, c));
    CHECK_FALSE(should_apply(0, 28, 0, 6, Stream::image, c));
    c.target_stream = Stream::image;
    CHECK(should_apply(0, 28, 0, 6, Stream::image, c));
}

TEST_CASE("presets") {
    const auto flux = find_preset("flux-dev");
    REQUIRE(flux);
    CHECK(flux->config.inner_steps == 50);
    CHECK(flux->config.single_stream_all_tokens);
    CHECK(flux->config.eta >= flux->eta_min);
    CHECK(flux->config.eta <= flux->eta_max);
    // one active step of twenty
    CHECK(should_apply(0, 20, 0, 1, Stream::text, flux->config));
    CHECK_FALSE(should_apply(1, 20, 0, 1, Stream::text, flux->config));

    const auto large = find_preset("sd35-large");
    REQUIRE(large);
    CHECK(large->config.inner_steps == 100);
    CHECK(should_apply(3, 28, 0, 1, Stream::text, large->config));
    CHECK_FALSE(should_apply(4, 28, 0, 1, Stream::text, large->config));

    const auto turbo = find_preset("sd35-turbo");
    REQUIRE(turbo);
    CHECK(turbo->config.inner_steps == 100);
    CHECK(should_apply(0, 4, 0, 1, Stream::text, turbo->config));
    CHECK_FALSE(should_apply(1, 4, 0, 1, Stream::text, turbo->config));

    CHECK_FALSE(find_preset("nope"));
}

TEST_CASE("stream and block group names round trip") {
    for (auto s : {Stream::text, Stream::image, Stream::all_tokens}) CHECK(parse_stream(to_string(s)) == s);
    for (auto g : {BlockGroup::all, BlockGroup::first_third, BlockGroup::middle_third, BlockGroup::last_third})
        CHECK(parse_block_group(to_string(g)) == g);
    CHECK_THROWS_AS(parse_stream("audio"), Error);
}
