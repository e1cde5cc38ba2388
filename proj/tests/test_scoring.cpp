#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "model.hpp"
#include "rng.hpp"
#include "scoring.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace fedsim;

namespace {

ParamTensor vec_tensor(const std::string & name, std::vector<double> values) {
    ParamTensor t;
    t.name = name;
    t.shape = {(int64_t) values.size()};
    t.values = std::move(values);
    return t;
}

ModelState small_model(uint64_t seed) {
    ArchConfig arch;
    arch.vocab_size = 9;
    arch.embed_dim = 3;
    arch.context_len = 2;
    arch.hidden_dim = 4;
    arch.num_blocks = 4;
    return init_model(arch, seed);
}

} // namespace

TEST_CASE("layer_score hand values") {
    const ParamTensor before = vec_tensor("t", {0.0, 0.0});

    SUBCASE("delta = [3, 4]") {
        const LayerScore s = layer_score(before, vec_tensor("t", {3.0, 4.0}));
        CHECK(s.score == doctest::Approx(7.071068).epsilon(1e-6));
    }
    SUBCASE("delta = [1, -1]") {
        const LayerScore s = layer_score(before, vec_tensor("t", {1.0, -1.0}));
        CHECK(s.score == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("no change scores zero") {
        const LayerScore s = layer_score(before, before);
        CHECK(s.score == 0.0);
    }
    SUBCASE("constant nonzero delta hits the std clamp and stays finite") {
        const LayerScore s = layer_score(before, vec_tensor("t", {2.0, 2.0}));
        CHECK(std::isfinite(s.score));
        // ||delta|| = sqrt(8), std clamped to 1e-12
        CHECK(s.score == doctest::Approx(std::sqrt(8.0) / (std::sqrt(2.0) * 1e-12)).epsilon(1e-9));
    }
    SUBCASE("mismatched tensors throw") {
        CHECK_THROWS_AS(layer_score(before, vec_tensor("t", {1.0, 2.0, 3.0})), std::invalid_argument);
        CHECK_THROWS_AS(layer_score(before, vec_tensor("u", {1.0, 2.0})), std::invalid_argument);
    }
}

TEST_CASE("scores are non-negative and finite for random deltas") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> b((size_t) (2 + rng.below(40)));
        std::vector<double> a(b.size());
        for (size_t i = 0; i < b.size(); ++i) {
            b[i] = rng.uniform(-1.0, 1.0);
            a[i] = rng.uniform(-1.0, 1.0);
        }
        const LayerScore s = layer_score(vec_tensor("x", b), vec_tensor("x", a));
        CHECK(s.score >= 0.0);
        CHECK(std::isfinite(s.score));
    }
}

TEST_CASE("positive rescaling of every delta keeps scores and selection") {
    // ||c delta|| / (sqrt(n) std(c delta)) = ||delta|| / (sqrt(n) std(delta)):
    // the score is scale invariant above the std clamp, so rankings cannot move.
    const ModelState before = small_model(1);
    ModelState after = before;
    Rng rng(7);
    for (ParamTensor & t : after.params) {
        for (double & v : t.values) {
            v += rng.uniform(-0.01, 0.01);
        }
    }
    ModelState after_scaled = before;
    for (size_t p = 0; p < before.params.size(); ++p) {
        for (size_t i = 0; i < before.params[p].values.size(); ++i) {
            const double delta = after.params[p].values[i] - before.params[p].values[i];
            after_scaled.params[p].values[i] = before.params[p].values[i] + 3.5 * delta;
        }
    }

    const std::vector<LayerScore> s1 = score_layers(before, after);
    const std::vector<LayerScore> s2 = score_layers(before, after_scaled);
    for (size_t i = 0; i < s1.size(); ++i) {
        CHECK(s2[i].score == doctest::Approx(s1[i].score).epsilon(1e-9));
    }

    const std::vector<BlockScore> b1 = block_scores(s1, before);
    const std::vector<BlockScore> b2 = block_scores(s2, before);
    for (int s = 1; s <= (int) b1.size(); ++s) {
        CHECK(select_blocks(b1, s) == select_blocks(b2, s));
    }
}

TEST_CASE("block scores sum member layer scores") {
    const ModelState m = small_model(3);
    std::vector<LayerScore> scores;
    for (const ParamTensor & t : m.params) {
        scores.push_back({t.name, 0.0});
    }
    auto set_score = [&](const std::string & name, double v) {
        for (LayerScore & s : scores) {
            if (s.tensor_name == name) {
                s.score = v;
            }
        }
    };
    set_score("block_1.fc1.weight", 1.0);
    set_score("block_1.fc1.bias", 2.5);
    set_score("block_1.fc2.weight", 0.5);
    set_score("block_1.fc2.bias", 0.0);
    set_score("embedding.weight", 99.0); // non-repeated part joins no block

    const std::vector<BlockScore> bs = block_scores(scores, m);
    REQUIRE(bs.size() == 4);
    CHECK(bs[1].block_id == 1);
    CHECK(bs[1].score == doctest::Approx(4.0));
    CHECK(bs[0].score == doctest::Approx(0.0));

    // permuting the layer-score list leaves block scores unchanged
    std::vector<LayerScore> shuffled = scores;
    Rng rng(11);
    rng.shuffle(shuffled);
    const std::vector<BlockScore> bs2 = block_scores(shuffled, m);
    for (size_t i = 0; i < bs.size(); ++i) {
        CHECK(bs2[i].block_id == bs[i].block_id);
        CHECK(bs2[i].score == doctest::Approx(bs[i].score));
    }

    scores.erase(scores.begin() + 4); // drop a block tensor's score
    CHECK_THROWS_AS(block_scores(scores, m), std::invalid_argument);
}

TEST_CASE("grouping by parameter signature") {
    SUBCASE("default architecture forms one group") {
        const std::vector<BlockGroup> groups = group_blocks(small_model(5));
        REQUIRE(groups.size() == 1);
        CHECK(groups[0].block_ids == std::vector<int>{0, 1, 2, 3});
        CHECK(groups[0].signature == std::vector<int64_t>{16, 4, 16, 4});
    }
    SUBCASE("synthetic signatures (A,A,B,A,B)") {
        const std::vector<int64_t> a = {4096, 64};
        const std::vector<int64_t> b = {64, 4096};
        const std::vector<BlockGroup> groups =
            group_by_signature({{0, a}, {1, a}, {2, b}, {3, a}, {4, b}});
        REQUIRE(groups.size() == 2);
        CHECK(groups[0].block_ids == std::vector<int>{0, 1, 3});
        CHECK(groups[1].block_ids == std::vector<int>{2, 4});
        CHECK(groups[0].group_id == 0);
        CHECK(groups[1].group_id == 1);
    }
    SUBCASE("signature comparison is order sensitive") {
        const std::vector<BlockGroup> groups =
            group_by_signature({{0, {4096, 64}}, {1, {64, 4096}}});
        CHECK(groups.size() == 2);
    }
}

TEST_CASE("select_blocks hand cases") {
    const std::vector<BlockScore> g = {{1, 0, 1.0}, {2, 0, 3.0}, {3, 0, 2.0}};
    CHECK(select_blocks(g, 2) == std::vector<int>{2, 3});
    CHECK(select_blocks(g, 3) == std::vector<int>{1, 2, 3});

    const std::vector<BlockScore> tie = {{1, 0, 2.0}, {2, 0, 2.0}};
    CHECK(select_blocks(tie, 1) == std::vector<int>{1});

    CHECK_THROWS_AS(select_blocks(g, 0), std::invalid_argument);
    CHECK_THROWS_AS(select_blocks(g, 4), std::invalid_argument);
}

TEST_CASE("select_blocks matches brute-force best-subset enumeration") {
    Rng rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 1 + (int) rng.below(6);
        std::vector<BlockScore> group;
        for (int i = 0; i < n; ++i) {
            // discrete scores force plenty of ties
            group.push_back({i, 0, (double) rng.below(5) * 0.25});
        }
        for (int k = 1; k <= n; ++k) {
            CHECK(select_blocks(group, k) == test::brute_force_select(group, k));
        }
    }
}
