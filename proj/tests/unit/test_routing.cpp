// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "lime/errors.hpp"
#include "lime/routing.hpp"

namespace lime {
namespace {

Vector random_simplex(std::size_t e, Rng& rng) {
    Vector p(e);
    double total = 0.0;
    for (double& v : p) {
        v = -std::log(1.0 - rng.uniform());
        total += v;
    }
    for (double& v : p) {
        v /= total;
    }
    return p;
}

TEST(NormalizeSlice, ZeroStaysZero) {
    EXPECT_EQ(normalize_slice(Vector{0.0, 0.0}), (Vector{0.0, 0.0}));
    EXPECT_EQ(normalize_slice(Vector{2.0, -4.0}), (Vector{0.5, -1.0}));
}

TEST(Route, InvariantToPositiveSliceRescaling) {
    Rng rng(1);
    RoutingConfig cfg;
    for (int i = 0; i < 100; ++i) {
        Vector z(4);
        Vector zh(4);
        for (std::size_t k = 0; k < 4; ++k) {
            z[k] = rng.normal();
            zh[k] = rng.normal();
        }
        const double c1 = rng.uniform(1e-3, 1e3);
        const double c2 = rng.uniform(1e-3, 1e3);
        Vector z2 = z;
        Vector zh2 = zh;
        for (std::size_t k = 0; k < 4; ++k) {
            z2[k] *= c1;
            zh2[k] *= c2;
        }
        const Vector a = route(z, zh, cfg, nullptr, false);
        const Vector b = route(z2, zh2, cfg, nullptr, false);
        for (std::size_t k = 0; k < 4; ++k) {
            EXPECT_NEAR(a[k], b[k], 1e-12);
        }
    }
}

TEST(Route, GammaREndpointsUseOneSlice) {
    RoutingConfig cfg;
    cfg.gamma_r = 0.0;
    const Vector z{1.0, 0.0, -1.0};
    const Vector a = route(z, Vector{5.0, -2.0, 1.0}, cfg, nullptr, false);
    const Vector b = route(z, Vector{-9.0, 3.0, 0.0}, cfg, nullptr, false);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(a[k], b[k]);
    }
    const Vector expected = softmax(z, cfg.tau);
    EXPECT_NEAR(a[0], expected[0], 1e-15);
}

TEST(Route, JitterOnlyInTrainingAndBounded) {
    RoutingConfig cfg;
    cfg.jitter_sigma = 0.1;
    Rng rng(2);
    const Vector z{1.0, 0.5, -0.25, 0.0};
    const Vector zh{0.1, -0.3, 0.2, 0.9};
    const Vector clean = route(z, zh, cfg, &rng, false);
    const auto state = rng.state();
    EXPECT_EQ(route(z, zh, cfg, &rng, false), clean);
    EXPECT_EQ(rng.state(), state);
    Vector jitter;
    route(z, zh, cfg, &rng, true, &jitter);
    ASSERT_EQ(jitter.size(), 4u);
    for (double j : jitter) {
        EXPECT_GE(j, 0.9);
        EXPECT_LE(j, 1.1);
    }
    EXPECT_EQ(route_with_jitter(z, zh, cfg, jitter), route_with_jitter(z, zh, cfg, jitter));
}

TEST(Route, NonFiniteSliceThrows) {
    RoutingConfig cfg;
    EXPECT_THROW(route(Vector{NAN, 1.0}, Vector{1.0, 1.0}, cfg, nullptr, false), NumericError);
}

TEST(Select, RenormalizedWeightsSumToOne) {
    Rng rng(3);
    const std::vector<SelectionStrategy> all = {
        SelectionStrategy::relative_threshold(0.5), SelectionStrategy::fixed_topk(2),
        SelectionStrategy::absolute_threshold(0.3), SelectionStrategy::entropy_based(1, 3),
        SelectionStrategy::gini_based(1, 3),        SelectionStrategy::cumulative_prob(0.9),
        SelectionStrategy::topk_gap(1, 0.1)};
    for (int i = 0; i < 200; ++i) {
        const Vector w = random_simplex(1 + rng.below(6), rng);
        for (const auto& s : all) {
            const RoutingDecision d = select(w, s);
            ASSERT_FALSE(d.selected.empty()) << s.name();
            EXPECT_TRUE(std::is_sorted(d.selected.begin(), d.selected.end()));
            double total = 0.0;
            for (std::size_t e = 0; e < w.size(); ++e) {
                const bool in = std::find(d.selected.begin(), d.selected.end(), e) != d.selected.end();
                if (!in) {
                    EXPECT_EQ(d.renorm[e], 0.0);
                }
                total += d.renorm[e];
            }
            EXPECT_NEAR(total, 1.0, 1e-12) << s.name();
        }
    }
}

TEST(Select, RelativeThresholdOneKeepsOnlyTheMaximum) {
    const RoutingDecision d = select(Vector{0.2, 0.5, 0.3}, SelectionStrategy::relative_threshold(1.0));
    EXPECT_EQ(d.selected, (std::vector<std::size_t>{1}));
    EXPECT_EQ(d.renorm[1], 1.0);
}

TEST(Select, FixedTopkTieBreaksTowardLowerIndex) {
    const RoutingDecision d = select(Vector{0.25, 0.25, 0.25, 0.25}, SelectionStrategy::fixed_topk(2));
    EXPECT_EQ(d.selected, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(select(Vector{0.5, 0.5}, SelectionStrategy::fixed_topk(9)).selected.size(), 2u);
}

TEST(Select, AbsoluteThresholdFallsBackToArgmax) {
    const RoutingDecision d = select(Vector{0.3, 0.4, 0.3}, SelectionStrategy::absolute_threshold(0.9));
    EXPECT_EQ(d.selected, (std::vector<std::size_t>{1}));
}

TEST(Select, CumulativeProbTakesShortestPrefix) {
    const Vector w{0.1, 0.6, 0.3};
    EXPECT_EQ(select(w, SelectionStrategy::cumulative_prob(0.6)).selected, (std::vector<std::size_t>{1}));
    EXPECT_EQ(select(w, SelectionStrategy::cumulative_prob(0.85)).selected, (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(select(w, SelectionStrategy::cumulative_prob(1.0)).selected.size(), 3u);
}

TEST(Select, TopkGapAddsNearTies) {
    const Vector w{0.45, 0.40, 0.15};
    EXPECT_EQ(select(w, SelectionStrategy::topk_gap(1, 0.1)).selected, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(select(w, SelectionStrategy::topk_gap(1, 0.01)).selected, (std::vector<std::size_t>{0}));
}

TEST(Select, EntropyBasedUsesFlooredInterpolation) {
    // Uniform weights have normalized entropy 1 and reach k_max; a one-hot
    // vector reaches k_min.
    EXPECT_EQ(select(Vector(4, 0.25), SelectionStrategy::entropy_based(1, 3)).selected.size(), 3u);
    EXPECT_EQ(select(Vector{1.0, 0.0, 0.0, 0.0}, SelectionStrategy::entropy_based(1, 3)).selected.size(), 1u);
    // Just below full entropy the floor stays below k_max.
    EXPECT_EQ(select(Vector{0.26, 0.25, 0.25, 0.24}, SelectionStrategy::entropy_based(1, 2)).selected.size(), 1u);
}

TEST(Select, GiniBasedSpreadsForFlatWeights) {
    EXPECT_EQ(select(Vector(4, 0.25), SelectionStrategy::gini_based(1, 4)).selected.size(), 4u);
    EXPECT_EQ(select(Vector{1.0, 0.0, 0.0, 0.0}, SelectionStrategy::gini_based(1, 4)).selected.size(), 1u);
}

TEST(Select, RejectsNonSimplexAndBadParameters) {
    EXPECT_THROW(select(Vector{0.5, 0.6}, SelectionStrategy::fixed_topk(1)), std::invalid_argument);
    EXPECT_THROW(select(Vector{1.5, -0.5}, SelectionStrategy::fixed_topk(1)), std::invalid_argument);
    EXPECT_THROW(SelectionStrategy::relative_threshold(0.0).validate(), ConfigError);
    EXPECT_THROW(SelectionStrategy::fixed_topk(0).validate(), ConfigError);
    EXPECT_THROW(SelectionStrategy::entropy_based(3, 2).validate(), ConfigError);
    EXPECT_THROW(SelectionStrategy::cumulative_prob(1.5).validate(), ConfigError);
    EXPECT_THROW(SelectionStrategy::topk_gap(1, -0.1).validate(), ConfigError);
}

TEST(Select, RelativeThresholdSetsAreNested) {
    Rng rng(4);
    for (int i = 0; i < 500; ++i) {
        const Vector w = random_simplex(5, rng);
        const auto loose = select(w, SelectionStrategy::relative_threshold(0.3)).selected;
        const auto tight = select(w, SelectionStrategy::relative_threshold(0.8)).selected;
        EXPECT_TRUE(std::includes(loose.begin(), loose.end(), tight.begin(), tight.end()));
    }
}

TEST(PlanUnits, NgramWindowsUseLastToken) {
    const auto units = plan_units(7, Granularity::ngram, 3);
    ASSERT_EQ(units.size(), 3u);
    EXPECT_EQ(units[0].representative, 2u);
    EXPECT_EQ(units[2].begin, 6u);
    EXPECT_EQ(units[2].end, 7u);
    EXPECT_EQ(units[2].representative, 6u);
    const auto seq = plan_units(5, Granularity::sequence, 3);
    ASSERT_EQ(seq.size(), 1u);
    EXPECT_EQ(seq[0].representative, 4u);
    EXPECT_EQ(plan_units(4, Granularity::token, 3).size(), 4u);
}

TEST(RoutingSlice, Variants) {
    EXPECT_EQ(routing_slice(10, 3, SliceKind::leading, 0), (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(routing_slice(10, 4, SliceKind::central, 0), (std::vector<std::size_t>{3, 4, 5, 6}));
    EXPECT_EQ(routing_slice(10, 3, SliceKind::trailing, 0), (std::vector<std::size_t>{7, 8, 9}));
    const auto r = routing_slice(10, 4, SliceKind::random, 17);
    EXPECT_EQ(r, routing_slice(10, 4, SliceKind::random, 17));
    EXPECT_EQ(std::set<std::size_t>(r.begin(), r.end()).size(), 4u);
    EXPECT_THROW(routing_slice(3, 4, SliceKind::leading, 0), ConfigError);
}

TEST(Statistics, EntropyAndGini) {
    EXPECT_NEAR(entropy(Vector(4, 0.25)), std::log(4.0), 1e-15);
    EXPECT_EQ(entropy(Vector{1.0, 0.0}), 0.0);
    EXPECT_EQ(gini(Vector(3, 1.0 / 3.0)), 0.0);
    EXPECT_NEAR(gini(Vector{1.0, 0.0, 0.0, 0.0}), 0.75, 1e-15);
}

} // namespace
} // namespace lime
