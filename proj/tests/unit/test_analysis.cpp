// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "lime/cka.hpp"
#include "lime/errors.hpp"
#include "lime/information.hpp"
#include "lime/probes.hpp"
#include "lime/selection_analysis.hpp"
#include "oracles.hpp"

namespace lime {
namespace {

// ---- CKA

TEST(Cka, AgreesWithGramFormulation) {
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        const Matrix x = random_normal(15, 1 + rng.below(5), 1.0, rng);
        const Matrix y = random_normal(15, 1 + rng.below(5), 1.0, rng);
        EXPECT_NEAR(linear_cka(x, y).score, oracle::gram_cka(x, y), 1e-12);
    }
}

TEST(Cka, BoundedAndRejectsDegenerateInput) {
    Rng rng(2);
    const Matrix x = random_normal(10, 3, 1.0, rng);
    const double s = linear_cka(x, random_normal(10, 2, 1.0, rng)).score;
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_THROW(linear_cka(x, Matrix(10, 2, 3.0)), NumericError);
    EXPECT_THROW(linear_cka(x, Matrix(9, 2)), ShapeError);
    EXPECT_THROW(linear_cka(Matrix(1, 2, 1.0), Matrix(1, 2, 1.0)), std::invalid_argument);
}

TEST(Cka, CenterColumnsZeroMean) {
    Rng rng(3);
    const Matrix c = center_columns(random_normal(7, 3, 2.0, rng));
    for (std::size_t j = 0; j < 3; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < 7; ++i) {
            s += c(i, j);
        }
        EXPECT_NEAR(s, 0.0, 1e-12);
    }
}

// ---- Information

TEST(MutualInformation, MatchesNaiveFormula) {
    Rng rng(4);
    for (int i = 0; i < 30; ++i) {
        const std::size_t nz = 1 + rng.below(5);
        const std::size_t ny = 1 + rng.below(4);
        Matrix counts(nz, ny);
        for (double& v : counts.values()) {
            v = static_cast<double>(rng.below(6));
        }
        counts(0, 0) += 1.0;
        const DiscreteJoint j = DiscreteJoint::from_counts(counts);
        std::vector<std::vector<double>> table(nz, std::vector<double>(ny));
        for (std::size_t a = 0; a < nz; ++a) {
            for (std::size_t b = 0; b < ny; ++b) {
                table[a][b] = j.p(a, b);
            }
        }
        EXPECT_NEAR(mutual_information(j), oracle::naive_mutual_information(table), 1e-12);
    }
}

TEST(MutualInformation, IndependentIsZeroAndIdentityIsEntropy) {
    EXPECT_NEAR(mutual_information(DiscreteJoint::from_counts(Matrix::from_rows({{1, 2}, {2, 4}}))), 0.0, 1e-15);
    EXPECT_NEAR(mutual_information(DiscreteJoint::from_counts(Matrix::from_rows({{1, 0}, {0, 1}}))), std::log(2.0),
                1e-15);
    EXPECT_NEAR(mutual_information_counts({{3, 0}, {0, 3}}), std::log(2.0), 1e-15);
}

TEST(DiscreteJoint, ValidateRejectsBadTables) {
    DiscreteJoint j;
    j.p = Matrix::from_rows({{0.5, 0.6}});
    EXPECT_THROW(j.validate(), std::invalid_argument);
    j.p = Matrix::from_rows({{1.5, -0.5}});
    EXPECT_THROW(j.validate(), std::invalid_argument);
}

TEST(MatrixRank, KnownRanks) {
    EXPECT_EQ(matrix_rank(Matrix::identity(4)), 4u);
    EXPECT_EQ(matrix_rank(Matrix::from_rows({{1, 2}, {2, 4}})), 1u);
    EXPECT_EQ(matrix_rank(Matrix(3, 3)), 0u);
}

TEST(RefinementToy, GeneratedChainsAreValidAndMonotone) {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const RefinementToy toy = make_refinement_toy(rng);
        EXPECT_NO_THROW(validate_refinement(toy));
        const RefinementReport r = check_refinement_chain(toy);
        EXPECT_TRUE(r.monotone);
        EXPECT_EQ(r.violations, 0u);
        ASSERT_EQ(r.mi.size(), 3u);
    }
}

TEST(RefinementToy, RejectsChainThatIsNotARefinement) {
    RefinementToy toy;
    toy.x = {{1.0, 1.0}, {2.0, 1.0}};
    toy.counts = {{1, 0}, {0, 1}};
    toy.n_labels = 2;
    RouterLevel fine_first;
    fine_first.assignment = {0, 1};
    fine_first.maps = {Matrix::identity(2), scaled(Matrix::identity(2), 2.0)};
    RouterLevel coarse_second;
    coarse_second.assignment = {0, 0};
    coarse_second.maps = {Matrix::identity(2)};
    toy.levels = {fine_first, coarse_second};
    EXPECT_THROW(validate_refinement(toy), ConfigError);
}

// ---- Probes

TEST(BayesAccuracy, MatchesEnumeration) {
    for (std::size_t n = 1; n <= 6; ++n) {
        const auto parity = bayes_accuracy(n, ToyLabel::parity);
        const auto first = bayes_accuracy(n, ToyLabel::first_token);
        const auto op = oracle::enumerated_bayes_accuracy(n, true);
        const auto of = oracle::enumerated_bayes_accuracy(n, false);
        for (std::size_t t = 0; t < n; ++t) {
            EXPECT_NEAR(parity[t], op[t], 1e-15);
            EXPECT_NEAR(first[t], of[t], 1e-15);
        }
    }
}

TEST(PrefixMean, CausalAccumulation) {
    const Matrix h = prefix_mean_states(Vector{1.0, -1.0, 1.0});
    ASSERT_EQ(h.rows(), 3u);
    EXPECT_DOUBLE_EQ(h(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(h(1, 0), 0.5);
    EXPECT_DOUBLE_EQ(h(1, 1), -0.5);
    EXPECT_DOUBLE_EQ(h(1, 2), 0.0);
    EXPECT_DOUBLE_EQ(h(2, 2), 1.0 / 3.0);
}

TEST(MultilinearLift, AllNonEmptySubsetProducts) {
    const Vector f = multilinear_lift(Vector{2.0, 3.0, 5.0});
    ASSERT_EQ(f.size(), 7u);
    const std::multiset<double> got(f.begin(), f.end());
    EXPECT_EQ(got, (std::multiset<double>{2, 3, 5, 6, 10, 15, 30}));
}

TEST(Probe, LearnsLinearlySeparableLabels) {
    Rng rng(6);
    Matrix x = random_normal(200, 2, 1.0, rng);
    Vector y(200);
    for (std::size_t i = 0; i < 200; ++i) {
        y[i] = x(i, 0) + 0.5 * x(i, 1) > 0 ? 1.0 : 0.0;
    }
    const LogisticProbe p = train_probe(x, y, ProbeConfig{});
    EXPECT_GT(probe_accuracy(p, x, y), 0.95);
    EXPECT_THROW(train_probe(x, Vector(200, 1.0), ProbeConfig{}), std::invalid_argument);
}

TEST(WindowProbe, FirstTokenIsDecodableEverywhere) {
    Rng rng(7);
    WindowProbeSpec spec;
    spec.label = ToyLabel::first_token;
    spec.train_samples = 500;
    spec.test_samples = 500;
    const WindowProbeReport r = check_window_probe(spec, rng);
    for (double a : r.accuracy) {
        EXPECT_GT(a, 0.95);
    }
    EXPECT_TRUE(r.ordered);
}

// ---- Selection analysis

TEST(CompareStrategies, FixedTopkAverageIsExact) {
    Rng rng(8);
    const auto corpus = make_routing_corpus(1000, 4, rng);
    const auto rows = compare_strategies(corpus, default_strategy_grid(4));
    std::set<std::string> names;
    for (const auto& r : rows) {
        names.insert(r.strategy.name());
        EXPECT_GE(r.min_selected, 1u);
        EXPECT_LE(r.max_selected, 4u);
        EXPECT_LE(r.selected_mass, 1.0 + 1e-12);
        if (r.strategy.kind == StrategyKind::fixed_topk) {
            EXPECT_EQ(r.avg_selected, static_cast<double>(r.strategy.k));
        }
    }
    EXPECT_EQ(names.size(), 7u);
}

TEST(CompareStrategies, CsvShape) {
    Rng rng(9);
    const auto rows = compare_strategies(make_routing_corpus(50, 3, rng), default_strategy_grid(3));
    std::ostringstream out;
    write_strategy_csv(out, rows);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "strategy,params,avg_experts,min_experts,max_experts,single_rate,selected_mass");
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
    }
    EXPECT_EQ(n, rows.size());
}

TEST(RoutingCorpus, VectorsAreOnTheSimplex) {
    Rng rng(10);
    for (const auto& w : make_routing_corpus(100, 5, rng)) {
        double s = 0.0;
        for (double v : w) {
            EXPECT_GE(v, 0.0);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(UtilizationHeatmap, SelectionRates) {
    RoutingDecision a;
    a.weights = {0.6, 0.4};
    a.selected = {0};
    RoutingDecision b;
    b.weights = {0.5, 0.5};
    b.selected = {0, 1};
    const Matrix h = utilization_heatmap({{0, 0, a}, {0, 1, b}, {1, 0, b}}, 2, 2);
    EXPECT_DOUBLE_EQ(h(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(h(0, 1), 0.5);
    EXPECT_DOUBLE_EQ(h(1, 1), 1.0);
}

} // namespace
} // namespace lime
