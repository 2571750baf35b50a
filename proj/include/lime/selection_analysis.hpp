// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// Routing diagnostics: entropy of mean routing probabilities, selection
// strategy sweeps over a corpus of weight vectors, and per-layer expert
// utilization from routing traces.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "lime/lime_layer.hpp"
#include "lime/losses.hpp"
#include "lime/routing.hpp"

namespace lime {

/// H(p̄) in nats.
double routing_entropy(const BatchRoutingStats& stats);

/// `n` softmax vectors over `experts` logits drawn from N(0, 1), each at a
/// temperature cycling through {0.1, 0.25, 0.5, 1, 2, 4} so the corpus mixes
/// confident and uncertain routing.
std::vector<Vector> make_routing_corpus(std::size_t n, std::size_t experts, Rng& rng);

/// Fixed top-k 1..E, absolute η, entropy/Gini ranges, cumulative ρ, relative
/// θ in {0.3, ..., 0.8} and a few top-k-with-gap settings. Ranges are clipped
/// to E.
std::vector<SelectionStrategy> default_strategy_grid(std::size_t experts);

struct StrategyRow {
    SelectionStrategy strategy;
    double avg_selected = 0.0;
    std::size_t min_selected = 0;
    std::size_t max_selected = 0;
    double single_rate = 0.0;   // fraction of vectors with |S| = 1
    double selected_mass = 0.0; // mean Σ_{i∈S} w_i
    std::vector<std::uint64_t> masks; // bit i set when expert i is selected
};

/// Runs every strategy over the corpus. E must be <= 64.
std::vector<StrategyRow> compare_strategies(const std::vector<Vector>& corpus,
                                            const std::vector<SelectionStrategy>& grid);

/// Columns: strategy,params,avg_experts,min_experts,max_experts,single_rate,selected_mass
void write_strategy_csv(std::ostream& out, const std::vector<StrategyRow>& rows);

/// Fraction of routing units per (layer, expert) whose selected set contains
/// the expert. Rows may sum above 1 when several experts are selected.
Matrix utilization_heatmap(const std::vector<TraceRecord>& traces, std::size_t n_layers,
                           std::size_t experts);

} // namespace lime
