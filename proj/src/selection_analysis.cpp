// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/selection_analysis.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

#include "lime/errors.hpp"
#include "lime/json_writer.hpp"

namespace lime {

double routing_entropy(const BatchRoutingStats& stats) {
    return entropy(stats.pbar);
}

std::vector<Vector> make_routing_corpus(std::size_t n, std::size_t experts, Rng& rng) {
    static const double kTemps[] = {0.1, 0.25, 0.5, 1.0, 2.0, 4.0};
    if (experts == 0) {
        throw ConfigError("routing corpus needs at least one expert");
    }
    std::vector<Vector> corpus;
    corpus.reserve(n);
    Vector logits(experts);
    for (std::size_t i = 0; i < n; ++i) {
        for (double& l : logits) {
            l = rng.normal();
        }
        corpus.push_back(softmax(logits, kTemps[i % 6]));
    }
    return corpus;
}

std::vector<SelectionStrategy> default_strategy_grid(std::size_t experts) {
    if (experts == 0) {
        throw ConfigError("strategy grid needs at least one expert");
    }
    std::vector<SelectionStrategy> grid;
    for (std::size_t k = 1; k <= std::min<std::size_t>(experts, 4); ++k) {
        grid.push_back(SelectionStrategy::fixed_topk(k));
    }
    for (double eta : {0.05, 0.10, 0.15, 0.20}) {
        grid.push_back(SelectionStrategy::absolute_threshold(eta));
    }
    const std::pair<std::size_t, std::size_t> ranges[] = {{1, 2}, {1, 3}, {1, 4}, {2, 4}};
    std::vector<std::pair<std::size_t, std::size_t>> clipped;
    for (auto [lo, hi] : ranges) {
        hi = std::min(hi, experts);
        lo = std::min(lo, hi);
        if (std::find(clipped.begin(), clipped.end(), std::make_pair(lo, hi)) == clipped.end()) {
            clipped.emplace_back(lo, hi);
        }
    }
    for (auto [lo, hi] : clipped) {
        grid.push_back(SelectionStrategy::entropy_based(lo, hi));
    }
    for (auto [lo, hi] : clipped) {
        grid.push_back(SelectionStrategy::gini_based(lo, hi));
    }
    for (double rho : {0.80, 0.85, 0.90, 0.95}) {
        grid.push_back(SelectionStrategy::cumulative_prob(rho));
    }
    for (double theta : {0.3, 0.4, 0.5, 0.6, 0.7, 0.8}) {
        grid.push_back(SelectionStrategy::relative_threshold(theta));
    }
    grid.push_back(SelectionStrategy::topk_gap(1, 0.05));
    grid.push_back(SelectionStrategy::topk_gap(1, 0.10));
    grid.push_back(SelectionStrategy::topk_gap(std::min<std::size_t>(2, experts), 0.05));
    return grid;
}

std::vector<StrategyRow> compare_strategies(const std::vector<Vector>& corpus,
                                            const std::vector<SelectionStrategy>& grid) {
    if (corpus.empty()) {
        throw std::invalid_argument("compare_strategies: empty corpus");
    }
    if (corpus.front().size() > 64) {
        throw std::invalid_argument("compare_strategies: at most 64 experts");
    }
    std::vector<StrategyRow> rows;
    rows.reserve(grid.size());
    const double n = static_cast<double>(corpus.size());
    for (const auto& strategy : grid) {
        strategy.validate();
        StrategyRow row;
        row.strategy = strategy;
        row.min_selected = corpus.front().size();
        std::size_t total = 0;
        std::size_t singles = 0;
        double mass = 0.0;
        row.masks.reserve(corpus.size());
        for (const auto& w : corpus) {
            const RoutingDecision d = select(w, strategy);
            std::uint64_t mask = 0;
            double m = 0.0;
            for (std::size_t i : d.selected) {
                mask |= std::uint64_t{1} << i;
                m += w[i];
            }
            row.masks.push_back(mask);
            total += d.selected.size();
            singles += d.selected.size() == 1 ? 1 : 0;
            mass += m;
            row.min_selected = std::min(row.min_selected, d.selected.size());
            row.max_selected = std::max(row.max_selected, d.selected.size());
        }
        row.avg_selected = static_cast<double>(total) / n;
        row.single_rate = static_cast<double>(singles) / n;
        row.selected_mass = mass / n;
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_strategy_csv(std::ostream& out, const std::vector<StrategyRow>& rows) {
    out << "strategy,params,avg_experts,min_experts,max_experts,single_rate,selected_mass\n";
    for (const auto& r : rows) {
        out << r.strategy.name() << ",\"" << r.strategy.params_string() << "\","
            << format_real(r.avg_selected) << ',' << r.min_selected << ',' << r.max_selected << ','
            << format_real(r.single_rate) << ',' << format_real(r.selected_mass) << '\n';
    }
}

Matrix utilization_heatmap(const std::vector<TraceRecord>& traces, std::size_t n_layers,
                           std::size_t experts) {
    Matrix counts(n_layers, experts);
    std::vector<std::size_t> units(n_layers, 0);
    for (const auto& t : traces) {
        if (t.layer >= n_layers) {
            throw std::out_of_range("utilization_heatmap: layer " + std::to_string(t.layer) +
                                    " >= " + std::to_string(n_layers));
        }
        ++units[t.layer];
        for (std::size_t i : t.decision.selected) {
            if (i >= experts) {
                throw std::out_of_range("utilization_heatmap: expert index out of range");
            }
            counts(t.layer, i) += 1.0;
        }
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
        if (units[l] == 0) {
            continue;
        }
        for (std::size_t i = 0; i < experts; ++i) {
            counts(l, i) /= static_cast<double>(units[l]);
        }
    }
    return counts;
}

} // namespace lime
