// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// Causal-aggregation toy with linear probes.
//
// A window of n tokens x_s ∈ {-1, +1} is embedded as x_s·e_s and aggregated
// causally by prefix means, h_t = (1/t)·Σ_{s<=t} x_s·e_s. This is an analog of
// causal information accumulation, not a model of attention. A logistic
// probe reads the label from each position. Probe features are the
// standardized multilinear lift of h_t (the products over every nonempty
// coordinate subset), so that labels such as parity are linearly decodable
// once the required tokens are visible.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lime/tensor.hpp"

namespace lime {

enum class ToyLabel { parity, first_token };

ToyLabel parse_toy_label(const std::string& name);

struct ProbeConfig {
    std::size_t steps = 500;
    double lr = 0.1;
    double lambda = 1e-3;
};

struct WindowProbeSpec {
    std::size_t n = 4;
    ToyLabel label = ToyLabel::parity;
    std::size_t train_samples = 2000;
    std::size_t test_samples = 2000;
    double slack = 0.05;
    ProbeConfig probe;
};

struct WindowProbeReport {
    Vector accuracy;       // test accuracy per position, 1-based positions in order
    Vector bayes_accuracy; // exact, by enumeration
    bool ordered = false;  // last >= first - slack
};

/// Row t-1 holds h_t for one token window.
Matrix prefix_mean_states(std::span<const double> tokens);

/// Products over every nonempty subset of coordinates, subsets in binary
/// counting order.
Vector multilinear_lift(std::span<const double> h);

/// Bayes accuracy of predicting the label from h_t for each t, by
/// enumerating all 2^n windows.
Vector bayes_accuracy(std::size_t n, ToyLabel label);

struct LogisticProbe {
    Vector weights;
    double bias = 0.0;
    Vector mean;
    Vector scale; // 0 marks a constant feature, which is ignored

    double predict_logit(std::span<const double> features) const;
};

/// Full-batch gradient descent on the ridge-regularized mean logistic loss.
/// Labels are 0/1. Throws std::invalid_argument if all labels agree.
LogisticProbe train_probe(const Matrix& features, std::span<const double> labels,
                          const ProbeConfig& cfg);
double probe_accuracy(const LogisticProbe& probe, const Matrix& features,
                      std::span<const double> labels);

WindowProbeReport check_window_probe(const WindowProbeSpec& spec, Rng& rng);

} // namespace lime
