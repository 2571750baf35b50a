// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference verification of the analytic backward passes.
//
// Jitter drawn by the analytic forward is replayed in every perturbed
// evaluation so both sides differentiate the same function. A check is only
// meaningful when no selection set and no inf-norm argmax changes under the
// ±step perturbations; `stable` reports whether that held.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lime/train.hpp"

namespace lime {

struct GradcheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
    double floor = 1e-4;
    bool training = true; // draw (and replay) routing jitter
    BackwardFault fault = BackwardFault::none;
};

struct ParamCheck {
    std::string name;
    std::size_t entries = 0;
    double max_rel_error = 0.0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

struct GradcheckReport {
    std::vector<ParamCheck> params;
    double max_rel_error = 0.0;
    bool stable = true;
    bool passed = false;
};

double relative_error(double analytic, double numeric, double floor);

/// Checks every entry of every trainable parameter of `model`.
GradcheckReport check_gradients(Model& model, const SequenceBatch& batch, const Matrix& target,
                                const LossSpec& spec, Rng& rng, const GradcheckOptions& opts);

/// Selected sets of every routing unit, plus for LiME the inf-norm argmax of
/// each representative ẑ slice (E when the slice is zero).
std::vector<std::size_t> selection_signature(const ModelOutput& out);

struct GradcheckCase {
    std::string label;
    Model model;
    SequenceBatch batch;
    Matrix target;
    LossSpec spec;
};

/// Deterministic random configuration number `index`. Cycles E in {1,2,4},
/// d in {4,8}, both adapters, the three granularities, LoRA-FA, shared
/// modulator on/off, all selection strategies and the MoE baseline; weights
/// are drawn away from their identity initialization so every path carries
/// signal.
GradcheckCase make_gradcheck_case(std::size_t index, std::uint64_t seed);

struct SuiteEntry {
    std::string label;
    GradcheckReport report;
    std::size_t attempts = 0;
};

struct SuiteResult {
    std::vector<SuiteEntry> entries;
    bool passed = false;
    double max_rel_error = 0.0;
};

/// Runs `n_configs` cases. An unstable case is redrawn with a new seed, up
/// to `max_attempts` times, after which it counts as a failure.
SuiteResult run_gradcheck_suite(std::size_t n_configs, std::uint64_t seed,
                                const GradcheckOptions& opts, std::size_t max_attempts = 20);

} // namespace lime
