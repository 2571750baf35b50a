// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic multi-task mixtures and per-task evaluation.
//
// Targets follow y = W0·x + (G·x) ⊙ q_t + noise where W0 is the frozen base
// map (make_base_layer with the same seed the model uses), G = B·A is a
// shared rank-r map and q_t is a per-task modulation vector. Task means are
// placed so the leading n_tasks coordinates of W0·μ_t form sep·e_t, giving
// zero-parameter routing a clean signal.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lime/model.hpp"
#include "lime/peft.hpp"
#include "lime/tensor.hpp"

namespace lime {

enum class TaskKind { regression, classification };

TaskKind parse_task_kind(const std::string& name);
std::string task_kind_name(TaskKind kind);

/// Samples with task ids. For classification `y` is N x 1 of class indices.
/// The task id never reaches the model; it only drives per-task evaluation.
struct MixtureDataset {
    std::vector<std::size_t> task_ids;
    Matrix x;
    Matrix y;
    std::size_t n_tasks = 0;
    TaskKind kind = TaskKind::regression;

    std::size_t size() const noexcept { return x.rows(); }
    MixtureDataset subset(const std::vector<std::size_t>& rows) const;
    MixtureDataset task_subset(std::size_t task) const;
    void validate() const;
};

struct MixtureSpec {
    std::size_t n_tasks = 3;
    std::size_t samples_per_task = 200;
    /// Empty means equal shares. Otherwise n_tasks·samples_per_task samples
    /// are split by largest remainder.
    std::vector<double> proportions;
    std::size_t d_in = 16;
    std::size_t d_out = 16;
    std::size_t rank = 2;
    double noise = 0.0;
    double separation = 8.0;
    double input_std = 1.0;
    /// Explicit q_t per task; empty means draw from U(0.5, 1.5).
    std::vector<Vector> q;
    TaskKind kind = TaskKind::regression;
    std::uint64_t base_seed = 7;

    void validate() const;
};

struct GroundTruth {
    FrozenLinear base;
    LoraAdapter shared; // G = B·A with scale 1
    std::vector<Vector> q;
    Matrix means; // n_tasks x d_in
};

struct GeneratedMixture {
    MixtureDataset data;
    GroundTruth truth;
};

GeneratedMixture gen_modulated_mixture(const MixtureSpec& spec, Rng& rng);
/// Four tasks split 70/20/5/5 unless `spec.proportions` is already set.
GeneratedMixture gen_imbalanced_mixture(MixtureSpec spec, Rng& rng);

/// Largest-remainder split of `total` by `proportions` (must sum to 1 within
/// 1e-9); ties in the remainder go to the lower index.
std::vector<std::size_t> allocate_counts(std::size_t total, const std::vector<double>& proportions);

/// Header: task_id,x_0..x_{d_in-1},y_0..y_{m-1}
void write_dataset_csv(std::ostream& out, const MixtureDataset& data);
MixtureDataset read_dataset_csv(std::istream& in, TaskKind kind);
void save_dataset_csv(const std::string& path, const MixtureDataset& data);
MixtureDataset load_dataset_csv(const std::string& path, TaskKind kind);

struct TaskMetrics {
    std::size_t task = 0;
    std::size_t n = 0;
    double loss = 0.0;               // mse, or mean cross-entropy for classification
    std::optional<double> accuracy; // classification only
};

struct EvalReport {
    std::vector<TaskMetrics> per_task;
    TaskMetrics overall;
};

/// Regression: mse per task. Classification: `pred` rows are logits; loss is
/// the mean cross-entropy and accuracy compares each row's argmax with the
/// class index.
EvalReport score_predictions(const Matrix& pred, const MixtureDataset& data);
/// Inference-mode forward (no jitter) on every sample, then score.
EvalReport evaluate(const Model& model, const MixtureDataset& data);

} // namespace lime
