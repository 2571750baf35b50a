// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// Task losses and the load-balancing auxiliary losses on mean routing
// probabilities.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "lime/routing.hpp"
#include "lime/tensor.hpp"

namespace lime {

/// Mean pre-selection routing probability per expert, one contribution per
/// routing unit.
struct BatchRoutingStats {
    Vector pbar;

    static BatchRoutingStats from_decisions(const std::vector<RoutingDecision>& decisions,
                                            std::size_t experts);
};

/// L_imp = E·Σ p̄_i² − 1
double importance_loss(std::span<const double> pbar);
Vector importance_loss_grad(std::span<const double> pbar);

/// L_KL = Σ p̄_i·log(E·p̄_i), with 0·log 0 = 0.
double kl_uniform_loss(std::span<const double> pbar);
/// The derivative is unbounded at p̄_i = 0; those entries get 0.
Vector kl_uniform_loss_grad(std::span<const double> pbar);

enum class TaskLossKind { mse, cross_entropy };

TaskLossKind parse_task_loss(const std::string& name);
std::string task_loss_name(TaskLossKind kind);

/// mse: mean of squared differences over every entry.
/// cross_entropy: `pred` holds logits (N x C), `target` is N x 1 with class
/// indices; mean negative log-likelihood over rows.
double task_loss(const Matrix& pred, const Matrix& target, TaskLossKind kind);
/// d task_loss / d pred
Matrix task_loss_grad(const Matrix& pred, const Matrix& target, TaskLossKind kind);

struct LossBreakdown {
    double task = 0.0;
    double importance = 0.0;
    double kl_uniform = 0.0;
    double total = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
};

LossBreakdown combine_losses(double task, std::span<const double> pbar, double alpha, double beta);

} // namespace lime
