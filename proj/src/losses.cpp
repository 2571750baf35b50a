// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lime/errors.hpp"

namespace lime {

namespace {

constexpr double kSimplexTol = 1e-9;

void check_pbar(std::span<const double> p, const char* what) {
    if (p.empty()) {
        throw std::invalid_argument(std::string(what) + ": empty routing statistics");
    }
    double total = 0.0;
    for (double v : p) {
        if (!std::isfinite(v) || v < -kSimplexTol) {
            throw std::invalid_argument(std::string(what) + ": entries must be finite and >= 0");
        }
        total += v;
    }
    if (std::abs(total - 1.0) > kSimplexTol) {
        throw std::invalid_argument(std::string(what) + ": p̄ is off the simplex");
    }
}

} // namespace

BatchRoutingStats BatchRoutingStats::from_decisions(const std::vector<RoutingDecision>& decisions,
                                                    std::size_t experts) {
    if (decisions.empty()) {
        throw std::invalid_argument("routing stats need at least one decision");
    }
    BatchRoutingStats s;
    s.pbar.assign(experts, 0.0);
    for (const auto& d : decisions) {
        if (d.weights.size() != experts) {
            throw ShapeError("routing stats: decision has the wrong number of experts");
        }
        for (std::size_t i = 0; i < experts; ++i) {
            s.pbar[i] += d.weights[i];
        }
    }
    const double n = static_cast<double>(decisions.size());
    for (double& v : s.pbar) {
        v /= n;
    }
    return s;
}

double importance_loss(std::span<const double> pbar) {
    check_pbar(pbar, "importance_loss");
    double sq = 0.0;
    for (double v : pbar) {
        sq += v * v;
    }
    return static_cast<double>(pbar.size()) * sq - 1.0;
}

Vector importance_loss_grad(std::span<const double> pbar) {
    check_pbar(pbar, "importance_loss_grad");
    const double e = static_cast<double>(pbar.size());
    Vector g(pbar.size());
    for (std::size_t i = 0; i < pbar.size(); ++i) {
        g[i] = 2.0 * e * pbar[i];
    }
    return g;
}

double kl_uniform_loss(std::span<const double> pbar) {
    check_pbar(pbar, "kl_uniform_loss");
    const double e = static_cast<double>(pbar.size());
    double total = 0.0;
    for (double v : pbar) {
        if (v > 0.0) {
            total += v * std::log(e * v);
        }
    }
    return total;
}

Vector kl_uniform_loss_grad(std::span<const double> pbar) {
    check_pbar(pbar, "kl_uniform_loss_grad");
    const double e = static_cast<double>(pbar.size());
    Vector g(pbar.size(), 0.0);
    for (std::size_t i = 0; i < pbar.size(); ++i) {
        if (pbar[i] > 0.0) {
            g[i] = std::log(e * pbar[i]) + 1.0;
        }
    }
    return g;
}

TaskLossKind parse_task_loss(const std::string& name) {
    if (name == "mse") return TaskLossKind::mse;
    if (name == "cross_entropy") return TaskLossKind::cross_entropy;
    throw ConfigError("unknown task loss '" + name + "'");
}

std::string task_loss_name(TaskLossKind kind) {
    return kind == TaskLossKind::mse ? "mse" : "cross_entropy";
}

namespace {

std::size_t class_index(double v, std::size_t classes) {
    if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(classes)) {
        throw std::invalid_argument("cross_entropy: target " + std::to_string(v) +
                                    " is not a class index in [0, " + std::to_string(classes) + ")");
    }
    return static_cast<std::size_t>(v);
}

void check_task_shapes(const Matrix& pred, const Matrix& target, TaskLossKind kind) {
    if (pred.rows() == 0) {
        throw ShapeError("task_loss: empty batch");
    }
    if (kind == TaskLossKind::mse) {
        if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
            throw ShapeError("mse: prediction " + pred.shape_string() + " vs target " +
                             target.shape_string());
        }
    } else if (target.rows() != pred.rows() || target.cols() != 1) {
        throw ShapeError("cross_entropy: target must be " + std::to_string(pred.rows()) +
                         "x1 class indices, got " + target.shape_string());
    }
}

} // namespace

double task_loss(const Matrix& pred, const Matrix& target, TaskLossKind kind) {
    check_task_shapes(pred, target, kind);
    if (kind == TaskLossKind::mse) {
        double total = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred.values()[i] - target.values()[i];
            total += d * d;
        }
        return total / static_cast<double>(pred.size());
    }
    double total = 0.0;
    for (std::size_t j = 0; j < pred.rows(); ++j) {
        const auto row = pred.row(j);
        const std::size_t c = class_index(target(j, 0), pred.cols());
        double m = row[0];
        for (double v : row) {
            m = std::max(m, v);
        }
        double s = 0.0;
        for (double v : row) {
            s += std::exp(v - m);
        }
        total += std::log(s) + m - row[c];
    }
    return total / static_cast<double>(pred.rows());
}

Matrix task_loss_grad(const Matrix& pred, const Matrix& target, TaskLossKind kind) {
    check_task_shapes(pred, target, kind);
    Matrix g(pred.rows(), pred.cols());
    if (kind == TaskLossKind::mse) {
        const double scale = 2.0 / static_cast<double>(pred.size());
        for (std::size_t i = 0; i < pred.size(); ++i) {
            g.values()[i] = scale * (pred.values()[i] - target.values()[i]);
        }
        return g;
    }
    const double inv_n = 1.0 / static_cast<double>(pred.rows());
    for (std::size_t j = 0; j < pred.rows(); ++j) {
        const std::size_t c = class_index(target(j, 0), pred.cols());
        const Vector p = softmax(pred.row(j), 1.0);
        for (std::size_t k = 0; k < pred.cols(); ++k) {
            g(j, k) = inv_n * (p[k] - (k == c ? 1.0 : 0.0));
        }
    }
    return g;
}

LossBreakdown combine_losses(double task, std::span<const double> pbar, double alpha, double beta) {
    LossBreakdown b;
    b.task = task;
    b.importance = importance_loss(pbar);
    b.kl_uniform = kl_uniform_loss(pbar);
    b.alpha = alpha;
    b.beta = beta;
    b.total = task + alpha * b.importance + beta * b.kl_uniform;
    return b;
}

} // namespace lime
