// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// Analytic backward passes, the AdamW optimizer with per-group learning
// rates and a warmup-cosine schedule, and the training loop.
//
// Selection sets are constants during backward. Gradients flow through the
// renormalization, the softmax, optional recorded jitter, inf-norm slice
// normalization (to the max-|.| coordinate, lowest index on ties) and the
// load-balancing terms.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "lime/losses.hpp"
#include "lime/model.hpp"
#include "lime/tasks.hpp"

namespace lime {

/// One gradient buffer per trainable parameter, in trainable_parameters() order.
struct GradTape {
    std::vector<std::string> names;
    std::vector<Matrix> grads;

    static GradTape zeros_like(const std::vector<ParamRef>& params);
    Matrix& at(const std::string& name);
    const Matrix* find(const std::string& name) const;
    /// The gradient for `name`, or a zero matrix of the given shape when the
    /// tensor is frozen (e.g. A under LoRA-FA).
    Matrix value_or_zero(const std::string& name, std::size_t rows, std::size_t cols) const;
    double global_norm() const;
};

struct LossSpec {
    TaskLossKind kind = TaskLossKind::mse;
    double alpha = 0.1;
    double beta = 0.01;
};

/// Deliberate backward corruptions, used to show the gradient checker fails.
enum class BackwardFault { none, skip_renorm_jacobian, skip_inf_norm_max, drop_load_balance };

BackwardFault parse_backward_fault(const std::string& name);

/// Loss value of the model on (batch, target). With `replay` the recorded
/// jitter is reapplied; otherwise routing runs without jitter.
LossBreakdown evaluate_loss(const Model& model, const SequenceBatch& batch, const Matrix& target,
                            const LossSpec& spec, const JitterTape* replay = nullptr);

/// Gradients of the total loss given a finished forward pass.
GradTape backward(Model& model, const SequenceBatch& batch, const ModelOutput& out,
                  const Matrix& target, const LossSpec& spec,
                  BackwardFault fault = BackwardFault::none);

struct LossAndGrad {
    LossBreakdown loss;
    GradTape tape;
    ModelOutput out;
};

LossAndGrad loss_and_grad(Model& model, const SequenceBatch& batch, const Matrix& target,
                          const LossSpec& spec, Rng* rng, bool training,
                          BackwardFault fault = BackwardFault::none);

/// Linear warmup from 0 to 1 over warmup_ratio·total steps, then cosine
/// decay 0.5·(1 + cos(π·(t − warm)/(total − warm))), reaching 0 at t = total.
double lr_schedule(std::size_t step, std::size_t total_steps, double warmup_ratio);

struct OptimizerConfig {
    double lr_peft = 2e-4;
    double lr_expert = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
};

struct StepInfo {
    double grad_norm = 0.0;
    double clip_scale = 1.0;
};

/// Adaptive moments with decoupled weight decay. Adapter-group tensors use
/// lr_peft and weight decay; modulator-group tensors use lr_expert and no
/// decay. Gradients are clipped to a global norm of grad_clip first.
class AdamW {
public:
    AdamW(const std::vector<ParamRef>& params, OptimizerConfig cfg);

    StepInfo step(std::vector<ParamRef>& params, const GradTape& tape, double lr_factor);
    std::size_t steps_taken() const noexcept { return t_; }

private:
    OptimizerConfig cfg_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    std::size_t t_ = 0;
};

struct TrainConfig {
    double lr_peft = 2e-4;
    double lr_expert = 1e-3;
    std::size_t epochs = 3;
    /// 0 means epochs · ceil(N / batch_size) steps.
    std::size_t max_steps = 0;
    std::size_t batch_size = 32;
    double warmup_ratio = 0.03;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
    double alpha = 0.1;
    double beta = 0.01;
    std::size_t log_every = 10;
    TaskLossKind loss = TaskLossKind::mse;
    std::uint64_t seed = 42;

    void validate() const;
    std::size_t total_steps(std::size_t n_samples) const;
};

struct TrainRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    LossBreakdown loss;
    double routing_entropy = 0.0; // H(p̄) of the batch, nats
    double lr_factor = 0.0;
    double grad_norm = 0.0;
    double avg_selected = 0.0;
};

nlohmann::json to_json(const TrainRecord& record);

struct TrainResult {
    std::vector<TrainRecord> history;
    std::size_t steps = 0;
};

/// Minibatch training on `data` with samples as length-1 sequences. Each
/// epoch visits a fresh permutation; jitter and shuffling draw from a stream
/// seeded by cfg.seed. A record is kept at step 0, every log_every steps and
/// at the final step; `metrics` receives each record as one JSON line.
/// Throws DivergenceError when the loss becomes non-finite.
TrainResult train_loop(Model& model, const MixtureDataset& data, const TrainConfig& cfg,
                       std::ostream* metrics = nullptr);

} // namespace lime
