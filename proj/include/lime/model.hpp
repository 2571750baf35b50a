// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// A trainable single-layer model: either a LiME layer or the MoE-PEFT
// baseline, behind one forward/parameter interface.

#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "lime/baseline_moe.hpp"
#include "lime/checkpoint.hpp"
#include "lime/lime_layer.hpp"

namespace lime {

using Model = std::variant<LimeLayer, MoeLayer>;

struct ModelOutput {
    Matrix h;
    std::vector<RoutingDecision> decisions;
    std::optional<LimeForward> lime;
    std::optional<MoeForward> moe;
};

/// The baseline routes every token row independently and ignores sequence
/// structure and jitter arguments.
ModelOutput model_forward(const Model& model, const SequenceBatch& batch, Rng* rng, bool training,
                          const JitterTape* replay = nullptr);

std::vector<ParamRef> model_parameters(Model& model);
std::vector<NamedTensor> model_tensors(const Model& model);
void model_load(Model& model, const std::vector<NamedTensor>& tensors);
std::size_t model_experts(const Model& model);
std::size_t model_d_in(const Model& model);
std::size_t model_d_out(const Model& model);
/// count_lime_params or count_moe_params.
std::size_t model_param_count(const Model& model);

} // namespace lime
