// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// Expert-specific MoE-PEFT baseline: E independent LoRA adapters mixed by a
// learned token-level router with fixed top-k selection.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lime/checkpoint.hpp"
#include "lime/peft.hpp"
#include "lime/routing.hpp"
#include "lime/tensor.hpp"

namespace lime {

struct MoeLayerSpec {
    std::size_t d_in = 16;
    std::size_t d_out = 16;
    std::size_t experts = 4;
    LoraSpec lora;
    std::size_t top_k = 2;
    double tau = 1.0;
    double router_std = 0.02;
    std::uint64_t base_seed = 7;
};

struct MoeLayer {
    FrozenLinear frozen;
    std::vector<LoraAdapter> adapters;
    Matrix router; // d_in x E
    std::size_t top_k = 2;
    double tau = 1.0;

    std::size_t num_experts() const noexcept { return adapters.size(); }
    std::size_t d_in() const noexcept { return frozen.d_in(); }
    std::size_t d_out() const noexcept { return frozen.d_out(); }

    /// Router and every expert's trainable LoRA factors, all in the adapter group.
    std::vector<ParamRef> trainable_parameters();
    std::vector<NamedTensor> tensors() const;
    void load_tensors(const std::vector<NamedTensor>& tensors);
    void validate() const;
};

MoeLayer make_moe_layer(const MoeLayerSpec& spec, Rng& rng);

struct MoeForward {
    Matrix z;
    std::vector<Matrix> deltas; // per expert, N x d_out
    Matrix h;
    std::vector<RoutingDecision> decisions; // one per token row
};

/// Token-level routing softmax(x·router / τ), top-k with renormalization,
/// h = z + Σ_{i∈S} w̃_i·δ_i(x). k is clamped to E.
MoeForward moe_forward(const MoeLayer& layer, const Matrix& x);

/// d_in·E + Σ_e |φ_e|
std::size_t count_moe_params(const MoeLayer& layer);

} // namespace lime
