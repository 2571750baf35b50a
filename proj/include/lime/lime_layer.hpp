// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// The LiME layer: one shared PEFT adapter whose output is rescaled by routed
// expert modulators and an optional gated shared modulator,
//
//   h = z + ẑ ⊙ P(x) + γ · (ẑ ⊙ p_s),   P(x) = Σ_{i∈S} w̃_i · p_i,
//
// with routing weights computed from slices of z and ẑ (no router weights).

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lime/checkpoint.hpp"
#include "lime/peft.hpp"
#include "lime/routing.hpp"
#include "lime/tensor.hpp"

namespace lime {

/// Token rows of `batch` sequences of `seq_len` tokens each; row b*seq_len+t
/// holds token t of sequence b.
struct SequenceBatch {
    Matrix x;
    std::size_t batch = 0;
    std::size_t seq_len = 1;

    /// Each row becomes its own length-1 sequence.
    static SequenceBatch tokens(Matrix x);
    void validate() const;
};

enum class AdapterKind { lora, diag };

enum class InitScheme { uniform_near_one, gaussian_near_one, all_ones, gaussian_zero };

struct ModulatorInit {
    InitScheme scheme = InitScheme::uniform_near_one;
    double sigma = 0.1;
};

InitScheme parse_init_scheme(const std::string& name);
std::string init_scheme_name(InitScheme scheme);

struct LimeLayerSpec {
    std::size_t d_in = 16;
    std::size_t d_out = 16;
    std::size_t experts = 4;
    AdapterKind adapter = AdapterKind::lora;
    LoraSpec lora;
    bool shared_modulator = true;
    RoutingConfig routing;
    ModulatorInit init;
    std::uint64_t base_seed = 7;
};

struct LimeLayer {
    FrozenLinear frozen;
    Adapter adapter;
    Matrix experts;             // E x d_out, row i is p_i
    Matrix shared;              // 1 x d_out (p_s)
    Matrix gamma{1, 1};         // 1 x 1
    bool shared_enabled = true;
    RoutingConfig routing;
    std::size_t layer_id = 0;

    std::size_t num_experts() const noexcept { return experts.rows(); }
    std::size_t d_in() const noexcept { return frozen.d_in(); }
    std::size_t d_out() const noexcept { return frozen.d_out(); }
    std::vector<std::size_t> slice_indices() const;

    std::vector<ParamRef> trainable_parameters();
    /// All tensors including frozen ones, in checkpoint order.
    std::vector<NamedTensor> tensors() const;
    /// Restores every tensor from a checkpoint written by `tensors()`.
    void load_tensors(const std::vector<NamedTensor>& tensors);

    /// Checks E >= 1, E <= d_out and all shapes.
    void validate() const;
};

LimeLayer make_lime_layer(const LimeLayerSpec& spec, Rng& rng);

/// Draws expert vectors per `init`, p_s ~ N(0, 0.1²) and sets γ = 0.
void init_modulators(LimeLayer& layer, const ModulatorInit& init, Rng& rng);

/// Per-unit jitter multipliers; an empty entry means no jitter for that unit.
using JitterTape = std::vector<Vector>;

struct LimeForward {
    Matrix z;
    Matrix zhat;
    Matrix h;
    std::vector<RoutingDecision> decisions;
    JitterTape jitter;
    Matrix modulators; // units x d_out, row u is P for unit u
    std::vector<std::size_t> slice;
};

/// Runs the layer. Jitter is drawn from `rng` when `training` is set and the
/// routing config has jitter_sigma > 0, unless `replay` supplies recorded
/// multipliers (then `rng` is not touched).
LimeForward forward(const LimeLayer& layer, const SequenceBatch& batch, Rng* rng, bool training,
                    const JitterTape* replay = nullptr);

/// |φ| + E·d_out + (d_out + 1 when the shared modulator is enabled).
std::size_t count_lime_params(const LimeLayer& layer);

/// Mean pre-selection routing weights over all routing units.
Vector mean_routing_weights(const std::vector<RoutingDecision>& decisions, std::size_t experts);

/// Routing trace CSV. Columns, in order:
///   layer,sequence,unit,span_begin,span_end,representative,
///   w_0..w_{E-1}, sel_0..sel_{E-1} (0/1), rw_0..rw_{E-1}
/// Spans are row indices into the flattened batch, end exclusive.
void write_trace_header(std::ostream& out, std::size_t experts);
void write_trace_rows(std::ostream& out, std::size_t layer_id,
                      const std::vector<RoutingDecision>& decisions);

struct TraceRecord {
    std::size_t layer = 0;
    std::size_t unit = 0;
    RoutingDecision decision;
};

std::vector<TraceRecord> read_trace(std::istream& in);

} // namespace lime
