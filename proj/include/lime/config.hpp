// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration: a single JSON document with a versioned schema.
//
//   {
//     "schema_version": 1,
//     "seed": 42,
//     "model": {
//       "kind": "lime" | "moe",
//       "d_in": 16, "d_out": 16, "experts": 4, "base_seed": 7,
//       "adapter": {"kind": "lora" | "diag", "rank": 2, "alpha": 4, "freeze_a": false,
//                   "a_std": 0.02},
//       "shared_modulator": true,
//       "init": {"scheme": "uniform_near_one", "sigma": 0.1},
//       "routing": {"tau": 0.5, "gamma_r": 0.7, "granularity": "token" | "ngram" | "sequence",
//                   "ngram": 3, "slice": "leading" | "central" | "trailing" | "random",
//                   "slice_seed": 0, "jitter_sigma": 0.1,
//                   "strategy": {"kind": "relative_threshold", "theta": 0.7}},
//       "moe": {"top_k": 2, "tau": 1.0, "router_std": 0.02}
//     },
//     "train": {"lr_peft": 2e-4, "lr_expert": 1e-3, "epochs": 3, "max_steps": 0,
//               "batch_size": 32, "warmup_ratio": 0.03, "weight_decay": 0.01,
//               "grad_clip": 1.0, "alpha": 0.1, "beta": 0.01, "log_every": 10,
//               "loss": "mse" | "cross_entropy"},
//     "data": {"path": "", "kind": "regression" | "classification",
//              "generator": {"mixture": "modulated" | "imbalanced", "n_tasks": 3,
//                            "samples_per_task": 200, "proportions": [], "rank": 2,
//                            "noise": 0.0, "separation": 8.0, "input_std": 1.0}},
//     "output": {"dir": "runs/default", "trace": true}
//   }
//
// Strategy objects carry the parameters of their kind: relative_threshold
// {theta}, fixed_topk {k}, absolute_threshold {eta}, entropy_based and
// gini_based {k_min, k_max}, cumulative_prob {rho}, topk_gap {k, delta}.
// Missing keys take the defaults shown; unknown keys are rejected. An empty
// data.path means the generator is used, with d_in, d_out and base_seed taken
// from the model section.

#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "lime/baseline_moe.hpp"
#include "lime/lime_layer.hpp"
#include "lime/model.hpp"
#include "lime/tasks.hpp"
#include "lime/train.hpp"

namespace lime {

inline constexpr int kSchemaVersion = 1;

enum class ModelKind { lime, moe };

struct DataConfig {
    std::string path;
    TaskKind kind = TaskKind::regression;
    bool imbalanced = false;
    MixtureSpec generator;
};

struct OutputConfig {
    std::string dir = "runs/default";
    bool trace = true;
};

struct RunConfig {
    int schema_version = kSchemaVersion;
    std::uint64_t seed = 42;
    ModelKind model = ModelKind::lime;
    LimeLayerSpec lime;
    MoeLayerSpec moe; // dims, lora and base_seed mirror `lime`
    TrainConfig train;
    DataConfig data;
    OutputConfig output;

    void validate() const;
};

RunConfig default_run_config();
/// Throws ConfigError on unknown keys, wrong types or out-of-range values.
RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

SelectionStrategy parse_strategy(const nlohmann::json& j);
nlohmann::json to_json(const SelectionStrategy& s);

/// Model initialized from a stream derived from cfg.seed.
Model build_model(const RunConfig& cfg);
/// Reads data.path or generates the configured mixture from cfg.seed.
MixtureDataset build_dataset(const RunConfig& cfg);
/// The generator's mixture spec with model dims filled in.
MixtureSpec resolved_mixture_spec(const RunConfig& cfg);

} // namespace lime
