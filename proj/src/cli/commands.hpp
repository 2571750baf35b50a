// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace lime::cli {

struct TrainOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string output_dir;
};

struct EvalOptions {
    std::string config;
    std::string checkpoint;
    std::string data;
    std::optional<std::uint64_t> seed;
};

struct CheckGradOptions {
    std::string config;
    std::size_t configs = 24;
    std::uint64_t seed = 42;
    std::string fault = "none";
    bool detail = false;
};

struct CompareSelectionOptions {
    std::size_t experts = 4;
    std::size_t samples = 10000;
    std::uint64_t seed = 42;
    std::string out;
};

struct ParamCountOptions {
    std::size_t d_in = 64;
    std::size_t d_out = 64;
    std::size_t rank = 2;
    std::size_t experts = 4;
    std::size_t layers = 1;
    std::string adapter = "lora";
    bool freeze_a = false;
    bool no_shared = false;
    std::uint64_t seed = 42;
};

struct MiCheckOptions {
    std::size_t constructions = 100;
    std::size_t max_points = 16;
    std::size_t max_labels = 4;
    std::uint64_t seed = 42;
};

struct CkaOptions {
    std::string x;
    std::string y;
    std::string config;
    std::string lime_checkpoint;
    std::string moe_checkpoint;
    std::optional<std::uint64_t> seed;
};

struct RouteInspectOptions {
    std::string config;
    std::string checkpoint;
    std::string data;
    std::size_t limit = 0;
    bool heatmap = false;
    std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err);
int cmd_check_grad(const CheckGradOptions& o, std::ostream& out, std::ostream& err);
int cmd_compare_selection(const CompareSelectionOptions& o, std::ostream& out, std::ostream& err);
int cmd_param_count(const ParamCountOptions& o, std::ostream& out, std::ostream& err);
int cmd_mi_check(const MiCheckOptions& o, std::ostream& out, std::ostream& err);
int cmd_cka(const CkaOptions& o, std::ostream& out, std::ostream& err);
int cmd_route_inspect(const RouteInspectOptions& o, std::ostream& out, std::ostream& err);

/// `dir` joined under $LIME_OUTPUT_ROOT when that is set and `dir` is relative.
std::string resolve_output_dir(const std::string& dir);

} // namespace lime::cli
