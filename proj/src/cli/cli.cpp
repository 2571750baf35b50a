// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/cli.hpp"

#include <exception>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "lime/errors.hpp"

namespace lime::cli {

namespace {

constexpr const char* kDescription =
    "LiME: a shared PEFT adapter with routed expert modulators.\n"
    "Run configs are JSON (schema_version 1); see `lime train --help`.";

constexpr const char* kTrainFooter =
    "Config keys (unknown keys are rejected, missing keys take defaults):\n"
    "  schema_version (required, 1), seed,\n"
    "  model: kind lime|moe, d_in, d_out, experts, base_seed,\n"
    "         adapter {kind lora|diag, rank, alpha, freeze_a, a_std},\n"
    "         shared_modulator, init {scheme, sigma},\n"
    "         routing {tau, gamma_r, granularity token|ngram|sequence, ngram,\n"
    "                  slice leading|central|trailing|random, slice_seed,\n"
    "                  jitter_sigma, strategy {kind, ...}},\n"
    "         moe {top_k, tau, router_std}\n"
    "  train: lr_peft, lr_expert, epochs, max_steps, batch_size, warmup_ratio,\n"
    "         weight_decay, grad_clip, alpha, beta, log_every, loss mse|cross_entropy\n"
    "  data:  path (CSV task_id,x_*,y_*; empty = generator), kind regression|classification,\n"
    "         generator {mixture modulated|imbalanced, n_tasks, samples_per_task,\n"
    "                    proportions, rank, noise, separation, input_std}\n"
    "  output: dir, trace\n"
    "Outputs in the run directory: config.json, metrics.jsonl (one JSON record per\n"
    "logged step: step, epoch, task, importance, kl_uniform, total, alpha, beta,\n"
    "routing_entropy, lr_factor, grad_norm, avg_selected), checkpoint.bin,\n"
    "routing_trace.csv, eval.json.\n"
    "Relative output dirs are placed under $LIME_OUTPUT_ROOT when it is set.\n"
    "Exit codes: 0 ok, 1 usage/config error, 2 runtime error or divergence,\n"
    "3 verification failure.";

template <typename T>
void add_seed(CLI::App* app, T& target) {
    app->add_option("--seed", target, "Random seed");
}

int dispatch(const std::function<int()>& fn, std::ostream& err) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const ShapeError& e) {
        err << "shape error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::invalid_argument& e) {
        err << "invalid argument: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntime;
    }
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{kDescription, "lime"};
    app.require_subcommand(1);

    TrainOptions train;
    auto* train_cmd = app.add_subcommand("train", "Train a LiME or MoE-LoRA model from a JSON config");
    train_cmd->add_option("--config", train.config, "Run config JSON")->required();
    train_cmd->add_option("--output-dir", train.output_dir, "Overrides output.dir");
    add_seed(train_cmd, train.seed);
    train_cmd->footer(kTrainFooter);

    EvalOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "Per-task metrics of a checkpoint; prints JSON");
    eval_cmd->add_option("--config", eval.config, "Run config JSON")->required();
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint.bin from train");
    eval_cmd->add_option("--data", eval.data, "Dataset CSV (defaults to the config's data)");
    add_seed(eval_cmd, eval.seed);

    CheckGradOptions grad;
    auto* grad_cmd = app.add_subcommand(
        "check-grad", "Finite-difference gradient check; prints CSV param_group,checks,max_rel_error,pass");
    grad_cmd->add_option("--config", grad.config, "Also check the configured model on its first 8 samples; all-zero tensors are redrawn first");
    grad_cmd->add_option("--configs", grad.configs, "Number of random configurations")->capture_default_str();
    grad_cmd->add_option("--inject-fault", grad.fault,
                         "none|skip_renorm_jacobian|skip_inf_norm_max|drop_load_balance")
        ->capture_default_str();
    grad_cmd->add_flag("--detail", grad.detail, "Print per-configuration rows prefixed by '#'");
    add_seed(grad_cmd, grad.seed);

    CompareSelectionOptions sel;
    auto* sel_cmd = app.add_subcommand(
        "compare-selection",
        "Expert-selection statistics for all strategies; CSV "
        "strategy,params,avg_experts,min_experts,max_experts,single_rate,selected_mass");
    sel_cmd->add_option("--experts", sel.experts, "Number of experts")->capture_default_str();
    sel_cmd->add_option("--samples", sel.samples, "Routing distributions to draw")->capture_default_str();
    sel_cmd->add_option("--out", sel.out, "Write CSV here instead of stdout");
    add_seed(sel_cmd, sel.seed);

    ParamCountOptions pc;
    auto* pc_cmd = app.add_subcommand("param-count", "Trainable parameters: closed form vs enumeration; JSON");
    pc_cmd->add_option("--d-in", pc.d_in)->capture_default_str();
    pc_cmd->add_option("--d-out", pc.d_out)->capture_default_str();
    pc_cmd->add_option("--rank", pc.rank)->capture_default_str();
    pc_cmd->add_option("--experts", pc.experts)->capture_default_str();
    pc_cmd->add_option("--layers", pc.layers)->capture_default_str();
    pc_cmd->add_option("--adapter", pc.adapter, "lora|diag")->capture_default_str();
    pc_cmd->add_flag("--freeze-a", pc.freeze_a, "LoRA A is frozen");
    pc_cmd->add_flag("--no-shared", pc.no_shared, "Disable the shared modulator");
    add_seed(pc_cmd, pc.seed);

    MiCheckOptions mi;
    auto* mi_cmd = app.add_subcommand(
        "mi-check", "Mutual information along random refinement chains of routers; JSON");
    mi_cmd->add_option("--constructions", mi.constructions)->capture_default_str();
    mi_cmd->add_option("--max-points", mi.max_points)->capture_default_str();
    mi_cmd->add_option("--max-labels", mi.max_labels)->capture_default_str();
    add_seed(mi_cmd, mi.seed);

    CkaOptions cka;
    auto* cka_cmd = app.add_subcommand(
        "cka", "Linear CKA between two numeric CSV matrices, or LiME vs MoE outputs of a config");
    cka_cmd->add_option("--x", cka.x, "CSV matrix, rows are samples");
    cka_cmd->add_option("--y", cka.y, "CSV matrix with the same row count");
    cka_cmd->add_option("--config", cka.config, "Run config used when --x/--y are absent");
    cka_cmd->add_option("--lime-checkpoint", cka.lime_checkpoint);
    cka_cmd->add_option("--moe-checkpoint", cka.moe_checkpoint);
    add_seed(cka_cmd, cka.seed);

    RouteInspectOptions ri;
    auto* ri_cmd = app.add_subcommand(
        "route-inspect", "Routing trace CSV of a model over a dataset, or a per-expert utilization heatmap");
    ri_cmd->add_option("--config", ri.config, "Run config JSON")->required();
    ri_cmd->add_option("--checkpoint", ri.checkpoint);
    ri_cmd->add_option("--data", ri.data, "Dataset CSV");
    ri_cmd->add_option("--limit", ri.limit, "Only the first N samples (0 = all)");
    ri_cmd->add_flag("--heatmap", ri.heatmap, "Print layer x expert selection rates");
    add_seed(ri_cmd, ri.seed);

    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) {
        args.emplace_back(argv[i]);
    }
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        std::ostringstream o;
        std::ostringstream ebuf;
        app.exit(e, o, ebuf);
        out << o.str();
        err << ebuf.str();
        return e.get_exit_code() == 0 ? kOk : kUsage;
    }

    if (train_cmd->parsed()) {
        return dispatch([&] { return cmd_train(train, out, err); }, err);
    }
    if (eval_cmd->parsed()) {
        return dispatch([&] { return cmd_eval(eval, out, err); }, err);
    }
    if (grad_cmd->parsed()) {
        return dispatch([&] { return cmd_check_grad(grad, out, err); }, err);
    }
    if (sel_cmd->parsed()) {
        return dispatch([&] { return cmd_compare_selection(sel, out, err); }, err);
    }
    if (pc_cmd->parsed()) {
        return dispatch([&] { return cmd_param_count(pc, out, err); }, err);
    }
    if (mi_cmd->parsed()) {
        return dispatch([&] { return cmd_mi_check(mi, out, err); }, err);
    }
    if (cka_cmd->parsed()) {
        return dispatch([&] { return cmd_cka(cka, out, err); }, err);
    }
    return dispatch([&] { return cmd_route_inspect(ri, out, err); }, err);
}

} // namespace lime::cli
