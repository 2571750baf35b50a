// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <regex>
#include <sstream>

#include "lime/cka.hpp"
#include "lime/cli.hpp"
#include "lime/config.hpp"
#include "lime/errors.hpp"
#include "lime/gradcheck.hpp"
#include "lime/information.hpp"
#include "lime/json_writer.hpp"
#include "lime/selection_analysis.hpp"

namespace lime::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string resolve_output_dir(const std::string& dir) {
    const char* root = std::getenv("LIME_OUTPUT_ROOT");
    if (root != nullptr && *root != '\0' && fs::path(dir).is_relative()) {
        return (fs::path(root) / dir).string();
    }
    return dir;
}

namespace {

RunConfig load_with_seed(const std::string& path, const std::optional<std::uint64_t>& seed) {
    if (path.empty()) {
        throw ConfigError("--config is required");
    }
    RunConfig cfg = load_run_config(path);
    if (seed) {
        cfg.seed = *seed;
        cfg.train.seed = *seed;
    }
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot write '" + path.string() + "'");
    }
    f << text;
}

json metrics_json(const TaskMetrics& m, TaskKind kind) {
    json j = {{"n", m.n}};
    j[kind == TaskKind::regression ? "mse" : "cross_entropy"] = m.loss;
    if (m.accuracy) {
        j["accuracy"] = *m.accuracy;
    }
    return j;
}

json eval_json(const EvalReport& r, TaskKind kind) {
    json per_task = json::array();
    for (const auto& m : r.per_task) {
        json t = metrics_json(m, kind);
        t["task"] = m.task;
        per_task.push_back(t);
    }
    return {{"kind", task_kind_name(kind)}, {"overall", metrics_json(r.overall, kind)}, {"per_task", per_task}};
}

MixtureDataset dataset_for(const RunConfig& cfg, const std::string& override_path) {
    if (override_path.empty()) {
        return build_dataset(cfg);
    }
    RunConfig c = cfg;
    c.data.path = override_path;
    return build_dataset(c);
}

void write_trace(std::ostream& out, const ModelOutput& o, std::size_t experts) {
    write_trace_header(out, experts);
    write_trace_rows(out, 0, o.decisions);
}

std::string param_group(const std::string& name) {
    static const std::regex expert_prefix("^expert[0-9]+\\.");
    if (std::regex_search(name, expert_prefix)) {
        return "moe.expert." + std::regex_replace(name, expert_prefix, "");
    }
    if (name == "router") {
        return "moe.router";
    }
    return name;
}

Matrix read_numeric_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read '" + path + "'");
    }
    std::vector<double> values;
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                numeric = numeric && used == cell.size();
            } catch (const std::logic_error&) {
                numeric = false;
            }
        }
        if (!numeric) {
            if (first) {
                first = false;
                continue; // header
            }
            throw FormatError("'" + path + "' has a non-numeric cell on data row " + std::to_string(rows + 1));
        }
        first = false;
        if (cols == 0) {
            cols = row.size();
        } else if (row.size() != cols) {
            throw FormatError("'" + path + "' has ragged rows");
        }
        values.insert(values.end(), row.begin(), row.end());
        ++rows;
    }
    if (rows == 0) {
        throw FormatError("'" + path + "' has no data rows");
    }
    return Matrix(rows, cols, std::move(values));
}

} // namespace

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_with_seed(o.config, o.seed);
    if (!o.output_dir.empty()) {
        cfg.output.dir = o.output_dir;
    }
    const fs::path dir = resolve_output_dir(cfg.output.dir);
    fs::create_directories(dir);
    write_text(dir / "config.json", dump_json(to_json(cfg), 2) + "\n");

    const MixtureDataset data = build_dataset(cfg);
    Model model = build_model(cfg);
    std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
    if (!metrics) {
        throw std::runtime_error("cannot write metrics in '" + dir.string() + "'");
    }
    TrainResult result;
    try {
        result = train_loop(model, data, cfg.train, &metrics);
    } catch (const DivergenceError& e) {
        metrics.flush();
        err << "error: " << e.what() << '\n';
        return kRuntime;
    }
    metrics.close();
    save_checkpoint((dir / "checkpoint.bin").string(), model_tensors(model));

    const ModelOutput inference = model_forward(model, SequenceBatch::tokens(data.x), nullptr, false);
    if (cfg.output.trace) {
        std::ofstream trace(dir / "routing_trace.csv", std::ios::binary);
        write_trace(trace, inference, model_experts(model));
    }
    const EvalReport report = score_predictions(inference.h, data);
    const json ev = eval_json(report, data.kind);
    write_text(dir / "eval.json", dump_json(ev, 2) + "\n");

    json summary = {
        {"output_dir", dir.string()},
        {"steps", result.steps},
        {"final", result.history.empty() ? json() : to_json(result.history.back())},
        {"eval", ev},
        {"trainable_params", model_param_count(model)},
    };
    out << dump_json(summary, 2) << '\n';
    return kOk;
}

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream&) {
    const RunConfig cfg = load_with_seed(o.config, o.seed);
    Model model = build_model(cfg);
    if (!o.checkpoint.empty()) {
        model_load(model, load_checkpoint(o.checkpoint));
    }
    const MixtureDataset data = dataset_for(cfg, o.data);
    out << dump_json(eval_json(evaluate(model, data), data.kind), 2) << '\n';
    return kOk;
}

int cmd_check_grad(const CheckGradOptions& o, std::ostream& out, std::ostream& err) {
    GradcheckOptions opts;
    opts.fault = parse_backward_fault(o.fault);

    struct GroupStat {
        std::size_t checks = 0;
        double max_rel_error = 0.0;
    };
    std::map<std::string, GroupStat> groups;
    std::vector<std::string> failures;
    bool unstable = false;
    const auto absorb = [&](const std::string& label, const GradcheckReport& r) {
        unstable = unstable || !r.stable;
        for (const auto& p : r.params) {
            auto& g = groups[param_group(p.name)];
            g.checks += p.entries;
            g.max_rel_error = std::max(g.max_rel_error, p.max_rel_error);
            if (o.detail) {
                out << "# " << label << ',' << p.name << ',' << format_real(p.max_rel_error) << '\n';
            }
            if (!(p.max_rel_error < opts.tolerance)) {
                failures.push_back(label + ": " + p.name + " rel_err=" + format_real(p.max_rel_error) +
                                   " analytic=" + format_real(p.worst_analytic) +
                                   " numeric=" + format_real(p.worst_numeric));
            }
        }
        if (!r.stable) {
            failures.push_back(label + ": selection changed under perturbation");
        }
    };

    if (!o.config.empty()) {
        const RunConfig cfg = load_with_seed(o.config, o.seed);
        const MixtureDataset data = build_dataset(cfg);
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < std::min<std::size_t>(8, data.size()); ++i) {
            rows.push_back(i);
        }
        const MixtureDataset batch = data.subset(rows);
        const LossSpec spec{cfg.train.loss, cfg.train.alpha, cfg.train.beta};
        Rng rng(cfg.seed);
        Rng perturb = rng.split();
        // A zero adapter output sits on the kink of the slice normalization,
        // so all-zero tensors (LoRA B at init) are redrawn before checking,
        // and points whose selection flips under the FD step are redrawn too.
        GradcheckReport report;
        for (std::size_t attempt = 0; attempt < 20; ++attempt) {
            Model model = build_model(cfg);
            for (auto& p : model_parameters(model)) {
                const bool all_zero = std::all_of(p.value->values().begin(), p.value->values().end(),
                                                  [](double v) { return v == 0.0; });
                if (all_zero || attempt > 0) {
                    *p.value = add(*p.value, random_normal(p.value->rows(), p.value->cols(), 0.1, perturb));
                }
            }
            report = check_gradients(model, SequenceBatch::tokens(batch.x), batch.y, spec, rng, opts);
            if (report.stable) {
                break;
            }
        }
        absorb("configured", report);
    }
    if (o.configs > 0) {
        const SuiteResult suite = run_gradcheck_suite(o.configs, o.seed, opts);
        for (std::size_t i = 0; i < suite.entries.size(); ++i) {
            absorb("case" + std::to_string(i) + " [" + suite.entries[i].label + "]", suite.entries[i].report);
        }
    }
    out << "param_group,checks,max_rel_error,pass\n";
    for (const auto& [name, g] : groups) {
        out << name << ',' << g.checks << ',' << format_real(g.max_rel_error) << ','
            << (g.max_rel_error < opts.tolerance ? "true" : "false") << '\n';
    }
    if (!failures.empty()) {
        err << "gradient check failed (tolerance " << format_real(opts.tolerance) << "):\n";
        for (const auto& f : failures) {
            err << "  " << f << '\n';
        }
        return kVerification;
    }
    return unstable ? kVerification : kOk;
}

int cmd_compare_selection(const CompareSelectionOptions& o, std::ostream& out, std::ostream&) {
    Rng rng(o.seed);
    const auto corpus = make_routing_corpus(o.samples, o.experts, rng);
    const auto rows = compare_strategies(corpus, default_strategy_grid(o.experts));
    if (o.out.empty()) {
        write_strategy_csv(out, rows);
    } else {
        std::ofstream f(o.out, std::ios::binary);
        if (!f) {
            throw std::runtime_error("cannot write '" + o.out + "'");
        }
        write_strategy_csv(f, rows);
    }
    return kOk;
}

int cmd_param_count(const ParamCountOptions& o, std::ostream& out, std::ostream& err) {
    if (o.layers < 1) {
        throw ConfigError("--layers must be >= 1");
    }
    Rng rng(o.seed);
    LimeLayerSpec ls;
    ls.d_in = o.d_in;
    ls.d_out = o.d_out;
    ls.experts = o.experts;
    ls.adapter = o.adapter == "diag" ? AdapterKind::diag : AdapterKind::lora;
    if (o.adapter != "lora" && o.adapter != "diag") {
        throw ConfigError("--adapter must be lora or diag");
    }
    ls.lora.rank = o.rank;
    ls.lora.freeze_a = o.freeze_a;
    ls.shared_modulator = !o.no_shared;
    MoeLayerSpec ms;
    ms.d_in = o.d_in;
    ms.d_out = o.d_out;
    ms.experts = o.experts;
    ms.lora.rank = o.rank;
    ms.lora.freeze_a = o.freeze_a;

    std::size_t lime_enum = 0;
    std::size_t lime_fn = 0;
    std::size_t moe_enum = 0;
    std::size_t moe_fn = 0;
    for (std::size_t l = 0; l < o.layers; ++l) {
        LimeLayer layer = make_lime_layer(ls, rng);
        lime_enum += enumerate_trainable(layer.trainable_parameters());
        lime_fn += count_lime_params(layer);
        MoeLayer moe = make_moe_layer(ms, rng);
        moe_enum += enumerate_trainable(moe.trainable_parameters());
        moe_fn += count_moe_params(moe);
    }
    const std::size_t phi = ls.adapter == AdapterKind::diag
                                ? o.d_out
                                : (o.freeze_a ? o.rank * o.d_out : o.rank * (o.d_in + o.d_out));
    const std::size_t lime_formula =
        o.layers * (phi + o.experts * o.d_out + (ls.shared_modulator ? o.d_out + 1 : 0));
    const std::size_t lora_phi = o.freeze_a ? o.rank * o.d_out : o.rank * (o.d_in + o.d_out);
    const std::size_t moe_formula = o.layers * (o.d_in * o.experts + o.experts * lora_phi);
    const bool ok = lime_enum == lime_formula && lime_fn == lime_formula && moe_enum == moe_formula &&
                    moe_fn == moe_formula;
    json j = {
        {"d_in", o.d_in},
        {"d_out", o.d_out},
        {"rank", o.rank},
        {"experts", o.experts},
        {"layers", o.layers},
        {"adapter", o.adapter},
        {"freeze_a", o.freeze_a},
        {"shared_modulator", ls.shared_modulator},
        {"lime", {{"formula", lime_formula}, {"counted", lime_fn}, {"enumerated", lime_enum}}},
        {"moe", {{"formula", moe_formula}, {"counted", moe_fn}, {"enumerated", moe_enum}}},
        {"moe_over_lime", static_cast<double>(moe_formula) / static_cast<double>(lime_formula)},
        {"match", ok},
    };
    out << dump_json(j, 2) << '\n';
    if (!ok) {
        err << "parameter count mismatch between formula and enumeration\n";
        return kVerification;
    }
    return kOk;
}

int cmd_mi_check(const MiCheckOptions& o, std::ostream& out, std::ostream& err) {
    Rng rng(o.seed);
    RefinementToySize size;
    size.max_points = o.max_points;
    size.max_labels = o.max_labels;
    std::size_t violations = 0;
    std::size_t bad_constructions = 0;
    json chains = json::array();
    for (std::size_t c = 0; c < o.constructions; ++c) {
        const RefinementToy toy = make_refinement_toy(rng, size);
        const RefinementReport r = check_refinement_chain(toy);
        violations += r.violations;
        bad_constructions += r.monotone ? 0 : 1;
        chains.push_back({{"points", toy.x.size()}, {"labels", toy.n_labels}, {"mi", r.mi}, {"monotone", r.monotone}});
    }
    json j = {
        {"constructions", o.constructions},
        {"violations", violations},
        {"non_monotone_constructions", bad_constructions},
        {"chains", chains},
    };
    out << dump_json(j, 2) << '\n';
    if (violations > 0) {
        err << violations << " decreasing steps in the mutual-information chain\n";
        return kVerification;
    }
    return kOk;
}

int cmd_cka(const CkaOptions& o, std::ostream& out, std::ostream&) {
    Matrix a;
    Matrix b;
    std::string source;
    if (!o.x.empty() || !o.y.empty()) {
        if (o.x.empty() || o.y.empty()) {
            throw ConfigError("--x and --y must be given together");
        }
        a = read_numeric_csv(o.x);
        b = read_numeric_csv(o.y);
        source = "files";
    } else {
        RunConfig cfg = load_with_seed(o.config, o.seed);
        const MixtureDataset data = build_dataset(cfg);
        cfg.model = ModelKind::lime;
        Model lime_model = build_model(cfg);
        if (!o.lime_checkpoint.empty()) {
            model_load(lime_model, load_checkpoint(o.lime_checkpoint));
        }
        cfg.model = ModelKind::moe;
        cfg.lime.adapter = AdapterKind::lora;
        Model moe_model = build_model(cfg);
        if (!o.moe_checkpoint.empty()) {
            model_load(moe_model, load_checkpoint(o.moe_checkpoint));
        }
        const SequenceBatch batch = SequenceBatch::tokens(data.x);
        a = model_forward(lime_model, batch, nullptr, false).h;
        b = model_forward(moe_model, batch, nullptr, false).h;
        source = "lime_vs_moe";
    }
    const CkaReport r = linear_cka(a, b);
    out << dump_json({{"source", source},
                      {"cka", r.score},
                      {"n_samples", r.n_samples},
                      {"dim_x", r.dim_x},
                      {"dim_y", r.dim_y}},
                     2)
        << '\n';
    return kOk;
}

int cmd_route_inspect(const RouteInspectOptions& o, std::ostream& out, std::ostream&) {
    const RunConfig cfg = load_with_seed(o.config, o.seed);
    Model model = build_model(cfg);
    if (!o.checkpoint.empty()) {
        model_load(model, load_checkpoint(o.checkpoint));
    }
    MixtureDataset data = dataset_for(cfg, o.data);
    if (o.limit > 0 && o.limit < data.size()) {
        std::vector<std::size_t> rows(o.limit);
        for (std::size_t i = 0; i < o.limit; ++i) {
            rows[i] = i;
        }
        data = data.subset(rows);
    }
    const ModelOutput res = model_forward(model, SequenceBatch::tokens(data.x), nullptr, false);
    const std::size_t experts = model_experts(model);
    if (!o.heatmap) {
        write_trace(out, res, experts);
        return kOk;
    }
    std::vector<TraceRecord> records;
    for (const auto& d : res.decisions) {
        records.push_back({0, 0, d});
    }
    const Matrix heat = utilization_heatmap(records, 1, experts);
    out << "layer";
    for (std::size_t i = 0; i < experts; ++i) {
        out << ",expert_" << i;
    }
    out << '\n';
    for (std::size_t l = 0; l < heat.rows(); ++l) {
        out << l;
        for (double v : heat.row(l)) {
            out << ',' << format_real(v);
        }
        out << '\n';
    }
    return kOk;
}

} // namespace lime::cli
