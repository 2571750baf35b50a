// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "lime/errors.hpp"

namespace lime {

namespace {

using nlohmann::json;

// Literals built in code are signed; parsed text yields unsigned.
bool is_nonnegative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

/// Reads keys from one JSON object and rejects any key nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError(path_ + ": expected an object");
        }
    }

    const json* child(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    void get(const std::string& key, double& out) {
        if (const json* v = child(key)) {
            if (!v->is_number()) {
                throw ConfigError(where(key) + ": expected a number");
            }
            out = v->get<double>();
        }
    }

    void get(const std::string& key, std::size_t& out) {
        if (const json* v = child(key)) {
            if (!is_nonnegative_integer(*v)) {
                throw ConfigError(where(key) + ": expected a nonnegative integer");
            }
            out = v->get<std::size_t>();
        }
    }

    void get(const std::string& key, bool& out) {
        if (const json* v = child(key)) {
            if (!v->is_boolean()) {
                throw ConfigError(where(key) + ": expected true or false");
            }
            out = v->get<bool>();
        }
    }

    void get(const std::string& key, std::string& out) {
        if (const json* v = child(key)) {
            if (!v->is_string()) {
                throw ConfigError(where(key) + ": expected a string");
            }
            out = v->get<std::string>();
        }
    }

    void get(const std::string& key, std::vector<double>& out) {
        if (const json* v = child(key)) {
            if (!v->is_array()) {
                throw ConfigError(where(key) + ": expected an array of numbers");
            }
            out.clear();
            for (const auto& item : *v) {
                if (!item.is_number()) {
                    throw ConfigError(where(key) + ": expected an array of numbers");
                }
                out.push_back(item.get<double>());
            }
        }
    }

    void get_u64(const std::string& key, std::uint64_t& out) {
        if (const json* v = child(key)) {
            if (!is_nonnegative_integer(*v)) {
                throw ConfigError(where(key) + ": expected a nonnegative integer");
            }
            out = v->get<std::uint64_t>();
        }
    }

    std::string where(const std::string& key) const { return path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
            }
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

Granularity parse_granularity(const std::string& s) {
    if (s == "token") return Granularity::token;
    if (s == "ngram") return Granularity::ngram;
    if (s == "sequence") return Granularity::sequence;
    throw ConfigError("unknown granularity '" + s + "'");
}

std::string granularity_name(Granularity g) {
    switch (g) {
    case Granularity::token: return "token";
    case Granularity::ngram: return "ngram";
    case Granularity::sequence: return "sequence";
    }
    return "token";
}

SliceKind parse_slice(const std::string& s) {
    if (s == "leading") return SliceKind::leading;
    if (s == "central") return SliceKind::central;
    if (s == "trailing") return SliceKind::trailing;
    if (s == "random") return SliceKind::random;
    throw ConfigError("unknown slice '" + s + "'");
}

std::string slice_name(SliceKind s) {
    switch (s) {
    case SliceKind::leading: return "leading";
    case SliceKind::central: return "central";
    case SliceKind::trailing: return "trailing";
    case SliceKind::random: return "random";
    }
    return "leading";
}

SelectionStrategy parse_strategy_at(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    std::string kind;
    r.get("kind", kind);
    SelectionStrategy s;
    if (kind == "relative_threshold") {
        s = SelectionStrategy::relative_threshold(0.7);
        r.get("theta", s.value);
    } else if (kind == "fixed_topk") {
        s = SelectionStrategy::fixed_topk(2);
        r.get("k", s.k);
    } else if (kind == "absolute_threshold") {
        s = SelectionStrategy::absolute_threshold(0.1);
        r.get("eta", s.value);
    } else if (kind == "entropy_based" || kind == "gini_based") {
        s = kind == "entropy_based" ? SelectionStrategy::entropy_based(1, 3)
                                    : SelectionStrategy::gini_based(1, 3);
        r.get("k_min", s.k_min);
        r.get("k_max", s.k_max);
    } else if (kind == "cumulative_prob") {
        s = SelectionStrategy::cumulative_prob(0.9);
        r.get("rho", s.value);
    } else if (kind == "topk_gap") {
        s = SelectionStrategy::topk_gap(1, 0.05);
        r.get("k", s.k);
        r.get("delta", s.delta);
    } else {
        throw ConfigError(path + ".kind: unknown selection strategy '" + kind + "'");
    }
    r.finish();
    s.validate();
    return s;
}

} // namespace

SelectionStrategy parse_strategy(const nlohmann::json& j) {
    return parse_strategy_at(j, "strategy");
}

nlohmann::json to_json(const SelectionStrategy& s) {
    json j = {{"kind", s.name()}};
    switch (s.kind) {
    case StrategyKind::relative_threshold: j["theta"] = s.value; break;
    case StrategyKind::fixed_topk: j["k"] = s.k; break;
    case StrategyKind::absolute_threshold: j["eta"] = s.value; break;
    case StrategyKind::entropy_based:
    case StrategyKind::gini_based:
        j["k_min"] = s.k_min;
        j["k_max"] = s.k_max;
        break;
    case StrategyKind::cumulative_prob: j["rho"] = s.value; break;
    case StrategyKind::topk_gap:
        j["k"] = s.k;
        j["delta"] = s.delta;
        break;
    }
    return j;
}

void RunConfig::validate() const {
    if (schema_version != kSchemaVersion) {
        throw ConfigError("unsupported schema_version " + std::to_string(schema_version) +
                          " (expected " + std::to_string(kSchemaVersion) + ")");
    }
    if (lime.experts < 1) {
        throw ConfigError("model.experts must be >= 1");
    }
    if (lime.experts > lime.d_out) {
        throw ConfigError("model.experts must not exceed model.d_out");
    }
    if (lime.d_in < 1 || lime.d_out < 1) {
        throw ConfigError("model dimensions must be >= 1");
    }
    if (lime.lora.rank < 1 || lime.lora.rank > std::min(lime.d_in, lime.d_out)) {
        throw ConfigError("model.adapter.rank must lie in [1, min(d_in, d_out)]");
    }
    if (!(lime.lora.alpha > 0.0)) {
        throw ConfigError("model.adapter.alpha must be > 0");
    }
    if (!(lime.init.sigma >= 0.0)) {
        throw ConfigError("model.init.sigma must be >= 0");
    }
    lime.routing.validate();
    if (moe.top_k < 1 || !(moe.tau > 0.0) || !(moe.router_std >= 0.0)) {
        throw ConfigError("model.moe: need top_k >= 1, tau > 0 and router_std >= 0");
    }
    if (model == ModelKind::moe && lime.adapter != AdapterKind::lora) {
        throw ConfigError("the MoE baseline uses LoRA experts; set model.adapter.kind to lora");
    }
    train.validate();
    const bool classification = data.kind == TaskKind::classification;
    if (classification != (train.loss == TaskLossKind::cross_entropy)) {
        throw ConfigError("train.loss must be cross_entropy for classification data and mse for regression");
    }
    if (data.path.empty()) {
        resolved_mixture_spec(*this).validate();
    }
    if (output.dir.empty()) {
        throw ConfigError("output.dir must not be empty");
    }
}

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.lime.lora.rank = 2;
    cfg.lime.lora.alpha = 4.0;
    return cfg;
}

RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig cfg = default_run_config();
    ObjectReader root(j, "config");
    if (const json* v = root.child("schema_version")) {
        if (!v->is_number_integer()) {
            throw ConfigError("config.schema_version: expected an integer");
        }
        cfg.schema_version = v->get<int>();
    } else {
        throw ConfigError("config: missing schema_version");
    }
    if (cfg.schema_version != kSchemaVersion) {
        throw ConfigError("unsupported schema_version " + std::to_string(cfg.schema_version));
    }
    root.get_u64("seed", cfg.seed);

    if (const json* m = root.child("model")) {
        ObjectReader r(*m, "model");
        std::string kind = "lime";
        r.get("kind", kind);
        if (kind == "lime") {
            cfg.model = ModelKind::lime;
        } else if (kind == "moe") {
            cfg.model = ModelKind::moe;
        } else {
            throw ConfigError("model.kind: expected lime or moe, got '" + kind + "'");
        }
        r.get("d_in", cfg.lime.d_in);
        r.get("d_out", cfg.lime.d_out);
        r.get("experts", cfg.lime.experts);
        r.get_u64("base_seed", cfg.lime.base_seed);
        r.get("shared_modulator", cfg.lime.shared_modulator);
        if (const json* a = r.child("adapter")) {
            ObjectReader ar(*a, "model.adapter");
            std::string ak = "lora";
            ar.get("kind", ak);
            if (ak == "lora") {
                cfg.lime.adapter = AdapterKind::lora;
            } else if (ak == "diag") {
                cfg.lime.adapter = AdapterKind::diag;
            } else {
                throw ConfigError("model.adapter.kind: expected lora or diag, got '" + ak + "'");
            }
            ar.get("rank", cfg.lime.lora.rank);
            ar.get("alpha", cfg.lime.lora.alpha);
            ar.get("freeze_a", cfg.lime.lora.freeze_a);
            ar.get("a_std", cfg.lime.lora.a_std);
            ar.finish();
        }
        if (const json* in = r.child("init")) {
            ObjectReader ir(*in, "model.init");
            std::string scheme = init_scheme_name(cfg.lime.init.scheme);
            ir.get("scheme", scheme);
            cfg.lime.init.scheme = parse_init_scheme(scheme);
            ir.get("sigma", cfg.lime.init.sigma);
            ir.finish();
        }
        if (const json* ro = r.child("routing")) {
            ObjectReader rr(*ro, "model.routing");
            RoutingConfig& rc = cfg.lime.routing;
            rr.get("tau", rc.tau);
            rr.get("gamma_r", rc.gamma_r);
            std::string gran = granularity_name(rc.granularity);
            rr.get("granularity", gran);
            rc.granularity = parse_granularity(gran);
            rr.get("ngram", rc.ngram);
            std::string slice = slice_name(rc.slice);
            rr.get("slice", slice);
            rc.slice = parse_slice(slice);
            rr.get_u64("slice_seed", rc.slice_seed);
            rr.get("jitter_sigma", rc.jitter_sigma);
            if (const json* s = rr.child("strategy")) {
                rc.strategy = parse_strategy_at(*s, "model.routing.strategy");
            }
            rr.finish();
        }
        if (const json* mo = r.child("moe")) {
            ObjectReader mr(*mo, "model.moe");
            mr.get("top_k", cfg.moe.top_k);
            mr.get("tau", cfg.moe.tau);
            mr.get("router_std", cfg.moe.router_std);
            mr.finish();
        }
        r.finish();
    }

    if (const json* t = root.child("train")) {
        ObjectReader r(*t, "train");
        TrainConfig& tc = cfg.train;
        r.get("lr_peft", tc.lr_peft);
        r.get("lr_expert", tc.lr_expert);
        r.get("epochs", tc.epochs);
        r.get("max_steps", tc.max_steps);
        r.get("batch_size", tc.batch_size);
        r.get("warmup_ratio", tc.warmup_ratio);
        r.get("weight_decay", tc.weight_decay);
        r.get("grad_clip", tc.grad_clip);
        r.get("alpha", tc.alpha);
        r.get("beta", tc.beta);
        r.get("log_every", tc.log_every);
        std::string loss = task_loss_name(tc.loss);
        r.get("loss", loss);
        tc.loss = parse_task_loss(loss);
        r.finish();
    }

    if (const json* d = root.child("data")) {
        ObjectReader r(*d, "data");
        r.get("path", cfg.data.path);
        std::string kind = task_kind_name(cfg.data.kind);
        r.get("kind", kind);
        cfg.data.kind = parse_task_kind(kind);
        if (const json* g = r.child("generator")) {
            ObjectReader gr(*g, "data.generator");
            MixtureSpec& ms = cfg.data.generator;
            std::string mixture = cfg.data.imbalanced ? "imbalanced" : "modulated";
            gr.get("mixture", mixture);
            if (mixture == "modulated") {
                cfg.data.imbalanced = false;
            } else if (mixture == "imbalanced") {
                cfg.data.imbalanced = true;
                ms.n_tasks = 4;
                ms.proportions = {0.70, 0.20, 0.05, 0.05};
            } else {
                throw ConfigError("data.generator.mixture: expected modulated or imbalanced");
            }
            gr.get("n_tasks", ms.n_tasks);
            gr.get("samples_per_task", ms.samples_per_task);
            gr.get("proportions", ms.proportions);
            gr.get("rank", ms.rank);
            gr.get("noise", ms.noise);
            gr.get("separation", ms.separation);
            gr.get("input_std", ms.input_std);
            gr.finish();
        }
        r.finish();
    }

    if (const json* o = root.child("output")) {
        ObjectReader r(*o, "output");
        r.get("dir", cfg.output.dir);
        r.get("trace", cfg.output.trace);
        r.finish();
    }
    root.finish();
    cfg.train.seed = cfg.seed;
    cfg.moe.d_in = cfg.lime.d_in;
    cfg.moe.d_out = cfg.lime.d_out;
    cfg.moe.experts = cfg.lime.experts;
    cfg.moe.lora = cfg.lime.lora;
    cfg.moe.base_seed = cfg.lime.base_seed;
    cfg.validate();
    return cfg;
}

nlohmann::json to_json(const RunConfig& cfg) {
    const auto& l = cfg.lime;
    const auto& t = cfg.train;
    const auto& g = cfg.data.generator;
    json j;
    j["schema_version"] = cfg.schema_version;
    j["seed"] = cfg.seed;
    j["model"] = {
        {"kind", cfg.model == ModelKind::lime ? "lime" : "moe"},
        {"d_in", l.d_in},
        {"d_out", l.d_out},
        {"experts", l.experts},
        {"base_seed", l.base_seed},
        {"adapter",
         {{"kind", l.adapter == AdapterKind::lora ? "lora" : "diag"},
          {"rank", l.lora.rank},
          {"alpha", l.lora.alpha},
          {"freeze_a", l.lora.freeze_a},
          {"a_std", l.lora.a_std}}},
        {"shared_modulator", l.shared_modulator},
        {"init", {{"scheme", init_scheme_name(l.init.scheme)}, {"sigma", l.init.sigma}}},
        {"routing",
         {{"tau", l.routing.tau},
          {"gamma_r", l.routing.gamma_r},
          {"granularity", granularity_name(l.routing.granularity)},
          {"ngram", l.routing.ngram},
          {"slice", slice_name(l.routing.slice)},
          {"slice_seed", l.routing.slice_seed},
          {"jitter_sigma", l.routing.jitter_sigma},
          {"strategy", to_json(l.routing.strategy)}}},
        {"moe", {{"top_k", cfg.moe.top_k}, {"tau", cfg.moe.tau}, {"router_std", cfg.moe.router_std}}},
    };
    j["train"] = {
        {"lr_peft", t.lr_peft},
        {"lr_expert", t.lr_expert},
        {"epochs", t.epochs},
        {"max_steps", t.max_steps},
        {"batch_size", t.batch_size},
        {"warmup_ratio", t.warmup_ratio},
        {"weight_decay", t.weight_decay},
        {"grad_clip", t.grad_clip},
        {"alpha", t.alpha},
        {"beta", t.beta},
        {"log_every", t.log_every},
        {"loss", task_loss_name(t.loss)},
    };
    j["data"] = {
        {"path", cfg.data.path},
        {"kind", task_kind_name(cfg.data.kind)},
        {"generator",
         {{"mixture", cfg.data.imbalanced ? "imbalanced" : "modulated"},
          {"n_tasks", g.n_tasks},
          {"samples_per_task", g.samples_per_task},
          {"proportions", g.proportions},
          {"rank", g.rank},
          {"noise", g.noise},
          {"separation", g.separation},
          {"input_std", g.input_std}}},
    };
    j["output"] = {{"dir", cfg.output.dir}, {"trace", cfg.output.trace}};
    return j;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config '" + path + "'");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

MixtureSpec resolved_mixture_spec(const RunConfig& cfg) {
    MixtureSpec ms = cfg.data.generator;
    ms.d_in = cfg.lime.d_in;
    ms.d_out = cfg.lime.d_out;
    ms.base_seed = cfg.lime.base_seed;
    ms.kind = cfg.data.kind;
    return ms;
}

Model build_model(const RunConfig& cfg) {
    Rng root(cfg.seed);
    root.split(); // data stream
    Rng model_rng = root.split();
    if (cfg.model == ModelKind::lime) {
        return make_lime_layer(cfg.lime, model_rng);
    }
    MoeLayerSpec ms = cfg.moe;
    ms.d_in = cfg.lime.d_in;
    ms.d_out = cfg.lime.d_out;
    ms.experts = cfg.lime.experts;
    ms.lora = cfg.lime.lora;
    ms.base_seed = cfg.lime.base_seed;
    return make_moe_layer(ms, model_rng);
}

MixtureDataset build_dataset(const RunConfig& cfg) {
    if (!cfg.data.path.empty()) {
        MixtureDataset data = load_dataset_csv(cfg.data.path, cfg.data.kind);
        if (data.x.cols() != cfg.lime.d_in) {
            throw ConfigError("dataset '" + cfg.data.path + "' has " + std::to_string(data.x.cols()) +
                              " inputs, model expects " + std::to_string(cfg.lime.d_in));
        }
        if (cfg.data.kind == TaskKind::regression && data.y.cols() != cfg.lime.d_out) {
            throw ConfigError("dataset '" + cfg.data.path + "' targets do not match d_out");
        }
        return data;
    }
    Rng root(cfg.seed);
    Rng data_rng = root.split();
    const MixtureSpec ms = resolved_mixture_spec(cfg);
    return cfg.data.imbalanced ? gen_imbalanced_mixture(ms, data_rng).data
                               : gen_modulated_mixture(ms, data_rng).data;
}

} // namespace lime
