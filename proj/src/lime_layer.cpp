// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/lime_layer.hpp"

#include <istream>
#include <ostream>
#include <sstream>

#include "lime/errors.hpp"
#include "lime/json_writer.hpp"

namespace lime {

SequenceBatch SequenceBatch::tokens(Matrix x) {
    SequenceBatch b;
    b.batch = x.rows();
    b.seq_len = 1;
    b.x = std::move(x);
    return b;
}

void SequenceBatch::validate() const {
    if (seq_len == 0 || batch == 0) {
        throw ShapeError("SequenceBatch: batch and seq_len must be >= 1");
    }
    if (x.rows() != batch * seq_len) {
        throw ShapeError("SequenceBatch: " + std::to_string(x.rows()) + " rows for " +
                         std::to_string(batch) + " sequences of length " + std::to_string(seq_len));
    }
}

InitScheme parse_init_scheme(const std::string& name) {
    if (name == "uniform_near_one") return InitScheme::uniform_near_one;
    if (name == "gaussian_near_one") return InitScheme::gaussian_near_one;
    if (name == "all_ones") return InitScheme::all_ones;
    if (name == "gaussian_zero") return InitScheme::gaussian_zero;
    throw ConfigError("unknown modulator init scheme '" + name + "'");
}

std::string init_scheme_name(InitScheme scheme) {
    switch (scheme) {
    case InitScheme::uniform_near_one: return "uniform_near_one";
    case InitScheme::gaussian_near_one: return "gaussian_near_one";
    case InitScheme::all_ones: return "all_ones";
    case InitScheme::gaussian_zero: return "gaussian_zero";
    }
    return "unknown";
}

std::vector<std::size_t> LimeLayer::slice_indices() const {
    return routing_slice(d_out(), num_experts(), routing.slice, routing.slice_seed);
}

std::vector<ParamRef> LimeLayer::trainable_parameters() {
    std::vector<ParamRef> params;
    collect_adapter_params(adapter, "", params);
    params.push_back({"experts", &experts, ParamGroup::modulator});
    if (shared_enabled) {
        params.push_back({"shared.p", &shared, ParamGroup::modulator});
        params.push_back({"shared.gamma", &gamma, ParamGroup::modulator});
    }
    return params;
}

std::vector<NamedTensor> LimeLayer::tensors() const {
    std::vector<ConstParamRef> refs;
    refs.push_back({"frozen.weight", &frozen.weight, false});
    collect_adapter_tensors(adapter, "", refs);
    refs.push_back({"experts", &experts, true});
    if (shared_enabled) {
        refs.push_back({"shared.p", &shared, true});
        refs.push_back({"shared.gamma", &gamma, true});
    }
    std::vector<NamedTensor> out;
    out.reserve(refs.size());
    for (const auto& r : refs) {
        out.push_back({r.name, *r.value});
    }
    return out;
}

void LimeLayer::load_tensors(const std::vector<NamedTensor>& tensors) {
    frozen.weight = find_tensor(tensors, "frozen.weight", frozen.weight.rows(), frozen.weight.cols());
    if (auto* lora = std::get_if<LoraAdapter>(&adapter)) {
        lora->a = find_tensor(tensors, "lora.A", lora->a.rows(), lora->a.cols());
        lora->b = find_tensor(tensors, "lora.B", lora->b.rows(), lora->b.cols());
    } else {
        auto& diag = std::get<DiagAdapter>(adapter);
        diag.s = find_tensor(tensors, "diag.s", 1, diag.s.cols());
    }
    experts = find_tensor(tensors, "experts", experts.rows(), experts.cols());
    if (shared_enabled) {
        shared = find_tensor(tensors, "shared.p", 1, shared.cols());
        gamma = find_tensor(tensors, "shared.gamma", 1, 1);
    }
}

void LimeLayer::validate() const {
    const std::size_t e = num_experts();
    if (e < 1) {
        throw ConfigError("LiME layer needs at least one expert");
    }
    if (e > d_out()) {
        throw ConfigError("LiME layer: E=" + std::to_string(e) + " exceeds d_out=" +
                          std::to_string(d_out()));
    }
    if (experts.cols() != d_out() || adapter_d_out(adapter) != d_out()) {
        throw ShapeError("LiME layer: modulator or adapter width differs from d_out");
    }
    if (shared_enabled && (shared.rows() != 1 || shared.cols() != d_out() || gamma.size() != 1)) {
        throw ShapeError("LiME layer: shared modulator must be 1 x d_out with scalar gamma");
    }
    if (const auto* lora = std::get_if<LoraAdapter>(&adapter)) {
        if (lora->a.cols() != d_in() || lora->b.cols() != lora->a.rows()) {
            throw ShapeError("LiME layer: LoRA factors do not match d_in / rank");
        }
    }
    routing.validate();
}

void init_modulators(LimeLayer& layer, const ModulatorInit& init, Rng& rng) {
    if (!(init.sigma >= 0.0)) {
        throw ConfigError("modulator init sigma must be >= 0");
    }
    for (double& v : layer.experts.values()) {
        switch (init.scheme) {
        case InitScheme::uniform_near_one: v = rng.uniform(1.0 - init.sigma, 1.0 + init.sigma); break;
        case InitScheme::gaussian_near_one: v = rng.normal(1.0, init.sigma); break;
        case InitScheme::all_ones: v = 1.0; break;
        case InitScheme::gaussian_zero: v = rng.normal(0.0, init.sigma); break;
        }
    }
    for (double& v : layer.shared.values()) {
        v = rng.normal(0.0, 0.1);
    }
    layer.gamma(0, 0) = 0.0;
}

LimeLayer make_lime_layer(const LimeLayerSpec& spec, Rng& rng) {
    if (spec.experts < 1) {
        throw ConfigError("LiME layer needs at least one expert");
    }
    LimeLayer layer;
    layer.frozen = make_base_layer(spec.d_in, spec.d_out, spec.base_seed);
    if (spec.adapter == AdapterKind::lora) {
        layer.adapter = make_lora(spec.d_in, spec.d_out, spec.lora, rng);
    } else {
        layer.adapter = make_diag(spec.d_out);
    }
    layer.experts = Matrix(spec.experts, spec.d_out, 1.0);
    layer.shared = Matrix(1, spec.d_out);
    layer.shared_enabled = spec.shared_modulator;
    layer.routing = spec.routing;
    layer.validate();
    init_modulators(layer, spec.init, rng);
    return layer;
}

LimeForward forward(const LimeLayer& layer, const SequenceBatch& batch, Rng* rng, bool training,
                    const JitterTape* replay) {
    layer.validate();
    batch.validate();
    const std::size_t e = layer.num_experts();
    const std::size_t d_out = layer.d_out();

    LimeForward out;
    out.slice = layer.slice_indices();
    out.z = frozen_forward(layer.frozen, batch.x);
    out.zhat = peft_forward(layer.adapter, batch.x, out.z);

    const auto plan = plan_units(batch.seq_len, layer.routing.granularity, layer.routing.ngram);
    const std::size_t n_units = plan.size() * batch.batch;
    if (replay != nullptr && replay->size() != n_units) {
        throw ShapeError("forward: jitter replay has " + std::to_string(replay->size()) +
                         " units, expected " + std::to_string(n_units));
    }
    const bool jitter_on = training && layer.routing.jitter_sigma > 0.0;

    out.decisions.reserve(n_units);
    out.jitter.reserve(n_units);
    out.modulators = Matrix(n_units, d_out);
    out.h = out.z;

    Vector zs(e);
    Vector hs(e);
    for (std::size_t b = 0; b < batch.batch; ++b) {
        const std::size_t base = b * batch.seq_len;
        for (const auto& unit : plan) {
            const std::size_t u = out.decisions.size();
            const std::size_t rep = base + unit.representative;
            for (std::size_t i = 0; i < e; ++i) {
                zs[i] = out.z(rep, out.slice[i]);
                hs[i] = out.zhat(rep, out.slice[i]);
            }
            Vector jitter;
            if (replay != nullptr) {
                jitter = (*replay)[u];
            } else if (jitter_on) {
                if (rng == nullptr) {
                    throw std::invalid_argument("forward: training with jitter needs an Rng");
                }
                jitter = draw_jitter(e, layer.routing.jitter_sigma, *rng);
            }
            const Vector w = route_with_jitter(zs, hs, layer.routing, jitter);
            RoutingDecision d = select(w, layer.routing.strategy);
            d.span_begin = base + unit.begin;
            d.span_end = base + unit.end;
            d.representative = rep;
            d.sequence = b;

            auto p = out.modulators.row(u);
            for (std::size_t i : d.selected) {
                const double wi = d.renorm[i];
                const auto pi = layer.experts.row(i);
                for (std::size_t k = 0; k < d_out; ++k) {
                    p[k] += wi * pi[k];
                }
            }
            for (std::size_t row = d.span_begin; row < d.span_end; ++row) {
                auto hrow = out.h.row(row);
                const auto zh = out.zhat.row(row);
                for (std::size_t k = 0; k < d_out; ++k) {
                    double term = zh[k] * p[k];
                    if (layer.shared_enabled) {
                        term += layer.gamma(0, 0) * (zh[k] * layer.shared(0, k));
                    }
                    hrow[k] += term;
                }
            }
            out.decisions.push_back(std::move(d));
            out.jitter.push_back(std::move(jitter));
        }
    }
    if (!all_finite(out.h.values())) {
        throw NumericError("forward: non-finite layer output");
    }
    return out;
}

std::size_t count_lime_params(const LimeLayer& layer) {
    const std::size_t d_out = layer.d_out();
    std::size_t n = count_peft_params(layer.adapter) + layer.num_experts() * d_out;
    if (layer.shared_enabled) {
        n += d_out + 1;
    }
    return n;
}

Vector mean_routing_weights(const std::vector<RoutingDecision>& decisions, std::size_t experts) {
    Vector pbar(experts, 0.0);
    if (decisions.empty()) {
        return pbar;
    }
    for (const auto& d : decisions) {
        for (std::size_t i = 0; i < experts; ++i) {
            pbar[i] += d.weights[i];
        }
    }
    const double n = static_cast<double>(decisions.size());
    for (double& v : pbar) {
        v /= n;
    }
    return pbar;
}

void write_trace_header(std::ostream& out, std::size_t experts) {
    out << "layer,sequence,unit,span_begin,span_end,representative";
    for (const char* prefix : {"w_", "sel_", "rw_"}) {
        for (std::size_t i = 0; i < experts; ++i) {
            out << ',' << prefix << i;
        }
    }
    out << '\n';
}

void write_trace_rows(std::ostream& out, std::size_t layer_id,
                      const std::vector<RoutingDecision>& decisions) {
    std::size_t unit = 0;
    std::size_t current_seq = decisions.empty() ? 0 : decisions.front().sequence;
    for (const auto& d : decisions) {
        if (d.sequence != current_seq) {
            current_seq = d.sequence;
            unit = 0;
        }
        out << layer_id << ',' << d.sequence << ',' << unit << ',' << d.span_begin << ','
            << d.span_end << ',' << d.representative;
        for (double w : d.weights) {
            out << ',' << format_real(w);
        }
        std::vector<int> mask(d.weights.size(), 0);
        for (std::size_t i : d.selected) {
            mask[i] = 1;
        }
        for (int m : mask) {
            out << ',' << m;
        }
        for (double w : d.renorm) {
            out << ',' << format_real(w);
        }
        out << '\n';
        ++unit;
    }
}

std::vector<TraceRecord> read_trace(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("trace: missing header");
    }
    std::size_t columns = 1;
    for (char c : line) {
        columns += c == ',' ? 1 : 0;
    }
    if (columns < 9 || (columns - 6) % 3 != 0) {
        throw FormatError("trace: unexpected column count " + std::to_string(columns));
    }
    const std::size_t experts = (columns - 6) / 3;
    std::vector<TraceRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.size() != columns) {
            throw FormatError("trace: line " + std::to_string(line_no) + " has " +
                              std::to_string(cells.size()) + " cells");
        }
        try {
            TraceRecord r;
            r.layer = std::stoul(cells[0]);
            r.decision.sequence = std::stoul(cells[1]);
            r.unit = std::stoul(cells[2]);
            r.decision.span_begin = std::stoul(cells[3]);
            r.decision.span_end = std::stoul(cells[4]);
            r.decision.representative = std::stoul(cells[5]);
            r.decision.weights.resize(experts);
            r.decision.renorm.resize(experts);
            for (std::size_t i = 0; i < experts; ++i) {
                r.decision.weights[i] = std::stod(cells[6 + i]);
                if (std::stoi(cells[6 + experts + i]) != 0) {
                    r.decision.selected.push_back(i);
                }
                r.decision.renorm[i] = std::stod(cells[6 + 2 * experts + i]);
            }
            records.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw FormatError("trace: malformed number on line " + std::to_string(line_no));
        }
    }
    return records;
}

} // namespace lime
