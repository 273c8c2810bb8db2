#pragma once

// checkpoint files: json with schema version, parameters in hex-float for
// bit-exact round trips plus a decimal mirror for humans

#include <fstream>

#include <nlohmann/json.hpp>

#include "model.hpp"

namespace mixfunn {

using json = nlohmann::json;
inline constexpr int checkpoint_schema_version = 1;

inline json arch_to_json(const ArchSpec& a) {
    json j;
    j["variant"] = variant_name(a.variant);
    std::vector<std::string> sc;
    for (double s : a.input_scales) sc.push_back(to_hex_double(s));
    j["input_scales_hex"] = sc;
    if (a.is_mixed()) {
        json m;
        m["n_inputs"] = a.mix.n_inputs;
        m["neurons"] = a.mix.neurons;
        std::vector<std::string> kinds;
        for (FunctionKind k : a.mix.kinds) kinds.emplace_back(function_name(k));
        m["kinds"] = kinds;
        m["second_order_pre"] = a.mix.second_order_pre;
        m["output_second_order"] = a.mix.output_second_order;
        m["output_include_inputs"] = a.mix.output_include_inputs;
        m["output_bias"] = a.mix.output_bias;
        m["normalization"] =
            a.mix.normalization == MixNormalization::Softmax ? "softmax" : "raw";
        m["safelog_k"] = a.mix.safelog_k;
        m["pre_gain"] = a.mix.pre_gain;
        j["mix"] = m;
    } else {
        json m;
        m["n_inputs"] = a.mlp.n_inputs;
        m["hidden"] = a.mlp.hidden;
        m["second_order_first"] = a.mlp.second_order_first;
        j["mlp"] = m;
    }
    return j;
}

inline ArchSpec arch_from_json(const json& j) {
    ArchSpec a;
    a.variant = variant_from_name(j.at("variant").get<std::string>());
    if (j.contains("input_scales_hex"))
        for (const auto& h : j.at("input_scales_hex"))
            a.input_scales.push_back(from_hex_double(h.get<std::string>()));
    if (a.is_mixed()) {
        const json& m = j.at("mix");
        a.mix.n_inputs = m.at("n_inputs").get<int>();
        a.mix.neurons = m.at("neurons").get<int>();
        a.mix.kinds.clear();
        for (const auto& s : m.at("kinds")) a.mix.kinds.push_back(function_from_name(s.get<std::string>()));
        a.mix.second_order_pre = m.at("second_order_pre").get<bool>();
        a.mix.output_second_order = m.at("output_second_order").get<bool>();
        a.mix.output_include_inputs = m.at("output_include_inputs").get<bool>();
        a.mix.output_bias = m.at("output_bias").get<bool>();
        a.mix.normalization = m.at("normalization").get<std::string>() == "softmax"
                                  ? MixNormalization::Softmax
                                  : MixNormalization::Raw;
        a.mix.safelog_k = m.at("safelog_k").get<double>();
        a.mix.pre_gain = m.value("pre_gain", 1.0);
    } else if (a.variant != Variant::Analytic) {
        const json& m = j.at("mlp");
        a.mlp.n_inputs = m.at("n_inputs").get<int>();
        a.mlp.hidden = m.at("hidden").get<std::vector<int>>();
        a.mlp.second_order_first = m.at("second_order_first").get<bool>();
    }
    return a;
}

inline void save_checkpoint(const Model& model, const std::string& path) {
    if (model.arch.variant == Variant::Analytic)
        throw error("save_checkpoint: analytic stubs have no parameters");
    json j;
    j["kind"] = "mixfunn-checkpoint";
    j["schema_version"] = checkpoint_schema_version;
    j["arch"] = arch_to_json(model.arch);
    j["seed"] = model.seed;
    j["problem"] = model.problem;
    j["epoch"] = model.epoch;
    std::vector<std::string> hex;
    hex.reserve(model.params.size());
    for (double p : model.params) hex.push_back(to_hex_double(p));
    j["params_hex"] = hex;
    j["params"] = model.params;  // decimal mirror, display only
    std::vector<int> mask(model.mask.size());
    for (std::size_t i = 0; i < model.mask.size(); ++i) mask[i] = model.mask[i] != 0.0;
    j["mask"] = mask;
    std::ofstream os(path);
    if (!os) throw error("save_checkpoint: cannot write " + path);
    os << j.dump(2) << "\n";
}

inline Model load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw error("load_checkpoint: cannot read " + path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw error("load_checkpoint: corrupt file " + path + ": " + e.what());
    }
    try {
        if (j.value("kind", "") != "mixfunn-checkpoint")
            throw error("load_checkpoint: " + path + " is not a checkpoint file");
        int ver = j.at("schema_version").get<int>();
        if (ver != checkpoint_schema_version)
            throw error("load_checkpoint: schema version " + std::to_string(ver) +
                        " unsupported (this build reads version " +
                        std::to_string(checkpoint_schema_version) + ")");
        Model m;
        m.arch = arch_from_json(j.at("arch"));
        m.seed = j.at("seed").get<std::uint64_t>();
        m.problem = j.at("problem").get<std::string>();
        m.epoch = j.at("epoch").get<int>();
        for (const auto& h : j.at("params_hex"))
            m.params.push_back(from_hex_double(h.get<std::string>()));
        for (const auto& v : j.at("mask")) m.mask.push_back(v.get<int>() ? 1.0 : 0.0);
        if (int(m.params.size()) != m.arch.n_params() || m.params.size() != m.mask.size())
            throw error("load_checkpoint: parameter count mismatch in " + path);
        return m;
    } catch (const json::exception& e) {
        throw error("load_checkpoint: malformed checkpoint " + path + ": " + e.what());
    }
}

}  // namespace mixfunn
