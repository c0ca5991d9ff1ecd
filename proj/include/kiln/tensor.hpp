// Copyright 2026 kiln Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "kiln/common.hpp"

namespace kiln {

// Snaps a value to the nearest float32; trainable state lives on this grid so
// float32 checkpoints round-trip without loss while all arithmetic stays in
// float64.
inline double f32_grid(double x) { return static_cast<double>(static_cast<float>(x)); }

// Named trainable tensor, row-major.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    static Tensor zeros(std::vector<int> shape) {
        Tensor t;
        long n = 1;
        for (int d : shape) n *= d;
        t.shape = std::move(shape);
        t.v.assign(static_cast<size_t>(n), 0.0);
        return t;
    }

    long numel() const { return static_cast<long>(v.size()); }

    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double& at(int i) { return v[static_cast<size_t>(i)]; }
    double at(int i) const { return v[static_cast<size_t>(i)]; }
    double& at(int i, int j) { return v[static_cast<size_t>(i) * static_cast<size_t>(dim(1)) + static_cast<size_t>(j)]; }
    double at(int i, int j) const { return v[static_cast<size_t>(i) * static_cast<size_t>(dim(1)) + static_cast<size_t>(j)]; }
};

// Dense activation matrix (not checkpointed).
struct DMat {
    int rows = 0, cols = 0;
    std::vector<double> a;

    DMat() = default;
    DMat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

    double& at(int r, int c) { return a[static_cast<size_t>(r) * static_cast<size_t>(cols) + static_cast<size_t>(c)]; }
    double at(int r, int c) const { return a[static_cast<size_t>(r) * static_cast<size_t>(cols) + static_cast<size_t>(c)]; }
    double* row(int r) { return a.data() + static_cast<size_t>(r) * static_cast<size_t>(cols); }
    const double* row(int r) const { return a.data() + static_cast<size_t>(r) * static_cast<size_t>(cols); }
};

enum class SpanRepMode : uint8_t { Marker, TokenConcat };

inline std::string span_rep_name(SpanRepMode m) {
    return m == SpanRepMode::Marker ? "marker" : "token-concat";
}

inline SpanRepMode span_rep_from_name(const std::string& s) {
    if (s == "marker") return SpanRepMode::Marker;
    if (s == "token-concat") return SpanRepMode::TokenConcat;
    throw InputError("unknown span representation mode: " + s);
}

struct ModelConfig {
    int hidden = 64;
    int heads = 4;
    int encoder_layers = 2;
    int decoder_layers = 1;
    int ffn = 256;
    int max_position = 128;
    int vocab_size = 0;
    // Decoder attention span for unstructured targets; structured targets
    // always decode with the full history.
    int window_k = 2;
    SpanRepMode span_rep = SpanRepMode::Marker;
    bool tied_embeddings = true;
    double dropout = 0.0;

    void validate() const {
        if (hidden <= 0 || heads <= 0 || hidden % heads != 0)
            throw InputError("model config: hidden must be a positive multiple of heads");
        if (encoder_layers < 1) throw InputError("model config: encoder_layers must be >= 1");
        if (decoder_layers < 1) throw InputError("model config: decoder_layers must be >= 1");
        if (ffn <= 0) throw InputError("model config: ffn must be positive");
        if (max_position <= 0) throw InputError("model config: max_position must be positive");
        if (vocab_size <= 0) throw InputError("model config: vocab_size must be positive");
        if (window_k < 1) throw InputError("model config: window_k must be >= 1 or ALL");
        if (dropout != 0.0)
            throw InputError("model config: only dropout 0 is supported at this scale");
    }
};

struct ModelParams {
    std::map<std::string, Tensor> t;

    Tensor& at(const std::string& name) {
        auto it = t.find(name);
        if (it == t.end()) throw InputError("missing parameter tensor: " + name);
        return it->second;
    }
    const Tensor& at(const std::string& name) const {
        auto it = t.find(name);
        if (it == t.end()) throw InputError("missing parameter tensor: " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return t.count(name) > 0; }
};

// Gradient accumulators, float64, keyed like the parameter map.
struct GradMap {
    std::map<std::string, std::vector<double>> g;

    void init_like(const ModelParams& params) {
        g.clear();
        for (const auto& [name, tensor] : params.t) g[name].assign(tensor.v.size(), 0.0);
    }
    void zero() {
        for (auto& [name, vec] : g) std::fill(vec.begin(), vec.end(), 0.0);
    }
    std::vector<double>& at(const std::string& name) {
        auto it = g.find(name);
        if (it == g.end()) throw InputError("missing gradient tensor: " + name);
        return it->second;
    }
};

inline double gauss(Rng& rng) {
    double u1 = rng.uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

namespace detail {

inline void fill_normal(Tensor& t, uint64_t seed, double scale) {
    Rng rng(seed);
    for (auto& x : t.v) x = f32_grid(scale * gauss(rng));
}

inline void fill_const(Tensor& t, double c) {
    for (auto& x : t.v) x = f32_grid(c);
}

}  // namespace detail

// Layer-norm + attention + feed-forward tensor names under a layer prefix,
// e.g. "encoder.layer0.".
inline std::vector<std::pair<std::string, std::vector<int>>> layer_tensor_shapes(const ModelConfig& c) {
    int h = c.hidden, f = c.ffn;
    return {
        {"attn_norm.gamma", {h}}, {"attn_norm.beta", {h}},
        {"attn.wq", {h, h}},      {"attn.bq", {h}},
        {"attn.wk", {h, h}},      {"attn.bk", {h}},
        {"attn.wv", {h, h}},      {"attn.bv", {h}},
        {"attn.wo", {h, h}},      {"attn.bo", {h}},
        {"ffn_norm.gamma", {h}},  {"ffn_norm.beta", {h}},
        {"ffn.w1", {h, f}},       {"ffn.b1", {f}},
        {"ffn.w2", {f, h}},       {"ffn.b2", {h}},
    };
}

// Initializes all trainable tensors.  Weights draw from N(0, 0.02^2) on a
// per-tensor stream keyed by name, so adding or removing tensors never shifts
// another tensor's values; norms start at identity, biases at zero.
inline ModelParams init_params(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelParams p;
    const double scale = 0.02;
    auto add = [&](const std::string& name, std::vector<int> shape, bool normal) {
        Tensor t = Tensor::zeros(std::move(shape));
        if (normal) detail::fill_normal(t, seed_mix(seed, "init", fnv1a64(name)), scale);
        p.t.emplace(name, std::move(t));
    };
    add("embeddings.token", {cfg.vocab_size, cfg.hidden}, true);
    add("embeddings.position", {cfg.max_position, cfg.hidden}, true);
    auto add_stack = [&](const std::string& stack, int n_layers) {
        for (int l = 0; l < n_layers; ++l) {
            std::string prefix = stack + ".layer" + std::to_string(l) + ".";
            for (const auto& [suffix, shape] : layer_tensor_shapes(cfg)) {
                bool is_weight = suffix.find("w") != std::string::npos && suffix.find("norm") == std::string::npos;
                add(prefix + suffix, shape, is_weight);
                if (suffix.find("gamma") != std::string::npos) detail::fill_const(p.at(prefix + suffix), 1.0);
            }
        }
        add(stack + ".final_norm.gamma", {cfg.hidden}, false);
        detail::fill_const(p.at(stack + ".final_norm.gamma"), 1.0);
        add(stack + ".final_norm.beta", {cfg.hidden}, false);
    };
    add_stack("encoder", cfg.encoder_layers);
    add_stack("decoder", cfg.decoder_layers);
    add("decoder.span_proj.weight", {2 * cfg.hidden, cfg.hidden}, true);
    add("decoder.out_bias", {cfg.vocab_size}, false);
    add("heads.mlm_bias", {cfg.vocab_size}, false);
    if (!cfg.tied_embeddings) {
        add("heads.mlm_weight", {cfg.vocab_size, cfg.hidden}, true);
        add("decoder.out_weight", {cfg.vocab_size, cfg.hidden}, true);
    }
    return p;
}

}  // namespace kiln
