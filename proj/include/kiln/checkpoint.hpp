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

// Checkpoint directory layout:
//   manifest.json       model config, step, optimizer presence
//   params.bin          float32 little-endian tensor data, sorted by name
//   params.index.json   name -> { offset (bytes), shape }
//   optim.bin           per tensor: first moment then second moment, float32
//   optim.index.json    name -> { offset (bytes), shape }
//   vocab.txt           one token per line
// Parameters live on the float32 grid, so save -> load -> save reproduces the
// directory byte for byte and resuming continues the exact trajectory.

#pragma once

#include "kiln/attnplan.hpp"
#include "kiln/io.hpp"
#include "kiln/tensor.hpp"
#include "kiln/textpipe.hpp"

namespace kiln {

// Adam moments, stored in float32 like the checkpoint that persists them.
struct AdamState {
    long t = 0;
    std::map<std::string, std::vector<float>> m, v;

    void init_like(const ModelParams& params) {
        t = 0;
        m.clear();
        v.clear();
        for (const auto& [name, tensor] : params.t) {
            m[name].assign(tensor.v.size(), 0.0f);
            v[name].assign(tensor.v.size(), 0.0f);
        }
    }
};

namespace detail {

inline void push_f32_le(std::string& buf, float f) {
    uint32_t u;
    std::memcpy(&u, &f, 4);
    buf += static_cast<char>(u & 0xff);
    buf += static_cast<char>((u >> 8) & 0xff);
    buf += static_cast<char>((u >> 16) & 0xff);
    buf += static_cast<char>((u >> 24) & 0xff);
}

inline float read_f32_le(const std::string& buf, size_t off) {
    uint32_t u = static_cast<uint8_t>(buf[off]) | (static_cast<uint32_t>(static_cast<uint8_t>(buf[off + 1])) << 8) |
                 (static_cast<uint32_t>(static_cast<uint8_t>(buf[off + 2])) << 16) |
                 (static_cast<uint32_t>(static_cast<uint8_t>(buf[off + 3])) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

}  // namespace detail

inline json model_config_to_json(const ModelConfig& c) {
    json j;
    j["hidden"] = c.hidden;
    j["heads"] = c.heads;
    j["encoder_layers"] = c.encoder_layers;
    j["decoder_layers"] = c.decoder_layers;
    j["ffn"] = c.ffn;
    j["max_position"] = c.max_position;
    j["vocab_size"] = c.vocab_size;
    if (c.window_k == kWindowAll)
        j["window_k"] = "all";
    else
        j["window_k"] = c.window_k;
    j["span_rep"] = span_rep_name(c.span_rep);
    j["tied_embeddings"] = c.tied_embeddings;
    j["dropout"] = c.dropout;
    return j;
}

inline ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.hidden = j.at("hidden").get<int>();
    c.heads = j.at("heads").get<int>();
    c.encoder_layers = j.at("encoder_layers").get<int>();
    c.decoder_layers = j.at("decoder_layers").get<int>();
    c.ffn = j.at("ffn").get<int>();
    c.max_position = j.at("max_position").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    if (j.at("window_k").is_string()) {
        if (j.at("window_k").get<std::string>() != "all")
            throw InputError("window_k must be a positive integer or \"all\"");
        c.window_k = kWindowAll;
    } else {
        c.window_k = j.at("window_k").get<int>();
    }
    c.span_rep = span_rep_from_name(j.at("span_rep").get<std::string>());
    c.tied_embeddings = j.at("tied_embeddings").get<bool>();
    c.dropout = j.at("dropout").get<double>();
    return c;
}

inline void save_checkpoint(const fs::path& dir, const ModelConfig& cfg, const ModelParams& params,
                            const Vocab& vocab, long step, const AdamState* optim = nullptr) {
    fs::create_directories(dir);
    std::string blob;
    json index = json::object();
    for (const auto& [name, tensor] : params.t) {
        index[name] = {{"offset", blob.size()}, {"shape", tensor.shape}};
        for (double x : tensor.v) detail::push_f32_le(blob, static_cast<float>(x));
    }
    write_file(dir / "params.bin", blob);
    write_file(dir / "params.index.json", index.dump(2) + "\n");
    json manifest;
    manifest["format"] = "kiln-ckpt-1";
    manifest["step"] = step;
    manifest["model"] = model_config_to_json(cfg);
    manifest["optimizer"] = optim ? json{{"t", optim->t}} : json(nullptr);
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    vocab.save(dir / "vocab.txt");
    if (optim) {
        std::string oblob;
        json oindex = json::object();
        for (const auto& [name, mvec] : optim->m) {
            const auto& vvec = optim->v.at(name);
            oindex[name] = {{"offset", oblob.size()}, {"shape", params.at(name).shape}};
            for (float x : mvec) detail::push_f32_le(oblob, x);
            for (float x : vvec) detail::push_f32_le(oblob, x);
        }
        write_file(dir / "optim.bin", oblob);
        write_file(dir / "optim.index.json", oindex.dump(2) + "\n");
    }
}

struct Checkpoint {
    ModelConfig cfg;
    ModelParams params;
    Vocab vocab;
    long step = 0;
    bool has_optim = false;
    bool has_decoder = false;
    AdamState optim;
};

inline Checkpoint load_checkpoint(const fs::path& dir) {
    Checkpoint ck;
    if (!fs::exists(dir / "manifest.json"))
        throw InputError("not a checkpoint directory: " + dir.string());
    json manifest = json::parse(read_file(dir / "manifest.json"));
    if (manifest.at("format").get<std::string>() != "kiln-ckpt-1")
        throw InputError("unsupported checkpoint format in " + dir.string());
    ck.cfg = model_config_from_json(manifest.at("model"));
    ck.step = manifest.at("step").get<long>();
    ck.vocab = Vocab::load(dir / "vocab.txt");
    if (ck.vocab.size() != ck.cfg.vocab_size)
        throw InputError("checkpoint vocab size disagrees with model config");
    std::string blob = read_file(dir / "params.bin");
    json index = json::parse(read_file(dir / "params.index.json"));
    for (auto it = index.begin(); it != index.end(); ++it) {
        Tensor t = Tensor::zeros(it.value().at("shape").get<std::vector<int>>());
        size_t off = it.value().at("offset").get<size_t>();
        if (off + static_cast<size_t>(t.numel()) * 4 > blob.size())
            throw InputError("params.bin truncated for tensor " + it.key());
        for (long i = 0; i < t.numel(); ++i)
            t.v[static_cast<size_t>(i)] = static_cast<double>(detail::read_f32_le(blob, off + static_cast<size_t>(i) * 4));
        ck.params.t.emplace(it.key(), std::move(t));
    }
    ck.has_decoder = ck.params.has("decoder.span_proj.weight");
    if (!manifest.at("optimizer").is_null()) {
        if (!fs::exists(dir / "optim.bin"))
            throw InputError("checkpoint manifest promises optimizer state but optim.bin is missing");
        ck.has_optim = true;
        ck.optim.t = manifest.at("optimizer").at("t").get<long>();
        std::string oblob = read_file(dir / "optim.bin");
        json oindex = json::parse(read_file(dir / "optim.index.json"));
        for (auto it = oindex.begin(); it != oindex.end(); ++it) {
            long numel = ck.params.at(it.key()).numel();
            size_t off = it.value().at("offset").get<size_t>();
            if (off + static_cast<size_t>(numel) * 8 > oblob.size())
                throw InputError("optim.bin truncated for tensor " + it.key());
            auto& m = ck.optim.m[it.key()];
            auto& v = ck.optim.v[it.key()];
            m.resize(static_cast<size_t>(numel));
            v.resize(static_cast<size_t>(numel));
            for (long i = 0; i < numel; ++i) {
                m[static_cast<size_t>(i)] = detail::read_f32_le(oblob, off + static_cast<size_t>(i) * 4);
                v[static_cast<size_t>(i)] = detail::read_f32_le(oblob, off + (static_cast<size_t>(numel) + static_cast<size_t>(i)) * 4);
            }
        }
    }
    return ck;
}

// Deployment copy without the decoder stack, span projection, or optimizer.
// Encoder-only consumers (downstream fine-tuning) load the result unchanged.
inline void strip_decoder(const fs::path& src, const fs::path& dst) {
    Checkpoint ck = load_checkpoint(src);
    ModelParams slim;
    for (auto& [name, tensor] : ck.params.t)
        if (name.rfind("decoder.", 0) != 0) slim.t.emplace(name, std::move(tensor));
    save_checkpoint(dst, ck.cfg, slim, ck.vocab, ck.step, nullptr);
}

}  // namespace kiln
