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

#include "kiln/checkpoint.hpp"
#include "kiln/kbcorpus.hpp"
#include "kiln/objectives.hpp"

namespace kiln {

// Which injected knowledge the run trains on, next to MLM.
enum class Variant : uint8_t { EPlusR, EOnly, ROnly, MlmOnly };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::EPlusR: return "E+R";
        case Variant::EOnly: return "E";
        case Variant::ROnly: return "R";
        default: return "mlm-only";
    }
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "E+R") return Variant::EPlusR;
    if (s == "E") return Variant::EOnly;
    if (s == "R") return Variant::ROnly;
    if (s == "mlm-only") return Variant::MlmOnly;
    throw InputError("unknown variant: " + s + " (expected E+R, E, R, or mlm-only)");
}

struct TrainConfig {
    int total_steps = 300;
    int batch_size = 8;
    double peak_lr = 2e-3;
    double warmup_fraction = 0.1;
    uint64_t seed = 7;
    int checkpoint_every = 100;
    // Packed text budget per sequence, [CLS] and [SEP] included.
    int max_text_len = 64;
    int max_pairs = 8;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    bool clip = false;
    double clip_norm = 1.0;
    MlmConfig mlm;
    Variant variant = Variant::EPlusR;

    void validate() const {
        if (total_steps < 1) throw InputError("train config: total_steps must be >= 1");
        if (batch_size < 1) throw InputError("train config: batch_size must be >= 1");
        if (peak_lr <= 0) throw InputError("train config: peak_lr must be positive");
        if (warmup_fraction < 0 || warmup_fraction >= 1)
            throw InputError("train config: warmup_fraction must be in [0, 1)");
        if (checkpoint_every < 1) throw InputError("train config: checkpoint_every must be >= 1");
        if (max_text_len < 3) throw InputError("train config: max_text_len must be >= 3");
        if (max_pairs < 1) throw InputError("train config: max_pairs must be >= 1");
    }
};

// Linear warmup to the peak over floor(warmup_fraction * total) steps, then
// linear decay to zero at the final step.  Steps are 1-based.
inline double lr_schedule(int step, int total_steps, double peak, double warmup_fraction) {
    if (step < 1 || step > total_steps) throw InputError("lr_schedule: step out of range");
    int warm = static_cast<int>(std::floor(warmup_fraction * total_steps));
    if (warm > 0 && step <= warm) return peak * static_cast<double>(step) / static_cast<double>(warm);
    return peak * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warm);
}

inline double grad_global_norm(const GradMap& grads) {
    double s = 0.0;
    for (const auto& [name, g] : grads.g)
        for (double x : g) s += x * x;
    return std::sqrt(s);
}

// Adam with bias correction.  Arithmetic runs in float64; parameters and both
// moments are snapped back to the float32 grid afterwards so the in-memory
// state always matches what a checkpoint stores.
inline void adam_step(ModelParams& params, const GradMap& grads, AdamState& state, double lr,
                      double beta1, double beta2, double eps) {
    state.t += 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (auto& [name, tensor] : params.t) {
        const auto& g = grads.g.at(name);
        auto& m = state.m.at(name);
        auto& v = state.v.at(name);
        for (size_t i = 0; i < tensor.v.size(); ++i) {
            double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g[i];
            double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g[i] * g[i];
            double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
            tensor.v[i] = f32_grid(tensor.v[i] - update);
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
        }
    }
}

// One packed encoder sequence plus its decoder targets, before corruption.
struct PretrainSequence {
    EncoderInput base;
    std::vector<PairAttach> attach;
};

struct DataSet {
    std::vector<PretrainSequence> seqs;
    Vocab vocab;
};

inline DecoderTarget target_from_tokens(const std::vector<std::string>& toks, const Vocab& vocab) {
    DecoderTarget t;
    for (const auto& tok : toks) {
        int id = vocab.id(tok);
        t.slot_ids.push_back(id);
        t.loss_mask.push_back(!(id == Vocab::kPrompt1 || id == Vocab::kPrompt2 || id == Vocab::kPrompt3));
    }
    if (t.length() == 0) throw InputError("empty decoder target");
    return t;
}

// Packs each document's sentences greedily into sequences of at most
// max_text_len tokens (specials included) and groups that chunk's injection
// examples into marker pairs keyed by (span, kind).  Chunks whose pair count
// exceeds max_pairs split into clones sharing the text but carrying disjoint
// pair subsets.  Sequences without examples still train MLM.
inline DataSet build_dataset(const std::vector<Document>& docs,
                             const std::vector<InjectionExample>& examples, const Vocab& vocab,
                             Variant variant, int max_text_len, int max_pairs) {
    DataSet ds;
    ds.vocab = vocab;
    int cap = max_text_len - 2;
    std::map<std::pair<std::string, int>, std::vector<const InjectionExample*>> by_doc_sent;
    for (const auto& ex : examples) {
        if (variant == Variant::MlmOnly) break;
        if (variant == Variant::EOnly && ex.kind != SpanKind::EntityPage) continue;
        if (variant == Variant::ROnly && ex.kind != SpanKind::Relational) continue;
        by_doc_sent[{ex.doc_id, ex.sent}].push_back(&ex);
    }
    for (const auto& doc : docs) {
        size_t si = 0;
        while (si < doc.sentences.size()) {
            std::vector<std::string> text;
            std::vector<int> sent_offsets;
            size_t sj = si;
            while (sj < doc.sentences.size()) {
                const auto& s = doc.sentences[sj];
                int len = static_cast<int>(s.size());
                if (!text.empty() && static_cast<int>(text.size()) + len > cap) break;
                sent_offsets.push_back(static_cast<int>(text.size()));
                if (text.empty() && len > cap) {
                    text.insert(text.end(), s.begin(), s.begin() + cap);
                    ++sj;
                    break;
                }
                text.insert(text.end(), s.begin(), s.end());
                ++sj;
            }
            // span key -> targets, in first-appearance order
            std::vector<std::tuple<int, int, SpanKind>> keys;
            std::map<std::tuple<int, int, SpanKind>, std::vector<TargetAttach>> targets;
            for (size_t s = si; s < sj; ++s) {
                auto it = by_doc_sent.find({doc.doc_id, static_cast<int>(s)});
                if (it == by_doc_sent.end()) continue;
                int off = sent_offsets[s - si];
                for (const InjectionExample* ex : it->second) {
                    int a = ex->start + off, b = ex->end + off;
                    if (b >= static_cast<int>(text.size())) continue;  // lost to truncation
                    auto key = std::make_tuple(a, b, ex->kind);
                    if (!targets.count(key)) keys.push_back(key);
                    targets[key].push_back(
                        {target_from_tokens(ex->target, vocab), ex->kind == SpanKind::Relational});
                }
            }
            for (size_t pg = 0; pg < keys.size() || pg == 0; pg += static_cast<size_t>(max_pairs)) {
                size_t hi = std::min(keys.size(), pg + static_cast<size_t>(max_pairs));
                std::vector<SpanRequest> spans;
                for (size_t i = pg; i < hi; ++i)
                    spans.push_back({std::get<0>(keys[i]), std::get<1>(keys[i]), std::get<2>(keys[i])});
                PretrainSequence seq;
                seq.base = assemble_encoder_input(text, spans, vocab);
                for (size_t i = pg; i < hi; ++i) {
                    PairAttach pa;
                    pa.pair_index = static_cast<int>(i - pg);
                    pa.targets = targets.at(keys[i]);
                    seq.attach.push_back(std::move(pa));
                }
                ds.seqs.push_back(std::move(seq));
                if (keys.empty()) break;
            }
            si = sj;
        }
    }
    if (ds.seqs.empty()) throw InputError("no pretraining sequences could be built");
    return ds;
}

// Deterministic data order: epoch e is a seeded permutation of all sequences,
// and step t (1-based) takes the next batch_size entries of the concatenated
// permutation stream.  Resume at any step reproduces the original batches.
struct BatchSchedule {
    uint64_t seed;
    int n;

    std::map<long, std::vector<int>> perm_cache;

    BatchSchedule(uint64_t seed_, int n_) : seed(seed_), n(n_) {}

    const std::vector<int>& perm(long epoch) {
        auto it = perm_cache.find(epoch);
        if (it != perm_cache.end()) return it->second;
        std::vector<int> p(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
        Rng rng(seed_mix(seed, "epoch", static_cast<uint64_t>(epoch)));
        rng.shuffle(p);
        if (perm_cache.size() > 4) perm_cache.erase(perm_cache.begin());
        return perm_cache.emplace(epoch, std::move(p)).first->second;
    }

    std::vector<int> batch(int step, int batch_size) {
        std::vector<int> out;
        long start = static_cast<long>(step - 1) * batch_size;
        for (int i = 0; i < batch_size; ++i) {
            long g = start + i;
            out.push_back(perm(g / n)[static_cast<size_t>(g % n)]);
        }
        return out;
    }
};

// Fresh corruption for each visit of a sequence, seeded by (seed, step, slot).
inline Batch make_batch(const DataSet& ds, const TrainConfig& cfg, BatchSchedule& sched, int step) {
    Batch b;
    auto idx = sched.batch(step, cfg.batch_size);
    for (size_t slot = 0; slot < idx.size(); ++slot) {
        const PretrainSequence& seq = ds.seqs[static_cast<size_t>(idx[slot])];
        SeqItem item;
        item.enc = seq.base;
        item.attach = seq.attach;
        apply_mlm(item.enc, cfg.mlm, ds.vocab,
                  seed_mix(cfg.seed, "mlm", static_cast<uint64_t>(step), static_cast<uint64_t>(slot)));
        b.items.push_back(std::move(item));
    }
    return b;
}

struct StepMetrics {
    int step = 0;
    double lr = 0.0;
    LossReport loss;
    double grad_norm = 0.0;

    json to_json() const {
        return json{{"step", step},
                    {"lr", lr},
                    {"l_mlm", loss.l_mlm},
                    {"l_struct", loss.l_struct},
                    {"l_unstruct", loss.l_unstruct},
                    {"total", loss.total},
                    {"n_mlm_positions", loss.n_mlm_positions},
                    {"n_struct_targets", loss.n_struct_targets},
                    {"n_unstruct_targets", loss.n_unstruct_targets},
                    {"n_pairs", loss.n_pairs},
                    {"grad_norm", grad_norm}};
    }
};

struct TrainResult {
    long final_step = 0;
    std::vector<StepMetrics> metrics;
};

// Runs (or resumes) the training loop.  Checkpoints land in
// out_dir/checkpoints/step_N with optimizer state; out_dir/final keeps the
// last full checkpoint and out_dir/deploy its decoder-stripped copy.  Resume
// picks the newest step_N checkpoint with optimizer state below total_steps.
inline TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg, const DataSet& ds,
                         const fs::path& out_dir, bool resume = false) {
    mcfg.validate();
    tcfg.validate();
    if (ds.vocab.size() != mcfg.vocab_size)
        throw InputError("model vocab_size does not match dataset vocabulary");
    ModelParams params;
    AdamState optim;
    int start_step = 0;
    fs::path ckpt_root = out_dir / "checkpoints";
    fs::create_directories(out_dir);
    if (resume) {
        long best = -1;
        if (fs::exists(ckpt_root)) {
            for (const auto& e : fs::directory_iterator(ckpt_root)) {
                std::string name = e.path().filename().string();
                if (name.rfind("step_", 0) == 0) {
                    long s = std::stol(name.substr(5));
                    if (s > best && s < tcfg.total_steps) best = s;
                }
            }
        }
        if (best >= 0) {
            Checkpoint ck = load_checkpoint(ckpt_root / ("step_" + std::to_string(best)));
            if (!ck.has_optim) throw InputError("cannot resume from checkpoint without optimizer state");
            params = std::move(ck.params);
            optim = std::move(ck.optim);
            start_step = static_cast<int>(ck.step);
        }
    }
    if (start_step == 0) {
        params = init_params(mcfg, tcfg.seed);
        optim.init_like(params);
    }
    GradMap grads;
    grads.init_like(params);
    BatchSchedule sched(tcfg.seed, static_cast<int>(ds.seqs.size()));
    std::ofstream metrics_out(out_dir / "metrics.jsonl", start_step == 0 ? std::ios::trunc : std::ios::app);
    if (!metrics_out) throw InputError("cannot write metrics file in " + out_dir.string());
    TrainResult result;
    for (int step = start_step + 1; step <= tcfg.total_steps; ++step) {
        Batch batch = make_batch(ds, tcfg, sched, step);
        grads.zero();
        StepMetrics sm;
        sm.step = step;
        sm.loss = combined_loss_grad(params, mcfg, batch, grads);
        sm.grad_norm = grad_global_norm(grads);
        if (!std::isfinite(sm.grad_norm)) throw NumericError("non-finite gradient norm at step " + std::to_string(step));
        if (tcfg.clip && sm.grad_norm > tcfg.clip_norm) {
            double scale = tcfg.clip_norm / sm.grad_norm;
            for (auto& [name, g] : grads.g)
                for (double& x : g) x *= scale;
        }
        sm.lr = lr_schedule(step, tcfg.total_steps, tcfg.peak_lr, tcfg.warmup_fraction);
        adam_step(params, grads, optim, sm.lr, tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps);
        metrics_out << sm.to_json().dump() << "\n";
        metrics_out.flush();
        result.metrics.push_back(sm);
        if (step % tcfg.checkpoint_every == 0 || step == tcfg.total_steps)
            save_checkpoint(ckpt_root / ("step_" + std::to_string(step)), mcfg, params, ds.vocab, step, &optim);
    }
    result.final_step = tcfg.total_steps;
    save_checkpoint(out_dir / "final", mcfg, params, ds.vocab, tcfg.total_steps, &optim);
    strip_decoder(out_dir / "final", out_dir / "deploy");
    return result;
}

}  // namespace kiln
