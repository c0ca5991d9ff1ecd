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

#include "kiln/nnet.hpp"

namespace kiln {

// One decoder target attached to a span: structured targets (flattened facts)
// decode with the full history, unstructured targets (page prefixes) with the
// configured window.
struct TargetAttach {
    DecoderTarget target;
    bool structured = true;
};

struct PairAttach {
    int pair_index = 0;
    std::vector<TargetAttach> targets;
};

struct SeqItem {
    EncoderInput enc;
    std::vector<PairAttach> attach;
};

struct Batch {
    std::vector<SeqItem> items;
};

// Loss terms are averaged per unit (corrupted position for MLM, decoder
// target for the two injection terms) across the whole batch; the training
// objective is their plain sum.  Each term accumulates in its own float64
// accumulator so a combined pass reproduces single-term passes bit for bit.
struct LossReport {
    double l_mlm = 0.0;
    double l_struct = 0.0;
    double l_unstruct = 0.0;
    double total = 0.0;
    long n_mlm_positions = 0;
    long n_struct_targets = 0;
    long n_unstruct_targets = 0;
    long n_pairs = 0;
    long n_sequences = 0;
};

// Mean cross-entropy over already-gathered corrupted-position logits.
inline double mlm_loss(const DMat& logits, const std::vector<int>& labels) {
    if (logits.rows != static_cast<int>(labels.size()))
        throw InputError("mlm_loss: logits rows do not match labels");
    if (logits.rows == 0) return 0.0;
    double total = 0.0;
    for (int r = 0; r < logits.rows; ++r) {
        int y = labels[static_cast<size_t>(r)];
        if (y < 0 || y >= logits.cols) throw InputError("mlm_loss: label out of range");
        total += log_sum_exp(logits.row(r), logits.cols) - logits.at(r, y);
    }
    return total / logits.rows;
}

inline double struct_loss(const ModelParams& params, const ModelConfig& cfg,
                          const std::vector<double>& g_s, const DecoderTarget& target) {
    AttentionPlan plan = decoder_plan(target.length(), 1, kWindowAll);
    return nll_sum(decode_logits(params, cfg, g_s, target, plan), target);
}

inline double unstruct_loss(const ModelParams& params, const ModelConfig& cfg,
                            const std::vector<double>& g_s, const DecoderTarget& target, int k) {
    AttentionPlan plan = decoder_plan(target.length(), 1, k);
    return nll_sum(decode_logits(params, cfg, g_s, target, plan), target);
}

// Sum of losses for all targets attached to one span.
inline double span_multi_loss(const ModelParams& params, const ModelConfig& cfg,
                              const std::vector<double>& g_s,
                              const std::vector<TargetAttach>& targets, int window_k) {
    double total = 0.0;
    for (const auto& ta : targets) {
        total += ta.structured ? struct_loss(params, cfg, g_s, ta.target)
                               : unstruct_loss(params, cfg, g_s, ta.target, window_k);
    }
    return total;
}

namespace detail {

inline LossReport combined_impl(const ModelParams& params, const ModelConfig& cfg,
                                const Batch& batch, GradMap* grads) {
    LossReport rep;
    rep.n_sequences = static_cast<long>(batch.items.size());
    for (const auto& item : batch.items) {
        if (!item.enc.mlm_labels.empty()) {
            for (int lbl : item.enc.mlm_labels)
                if (lbl >= 0) ++rep.n_mlm_positions;
        }
        for (const auto& pa : item.attach) {
            ++rep.n_pairs;
            for (const auto& ta : pa.targets)
                (ta.structured ? rep.n_struct_targets : rep.n_unstruct_targets)++;
        }
    }
    double sum_mlm = 0.0, sum_struct = 0.0, sum_unstruct = 0.0;
    std::vector<double> row_logits(static_cast<size_t>(cfg.vocab_size));
    std::vector<double> row_dlogits(static_cast<size_t>(cfg.vocab_size));
    for (const auto& item : batch.items) {
        AttentionPlan plan = encoder_plan(item.enc);
        EncodeCache ec = encode_fwd(params, cfg, item.enc, plan);
        const DMat& h = ec.stack.h;
        DMat dh;
        if (grads) dh = DMat(h.rows, h.cols);
        if (!item.enc.mlm_labels.empty()) {
            for (int p = 0; p < item.enc.length(); ++p) {
                int y = item.enc.mlm_labels[static_cast<size_t>(p)];
                if (y < 0) continue;
                vocab_logits_row(params, cfg, h.row(p), false, row_logits.data());
                double lse = log_sum_exp(row_logits.data(), cfg.vocab_size);
                sum_mlm += lse - row_logits[static_cast<size_t>(y)];
                if (grads) {
                    double scale = 1.0 / static_cast<double>(rep.n_mlm_positions);
                    for (int vcb = 0; vcb < cfg.vocab_size; ++vcb)
                        row_dlogits[static_cast<size_t>(vcb)] =
                            std::exp(row_logits[static_cast<size_t>(vcb)] - lse) * scale;
                    row_dlogits[static_cast<size_t>(y)] -= scale;
                    vocab_logits_row_bwd(params, cfg, h.row(p), false, row_dlogits.data(), dh.row(p), *grads);
                }
            }
        }
        for (const auto& pa : item.attach) {
            if (pa.pair_index < 0 || pa.pair_index >= static_cast<int>(item.enc.pairs.size()))
                throw InputError("pair attachment index out of range");
            const MarkerPair& pair = item.enc.pairs[static_cast<size_t>(pa.pair_index)];
            std::vector<double> g = span_representation(h, pair, cfg.span_rep);
            std::vector<double> dg(g.size(), 0.0);
            for (const auto& ta : pa.targets) {
                int k = ta.structured ? kWindowAll : cfg.window_k;
                AttentionPlan dplan = decoder_plan(ta.target.length(), 1, k);
                DecodeCache dc = decode_fwd(params, cfg, g, ta.target, dplan);
                double l = nll_sum(dc.logits, ta.target);
                (ta.structured ? sum_struct : sum_unstruct) += l;
                if (grads) {
                    double scale = 1.0 / static_cast<double>(ta.structured ? rep.n_struct_targets
                                                                           : rep.n_unstruct_targets);
                    DMat dlog = nll_bwd(dc.logits, ta.target, scale);
                    std::vector<double> dgi = decode_bwd(params, cfg, ta.target, dplan, dc, dlog, *grads);
                    for (size_t i = 0; i < dg.size(); ++i) dg[i] += dgi[i];
                }
            }
            if (grads) span_representation_bwd(dg, pair, cfg.span_rep, dh);
        }
        if (grads) encode_bwd(params, cfg, item.enc, plan, ec, dh, *grads);
    }
    rep.l_mlm = rep.n_mlm_positions ? sum_mlm / static_cast<double>(rep.n_mlm_positions) : 0.0;
    rep.l_struct = rep.n_struct_targets ? sum_struct / static_cast<double>(rep.n_struct_targets) : 0.0;
    rep.l_unstruct = rep.n_unstruct_targets ? sum_unstruct / static_cast<double>(rep.n_unstruct_targets) : 0.0;
    rep.total = rep.l_mlm + rep.l_struct + rep.l_unstruct;
    if (!std::isfinite(rep.total)) throw NumericError("non-finite loss");
    return rep;
}

}  // namespace detail

inline LossReport combined_loss(const ModelParams& params, const ModelConfig& cfg, const Batch& batch) {
    return detail::combined_impl(params, cfg, batch, nullptr);
}

inline LossReport combined_loss_grad(const ModelParams& params, const ModelConfig& cfg,
                                     const Batch& batch, GradMap& grads) {
    return detail::combined_impl(params, cfg, batch, &grads);
}

}  // namespace kiln
