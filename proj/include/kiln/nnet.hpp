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

// Pre-norm transformer stacks with hand-written backward passes.  Every
// reduction runs as a plain ascending-index scalar loop, and masked attention
// slots contribute an exact 0.0 to each sum, so a text token's representation
// is bit-identical with and without trailing marker slots.  Keep fast-math off.

#pragma once

#include <cmath>

#include "kiln/attnplan.hpp"
#include "kiln/tensor.hpp"

namespace kiln {

constexpr double kLnEps = 1e-5;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244)); }

inline double gelu_grad(double x) {
    double phi = std::exp(-0.5 * x * x) * 0.3989422804014326779;
    double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
    return cdf + x * phi;
}

struct LnCache {
    std::vector<double> mean, rstd;
};

inline DMat layer_norm_fwd(const DMat& x, const Tensor& gamma, const Tensor& beta, LnCache& cache) {
    DMat y(x.rows, x.cols);
    cache.mean.assign(static_cast<size_t>(x.rows), 0.0);
    cache.rstd.assign(static_cast<size_t>(x.rows), 0.0);
    for (int r = 0; r < x.rows; ++r) {
        double m = 0.0;
        for (int c = 0; c < x.cols; ++c) m += x.at(r, c);
        m /= x.cols;
        double var = 0.0;
        for (int c = 0; c < x.cols; ++c) {
            double d = x.at(r, c) - m;
            var += d * d;
        }
        var /= x.cols;
        double rstd = 1.0 / std::sqrt(var + kLnEps);
        cache.mean[static_cast<size_t>(r)] = m;
        cache.rstd[static_cast<size_t>(r)] = rstd;
        for (int c = 0; c < x.cols; ++c)
            y.at(r, c) = (x.at(r, c) - m) * rstd * gamma.at(c) + beta.at(c);
    }
    return y;
}

inline DMat layer_norm_bwd(const DMat& x, const Tensor& gamma, const LnCache& cache, const DMat& dy,
                           std::vector<double>& dgamma, std::vector<double>& dbeta) {
    DMat dx(x.rows, x.cols);
    int n = x.cols;
    for (int r = 0; r < x.rows; ++r) {
        double m = cache.mean[static_cast<size_t>(r)];
        double rstd = cache.rstd[static_cast<size_t>(r)];
        double sum_dh = 0.0, sum_dh_xhat = 0.0;
        for (int c = 0; c < n; ++c) {
            double xhat = (x.at(r, c) - m) * rstd;
            double dh = dy.at(r, c) * gamma.at(c);
            dgamma[static_cast<size_t>(c)] += dy.at(r, c) * xhat;
            dbeta[static_cast<size_t>(c)] += dy.at(r, c);
            sum_dh += dh;
            sum_dh_xhat += dh * xhat;
        }
        for (int c = 0; c < n; ++c) {
            double xhat = (x.at(r, c) - m) * rstd;
            double dh = dy.at(r, c) * gamma.at(c);
            dx.at(r, c) = rstd * (dh - sum_dh / n - xhat * sum_dh_xhat / n);
        }
    }
    return dx;
}

inline DMat linear_fwd(const DMat& x, const Tensor& w, const Tensor& b) {
    int out = w.dim(1);
    DMat y(x.rows, out);
    for (int r = 0; r < x.rows; ++r) {
        for (int o = 0; o < out; ++o) {
            double acc = b.at(o);
            for (int i = 0; i < x.cols; ++i) acc += x.at(r, i) * w.at(i, o);
            y.at(r, o) = acc;
        }
    }
    return y;
}

inline DMat linear_bwd(const DMat& x, const Tensor& w, const DMat& dy, std::vector<double>& dw,
                       std::vector<double>& db) {
    int out = w.dim(1);
    DMat dx(x.rows, x.cols);
    for (int r = 0; r < x.rows; ++r) {
        for (int o = 0; o < out; ++o) {
            double d = dy.at(r, o);
            db[static_cast<size_t>(o)] += d;
            for (int i = 0; i < x.cols; ++i) {
                dw[static_cast<size_t>(i) * static_cast<size_t>(out) + static_cast<size_t>(o)] += x.at(r, i) * d;
                dx.at(r, i) += w.at(i, o) * d;
            }
        }
    }
    return dx;
}

struct LayerCache {
    DMat x_in, xn1, q, k, v, ctx, x_mid, xn2, f1, g;
    LnCache ln1, ln2;
    std::vector<DMat> probs;  // one [n,n] matrix per head
};

inline LayerCache layer_fwd(const ModelParams& params, const ModelConfig& cfg,
                            const std::string& prefix, const DMat& x, const AttentionPlan& plan) {
    LayerCache c;
    c.x_in = x;
    int n = x.rows, h = cfg.hidden, heads = cfg.heads, dh = h / heads;
    double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    c.xn1 = layer_norm_fwd(x, params.at(prefix + "attn_norm.gamma"), params.at(prefix + "attn_norm.beta"), c.ln1);
    c.q = linear_fwd(c.xn1, params.at(prefix + "attn.wq"), params.at(prefix + "attn.bq"));
    c.k = linear_fwd(c.xn1, params.at(prefix + "attn.wk"), params.at(prefix + "attn.bk"));
    c.v = linear_fwd(c.xn1, params.at(prefix + "attn.wv"), params.at(prefix + "attn.bv"));
    c.ctx = DMat(n, h);
    c.probs.assign(static_cast<size_t>(heads), DMat(n, n));
    for (int hd = 0; hd < heads; ++hd) {
        DMat& p = c.probs[static_cast<size_t>(hd)];
        int off = hd * dh;
        for (int qi = 0; qi < n; ++qi) {
            double mx = 0.0;
            bool any = false;
            std::vector<double> scores(static_cast<size_t>(n), 0.0);
            for (int ci = 0; ci < n; ++ci) {
                if (!plan.at(qi, ci)) continue;
                double s = 0.0;
                for (int d = 0; d < dh; ++d) s += c.q.at(qi, off + d) * c.k.at(ci, off + d);
                s *= inv_sqrt_dh;
                scores[static_cast<size_t>(ci)] = s;
                if (!any || s > mx) mx = s;
                any = true;
            }
            if (!any) throw NumericError("attention row with no visible key");
            double denom = 0.0;
            for (int ci = 0; ci < n; ++ci) {
                double e = plan.at(qi, ci) ? std::exp(scores[static_cast<size_t>(ci)] - mx) : 0.0;
                p.at(qi, ci) = e;
                denom += e;
            }
            for (int ci = 0; ci < n; ++ci) p.at(qi, ci) /= denom;
            for (int d = 0; d < dh; ++d) {
                double acc = 0.0;
                for (int ci = 0; ci < n; ++ci) acc += p.at(qi, ci) * c.v.at(ci, off + d);
                c.ctx.at(qi, off + d) = acc;
            }
        }
    }
    DMat attn_out = linear_fwd(c.ctx, params.at(prefix + "attn.wo"), params.at(prefix + "attn.bo"));
    c.x_mid = DMat(n, h);
    for (int r = 0; r < n; ++r)
        for (int cc = 0; cc < h; ++cc) c.x_mid.at(r, cc) = x.at(r, cc) + attn_out.at(r, cc);
    c.xn2 = layer_norm_fwd(c.x_mid, params.at(prefix + "ffn_norm.gamma"), params.at(prefix + "ffn_norm.beta"), c.ln2);
    c.f1 = linear_fwd(c.xn2, params.at(prefix + "ffn.w1"), params.at(prefix + "ffn.b1"));
    c.g = DMat(n, cfg.ffn);
    for (int r = 0; r < n; ++r)
        for (int cc = 0; cc < cfg.ffn; ++cc) c.g.at(r, cc) = gelu(c.f1.at(r, cc));
    return c;
}

inline DMat layer_out(const ModelParams& params, const ModelConfig&, const std::string& prefix,
                      const LayerCache& c) {
    DMat f2 = linear_fwd(c.g, params.at(prefix + "ffn.w2"), params.at(prefix + "ffn.b2"));
    DMat out(c.x_mid.rows, c.x_mid.cols);
    for (int r = 0; r < out.rows; ++r)
        for (int cc = 0; cc < out.cols; ++cc) out.at(r, cc) = c.x_mid.at(r, cc) + f2.at(r, cc);
    return out;
}

inline DMat layer_bwd(const ModelParams& params, const ModelConfig& cfg, const std::string& prefix,
                      const LayerCache& c, const AttentionPlan& plan, const DMat& dout,
                      GradMap& grads) {
    int n = c.x_in.rows, h = cfg.hidden, heads = cfg.heads, dh = h / heads;
    double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    // Feed-forward branch: out = x_mid + W2(gelu(W1(LN(x_mid)))).
    DMat dg = linear_bwd(c.g, params.at(prefix + "ffn.w2"), dout, grads.at(prefix + "ffn.w2"),
                         grads.at(prefix + "ffn.b2"));
    DMat df1(n, cfg.ffn);
    for (int r = 0; r < n; ++r)
        for (int cc = 0; cc < cfg.ffn; ++cc) df1.at(r, cc) = dg.at(r, cc) * gelu_grad(c.f1.at(r, cc));
    DMat dxn2 = linear_bwd(c.xn2, params.at(prefix + "ffn.w1"), df1, grads.at(prefix + "ffn.w1"),
                           grads.at(prefix + "ffn.b1"));
    DMat dx_mid = layer_norm_bwd(c.x_mid, params.at(prefix + "ffn_norm.gamma"), c.ln2, dxn2,
                                 grads.at(prefix + "ffn_norm.gamma"), grads.at(prefix + "ffn_norm.beta"));
    for (int r = 0; r < n; ++r)
        for (int cc = 0; cc < h; ++cc) dx_mid.at(r, cc) += dout.at(r, cc);

    // Attention branch: x_mid = x_in + Wo(ctx).
    DMat dctx = linear_bwd(c.ctx, params.at(prefix + "attn.wo"), dx_mid, grads.at(prefix + "attn.wo"),
                           grads.at(prefix + "attn.bo"));
    DMat dq(n, h), dk(n, h), dv(n, h);
    for (int hd = 0; hd < heads; ++hd) {
        const DMat& p = c.probs[static_cast<size_t>(hd)];
        int off = hd * dh;
        for (int qi = 0; qi < n; ++qi) {
            std::vector<double> dp(static_cast<size_t>(n), 0.0);
            for (int ci = 0; ci < n; ++ci) {
                if (!plan.at(qi, ci)) continue;
                double acc = 0.0;
                for (int d = 0; d < dh; ++d) acc += dctx.at(qi, off + d) * c.v.at(ci, off + d);
                dp[static_cast<size_t>(ci)] = acc;
                double pij = p.at(qi, ci);
                for (int d = 0; d < dh; ++d) dv.at(ci, off + d) += pij * dctx.at(qi, off + d);
            }
            double dot = 0.0;
            for (int ci = 0; ci < n; ++ci) dot += p.at(qi, ci) * dp[static_cast<size_t>(ci)];
            for (int ci = 0; ci < n; ++ci) {
                if (!plan.at(qi, ci)) continue;
                double ds = p.at(qi, ci) * (dp[static_cast<size_t>(ci)] - dot) * inv_sqrt_dh;
                for (int d = 0; d < dh; ++d) {
                    dq.at(qi, off + d) += ds * c.k.at(ci, off + d);
                    dk.at(ci, off + d) += ds * c.q.at(qi, off + d);
                }
            }
        }
    }
    DMat dxn1 = linear_bwd(c.xn1, params.at(prefix + "attn.wq"), dq, grads.at(prefix + "attn.wq"),
                           grads.at(prefix + "attn.bq"));
    DMat dxn1_k = linear_bwd(c.xn1, params.at(prefix + "attn.wk"), dk, grads.at(prefix + "attn.wk"),
                             grads.at(prefix + "attn.bk"));
    DMat dxn1_v = linear_bwd(c.xn1, params.at(prefix + "attn.wv"), dv, grads.at(prefix + "attn.wv"),
                             grads.at(prefix + "attn.bv"));
    for (int r = 0; r < n; ++r)
        for (int cc = 0; cc < h; ++cc)
            dxn1.at(r, cc) += dxn1_k.at(r, cc) + dxn1_v.at(r, cc);
    DMat dx = layer_norm_bwd(c.x_in, params.at(prefix + "attn_norm.gamma"), c.ln1, dxn1,
                             grads.at(prefix + "attn_norm.gamma"), grads.at(prefix + "attn_norm.beta"));
    for (int r = 0; r < n; ++r)
        for (int cc = 0; cc < h; ++cc) dx.at(r, cc) += dx_mid.at(r, cc);
    return dx;
}

struct StackCache {
    DMat x0;
    std::vector<LayerCache> layers;
    std::vector<DMat> layer_outs;
    LnCache final_ln;
    DMat h;
};

inline StackCache stack_fwd(const ModelParams& params, const ModelConfig& cfg,
                            const std::string& stack, int n_layers, DMat x0,
                            const AttentionPlan& plan) {
    StackCache sc;
    sc.x0 = std::move(x0);
    const DMat* cur = &sc.x0;
    for (int l = 0; l < n_layers; ++l) {
        std::string prefix = stack + ".layer" + std::to_string(l) + ".";
        sc.layers.push_back(layer_fwd(params, cfg, prefix, *cur, plan));
        sc.layer_outs.push_back(layer_out(params, cfg, prefix, sc.layers.back()));
        cur = &sc.layer_outs.back();
    }
    sc.h = layer_norm_fwd(*cur, params.at(stack + ".final_norm.gamma"), params.at(stack + ".final_norm.beta"), sc.final_ln);
    return sc;
}

inline DMat stack_bwd(const ModelParams& params, const ModelConfig& cfg, const std::string& stack,
                      int n_layers, const StackCache& sc, const AttentionPlan& plan, const DMat& dh,
                      GradMap& grads) {
    const DMat& top = n_layers > 0 ? sc.layer_outs.back() : sc.x0;
    DMat d = layer_norm_bwd(top, params.at(stack + ".final_norm.gamma"), sc.final_ln, dh,
                            grads.at(stack + ".final_norm.gamma"), grads.at(stack + ".final_norm.beta"));
    for (int l = n_layers - 1; l >= 0; --l) {
        std::string prefix = stack + ".layer" + std::to_string(l) + ".";
        d = layer_bwd(params, cfg, prefix, sc.layers[static_cast<size_t>(l)], plan, d, grads);
    }
    return d;
}

// --- encoder ---

inline DMat embed_input(const ModelParams& params, const ModelConfig& cfg, const EncoderInput& in) {
    const Tensor& tok = params.at("embeddings.token");
    const Tensor& pos = params.at("embeddings.position");
    int n = in.length();
    DMat x(n, cfg.hidden);
    for (int i = 0; i < n; ++i) {
        int id = in.ids[static_cast<size_t>(i)];
        int p = in.position_ids[static_cast<size_t>(i)];
        if (id < 0 || id >= cfg.vocab_size) throw InputError("token id out of range: " + std::to_string(id));
        if (p < 0 || p >= cfg.max_position) throw InputError("position id out of range: " + std::to_string(p));
        for (int c = 0; c < cfg.hidden; ++c) x.at(i, c) = tok.at(id, c) + pos.at(p, c);
    }
    return x;
}

struct EncodeCache {
    StackCache stack;
};

inline EncodeCache encode_fwd(const ModelParams& params, const ModelConfig& cfg,
                              const EncoderInput& input, const AttentionPlan& plan) {
    if (plan.n != input.length()) throw InputError("plan size does not match input length");
    EncodeCache ec;
    ec.stack = stack_fwd(params, cfg, "encoder", cfg.encoder_layers, embed_input(params, cfg, input), plan);
    return ec;
}

inline void encode_bwd(const ModelParams& params, const ModelConfig& cfg, const EncoderInput& input,
                       const AttentionPlan& plan, const EncodeCache& ec, const DMat& dh,
                       GradMap& grads) {
    DMat dx0 = stack_bwd(params, cfg, "encoder", cfg.encoder_layers, ec.stack, plan, dh, grads);
    auto& dtok = grads.at("embeddings.token");
    auto& dpos = grads.at("embeddings.position");
    for (int i = 0; i < input.length(); ++i) {
        int id = input.ids[static_cast<size_t>(i)];
        int p = input.position_ids[static_cast<size_t>(i)];
        for (int c = 0; c < cfg.hidden; ++c) {
            dtok[static_cast<size_t>(id) * static_cast<size_t>(cfg.hidden) + static_cast<size_t>(c)] += dx0.at(i, c);
            dpos[static_cast<size_t>(p) * static_cast<size_t>(cfg.hidden) + static_cast<size_t>(c)] += dx0.at(i, c);
        }
    }
}

// Final hidden states for every slot, text and markers alike.
inline DMat encode(const ModelParams& params, const ModelConfig& cfg, const EncoderInput& input,
                   const AttentionPlan& plan) {
    return encode_fwd(params, cfg, input, plan).stack.h;
}

// --- span representation ---

// Marker mode reads the pair's marker slots; TokenConcat reads the span's
// boundary text slots (offset by one for [CLS]).  Both give [h_open; h_close].
inline std::vector<double> span_representation(const DMat& h, const MarkerPair& pair,
                                               SpanRepMode mode) {
    int a, b;
    if (mode == SpanRepMode::Marker) {
        a = pair.open_index;
        b = pair.close_index;
    } else {
        a = pair.span_start + 1;
        b = pair.span_end + 1;
    }
    if (a < 0 || a >= h.rows || b < 0 || b >= h.rows)
        throw InputError("span representation index out of range");
    std::vector<double> g(static_cast<size_t>(2 * h.cols), 0.0);
    for (int c = 0; c < h.cols; ++c) {
        g[static_cast<size_t>(c)] = h.at(a, c);
        g[static_cast<size_t>(h.cols + c)] = h.at(b, c);
    }
    return g;
}

inline void span_representation_bwd(const std::vector<double>& dg, const MarkerPair& pair,
                                    SpanRepMode mode, DMat& dh) {
    int a, b;
    if (mode == SpanRepMode::Marker) {
        a = pair.open_index;
        b = pair.close_index;
    } else {
        a = pair.span_start + 1;
        b = pair.span_end + 1;
    }
    for (int c = 0; c < dh.cols; ++c) {
        dh.at(a, c) += dg[static_cast<size_t>(c)];
        dh.at(b, c) += dg[static_cast<size_t>(dh.cols + c)];
    }
}

// --- vocabulary projections ---

inline const Tensor& output_embedding(const ModelParams& params, const ModelConfig& cfg, bool decoder) {
    if (cfg.tied_embeddings) return params.at("embeddings.token");
    return params.at(decoder ? "decoder.out_weight" : "heads.mlm_weight");
}

inline void vocab_logits_row(const ModelParams& params, const ModelConfig& cfg, const double* h,
                             bool decoder, double* out) {
    const Tensor& e = output_embedding(params, cfg, decoder);
    const Tensor& bias = params.at(decoder ? "decoder.out_bias" : "heads.mlm_bias");
    for (int vcb = 0; vcb < cfg.vocab_size; ++vcb) {
        double acc = bias.at(vcb);
        for (int c = 0; c < cfg.hidden; ++c) acc += h[c] * e.at(vcb, c);
        out[vcb] = acc;
    }
}

inline void vocab_logits_row_bwd(const ModelParams& params, const ModelConfig& cfg, const double* h,
                                 bool decoder, const double* dlogits, double* dh, GradMap& grads) {
    const Tensor& e = output_embedding(params, cfg, decoder);
    std::string ename = cfg.tied_embeddings ? "embeddings.token" : (decoder ? "decoder.out_weight" : "heads.mlm_weight");
    auto& de = grads.at(ename);
    auto& dbias = grads.at(decoder ? "decoder.out_bias" : "heads.mlm_bias");
    for (int vcb = 0; vcb < cfg.vocab_size; ++vcb) {
        double d = dlogits[vcb];
        if (d == 0.0) continue;
        dbias[static_cast<size_t>(vcb)] += d;
        for (int c = 0; c < cfg.hidden; ++c) {
            de[static_cast<size_t>(vcb) * static_cast<size_t>(cfg.hidden) + static_cast<size_t>(c)] += d * h[c];
            dh[c] += d * e.at(vcb, c);
        }
    }
}

inline double log_sum_exp(const double* v, int n) {
    double mx = v[0];
    for (int i = 1; i < n; ++i)
        if (v[i] > mx) mx = v[i];
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(v[i] - mx);
    return mx + std::log(s);
}

// --- decoder ---

struct DecodeCache {
    StackCache stack;
    std::vector<double> g_s;
    DMat logits;  // one row per target slot
};

inline DMat decoder_x0(const ModelParams& params, const ModelConfig& cfg,
                       const std::vector<double>& g_s, const DecoderTarget& target) {
    int m = target.length();
    if (m < 1) throw InputError("decoder target must have at least one slot");
    if (1 + m > cfg.max_position) throw InputError("decoder target exceeds max_position");
    if (static_cast<int>(g_s.size()) != 2 * cfg.hidden)
        throw InputError("span representation size mismatch");
    const Tensor& wg = params.at("decoder.span_proj.weight");
    const Tensor& tok = params.at("embeddings.token");
    const Tensor& pos = params.at("embeddings.position");
    DMat x(1 + m, cfg.hidden);
    for (int c = 0; c < cfg.hidden; ++c) {
        double acc = pos.at(0, c);
        for (int i = 0; i < 2 * cfg.hidden; ++i) acc += g_s[static_cast<size_t>(i)] * wg.at(i, c);
        x.at(0, c) = acc;
    }
    for (int p = 1; p <= m; ++p) {
        int id = target.slot_ids[static_cast<size_t>(p - 1)];
        if (id < 0 || id >= cfg.vocab_size) throw InputError("decoder slot id out of range");
        for (int c = 0; c < cfg.hidden; ++c) x.at(p, c) = tok.at(id, c) + pos.at(p, c);
    }
    return x;
}

// Teacher-forced decode.  Slot 0 is the span-conditioned prefix; slot p
// carries target token y_p.  Logits row t-1 scores y_t, read from the slot
// whose input embeds y_{t-1} (the prefix for t=1), so each prediction
// conditions on the prefix plus the plan's window of earlier target tokens
// and never on its own slot.
inline DecodeCache decode_fwd(const ModelParams& params, const ModelConfig& cfg,
                              const std::vector<double>& g_s, const DecoderTarget& target,
                              const AttentionPlan& plan) {
    int m = target.length();
    if (plan.n != 1 + m) throw InputError("decoder plan size mismatch");
    DecodeCache dc;
    dc.g_s = g_s;
    dc.stack = stack_fwd(params, cfg, "decoder", cfg.decoder_layers,
                         decoder_x0(params, cfg, g_s, target), plan);
    dc.logits = DMat(m, cfg.vocab_size);
    for (int t = 0; t < m; ++t)
        vocab_logits_row(params, cfg, dc.stack.h.row(t), true, dc.logits.row(t));
    return dc;
}

inline DMat decode_logits(const ModelParams& params, const ModelConfig& cfg,
                          const std::vector<double>& g_s, const DecoderTarget& target,
                          const AttentionPlan& plan) {
    return decode_fwd(params, cfg, g_s, target, plan).logits;
}

// Returns d(loss)/d(g_s); parameter gradients accumulate into grads.
inline std::vector<double> decode_bwd(const ModelParams& params, const ModelConfig& cfg,
                                      const DecoderTarget& target, const AttentionPlan& plan,
                                      const DecodeCache& dc, const DMat& dlogits, GradMap& grads) {
    int m = target.length();
    DMat dh(1 + m, cfg.hidden);
    for (int t = 0; t < m; ++t)
        vocab_logits_row_bwd(params, cfg, dc.stack.h.row(t), true, dlogits.row(t), dh.row(t), grads);
    DMat dx0 = stack_bwd(params, cfg, "decoder", cfg.decoder_layers, dc.stack, plan, dh, grads);
    const Tensor& wg = params.at("decoder.span_proj.weight");
    auto& dwg = grads.at("decoder.span_proj.weight");
    auto& dtok = grads.at("embeddings.token");
    auto& dpos = grads.at("embeddings.position");
    std::vector<double> dg(static_cast<size_t>(2 * cfg.hidden), 0.0);
    for (int c = 0; c < cfg.hidden; ++c) {
        double d = dx0.at(0, c);
        dpos[static_cast<size_t>(c)] += d;  // position row 0
        for (int i = 0; i < 2 * cfg.hidden; ++i) {
            dwg[static_cast<size_t>(i) * static_cast<size_t>(cfg.hidden) + static_cast<size_t>(c)] += dc.g_s[static_cast<size_t>(i)] * d;
            dg[static_cast<size_t>(i)] += wg.at(i, c) * d;
        }
    }
    for (int p = 1; p <= m; ++p) {
        int id = target.slot_ids[static_cast<size_t>(p - 1)];
        for (int c = 0; c < cfg.hidden; ++c) {
            double d = dx0.at(p, c);
            dtok[static_cast<size_t>(id) * static_cast<size_t>(cfg.hidden) + static_cast<size_t>(c)] += d;
            dpos[static_cast<size_t>(p) * static_cast<size_t>(cfg.hidden) + static_cast<size_t>(c)] += d;
        }
    }
    return dg;
}

// Sum of negative log-likelihoods over loss-bearing slots.
inline double nll_sum(const DMat& logits, const DecoderTarget& target) {
    double total = 0.0;
    for (int t = 1; t <= target.length(); ++t) {
        if (!target.loss_mask[static_cast<size_t>(t - 1)]) continue;
        const double* row = logits.row(t - 1);
        double lse = log_sum_exp(row, logits.cols);
        total += lse - row[target.slot_ids[static_cast<size_t>(t - 1)]];
    }
    return total;
}

// d(nll_sum)/d(logits) scaled by `scale`; zero rows for masked-off slots.
inline DMat nll_bwd(const DMat& logits, const DecoderTarget& target, double scale) {
    DMat d(logits.rows, logits.cols);
    for (int t = 1; t <= target.length(); ++t) {
        if (!target.loss_mask[static_cast<size_t>(t - 1)]) continue;
        const double* row = logits.row(t - 1);
        double lse = log_sum_exp(row, logits.cols);
        for (int vcb = 0; vcb < logits.cols; ++vcb)
            d.at(t - 1, vcb) = std::exp(row[vcb] - lse) * scale;
        d.at(t - 1, target.slot_ids[static_cast<size_t>(t - 1)]) -= scale;
    }
    return d;
}

}  // namespace kiln
