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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "kiln/objectives.hpp"

using namespace kiln;

namespace {

Vocab tiny_vocab() {
    return Vocab::build({{"a", 9}, {"b", 8}, {"c", 7}, {"d", 6}, {"e", 5}, {"f", 4}});
}

ModelConfig tiny_config(const Vocab& v) {
    ModelConfig cfg;
    cfg.hidden = 8;
    cfg.heads = 2;
    cfg.encoder_layers = 1;
    cfg.decoder_layers = 1;
    cfg.ffn = 16;
    cfg.max_position = 16;
    cfg.vocab_size = v.size();
    cfg.window_k = 2;
    cfg.validate();
    return cfg;
}

Batch tiny_batch(const Vocab& v) {
    Batch batch;
    SeqItem item;
    item.enc = assemble_encoder_input({"a", "b", "c", "d"},
                                      {{0, 1, SpanKind::EntityPage}, {2, 3, SpanKind::Relational}}, v);
    MlmConfig mc;
    mc.rate = 0.5;
    apply_mlm(item.enc, mc, v, 11);
    PairAttach pa0;
    pa0.pair_index = 0;
    pa0.targets.push_back({page_prefix_target({"a", "c", "e", "b"}, 8, v), false});
    PairAttach pa1;
    pa1.pair_index = 1;
    pa1.targets.push_back({flatten_fact({"b"}, {"d", "f"}, v), true});
    item.attach = {pa0, pa1};
    batch.items.push_back(item);

    SeqItem second;
    second.enc = assemble_encoder_input({"e", "f", "a"}, {{1, 2, SpanKind::EntityPage}}, v);
    apply_mlm(second.enc, mc, v, 12);
    PairAttach pb;
    pb.pair_index = 0;
    pb.targets.push_back({page_prefix_target({"f", "f", "b"}, 8, v), false});
    pb.targets.push_back({flatten_fact({"a"}, {"c"}, v), true});
    second.attach = {pb};
    batch.items.push_back(second);
    return batch;
}

}  // namespace

TEST_CASE("gelu matches its closed form at reference points") {
    // erf-based values computed independently: gelu(x) = x/2 (1 + erf(x/sqrt 2)).
    REQUIRE(gelu(0.0) == 0.0);
    REQUIRE_THAT(gelu(1.0), Catch::Matchers::WithinAbs(0.841344746068543, 1e-15));
    REQUIRE_THAT(gelu(-1.0), Catch::Matchers::WithinAbs(-0.158655253931457, 1e-15));
    REQUIRE_THAT(gelu(2.5), Catch::Matchers::WithinAbs(2.4844758366855597, 1e-14));
    // Derivative against a central difference.
    for (double x : {-2.0, -0.5, 0.0, 0.3, 1.7}) {
        double h = 1e-6;
        double fd = (gelu(x + h) - gelu(x - h)) / (2 * h);
        REQUIRE_THAT(gelu_grad(x), Catch::Matchers::WithinAbs(fd, 1e-9));
    }
}

TEST_CASE("layer norm reproduces a hand-computed row") {
    DMat x(1, 4);
    x.at(0, 0) = 1.0;
    x.at(0, 1) = 2.0;
    x.at(0, 2) = 3.0;
    x.at(0, 3) = 6.0;
    Tensor gamma, beta;
    gamma.shape = {4};
    gamma.v = {1.0, 2.0, 1.0, 0.5};
    beta.shape = {4};
    beta.v = {0.0, 0.0, 1.0, -1.0};
    LnCache cache;
    DMat y = layer_norm_fwd(x, gamma, beta, cache);
    // mean 3, variance ((4+1+0+9)/4)=3.5, rstd = 1/sqrt(3.5 + 1e-5).
    double rstd = 1.0 / std::sqrt(3.5 + 1e-5);
    REQUIRE_THAT(y.at(0, 0), Catch::Matchers::WithinAbs(-2.0 * rstd, 1e-12));
    REQUIRE_THAT(y.at(0, 1), Catch::Matchers::WithinAbs(2.0 * (-1.0) * rstd, 1e-12));
    REQUIRE_THAT(y.at(0, 2), Catch::Matchers::WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(y.at(0, 3), Catch::Matchers::WithinAbs(0.5 * 3.0 * rstd - 1.0, 1e-12));
}

TEST_CASE("linear layer matches a manual matmul") {
    DMat x(2, 3);
    double vals[] = {1, -2, 0.5, 0, 3, -1};
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c) x.at(r, c) = vals[r * 3 + c];
    Tensor w, b;
    w.shape = {3, 2};
    w.v = {1, 0, 0, 1, 1, 1};  // rows are input dims
    b.shape = {2};
    b.v = {0.25, -0.25};
    DMat y = linear_fwd(x, w, b);
    REQUIRE_THAT(y.at(0, 0), Catch::Matchers::WithinAbs(1 + 0.5 + 0.25, 1e-15));
    REQUIRE_THAT(y.at(0, 1), Catch::Matchers::WithinAbs(-2 + 0.5 - 0.25, 1e-15));
    REQUIRE_THAT(y.at(1, 0), Catch::Matchers::WithinAbs(-1 + 0.25, 1e-15));
    REQUIRE_THAT(y.at(1, 1), Catch::Matchers::WithinAbs(3 - 1 - 0.25, 1e-15));
}

TEST_CASE("masked attention assigns exactly zero weight to invisible slots") {
    Vocab v = tiny_vocab();
    ModelConfig cfg = tiny_config(v);
    ModelParams params = init_params(cfg, 3);
    EncoderInput in = assemble_encoder_input(
        {"a", "b", "c"}, {{0, 0, SpanKind::EntityPage}, {2, 2, SpanKind::Relational}}, v);
    AttentionPlan plan = encoder_plan(in);
    EncodeCache ec = encode_fwd(params, cfg, in, plan);
    const LayerCache& lc = ec.stack.layers[0];
    for (int hd = 0; hd < cfg.heads; ++hd) {
        const DMat& probs = lc.probs[static_cast<size_t>(hd)];
        for (int q = 0; q < plan.n; ++q) {
            double sum = 0.0;
            for (int c = 0; c < plan.n; ++c) {
                if (!plan.at(q, c)) {
                    REQUIRE(probs.at(q, c) == 0.0);  // exact, not approximate
                } else {
                    REQUIRE(probs.at(q, c) > 0.0);
                }
                sum += probs.at(q, c);
            }
            REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
        }
    }
}

TEST_CASE("a plan with an unreadable row raises a numeric error") {
    Vocab v = tiny_vocab();
    ModelConfig cfg = tiny_config(v);
    ModelParams params = init_params(cfg, 3);
    EncoderInput in = assemble_encoder_input({"a", "b"}, {}, v);
    AttentionPlan plan = encoder_plan(in);
    for (int c = 0; c < plan.n; ++c) plan.set(1, c, false);
    REQUIRE_THROWS_AS(encode_fwd(params, cfg, in, plan), NumericError);
}

TEST_CASE("text states are bit-identical with and without marker pairs") {
    Vocab v = tiny_vocab();
    ModelConfig cfg = tiny_config(v);
    ModelParams params = init_params(cfg, 17);
    std::vector<std::string> sent = {"a", "c", "e", "b", "f"};
    EncoderInput bare = assemble_encoder_input(sent, {}, v);
    EncoderInput marked = assemble_encoder_input(
        sent, {{0, 2, SpanKind::EntityPage}, {1, 1, SpanKind::Relational}, {3, 4, SpanKind::EntityPage}},
        v);
    DMat h_bare = encode(params, cfg, bare, encoder_plan(bare));
    DMat h_marked = encode(params, cfg, marked, encoder_plan(marked));
    REQUIRE(bare.length() == 7);
    for (int r = 0; r < bare.length(); ++r)
        for (int c = 0; c < cfg.hidden; ++c) REQUIRE(h_bare.at(r, c) == h_marked.at(r, c));
}

TEST_CASE("span representation modes pick the documented rows") {
    Vocab v = tiny_vocab();
    ModelConfig cfg = tiny_config(v);
    ModelParams params = init_params(cfg, 5);
    EncoderInput in = assemble_encoder_input({"a", "b", "c", "d"}, {{1, 2, SpanKind::EntityPage}}, v);
    DMat h = encode(params, cfg, in, encoder_plan(in));
    const MarkerPair& pair = in.pairs[0];
    std::vector<double> marker = span_representation(h, pair, SpanRepMode::Marker);
    std::vector<double> concat = span_representation(h, pair, SpanRepMode::TokenConcat);
    REQUIRE(marker.size() == static_cast<size_t>(2 * cfg.hidden));
    REQUIRE(concat.size() == static_cast<size_t>(2 * cfg.hidden));
    for (int c = 0; c < cfg.hidden; ++c) {
        REQUIRE(marker[static_cast<size_t>(c)] == h.at(pair.open_index, c));
        REQUIRE(marker[static_cast<size_t>(cfg.hidden + c)] == h.at(pair.close_index, c));
        // Text rows for span [1,2] sit at 2 and 3 after the [CLS] shift.
        REQUIRE(concat[static_cast<size_t>(c)] == h.at(2, c));
        REQUIRE(concat[static_cast<size_t>(cfg.hidden + c)] == h.at(3, c));
    }
}

TEST_CASE("negative log likelihood matches a manual log-softmax") {
    DMat logits(3, 4);
    double vals[] = {0.5, -1.0, 2.0, 0.0, 1.0, 1.0, 1.0, 1.0, -2.0, 0.0, 0.5, 3.0};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) logits.at(r, c) = vals[r * 4 + c];
    DecoderTarget t;
    t.slot_ids = {2, 0, 3};
    t.loss_mask = {true, false, true};
    // Slot 1's loss (logits row 0, class 2) plus slot 3's (logits row 2, class 3).
    auto lse = [&](int r) {
        double m = logits.at(r, 0);
        for (int c = 1; c < 4; ++c) m = std::max(m, logits.at(r, c));
        double s = 0.0;
        for (int c = 0; c < 4; ++c) s += std::exp(logits.at(r, c) - m);
        return m + std::log(s);
    };
    double expect = (lse(0) - logits.at(0, 2)) + (lse(2) - logits.at(2, 3));
    REQUIRE_THAT(nll_sum(logits, t), Catch::Matchers::WithinAbs(expect, 1e-13));
}

TEST_CASE("combined loss gradients agree with central finite differences") {
    Vocab v = tiny_vocab();
    ModelConfig cfg = tiny_config(v);
    ModelParams params = init_params(cfg, 21);
    Batch batch = tiny_batch(v);

    GradMap grads;
    grads.init_like(params);
    combined_loss_grad(params, cfg, batch, grads);

    auto loss_at = [&]() { return combined_loss(params, cfg, batch).total; };
    // Fourth-order central differences keep the round-off floor well below the
    // tolerance even for coordinates whose gradient is tiny.
    const double h = 1e-3;
    Rng pick(99);
    for (auto& [name, tensor] : params.t) {
        size_t n = tensor.v.size();
        for (int trial = 0; trial < 3; ++trial) {
            size_t idx = static_cast<size_t>(pick.below(n));
            double saved = tensor.v[idx];
            auto eval = [&](double delta) {
                tensor.v[idx] = saved + delta;
                double l = loss_at();
                tensor.v[idx] = saved;
                return l;
            };
            double fd = (eval(-2 * h) - 8 * eval(-h) + 8 * eval(h) - eval(2 * h)) / (12 * h);
            double an = grads.at(name)[idx];
            double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
            INFO(name << "[" << idx << "] fd=" << fd << " an=" << an);
            REQUIRE(std::abs(fd - an) / denom < 1e-6);
        }
    }
}

TEST_CASE("decoder logits for a slot ignore later target inputs") {
    Vocab v = tiny_vocab();
    ModelConfig cfg = tiny_config(v);
    ModelParams params = init_params(cfg, 31);
    std::vector<double> g_s(static_cast<size_t>(2 * cfg.hidden), 0.1);
    for (size_t i = 0; i < g_s.size(); ++i) g_s[i] = 0.05 * static_cast<double>(i % 7) - 0.1;
    DecoderTarget t = page_prefix_target({"a", "b", "c", "d", "e"}, 8, v);
    AttentionPlan plan = decoder_plan(t.length(), 1, 2);
    DMat base = decode_logits(params, cfg, g_s, t, plan);
    // Changing y_5 must not affect logits for y_1..y_5 (rows 0..4 condition on
    // slots before their own reading position).
    DecoderTarget t2 = t;
    t2.slot_ids[4] = v.id("f");
    DMat changed = decode_logits(params, cfg, g_s, t2, plan);
    // The final target input feeds a slot no logit row reads, so every row of
    // the logit matrix is unchanged.
    for (int r = 0; r < base.rows; ++r)
        for (int c = 0; c < base.cols; ++c) REQUIRE(base.at(r, c) == changed.at(r, c));
}

TEST_CASE("decoder window bounds which earlier slots reach a logit row") {
    Vocab v = tiny_vocab();
    ModelConfig cfg = tiny_config(v);
    ModelParams params = init_params(cfg, 33);
    std::vector<double> g_s(static_cast<size_t>(2 * cfg.hidden));
    for (size_t i = 0; i < g_s.size(); ++i) g_s[i] = 0.03 * static_cast<double>(i % 5) - 0.05;
    DecoderTarget t = page_prefix_target({"a", "b", "c", "d", "e", "f"}, 8, v);
    int k = 2;
    AttentionPlan plan = decoder_plan(t.length(), 1, k);
    DMat base = decode_logits(params, cfg, g_s, t, plan);
    // Logits for y_6 are read at the row carrying y_5, which sees y_4 and y_5.
    // Changing y_3 (outside the window) must leave that row untouched;
    // changing y_4 (inside) must move it.
    DecoderTarget outside = t;
    outside.slot_ids[2] = v.id("f");
    DMat out_l = decode_logits(params, cfg, g_s, outside, plan);
    double diff_outside = 0.0;
    for (int c = 0; c < base.cols; ++c) diff_outside += std::abs(base.at(5, c) - out_l.at(5, c));
    REQUIRE(diff_outside == 0.0);
    DecoderTarget inside = t;
    inside.slot_ids[3] = v.id("f");
    DMat in_l = decode_logits(params, cfg, g_s, inside, plan);
    double diff_inside = 0.0;
    for (int c = 0; c < base.cols; ++c) diff_inside += std::abs(base.at(5, c) - in_l.at(5, c));
    REQUIRE(diff_inside > 0.0);
}
