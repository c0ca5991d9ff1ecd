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

#include "kiln/pretrain.hpp"

namespace kiln {

enum class Task : uint8_t { Typing, Ner, RelC };

inline std::string task_name(Task t) {
    switch (t) {
        case Task::Typing: return "typing";
        case Task::Ner: return "ner";
        default: return "relc";
    }
}

inline Task task_from_name(const std::string& s) {
    if (s == "typing") return Task::Typing;
    if (s == "ner") return Task::Ner;
    if (s == "relc") return Task::RelC;
    throw InputError("unknown task: " + s + " (expected typing, ner, or relc)");
}

struct TaskExample {
    std::vector<std::string> tokens;
    int s1 = -1, e1 = -1;  // typing span or relc subject
    int s2 = -1, e2 = -1;  // relc object
    std::vector<std::string> labels;  // typing: set; relc: exactly one
    std::vector<std::string> tags;    // ner, aligned with tokens
};

struct TaskData {
    Task task = Task::Typing;
    std::vector<TaskExample> ex;
};

inline void check_span(int s, int e, int n, const std::string& where) {
    if (s < 0 || e < s || e >= n) throw InputError(where + ": span out of range");
}

inline TaskData load_task_data(const fs::path& path, Task task) {
    TaskData d;
    d.task = task;
    auto rows = read_jsonl(path);
    for (size_t i = 0; i < rows.size(); ++i) {
        std::string where = path.string() + ":" + std::to_string(i + 1);
        const json& j = rows[i];
        TaskExample e;
        e.tokens = require_field(j, "tokens", where).get<std::vector<std::string>>();
        if (e.tokens.empty()) throw InputError(where + ": empty tokens");
        int n = static_cast<int>(e.tokens.size());
        if (task == Task::Typing) {
            auto span = require_field(j, "span", where).get<std::vector<int>>();
            if (span.size() != 2) throw InputError(where + ": span must be [start, end]");
            e.s1 = span[0];
            e.e1 = span[1];
            check_span(e.s1, e.e1, n, where);
            e.labels = require_field(j, "labels", where).get<std::vector<std::string>>();
        } else if (task == Task::RelC) {
            auto subj = require_field(j, "subj", where).get<std::vector<int>>();
            auto obj = require_field(j, "obj", where).get<std::vector<int>>();
            if (subj.size() != 2 || obj.size() != 2)
                throw InputError(where + ": subj/obj must be [start, end]");
            e.s1 = subj[0]; e.e1 = subj[1];
            e.s2 = obj[0]; e.e2 = obj[1];
            check_span(e.s1, e.e1, n, where);
            check_span(e.s2, e.e2, n, where);
            if (!(e.e1 < e.s2 || e.e2 < e.s1)) throw InputError(where + ": overlapping subj/obj spans");
            e.labels = {require_field(j, "label", where).get<std::string>()};
        } else {
            e.tags = require_field(j, "tags", where).get<std::vector<std::string>>();
            if (e.tags.size() != e.tokens.size())
                throw InputError(where + ": tags length does not match tokens");
        }
        d.ex.push_back(std::move(e));
    }
    return d;
}

inline void check_iob2_tag(const std::string& t, const std::string& where) {
    if (t == "O") return;
    if ((t.rfind("B-", 0) == 0 || t.rfind("I-", 0) == 0) && t.size() > 2) return;
    throw InputError(where + ": tag '" + t + "' is not IOB2");
}

// Sorted label inventory across both splits.  For NER these are entity types
// pulled out of B-/I- tags.
inline std::vector<std::string> label_inventory(const TaskData& train, const TaskData& test) {
    std::set<std::string> labels;
    for (const TaskData* d : {&train, &test}) {
        for (const auto& e : d->ex) {
            if (d->task == Task::Ner) {
                for (const auto& t : e.tags) {
                    check_iob2_tag(t, "label inventory");
                    if (t != "O") labels.insert(t.substr(2));
                }
            } else {
                for (const auto& l : e.labels) labels.insert(l);
            }
        }
    }
    if (labels.empty()) throw InputError("empty label inventory");
    return {labels.begin(), labels.end()};
}

// NER tag ids over an inventory of types: O = 0, then (B-type, I-type) pairs
// in inventory order.
inline int ner_tag_id(const std::string& tag, const std::vector<std::string>& types) {
    if (tag == "O") return 0;
    for (size_t i = 0; i < types.size(); ++i) {
        if (tag == "B-" + types[i]) return 1 + 2 * static_cast<int>(i);
        if (tag == "I-" + types[i]) return 2 + 2 * static_cast<int>(i);
    }
    throw InputError("tag outside inventory: " + tag);
}

inline std::string ner_tag_name(int id, const std::vector<std::string>& types) {
    if (id == 0) return "O";
    int t = (id - 1) / 2;
    return ((id - 1) % 2 == 0 ? "B-" : "I-") + types[static_cast<size_t>(t)];
}

// Repairs an IOB2 sequence: an I-X that does not continue an X span is
// rewritten to B-X.  Applying it twice changes nothing.
inline std::vector<std::string> repair_iob2(const std::vector<std::string>& tags) {
    std::vector<std::string> out = tags;
    for (size_t i = 0; i < out.size(); ++i) {
        check_iob2_tag(out[i], "repair_iob2");
        if (out[i].rfind("I-", 0) != 0) continue;
        std::string type = out[i].substr(2);
        bool continues = i > 0 && (out[i - 1] == "B-" + type || out[i - 1] == "I-" + type);
        if (!continues) out[i] = "B-" + type;
    }
    return out;
}

struct TagSpan {
    int start = 0, end = 0;  // inclusive
    std::string type;

    auto tie() const { return std::tie(start, end, type); }
    bool operator<(const TagSpan& o) const { return tie() < o.tie(); }
    bool operator==(const TagSpan& o) const { return tie() == o.tie(); }
};

inline std::vector<TagSpan> spans_from_iob2(const std::vector<std::string>& tags) {
    std::vector<TagSpan> out;
    size_t i = 0;
    while (i < tags.size()) {
        if (tags[i].rfind("B-", 0) == 0) {
            TagSpan s;
            s.type = tags[i].substr(2);
            s.start = static_cast<int>(i);
            size_t j = i + 1;
            while (j < tags.size() && tags[j] == "I-" + s.type) ++j;
            s.end = static_cast<int>(j - 1);
            out.push_back(s);
            i = j;
        } else {
            ++i;
        }
    }
    return out;
}

// Deterministic subsample without replacement; original order is preserved.
inline TaskData subsample(const TaskData& data, double fraction, uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0) throw InputError("subsample fraction must be in (0, 1]");
    if (fraction == 1.0) return data;
    long n = static_cast<long>(data.ex.size());
    long keep = std::llround(fraction * static_cast<double>(n));
    if (keep < 1) throw InputError("subsample would keep zero examples");
    std::vector<int> idx(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = static_cast<int>(i);
    Rng rng(seed_mix(seed, "subsample"));
    rng.shuffle(idx);
    idx.resize(static_cast<size_t>(keep));
    std::sort(idx.begin(), idx.end());
    TaskData out;
    out.task = data.task;
    for (int i : idx) out.ex.push_back(data.ex[static_cast<size_t>(i)]);
    return out;
}

// --- encoding ---

// Inserts [E1]/[/E1] (and [E2]/[/E2]) enclosures inline, then builds the
// encoder input with no marker pairs: downstream inputs are plain text.
inline EncoderInput encode_task_example(const TaskExample& e, Task task, const Vocab& vocab,
                                        int max_position) {
    std::vector<std::string> toks;
    int n = static_cast<int>(e.tokens.size());
    for (int i = 0; i < n; ++i) {
        if (task != Task::Ner && i == e.s1) toks.push_back("[E1]");
        if (task == Task::RelC && i == e.s2) toks.push_back("[E2]");
        toks.push_back(e.tokens[static_cast<size_t>(i)]);
        if (task != Task::Ner && i == e.e1) toks.push_back("[/E1]");
        if (task == Task::RelC && i == e.e2) toks.push_back("[/E2]");
    }
    if (static_cast<int>(toks.size()) + 2 > max_position)
        throw InputError("task example longer than max_position");
    return assemble_encoder_input(toks, {}, vocab);
}

// Text row index of original token i after enclosure insertion ([CLS] offset
// included); used to read per-token states for NER.
inline int ner_row_of_token(int i) { return i + 1; }

// --- fine-tuned model ---

struct FtHyper {
    int epochs = 5;
    int batch = 16;
    double lr = 1e-3;
    double warmup_fraction = 0.1;

    void validate() const {
        if (epochs < 1 || batch < 1 || lr <= 0) throw InputError("bad fine-tune hyperparameters");
    }
};

struct FinetunedModel {
    ModelConfig cfg;
    ModelParams params;
    Vocab vocab;
    Task task = Task::Typing;
    std::vector<std::string> labels;  // types for NER
};

inline int head_dim(Task task, const std::vector<std::string>& labels) {
    int n = static_cast<int>(labels.size());
    return task == Task::Ner ? 1 + 2 * n : n;
}

namespace detail {

struct TaskBatchLoss {
    double loss = 0.0;
    long units = 0;
};

// Forward (and optional backward) over one batch of task examples.  The loss
// is summed per unit (example for typing/relc, text token for NER) and
// normalized by the batch's unit count.
inline TaskBatchLoss task_loss(const FinetunedModel& model, const std::vector<const TaskExample*>& batch,
                               GradMap* grads) {
    const ModelConfig& cfg = model.cfg;
    const Tensor& hw = model.params.at("heads.task.weight");
    const Tensor& hb = model.params.at("heads.task.bias");
    int n_out = hw.dim(0);
    TaskBatchLoss out;
    for (const TaskExample* e : batch) {
        if (model.task == Task::Ner)
            out.units += static_cast<long>(e->tokens.size());
        else
            out.units += 1;
    }
    if (out.units == 0) throw InputError("empty task batch");
    double inv = 1.0 / static_cast<double>(out.units);
    for (const TaskExample* e : batch) {
        EncoderInput enc = encode_task_example(*e, model.task, model.vocab, cfg.max_position);
        AttentionPlan plan = encoder_plan(enc);
        EncodeCache ec = encode_fwd(model.params, cfg, enc, plan);
        const DMat& h = ec.stack.h;
        DMat dh(h.rows, h.cols);
        auto head_logits = [&](int row, std::vector<double>& z) {
            for (int o = 0; o < n_out; ++o) {
                double acc = hb.at(o);
                for (int c = 0; c < cfg.hidden; ++c) acc += hw.at(o, c) * h.at(row, c);
                z[static_cast<size_t>(o)] = acc;
            }
        };
        auto head_bwd = [&](int row, const std::vector<double>& dz) {
            auto& dhw = grads->at("heads.task.weight");
            auto& dhb = grads->at("heads.task.bias");
            for (int o = 0; o < n_out; ++o) {
                double d = dz[static_cast<size_t>(o)];
                if (d == 0.0) continue;
                dhb[static_cast<size_t>(o)] += d;
                for (int c = 0; c < cfg.hidden; ++c) {
                    dhw[static_cast<size_t>(o) * static_cast<size_t>(cfg.hidden) + static_cast<size_t>(c)] += d * h.at(row, c);
                    dh.at(row, c) += d * hw.at(o, c);
                }
            }
        };
        std::vector<double> z(static_cast<size_t>(n_out)), dz(static_cast<size_t>(n_out));
        if (model.task == Task::Typing) {
            head_logits(0, z);
            std::vector<char> y(static_cast<size_t>(n_out), 0);
            for (const auto& l : e->labels) {
                auto it = std::find(model.labels.begin(), model.labels.end(), l);
                if (it == model.labels.end()) throw InputError("label outside inventory: " + l);
                y[static_cast<size_t>(it - model.labels.begin())] = 1;
            }
            for (int o = 0; o < n_out; ++o) {
                double zo = z[static_cast<size_t>(o)];
                double yo = y[static_cast<size_t>(o)] ? 1.0 : 0.0;
                out.loss += std::max(zo, 0.0) - zo * yo + std::log1p(std::exp(-std::fabs(zo)));
                dz[static_cast<size_t>(o)] = (1.0 / (1.0 + std::exp(-zo)) - yo) * inv;
            }
            if (grads) head_bwd(0, dz);
        } else if (model.task == Task::RelC) {
            head_logits(0, z);
            auto it = std::find(model.labels.begin(), model.labels.end(), e->labels[0]);
            if (it == model.labels.end()) throw InputError("label outside inventory: " + e->labels[0]);
            int y = static_cast<int>(it - model.labels.begin());
            double lse = log_sum_exp(z.data(), n_out);
            out.loss += lse - z[static_cast<size_t>(y)];
            if (grads) {
                for (int o = 0; o < n_out; ++o)
                    dz[static_cast<size_t>(o)] = std::exp(z[static_cast<size_t>(o)] - lse) * inv;
                dz[static_cast<size_t>(y)] -= inv;
                head_bwd(0, dz);
            }
        } else {
            for (int i = 0; i < static_cast<int>(e->tokens.size()); ++i) {
                int row = ner_row_of_token(i);
                head_logits(row, z);
                int y = ner_tag_id(e->tags[static_cast<size_t>(i)], model.labels);
                double lse = log_sum_exp(z.data(), n_out);
                out.loss += lse - z[static_cast<size_t>(y)];
                if (grads) {
                    for (int o = 0; o < n_out; ++o)
                        dz[static_cast<size_t>(o)] = std::exp(z[static_cast<size_t>(o)] - lse) * inv;
                    dz[static_cast<size_t>(y)] -= inv;
                    head_bwd(row, dz);
                }
            }
        }
        if (grads) encode_bwd(model.params, cfg, enc, plan, ec, dh, *grads);
    }
    out.loss *= inv;
    if (!std::isfinite(out.loss)) throw NumericError("non-finite fine-tuning loss");
    return out;
}

}  // namespace detail

// Full fine-tuning from a (possibly decoder-stripped) checkpoint: new task
// head, Adam over every parameter, linear warmup and decay.  The same seed
// drives subsampling, head init, and batch order.
inline FinetunedModel finetune(const Checkpoint& ck, const TaskData& train,
                               const std::vector<std::string>& labels, const FtHyper& hp,
                               uint64_t seed) {
    hp.validate();
    if (train.ex.empty()) throw InputError("empty fine-tuning set");
    FinetunedModel model;
    model.cfg = ck.cfg;
    model.vocab = ck.vocab;
    model.task = train.task;
    model.labels = labels;
    for (const auto& [name, tensor] : ck.params.t)
        if (name.rfind("decoder.", 0) != 0) model.params.t.emplace(name, tensor);
    int n_out = head_dim(train.task, labels);
    Tensor hw = Tensor::zeros({n_out, ck.cfg.hidden});
    detail::fill_normal(hw, seed_mix(seed, "head"), 0.02);
    model.params.t.emplace("heads.task.weight", std::move(hw));
    model.params.t.emplace("heads.task.bias", Tensor::zeros({n_out}));
    AdamState optim;
    optim.init_like(model.params);
    GradMap grads;
    grads.init_like(model.params);
    int n = static_cast<int>(train.ex.size());
    int steps_per_epoch = (n + hp.batch - 1) / hp.batch;
    int total_steps = steps_per_epoch * hp.epochs;
    int step = 0;
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        std::vector<int> order(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
        Rng rng(seed_mix(seed, "ft-epoch", static_cast<uint64_t>(epoch)));
        rng.shuffle(order);
        for (int b = 0; b < steps_per_epoch; ++b) {
            std::vector<const TaskExample*> batch;
            for (int i = b * hp.batch; i < std::min(n, (b + 1) * hp.batch); ++i)
                batch.push_back(&train.ex[static_cast<size_t>(order[static_cast<size_t>(i)])]);
            grads.zero();
            detail::task_loss(model, batch, &grads);
            ++step;
            double lr = lr_schedule(step, total_steps, hp.lr, hp.warmup_fraction);
            adam_step(model.params, grads, optim, lr, 0.9, 0.999, 1e-8);
        }
    }
    return model;
}

struct EvalOutcome {
    double metric = 0.0;
    std::string metric_name;
    bool degenerate = false;  // NER that predicts no spans at all
    json details;
};

inline std::vector<std::string> predict_tags(const FinetunedModel& model, const TaskExample& e) {
    EncoderInput enc = encode_task_example(e, Task::Ner, model.vocab, model.cfg.max_position);
    AttentionPlan plan = encoder_plan(enc);
    DMat h = encode(model.params, model.cfg, enc, plan);
    const Tensor& hw = model.params.at("heads.task.weight");
    const Tensor& hb = model.params.at("heads.task.bias");
    int n_out = hw.dim(0);
    std::vector<std::string> tags;
    for (int i = 0; i < static_cast<int>(e.tokens.size()); ++i) {
        int row = ner_row_of_token(i);
        int best = 0;
        double best_z = -1e300;
        for (int o = 0; o < n_out; ++o) {
            double acc = hb.at(o);
            for (int c = 0; c < model.cfg.hidden; ++c) acc += hw.at(o, c) * h.at(row, c);
            if (acc > best_z) {
                best_z = acc;
                best = o;
            }
        }
        tags.push_back(ner_tag_name(best, model.labels));
    }
    return repair_iob2(tags);
}

// Typing: micro-F1 over (example, label) decisions at threshold 0.5.
// NER: span-level micro-F1 after IOB2 repair.
// RelC: accuracy, or micro-F1 excluding no_relation when that label exists.
inline EvalOutcome evaluate(const FinetunedModel& model, const TaskData& test) {
    if (test.task != model.task) throw InputError("evaluate: task mismatch");
    const Tensor& hw = model.params.at("heads.task.weight");
    const Tensor& hb = model.params.at("heads.task.bias");
    int n_out = hw.dim(0);
    EvalOutcome out;
    auto cls_logits = [&](const TaskExample& e, std::vector<double>& z) {
        EncoderInput enc = encode_task_example(e, model.task, model.vocab, model.cfg.max_position);
        AttentionPlan plan = encoder_plan(enc);
        DMat h = encode(model.params, model.cfg, enc, plan);
        for (int o = 0; o < n_out; ++o) {
            double acc = hb.at(o);
            for (int c = 0; c < model.cfg.hidden; ++c) acc += hw.at(o, c) * h.at(0, c);
            z[static_cast<size_t>(o)] = acc;
        }
    };
    if (model.task == Task::Typing) {
        long tp = 0, fp = 0, fn = 0;
        std::vector<double> z(static_cast<size_t>(n_out));
        for (const auto& e : test.ex) {
            cls_logits(e, z);
            std::vector<char> gold(static_cast<size_t>(n_out), 0);
            for (const auto& l : e.labels) {
                auto it = std::find(model.labels.begin(), model.labels.end(), l);
                if (it == model.labels.end()) throw InputError("test label outside inventory: " + l);
                gold[static_cast<size_t>(it - model.labels.begin())] = 1;
            }
            for (int o = 0; o < n_out; ++o) {
                bool pred = z[static_cast<size_t>(o)] > 0.0;  // sigmoid > 0.5
                if (pred && gold[static_cast<size_t>(o)]) ++tp;
                else if (pred) ++fp;
                else if (gold[static_cast<size_t>(o)]) ++fn;
            }
        }
        double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        out.metric = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        out.metric_name = "micro_f1";
        out.details = {{"tp", tp}, {"fp", fp}, {"fn", fn}};
    } else if (model.task == Task::RelC) {
        bool f1_mode = std::find(model.labels.begin(), model.labels.end(), "no_relation") != model.labels.end();
        long correct = 0;
        long tp = 0, fp = 0, fn = 0;
        std::vector<double> z(static_cast<size_t>(n_out));
        for (const auto& e : test.ex) {
            cls_logits(e, z);
            int best = 0;
            for (int o = 1; o < n_out; ++o)
                if (z[static_cast<size_t>(o)] > z[static_cast<size_t>(best)]) best = o;
            const std::string& pred = model.labels[static_cast<size_t>(best)];
            const std::string& gold = e.labels[0];
            if (pred == gold) ++correct;
            if (f1_mode) {
                bool pred_rel = pred != "no_relation";
                bool gold_rel = gold != "no_relation";
                if (pred_rel && gold_rel && pred == gold) ++tp;
                else {
                    if (pred_rel) ++fp;
                    if (gold_rel) ++fn;
                }
            }
        }
        if (f1_mode) {
            double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
            double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
            out.metric = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
            out.metric_name = "micro_f1_no_rel";
            out.details = {{"tp", tp}, {"fp", fp}, {"fn", fn}, {"accuracy", test.ex.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.ex.size())}};
        } else {
            out.metric = test.ex.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.ex.size());
            out.metric_name = "accuracy";
            out.details = {{"correct", correct}, {"total", test.ex.size()}};
        }
    } else {
        long tp = 0, fp = 0, fn = 0, pred_total = 0;
        for (const auto& e : test.ex) {
            auto pred_spans = spans_from_iob2(predict_tags(model, e));
            auto gold_spans = spans_from_iob2(repair_iob2(e.tags));
            pred_total += static_cast<long>(pred_spans.size());
            for (const auto& s : pred_spans) {
                if (std::find(gold_spans.begin(), gold_spans.end(), s) != gold_spans.end()) ++tp;
                else ++fp;
            }
            for (const auto& s : gold_spans)
                if (std::find(pred_spans.begin(), pred_spans.end(), s) == pred_spans.end()) ++fn;
        }
        double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        out.metric = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        out.metric_name = "span_micro_f1";
        out.degenerate = pred_total == 0;
        out.details = {{"tp", tp}, {"fp", fp}, {"fn", fn}, {"predicted_spans", pred_total}};
    }
    return out;
}

// --- significance ---

namespace detail {

inline double betacf(double a, double b, double x) {
    const int kMaxIter = 200;
    const double eps = 3e-12, fpmin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

inline double ibeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(1.0 - x);
    double front = std::exp(ln);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

// P(T <= t) for Student's t with nu degrees of freedom.
inline double student_cdf(double t, double nu) {
    double x = nu / (nu + t * t);
    double tail = 0.5 * ibeta(0.5 * nu, 0.5, x);
    return t >= 0 ? 1.0 - tail : tail;
}

}  // namespace detail

struct TTestResult {
    double mean_a = 0.0, mean_b = 0.0;
    double t = 0.0;
    double df = 0.0;
    double p_one_sided = 1.0;  // H1: mean(a) > mean(b)
    bool significant_005 = false;
    bool significant_01 = false;
    bool degenerate = false;  // pooled variance was zero
};

// Two-sample pooled-variance Student's t-test, one-sided (is a's mean higher
// than b's?).  With zero pooled variance: equal means give t = 0, p = 0.5;
// unequal means give an infinite t with p = 0 or 1 and the degenerate flag.
inline TTestResult t_test_one_sided(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw InputError("t-test needs at least two samples per side");
    TTestResult r;
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    r.mean_a = mean(a);
    r.mean_b = mean(b);
    double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double ssa = 0.0, ssb = 0.0;
    for (double x : a) ssa += (x - r.mean_a) * (x - r.mean_a);
    for (double x : b) ssb += (x - r.mean_b) * (x - r.mean_b);
    r.df = na + nb - 2.0;
    double pooled = (ssa + ssb) / r.df;
    if (pooled == 0.0) {
        r.degenerate = true;
        if (r.mean_a == r.mean_b) {
            r.t = 0.0;
            r.p_one_sided = 0.5;
        } else {
            r.t = r.mean_a > r.mean_b ? std::numeric_limits<double>::infinity()
                                      : -std::numeric_limits<double>::infinity();
            r.p_one_sided = r.mean_a > r.mean_b ? 0.0 : 1.0;
        }
    } else {
        double se = std::sqrt(pooled * (1.0 / na + 1.0 / nb));
        r.t = (r.mean_a - r.mean_b) / se;
        r.p_one_sided = 1.0 - detail::student_cdf(r.t, r.df);
    }
    r.significant_005 = r.p_one_sided < 0.05;
    r.significant_01 = r.p_one_sided < 0.1;
    return r;
}

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return {m, sd};
}

}  // namespace kiln
