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

// End-to-end acceptance checks.  Each criterion prints one PASS/FAIL line;
// the exit code is the number of failing criteria.  Expensive fixtures (the
// toy corpus, the aligned data, the two pre-training runs) are built once in
// a work directory and shared across criteria.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kiln/commands.hpp"

namespace {

using namespace kiln;

struct Fail : std::runtime_error {
    explicit Fail(const std::string& m) : std::runtime_error(m) {}
};

void expect(bool cond, const std::string& msg) {
    if (!cond) throw Fail(msg);
}

template <typename T>
std::string str(const T& v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

int64_t ulp_distance(double a, double b) {
    if (a == b) return 0;
    int64_t ia, ib;
    std::memcpy(&ia, &a, 8);
    std::memcpy(&ib, &b, 8);
    if ((ia < 0) != (ib < 0)) return INT64_MAX;
    int64_t d = ia - ib;
    return d < 0 ? -d : d;
}

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// Fixtures shared across criteria, built on first use.
struct Shared {
    fs::path work;
    bool corpus_done = false, data_done = false, scrub_done = false;
    bool eplusr_done = false, mlmonly_done = false;

    fs::path corpus() {
        if (!corpus_done) {
            GenToyOpts o;
            o.out = work / "corpus";
            run_gen_toy(o);
            corpus_done = true;
        }
        return work / "corpus";
    }

    fs::path data() {
        if (!data_done) {
            BuildDataOpts o;
            fs::path c = corpus();
            o.docs = c / "docs.jsonl";
            o.entities = c / "entities.jsonl";
            o.facts = c / "facts.tsv";
            o.relations = c / "relations.tsv";
            o.top_k = 2;
            o.out = work / "data";
            run_build_data(o);
            data_done = true;
        }
        return work / "data";
    }

    fs::path data_scrubbed() {
        if (!scrub_done) {
            BuildDataOpts o;
            fs::path c = corpus();
            o.docs = c / "docs.jsonl";
            o.entities = c / "entities.jsonl";
            o.facts = c / "facts.tsv";
            o.relations = c / "relations.tsv";
            o.heldout = (c / "heldout_facts.tsv").string();
            o.top_k = 2;
            o.out = work / "data_scrub";
            run_build_data(o);
            scrub_done = true;
        }
        return work / "data_scrub";
    }

    fs::path pretrain_run(Variant variant) {
        bool& done = variant == Variant::MlmOnly ? mlmonly_done : eplusr_done;
        fs::path out = work / (variant == Variant::MlmOnly ? "mlmonly" : "eplusr");
        if (!done) {
            PretrainOpts o;
            o.data_dir = data();
            o.docs = corpus() / "docs.jsonl";
            o.out = out;
            o.train.variant = variant;
            run_pretrain(o);
            done = true;
        }
        return out;
    }
};

std::vector<std::string> words_n(int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back("w" + std::to_string(i));
    return out;
}

Vocab vocab_of(const std::vector<std::string>& words) {
    std::map<std::string, long> counts;
    for (const auto& w : words) counts[w] = 5;
    return Vocab::build(counts);
}

// ---------------------------------------------------------------------------
// A1: encoder visibility equals a rule-by-rule oracle on random inputs.

void a1(Shared&) {
    double t0 = now_seconds();
    std::vector<std::string> words = words_n(20);
    Vocab v = vocab_of(words);
    Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        int n_tok = 1 + static_cast<int>(rng.below(20));
        std::vector<std::string> sent;
        for (int i = 0; i < n_tok; ++i) sent.push_back(words[rng.below(words.size())]);
        int n_spans = static_cast<int>(rng.below(7));
        std::vector<SpanRequest> spans;
        for (int s = 0; s < n_spans; ++s) {
            SpanRequest r;
            r.start = static_cast<int>(rng.below(static_cast<size_t>(n_tok)));
            r.end = std::min(n_tok - 1, r.start + static_cast<int>(rng.below(4)));
            r.kind = rng.bernoulli(0.5) ? SpanKind::EntityPage : SpanKind::Relational;
            spans.push_back(r);
        }
        EncoderInput in = assemble_encoder_input(sent, spans, v);
        AttentionPlan plan = encoder_plan(in);
        int n = in.length();
        expect(plan.n == n, "plan size mismatch");

        std::vector<int> partner(static_cast<size_t>(n), -1);
        for (const auto& p : in.pairs) {
            partner[static_cast<size_t>(p.open_index)] = p.close_index;
            partner[static_cast<size_t>(p.close_index)] = p.open_index;
        }
        for (int q = 0; q < n; ++q) {
            bool q_text = in.roles[static_cast<size_t>(q)] == Role::Text;
            for (int c = 0; c < n; ++c) {
                bool c_text = in.roles[static_cast<size_t>(c)] == Role::Text;
                bool want;
                if (q_text && c_text) want = true;                      // text sees text
                else if (q_text) want = false;                          // text never sees markers
                else if (c_text) want = true;                           // marker sees all text
                else if (c == q || c == partner[static_cast<size_t>(q)]) want = true;  // self and partner
                else want = false;                                      // other pairs stay hidden
                expect(plan.at(q, c) == want,
                       "trial " + str(trial) + " q=" + str(q) + " c=" + str(c) + ": got " +
                           str(int(plan.at(q, c))) + " want " + str(int(want)));
            }
        }
    }
    double dt = now_seconds() - t0;
    expect(dt < 10.0, "took " + str(dt) + "s, budget 10s");
}

// ---------------------------------------------------------------------------
// A2: text hidden states are bit-identical with and without marker pairs.

void a2(Shared&) {
    double t0 = now_seconds();
    std::vector<std::string> words = words_n(30);
    Vocab v = vocab_of(words);
    ModelConfig cfg;
    cfg.vocab_size = static_cast<int>(v.size());
    ModelParams params = init_params(cfg, 123);
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        int n_tok = 1 + static_cast<int>(rng.below(20));
        std::vector<std::string> sent;
        for (int i = 0; i < n_tok; ++i) sent.push_back(words[rng.below(words.size())]);
        int n_spans = 1 + static_cast<int>(rng.below(5));
        std::vector<SpanRequest> spans;
        for (int s = 0; s < n_spans; ++s) {
            SpanRequest r;
            r.start = static_cast<int>(rng.below(static_cast<size_t>(n_tok)));
            r.end = std::min(n_tok - 1, r.start + static_cast<int>(rng.below(3)));
            r.kind = rng.bernoulli(0.5) ? SpanKind::EntityPage : SpanKind::Relational;
            spans.push_back(r);
        }
        EncoderInput with = assemble_encoder_input(sent, spans, v);
        EncoderInput without = assemble_encoder_input(sent, {}, v);
        DMat h_with = encode(params, cfg, with, encoder_plan(with));
        DMat h_without = encode(params, cfg, without, encoder_plan(without));
        int text_len = with.text_length();
        expect(text_len == without.length(), "text length mismatch");
        for (int i = 0; i < text_len; ++i)
            for (int c = 0; c < cfg.hidden; ++c) {
                double d = std::fabs(h_with.at(i, c) - h_without.at(i, c));
                expect(d == 0.0, "trial " + str(trial) + " row " + str(i) + " col " + str(c) +
                                     ": abs diff " + str(d));
            }
    }
    double dt = now_seconds() - t0;
    expect(dt < 30.0, "took " + str(dt) + "s, budget 30s");
}

// ---------------------------------------------------------------------------
// A3: the default joint run learns; every term improves materially.

void a3(Shared& sh) {
    double t0 = now_seconds();
    fs::path run = sh.pretrain_run(Variant::EPlusR);
    auto rows = read_jsonl(run / "metrics.jsonl");
    expect(rows.size() == 300, "expected 300 metric rows, got " + str(rows.size()));
    auto mean_range = [&](const char* key, int lo, int hi) {
        double sum = 0.0;
        int n = 0;
        for (const auto& r : rows) {
            int s = r.at("step").get<int>();
            if (s >= lo && s <= hi) {
                sum += r.at(key).get<double>();
                ++n;
            }
        }
        expect(n == hi - lo + 1, std::string("missing steps for ") + key);
        return sum / n;
    };
    double head_total = mean_range("total", 1, 10);
    double tail_total = mean_range("total", 291, 300);
    expect(tail_total < 0.60 * head_total,
           "total " + str(tail_total) + " not below 60% of " + str(head_total));
    for (const char* key : {"l_mlm", "l_struct", "l_unstruct"}) {
        double head = mean_range(key, 1, 10);
        double tail = mean_range(key, 291, 300);
        expect(tail <= 0.80 * head,
               std::string(key) + " dropped only " + str(100.0 * (1.0 - tail / head)) + "%");
    }
    double dt = now_seconds() - t0;
    expect(dt < 600.0, "took " + str(dt) + "s, budget 600s");
}

// ---------------------------------------------------------------------------
// A4: analytic gradients match fourth-order central differences at h=1e-4.

void a4(Shared&) {
    double t0 = now_seconds();
    std::vector<std::string> words = {"alder", "birch", "cedar", "dun",   "elm",  "fir",
                                      "grove", "hazel", "iris",  "juni", "kelp", "larch"};
    Vocab v = vocab_of(words);
    ModelConfig cfg;
    cfg.hidden = 8;
    cfg.heads = 2;
    cfg.encoder_layers = 1;
    cfg.decoder_layers = 1;
    cfg.ffn = 16;
    cfg.max_position = 32;
    cfg.vocab_size = static_cast<int>(v.size());
    ModelParams params = init_params(cfg, 31);

    auto id = [&](const char* w) { return v.id(w); };
    Batch batch;
    {
        SeqItem item;
        item.enc = assemble_encoder_input(
            {"alder", "birch", "cedar", "dun", "elm", "fir"},
            {{0, 1, SpanKind::EntityPage}, {3, 4, SpanKind::Relational}}, v);
        item.enc.mlm_labels.assign(static_cast<size_t>(item.enc.length()), -1);
        for (int p : {2, 5}) {
            item.enc.mlm_labels[static_cast<size_t>(p)] = item.enc.ids[static_cast<size_t>(p)];
            item.enc.ids[static_cast<size_t>(p)] = Vocab::kMask;
        }
        PairAttach page;
        page.pair_index = 0;
        page.targets.push_back({page_prefix_target({"grove", "hazel", "iris", "juni"}, 8, v), false});
        PairAttach rel;
        rel.pair_index = 1;
        rel.targets.push_back({flatten_fact({"grove", "hazel"}, {"kelp", "larch"}, v), true});
        item.attach = {page, rel};
        batch.items.push_back(item);
    }
    {
        SeqItem item;
        item.enc = assemble_encoder_input({"fir", "elm", "dun", "cedar"},
                                          {{2, 2, SpanKind::EntityPage}}, v);
        PairAttach page;
        page.pair_index = 0;
        page.targets.push_back({page_prefix_target({"alder", "birch", "cedar"}, 8, v), false});
        item.attach = {page};
        batch.items.push_back(item);
    }

    GradMap grads;
    grads.init_like(params);
    combined_loss_grad(params, cfg, batch, grads);
    auto loss = [&]() { return combined_loss(params, cfg, batch).total; };

    struct Coord {
        std::string tensor;
        size_t flat;
    };
    std::vector<Coord> coords;
    auto add = [&](const std::string& t, int r, int c, int ncols) {
        coords.push_back({t, static_cast<size_t>(r) * static_cast<size_t>(ncols) + static_cast<size_t>(c)});
    };
    for (auto [r, c] : std::vector<std::pair<int, int>>{{Vocab::kPrompt1, 0},
                                                        {Vocab::kPrompt1, 5},
                                                        {Vocab::kPrompt2, 2},
                                                        {Vocab::kPrompt2, 7},
                                                        {Vocab::kPrompt3, 1},
                                                        {Vocab::kPrompt3, 6},
                                                        {Vocab::kCls, 3},
                                                        {Vocab::kMask, 1},
                                                        {id("alder"), 0},
                                                        {id("cedar"), 4},
                                                        {id("grove"), 2},
                                                        {id("larch"), 7}})
        add("embeddings.token", r, c, cfg.hidden);
    for (auto [r, c] : std::vector<std::pair<int, int>>{{0, 0}, {0, 5}, {1, 2}, {1, 7}, {2, 1}, {2, 6},
                                                        {3, 3}, {4, 0}, {4, 4}, {5, 2}, {6, 5}, {7, 1}})
        add("embeddings.position", r, c, cfg.hidden);
    for (auto [r, c] : std::vector<std::pair<int, int>>{{0, 0}, {1, 3}, {2, 6}, {3, 1}, {4, 4}, {5, 7},
                                                        {6, 2}, {7, 5}, {0, 7}, {3, 4}, {5, 0}, {7, 7}})
        add("encoder.layer0.attn.wq", r, c, cfg.hidden);
    for (auto [r, c] : std::vector<std::pair<int, int>>{{0, 1}, {1, 4}, {2, 7}, {3, 2}, {4, 5}, {5, 0},
                                                        {6, 3}, {7, 6}, {0, 6}, {2, 3}, {4, 1}, {6, 7}})
        add("decoder.layer0.ffn.w1", r, c, cfg.ffn);
    for (auto [r, c] : std::vector<std::pair<int, int>>{{0, 0},  {1, 5},  {3, 2},  {5, 7},  {7, 4},  {9, 1},
                                                        {11, 6}, {13, 3}, {15, 0}, {2, 7},  {8, 4},  {14, 2}})
        add("decoder.span_proj.weight", r, c, cfg.hidden);
    expect(coords.size() == 60, "coordinate list size");

    const double h = 1e-4;
    for (const auto& co : coords) {
        std::vector<double>& tv = params.at(co.tensor).v;
        double orig = tv[co.flat];
        auto eval_at = [&](double x) {
            tv[co.flat] = x;
            return loss();
        };
        double fm2 = eval_at(orig - 2 * h);
        double fm1 = eval_at(orig - h);
        double fp1 = eval_at(orig + h);
        double fp2 = eval_at(orig + 2 * h);
        tv[co.flat] = orig;
        double fd = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
        double an = grads.at(co.tensor)[co.flat];
        double rel = std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-4});
        expect(rel < 1e-6, co.tensor + "[" + str(co.flat) + "]: fd " + str(fd) + " analytic " +
                               str(an) + " rel " + str(rel));
    }
    double dt = now_seconds() - t0;
    expect(dt < 120.0, "took " + str(dt) + "s, budget 120s");
}

// ---------------------------------------------------------------------------
// A5: a decoder logit row reacts to a perturbed earlier token exactly when
// the token sits within the attention window.

void a5(Shared& sh) {
    Checkpoint ck = load_checkpoint(sh.pretrain_run(Variant::EPlusR) / "final");
    const ModelConfig& cfg = ck.cfg;
    std::vector<int> word_ids;
    for (int i = Vocab::kNumReserved; i < static_cast<int>(ck.vocab.size()) && word_ids.size() < 40; ++i)
        word_ids.push_back(i);
    expect(word_ids.size() >= 20, "trained vocab too small");

    std::vector<std::string> sent;
    for (int i = 0; i < 8; ++i) sent.push_back(ck.vocab.token(word_ids[static_cast<size_t>(i)]));
    EncoderInput in = assemble_encoder_input(sent, {{1, 3, SpanKind::EntityPage}}, ck.vocab);
    DMat hs = encode(ck.params, cfg, in, encoder_plan(in));
    std::vector<double> g_s = span_representation(hs, in.pairs[0], cfg.span_rep);

    const int m = 12;
    Rng rng(505);
    for (int k : {1, 2, 4}) {
        AttentionPlan plan = decoder_plan(m, 1, k);
        for (int fixture = 0; fixture < 20; ++fixture) {
            DecoderTarget tgt;
            for (int i = 0; i < m; ++i) {
                tgt.slot_ids.push_back(word_ids[rng.below(word_ids.size())]);
                tgt.loss_mask.push_back(true);
            }
            int j = 1 + static_cast<int>(rng.below(m - 1));  // perturbed token index, 1-based
            DecoderTarget pert = tgt;
            do {
                pert.slot_ids[static_cast<size_t>(j - 1)] =
                    word_ids[rng.below(word_ids.size())];
            } while (pert.slot_ids[static_cast<size_t>(j - 1)] == tgt.slot_ids[static_cast<size_t>(j - 1)]);

            DMat base = decode_logits(ck.params, cfg, g_s, tgt, plan);
            DMat moved = decode_logits(ck.params, cfg, g_s, pert, plan);
            for (int r = 0; r < m; ++r) {
                double mx = 0.0;
                for (int c = 0; c < cfg.vocab_size; ++c)
                    mx = std::max(mx, std::fabs(base.at(r, c) - moved.at(r, c)));
                bool in_window = r >= j && r - j < k;  // scored token r+1, distance r+1-j <= k
                if (in_window)
                    expect(mx > 0.0, "k=" + str(k) + " fixture " + str(fixture) + " row " + str(r) +
                                         ": expected a change at distance " + str(r + 1 - j));
                else
                    expect(mx == 0.0, "k=" + str(k) + " fixture " + str(fixture) + " row " + str(r) +
                                          ": leaked " + str(mx) + " at distance " + str(r + 1 - j));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// A6: the combined loss decomposes into independently computed terms, and
// soft-prompt slots never contribute to the structured term.

void a6(Shared& sh) {
    Vocab vocab = Vocab::load(sh.data() / "vocab.txt");
    std::vector<InjectionExample> examples;
    for (const auto& row : read_jsonl(sh.data() / "examples.jsonl"))
        examples.push_back(InjectionExample::from_json(row, "examples.jsonl"));
    std::vector<Document> docs = load_docs(sh.corpus() / "docs.jsonl");
    TrainConfig tc;
    DataSet ds = build_dataset(docs, examples, vocab, tc.variant, tc.max_text_len, tc.max_pairs);
    ModelConfig cfg;
    cfg.vocab_size = static_cast<int>(vocab.size());
    ModelParams params = init_params(cfg, tc.seed);
    BatchSchedule sched(tc.seed, static_cast<int>(ds.seqs.size()));

    bool perturbed_once = false;
    for (int step = 1; step <= 50; ++step) {
        Batch b = make_batch(ds, tc, sched, step);
        LossReport rep = combined_loss(params, cfg, b);
        double plain = rep.l_mlm + rep.l_struct + rep.l_unstruct;
        expect(ulp_distance(rep.total, plain) <= 1,
               "step " + str(step) + ": total " + str(rep.total) + " vs sum " + str(plain));

        Batch mlm_only = b;
        for (auto& item : mlm_only.items) item.attach.clear();
        LossReport rm = combined_loss(params, cfg, mlm_only);
        expect(ulp_distance(rm.l_mlm, rep.l_mlm) <= 1, "step " + str(step) + ": isolated l_mlm");
        expect(rm.l_struct == 0.0 && rm.l_unstruct == 0.0, "stripped batch still decodes");

        auto keep_kind = [&](bool structured) {
            Batch out = b;
            for (auto& item : out.items) {
                item.enc.mlm_labels.clear();
                for (auto& pa : item.attach) {
                    std::vector<TargetAttach> kept;
                    for (auto& ta : pa.targets)
                        if (ta.structured == structured) kept.push_back(ta);
                    pa.targets = kept;
                }
            }
            return out;
        };
        LossReport rs = combined_loss(params, cfg, keep_kind(true));
        expect(ulp_distance(rs.l_struct, rep.l_struct) <= 1, "step " + str(step) + ": isolated l_struct");
        LossReport ru = combined_loss(params, cfg, keep_kind(false));
        expect(ulp_distance(ru.l_unstruct, rep.l_unstruct) <= 1,
               "step " + str(step) + ": isolated l_unstruct");

        if (!perturbed_once) {
            for (auto& item : b.items) {
                for (auto& pa : item.attach) {
                    for (auto& ta : pa.targets) {
                        if (!ta.structured || rep.l_struct == 0.0) continue;
                        expect(ta.target.slot_ids[0] == Vocab::kPrompt1, "first slot is not [P1]");
                        expect(!ta.target.loss_mask[0], "[P1] slot is loss-masked on");
                        ta.target.loss_mask[0] = true;
                        LossReport rp = combined_loss(params, cfg, b);
                        expect(rp.l_struct != rep.l_struct,
                               "scoring the [P1] slot left l_struct unchanged");
                        ta.target.loss_mask[0] = false;
                        perturbed_once = true;
                        break;
                    }
                    if (perturbed_once) break;
                }
                if (perturbed_once) break;
            }
        }
    }
    expect(perturbed_once, "no structured target found in 50 batches");
}

// ---------------------------------------------------------------------------
// A7: held-out facts are scrubbed exactly, the frequency filter nests, and
// fact flattening matches the documented slot layout.

void a7(Shared& sh) {
    fs::path c = sh.corpus();
    Kb kb = load_kb(c / "entities.jsonl", c / "facts.tsv", c / "relations.tsv");
    std::vector<Document> docs = load_docs(c / "docs.jsonl");
    std::set<FactTriple> heldout = load_heldout_facts(c / "heldout_facts.tsv");
    expect(!heldout.empty(), "toy corpus has no held-out facts");

    // Scrubbing: no surviving example teaches any held-out triple.
    fs::path scrubbed = sh.data_scrubbed();
    json stats = json::parse(read_file(scrubbed / "stats.json"));
    expect(stats.at("scrub_removed").get<long>() > 0, "scrubbing removed nothing");
    expect(stats.at("alignments_after_scrub").get<long>() + stats.at("scrub_removed").get<long>() ==
               stats.at("alignments_after_filter").get<long>(),
           "scrub accounting is inconsistent");
    std::vector<InjectionExample> survivors;
    for (const auto& row : read_jsonl(scrubbed / "examples.jsonl"))
        survivors.push_back(InjectionExample::from_json(row, "examples.jsonl"));
    for (const auto& f : heldout) {
        std::vector<std::string> target = {"[P1]"};
        for (const auto& t : kb.relation_surface.at(f.relation)) target.push_back(t);
        target.push_back("[P2]");
        for (const auto& t : kb.entities.at(f.tail).name) target.push_back(t);
        target.push_back("[P3]");
        const auto& head_name = kb.entities.at(f.head).name;
        for (const auto& ex : survivors) {
            if (ex.kind != SpanKind::Relational || ex.target != target) continue;
            std::vector<std::string> span_text(ex.sentence.begin() + ex.start,
                                               ex.sentence.begin() + ex.end + 1);
            expect(span_text != head_name, "held-out fact " + f.head + " " + f.relation + " " +
                                               f.tail + " survives in doc " + ex.doc_id);
        }
    }

    // Frequency filter: larger k removes a superset of relations and keeps a
    // subset of relational examples.
    std::vector<std::set<std::string>> removed;
    std::vector<std::set<std::string>> rel_examples;
    for (int k = 1; k <= 3; ++k) {
        BuildResult r = build_data(docs, kb, {}, k, 64);
        removed.push_back(std::set<std::string>(r.stats.removed_relations.begin(),
                                                r.stats.removed_relations.end()));
        expect(static_cast<int>(removed.back().size()) == k,
               "top-" + str(k) + " removed " + str(removed.back().size()) + " relations");
        std::set<std::string> ids;
        for (const auto& ex : r.examples)
            if (ex.kind == SpanKind::Relational) ids.insert(ex.to_json().dump());
        rel_examples.push_back(ids);
    }
    for (int k = 1; k < 3; ++k) {
        for (const auto& rel : removed[static_cast<size_t>(k - 1)])
            expect(removed[static_cast<size_t>(k)].count(rel) == 1,
                   "removed set for top-" + str(k) + " not nested in top-" + str(k + 1));
        for (const auto& ex : rel_examples[static_cast<size_t>(k)])
            expect(rel_examples[static_cast<size_t>(k - 1)].count(ex) == 1,
                   "examples for top-" + str(k + 1) + " not nested in top-" + str(k));
    }

    // Flattening: [P1] <relation surface> [P2] <tail name> [P3].
    Vocab v = vocab_of({"graduated", "at", "Davidson", "College"});
    DecoderTarget t = flatten_fact({"graduated", "at"}, {"Davidson", "College"}, v);
    std::vector<int> want_ids = {Vocab::kPrompt1, v.id("graduated"), v.id("at"),
                                 Vocab::kPrompt2, v.id("Davidson"),  v.id("College"),
                                 Vocab::kPrompt3};
    std::vector<bool> want_mask = {false, true, true, false, true, true, false};
    expect(t.slot_ids == want_ids, "flattened slot ids differ");
    expect(t.loss_mask == want_mask, "flattened loss mask differs");
}

// ---------------------------------------------------------------------------
// A8: joint pre-training beats the text-only control on low-resource
// relation classification, significantly at the 0.1 level.

void a8(Shared& sh) {
    double t0 = now_seconds();
    fs::path eplusr = sh.pretrain_run(Variant::EPlusR);
    fs::path mlmonly = sh.pretrain_run(Variant::MlmOnly);

    auto ft = [&](const fs::path& run, const std::string& tag) {
        FinetuneOpts o;
        o.checkpoint = run / "final";
        o.task = "relc";
        o.train_path = sh.corpus() / "downstream" / "relc_train.jsonl";
        o.test_path = sh.corpus() / "downstream" / "relc_test.jsonl";
        o.out = sh.work / ("ft_" + tag);
        o.fractions = {0.01};
        o.seeds = {42, 43, 44, 45, 46};
        run_finetune(o);
        return o.out / "summary.json";
    };
    fs::path ours = ft(eplusr, "eplusr");
    fs::path base = ft(mlmonly, "mlmonly");

    EvalOpts eo;
    eo.results = ours;
    eo.baseline = base.string();
    eo.out = sh.work / "cmp";
    json report = run_eval(eo);
    const json& t = report.at("tests").at(0);
    double diff = t.at("diff").get<double>();
    expect(!t.at("degenerate").get<bool>(), "comparison is degenerate");
    expect(diff >= 0.05, "gain over the control is " + str(100.0 * diff) + " points");
    expect(t.at("significant_01").get<bool>(),
           "one-sided p " + str(t.at("p_one_sided").get<double>()) + " not below 0.1");
    double dt = now_seconds() - t0;
    expect(dt < 900.0, "took " + str(dt) + "s, budget 900s");
}

// ---------------------------------------------------------------------------
// A9: the ablation sweep completes all nine cells with a well-formed table.

void a9(Shared& sh) {
    AblateOpts o;
    o.data_dir = sh.data();
    o.docs = sh.corpus() / "docs.jsonl";
    o.relc_train = sh.corpus() / "downstream" / "relc_train.jsonl";
    o.relc_test = sh.corpus() / "downstream" / "relc_test.jsonl";
    o.out = sh.work / "ablate";
    o.train.total_steps = 30;
    o.fraction = 0.05;
    o.seeds = {42};
    o.low_resource_multiplier = 5;
    json report = run_ablate(o);

    const json& cells = report.at("cells");
    expect(cells.size() == 9, "expected 9 cells, got " + str(cells.size()));
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& cell : cells) {
        std::string sweep = cell.at("sweep").get<std::string>();
        std::string label = cell.at("cell").get<std::string>();
        seen.insert({sweep, label});
        double mean = cell.at("mean").get<double>();
        double sd = cell.at("std").get<double>();
        expect(std::isfinite(mean) && mean >= 0.0 && mean <= 1.0,
               sweep + "/" + label + ": mean " + str(mean));
        expect(std::isfinite(sd) && sd >= 0.0, sweep + "/" + label + ": std " + str(sd));
        expect(!cell.at("metric_name").get<std::string>().empty(), "missing metric name");
    }
    std::set<std::pair<std::string, std::string>> want = {
        {"window", "k=2"},  {"window", "k=4"}, {"window", "k=16"}, {"window", "k=all"},
        {"layers", "d=1"},  {"layers", "d=2"}, {"layers", "d=3"},
        {"span", "marker"}, {"span", "token-concat"}};
    expect(seen == want, "cell labels differ from the documented grid");

    std::string tsv = read_file(sh.work / "ablate" / "table.tsv");
    long lines = std::count(tsv.begin(), tsv.end(), '\n');
    expect(lines == 10, "table.tsv has " + str(lines) + " lines, want header + 9 rows");
    expect(tsv.find("nan") == std::string::npos && tsv.find("inf") == std::string::npos,
           "table.tsv contains non-finite entries");
}

// ---------------------------------------------------------------------------
// A10: checkpoints round-trip byte-identically and the decoder-stripped
// deployment checkpoint still fine-tunes.

void a10(Shared& sh) {
    fs::path run = sh.pretrain_run(Variant::EPlusR);
    fs::path final_dir = run / "final";
    Checkpoint ck = load_checkpoint(final_dir);
    fs::path save1 = sh.work / "resave1";
    save_checkpoint(save1, ck.cfg, ck.params, ck.vocab, ck.step,
                    ck.has_optim ? &ck.optim : nullptr);
    Checkpoint ck2 = load_checkpoint(save1);
    fs::path save2 = sh.work / "resave2";
    save_checkpoint(save2, ck2.cfg, ck2.params, ck2.vocab, ck2.step,
                    ck2.has_optim ? &ck2.optim : nullptr);

    std::vector<std::string> files = {"manifest.json", "params.bin", "params.index.json", "vocab.txt"};
    if (ck.has_optim) files.push_back("optim.bin");
    for (const auto& f : files) {
        expect(read_file(save1 / f) == read_file(save2 / f), f + " changed across save-load-save");
        expect(read_file(save1 / f) == read_file(final_dir / f), f + " differs from the training output");
    }

    Checkpoint deploy = load_checkpoint(run / "deploy");
    expect(!deploy.has_decoder, "deploy checkpoint still carries decoder tensors");
    expect(!deploy.has_optim, "deploy checkpoint still carries optimizer state");

    FinetuneOpts o;
    o.checkpoint = run / "deploy";
    o.task = "relc";
    o.train_path = sh.corpus() / "downstream" / "relc_train.jsonl";
    o.test_path = sh.corpus() / "downstream" / "relc_test.jsonl";
    o.out = sh.work / "ft_deploy";
    o.fractions = {0.05};
    o.seeds = {42};
    o.low_resource_multiplier = 5;
    json summary = run_finetune(o);
    double metric = summary.at("fractions").at(0).at("mean").get<double>();
    expect(std::isfinite(metric) && metric >= 0.0 && metric <= 1.0,
           "stripped-checkpoint metric " + str(metric));
}

}  // namespace

int main(int argc, char** argv) {
    Shared sh;
    sh.work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_work");
    std::error_code ec;
    fs::remove_all(sh.work, ec);
    fs::create_directories(sh.work);

    struct Entry {
        const char* name;
        std::function<void(Shared&)> fn;
    };
    std::vector<Entry> entries = {
        {"A1 encoder-mask-oracle", a1},
        {"A2 marker-invisibility", a2},
        {"A3 joint-training-learns", a3},
        {"A4 gradient-check", a4},
        {"A5 decoder-window-span", a5},
        {"A6 loss-decomposition", a6},
        {"A7 data-construction", a7},
        {"A8 low-resource-gain", a8},
        {"A9 ablation-grid", a9},
        {"A10 checkpoint-roundtrip", a10},
    };
    int failed = 0;
    for (auto& e : entries) {
        double t0 = now_seconds();
        try {
            e.fn(sh);
            std::printf("%s: PASS (%.1fs)\n", e.name, now_seconds() - t0);
        } catch (const std::exception& ex) {
            ++failed;
            std::printf("%s: FAIL (%s)\n", e.name, ex.what());
        }
        std::fflush(stdout);
    }
    std::printf("acceptance: %d/10 criteria passed\n", 10 - failed);
    return failed;
}
