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

// Command drivers behind the CLI.  Each run_* function does the work, writes
// its outputs under an output directory, and leaves a manifest.json recording
// the command, its configuration, and content hashes of every input file.
// Reruns with identical inputs reproduce every output byte for byte; only the
// manifest timestamp differs.

#pragma once

#include "kiln/downstream.hpp"
#include "kiln/pretrain.hpp"
#include "kiln/toygen.hpp"

namespace kiln {

inline json train_config_to_json(const TrainConfig& c) {
    return json{{"total_steps", c.total_steps},
                {"batch_size", c.batch_size},
                {"peak_lr", c.peak_lr},
                {"warmup_fraction", c.warmup_fraction},
                {"seed", c.seed},
                {"checkpoint_every", c.checkpoint_every},
                {"max_text_len", c.max_text_len},
                {"max_pairs", c.max_pairs},
                {"clip", c.clip},
                {"clip_norm", c.clip_norm},
                {"mlm_rate", c.mlm.rate},
                {"mlm_bert_split", c.mlm.bert_split},
                {"mlm_corrupt_anchor_spans", c.mlm.corrupt_anchor_spans},
                {"variant", variant_name(c.variant)}};
}

inline json ft_hyper_to_json(const FtHyper& h) {
    return json{{"epochs", h.epochs},
                {"batch", h.batch},
                {"lr", h.lr},
                {"warmup_fraction", h.warmup_fraction}};
}

inline void write_manifest(const fs::path& out_dir, const std::string& command, const json& config,
                           const std::vector<fs::path>& inputs,
                           const std::vector<std::string>& outputs) {
    json m;
    m["command"] = command;
    m["config"] = config;
    json in = json::object();
    for (const auto& p : inputs) in[p.string()] = "fnv1a64:" + hex64(fnv_file(p));
    m["inputs"] = in;
    m["outputs"] = outputs;
    m["written"] = iso_timestamp_utc();
    write_file(out_dir / "manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// gen-toy

struct GenToyOpts {
    uint64_t seed = 7;
    long sentences = 2000;
    fs::path out;
};

inline json run_gen_toy(const GenToyOpts& o) {
    ToySummary s = gen_toy(o.seed, o.sentences, o.out);
    json summary{{"docs", s.docs},
                 {"sentences", s.sentences},
                 {"entities", s.entities},
                 {"facts", s.facts},
                 {"train_facts", s.train_facts},
                 {"heldout_facts", s.heldout_facts}};
    write_file(o.out / "summary.json", summary.dump(2) + "\n");
    write_manifest(o.out, "gen-toy", json{{"seed", o.seed}, {"sentences", o.sentences}}, {},
                   {"docs.jsonl", "entities.jsonl", "facts.tsv", "relations.tsv",
                    "heldout_facts.tsv", "downstream/", "summary.json"});
    return summary;
}

// ---------------------------------------------------------------------------
// build-data

struct BuildDataOpts {
    fs::path docs, entities, facts, relations;
    std::string heldout;  // empty: no scrubbing
    int top_k = 6;
    int page_prefix_len = 64;
    fs::path out;
};

inline json run_build_data(const BuildDataOpts& o) {
    std::vector<Document> docs = load_docs(o.docs);
    Kb kb = load_kb(o.entities, o.facts, o.relations);
    std::set<FactTriple> heldout;
    if (!o.heldout.empty()) heldout = load_heldout_facts(o.heldout);
    BuildResult r = build_data(docs, kb, heldout, o.top_k, o.page_prefix_len);

    std::vector<json> rows;
    for (const auto& ex : r.examples) rows.push_back(ex.to_json());
    write_jsonl(o.out / "examples.jsonl", rows);
    r.vocab.save(o.out / "vocab.txt");
    write_file(o.out / "stats.json", r.stats.to_json().dump(2) + "\n");
    {
        std::vector<std::pair<std::string, long>> freq(r.relation_freq.begin(), r.relation_freq.end());
        std::sort(freq.begin(), freq.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        std::string buf;
        for (const auto& [rel, n] : freq) buf += rel + "\t" + std::to_string(n) + "\n";
        write_file(o.out / "relation_freq.tsv", buf);
    }
    std::vector<fs::path> inputs = {o.docs, o.entities, o.facts, o.relations};
    if (!o.heldout.empty()) inputs.push_back(o.heldout);
    write_manifest(o.out, "build-data",
                   json{{"top_k_relations", o.top_k},
                        {"page_prefix_len", o.page_prefix_len},
                        {"heldout", o.heldout.empty() ? json() : json(o.heldout)}},
                   inputs, {"examples.jsonl", "vocab.txt", "stats.json", "relation_freq.tsv"});
    return r.stats.to_json();
}

// ---------------------------------------------------------------------------
// pretrain

struct PretrainOpts {
    fs::path data_dir;  // from build-data: examples.jsonl + vocab.txt
    fs::path docs;
    fs::path out;
    ModelConfig model;
    TrainConfig train;
    bool resume = false;
};

inline json run_pretrain(const PretrainOpts& o) {
    Vocab vocab = Vocab::load(o.data_dir / "vocab.txt");
    std::vector<InjectionExample> examples;
    {
        auto rows = read_jsonl(o.data_dir / "examples.jsonl");
        for (size_t i = 0; i < rows.size(); ++i)
            examples.push_back(InjectionExample::from_json(
                rows[i], "examples.jsonl line " + std::to_string(i + 1)));
    }
    std::vector<Document> docs = load_docs(o.docs);
    DataSet ds = build_dataset(docs, examples, vocab, o.train.variant, o.train.max_text_len,
                               o.train.max_pairs);
    ModelConfig mcfg = o.model;
    mcfg.vocab_size = static_cast<int>(vocab.size());
    TrainResult res = train(mcfg, o.train, ds, o.out, o.resume);
    json summary{{"final_step", res.final_step},
                 {"sequences", static_cast<long>(ds.seqs.size())},
                 {"vocab_size", mcfg.vocab_size},
                 {"final_total", res.metrics.empty() ? 0.0 : res.metrics.back().loss.total}};
    write_file(o.out / "summary.json", summary.dump(2) + "\n");
    write_manifest(o.out, "pretrain",
                   json{{"model", model_config_to_json(mcfg)},
                        {"train", train_config_to_json(o.train)},
                        {"resume", o.resume}},
                   {o.data_dir / "examples.jsonl", o.data_dir / "vocab.txt", o.docs},
                   {"metrics.jsonl", "checkpoints/", "final/", "deploy/", "summary.json"});
    return summary;
}

// ---------------------------------------------------------------------------
// finetune

struct FinetuneOpts {
    fs::path checkpoint;
    std::string task = "relc";
    fs::path train_path, test_path;
    fs::path out;
    std::vector<double> fractions = {1.0};
    std::vector<uint64_t> seeds = {42};
    FtHyper hp;
    // Subsampled runs train longer: epochs scale by this factor below full data.
    int low_resource_multiplier = 25;
};

inline std::string fraction_tag(double f) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", f);
    return buf;
}

inline json run_finetune(const FinetuneOpts& o) {
    Checkpoint ck = load_checkpoint(o.checkpoint);
    Task task = task_from_name(o.task);
    TaskData train_data = load_task_data(o.train_path, task);
    TaskData test_data = load_task_data(o.test_path, task);
    std::vector<std::string> labels = label_inventory(train_data, test_data);
    fs::create_directories(o.out);

    json fractions_out = json::array();
    for (double frac : o.fractions) {
        std::vector<json> rows;
        std::vector<double> metrics;
        std::string metric_name;
        FtHyper hp = o.hp;
        if (frac < 1.0) hp.epochs *= o.low_resource_multiplier;
        for (uint64_t seed : o.seeds) {
            TaskData sub = frac < 1.0 ? subsample(train_data, frac, seed) : train_data;
            FinetunedModel model = finetune(ck, sub, labels, hp, seed);
            EvalOutcome ev = evaluate(model, test_data);
            metric_name = ev.metric_name;
            json row{{"task", o.task},
                     {"fraction", frac},
                     {"seed", seed},
                     {"n_train", static_cast<long>(sub.ex.size())},
                     {"n_test", static_cast<long>(test_data.ex.size())},
                     {"metric_name", ev.metric_name},
                     {"metric", ev.metric},
                     {"degenerate", ev.degenerate},
                     {"details", ev.details}};
            write_file(o.out / (o.task + "_f" + fraction_tag(frac) + "_s" + std::to_string(seed) + ".json"),
                       row.dump(2) + "\n");
            rows.push_back(row);
            metrics.push_back(ev.metric);
        }
        auto [mean, sd] = mean_std(metrics);
        fractions_out.push_back(json{{"fraction", frac},
                                     {"metric_name", metric_name},
                                     {"mean", mean},
                                     {"std", sd},
                                     {"runs", rows}});
    }
    json summary{{"task", o.task},
                 {"checkpoint", o.checkpoint.string()},
                 {"labels", labels},
                 {"fractions", fractions_out}};
    write_file(o.out / "summary.json", summary.dump(2) + "\n");
    write_manifest(o.out, "finetune",
                   json{{"task", o.task},
                        {"fractions", o.fractions},
                        {"seeds", o.seeds},
                        {"hyper", ft_hyper_to_json(o.hp)}},
                   {o.train_path, o.test_path}, {"summary.json"});
    return summary;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
    fs::path results;    // summary.json from finetune
    std::string baseline;  // optional second summary.json
    fs::path out;
};

namespace detail {

// fraction -> (seed -> metric), insertion-ordered fractions
inline std::vector<std::pair<double, std::map<uint64_t, double>>> metric_table(const json& summary) {
    std::vector<std::pair<double, std::map<uint64_t, double>>> out;
    for (const auto& f : summary.at("fractions")) {
        std::map<uint64_t, double> by_seed;
        for (const auto& run : f.at("runs"))
            by_seed[run.at("seed").get<uint64_t>()] = run.at("metric").get<double>();
        out.push_back({f.at("fraction").get<double>(), by_seed});
    }
    return out;
}

}  // namespace detail

inline json run_eval(const EvalOpts& o) {
    json results = json::parse(read_file(o.results));
    json report{{"task", results.at("task")}, {"results", o.results.string()}};
    json rows = json::array();
    auto table = detail::metric_table(results);
    if (o.baseline.empty()) {
        for (const auto& f : results.at("fractions"))
            rows.push_back(json{{"fraction", f.at("fraction")},
                                {"metric_name", f.at("metric_name")},
                                {"mean", f.at("mean")},
                                {"std", f.at("std")}});
        report["aggregate"] = rows;
    } else {
        json base = json::parse(read_file(o.baseline));
        report["baseline"] = o.baseline;
        auto base_table = detail::metric_table(base);
        for (const auto& [frac, ours] : table) {
            const std::map<uint64_t, double>* theirs = nullptr;
            for (const auto& [bf, bm] : base_table)
                if (bf == frac) theirs = &bm;
            if (!theirs) continue;
            std::vector<double> a, b;
            for (const auto& [seed, m] : ours) {
                auto it = theirs->find(seed);
                if (it == theirs->end())
                    throw InputError("eval: baseline lacks seed " + std::to_string(seed) +
                                     " at fraction " + fraction_tag(frac));
                a.push_back(m);
                b.push_back(it->second);
            }
            TTestResult t = t_test_one_sided(a, b);
            rows.push_back(json{{"fraction", frac},
                                {"mean_results", t.mean_a},
                                {"mean_baseline", t.mean_b},
                                {"diff", t.mean_a - t.mean_b},
                                {"t", t.t},
                                {"df", t.df},
                                {"p_one_sided", t.p_one_sided},
                                {"significant_005", t.significant_005},
                                {"significant_01", t.significant_01},
                                {"degenerate", t.degenerate}});
        }
        report["tests"] = rows;
    }
    fs::create_directories(o.out);
    write_file(o.out / "eval.json", report.dump(2) + "\n");
    std::vector<fs::path> inputs = {o.results};
    if (!o.baseline.empty()) inputs.push_back(o.baseline);
    write_manifest(o.out, "eval", json{{"baseline", o.baseline}}, inputs, {"eval.json"});
    return report;
}

// ---------------------------------------------------------------------------
// ablate

struct AblateOpts {
    fs::path data_dir, docs;
    fs::path relc_train, relc_test;
    fs::path out;
    ModelConfig model;
    TrainConfig train;
    double fraction = 0.05;
    std::vector<uint64_t> seeds = {42, 43, 44};
    FtHyper hp;
    int low_resource_multiplier = 25;
};

// One sweep axis at a time around the base configuration: attention window,
// decoder depth, span representation.  Nine independent cells.
inline json run_ablate(const AblateOpts& o) {
    struct Cell {
        std::string sweep, label;
        ModelConfig cfg;
    };
    std::vector<Cell> cells;
    auto base = o.model;
    for (int k : {2, 4, 16, kWindowAll}) {
        ModelConfig c = base;
        c.window_k = k;
        c.decoder_layers = 1;
        c.span_rep = SpanRepMode::Marker;
        cells.push_back({"window", k == kWindowAll ? "k=all" : "k=" + std::to_string(k), c});
    }
    for (int d : {1, 2, 3}) {
        ModelConfig c = base;
        c.window_k = 2;
        c.decoder_layers = d;
        c.span_rep = SpanRepMode::Marker;
        cells.push_back({"layers", "d=" + std::to_string(d), c});
    }
    for (SpanRepMode mode : {SpanRepMode::Marker, SpanRepMode::TokenConcat}) {
        ModelConfig c = base;
        c.window_k = 2;
        c.decoder_layers = 1;
        c.span_rep = mode;
        cells.push_back({"span", span_rep_name(mode), c});
    }

    fs::create_directories(o.out);
    std::string tsv = "sweep\tcell\tmetric\tmean\tstd\n";
    json cells_out = json::array();
    for (const auto& cell : cells) {
        fs::path cell_dir = o.out / "cells" / (cell.sweep + "_" + cell.label);
        PretrainOpts po;
        po.data_dir = o.data_dir;
        po.docs = o.docs;
        po.out = cell_dir / "pretrain";
        po.model = cell.cfg;
        po.train = o.train;
        run_pretrain(po);

        FinetuneOpts fo;
        fo.checkpoint = po.out / "deploy";
        fo.task = "relc";
        fo.train_path = o.relc_train;
        fo.test_path = o.relc_test;
        fo.out = cell_dir / "finetune";
        fo.fractions = {o.fraction};
        fo.seeds = o.seeds;
        fo.hp = o.hp;
        fo.low_resource_multiplier = o.low_resource_multiplier;
        json fsum = run_finetune(fo);
        const json& frow = fsum.at("fractions").at(0);
        std::string metric_name = frow.at("metric_name").get<std::string>();
        double mean = frow.at("mean").get<double>();
        double sd = frow.at("std").get<double>();
        char line[256];
        std::snprintf(line, sizeof(line), "%s\t%s\t%s\t%.6f\t%.6f\n", cell.sweep.c_str(),
                      cell.label.c_str(), metric_name.c_str(), mean, sd);
        tsv += line;
        cells_out.push_back(json{{"sweep", cell.sweep},
                                 {"cell", cell.label},
                                 {"metric_name", metric_name},
                                 {"mean", mean},
                                 {"std", sd}});
    }
    write_file(o.out / "table.tsv", tsv);
    json report{{"fraction", o.fraction}, {"cells", cells_out}};
    write_file(o.out / "ablate.json", report.dump(2) + "\n");
    write_manifest(o.out, "ablate",
                   json{{"model", model_config_to_json(o.model)},
                        {"train", train_config_to_json(o.train)},
                        {"fraction", o.fraction},
                        {"seeds", o.seeds},
                        {"hyper", ft_hyper_to_json(o.hp)}},
                   {o.data_dir / "examples.jsonl", o.data_dir / "vocab.txt", o.docs, o.relc_train,
                    o.relc_test},
                   {"table.tsv", "ablate.json", "cells/"});
    return report;
}

}  // namespace kiln
