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

// Command line entry point.  Subcommands: gen-toy, build-data, pretrain,
// finetune, eval, ablate.  Option precedence: command line > --config JSON >
// built-in defaults.  The config file may carry a section named after the
// subcommand, or flat keys; keys are long option names without dashes.
//
// Exit codes: 0 success, 2 invalid input or usage, 3 numeric failure.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "kiln/commands.hpp"

namespace {

using kiln::json;

// Applies config-file values to options the command line left untouched.
class ConfigMerge {
  public:
    ConfigMerge(CLI::App* sub, json section) : sub_(sub), cfg_(std::move(section)) {}

    template <typename T>
    void merge(const std::string& name, T& target) {
        if (sub_->count("--" + name) > 0) return;
        if (!cfg_.contains(name)) return;
        try {
            target = cfg_.at(name).get<T>();
        } catch (const json::exception& e) {
            throw kiln::InputError("config key '" + name + "': " + e.what());
        }
    }

    void merge_flag(const std::string& name, bool& target) {
        if (sub_->count("--" + name) > 0) return;
        if (cfg_.contains(name)) target = cfg_.at(name).get<bool>();
    }

  private:
    CLI::App* sub_;
    json cfg_;
};

json config_section(const json& cfg, const std::string& sub) {
    if (cfg.is_null()) return json::object();
    if (cfg.contains(sub) && cfg.at(sub).is_object()) return cfg.at(sub);
    return cfg;
}

int parse_window(const std::string& s) {
    if (s == "all") return kiln::kWindowAll;
    try {
        size_t pos = 0;
        int k = std::stoi(s, &pos);
        if (pos != s.size() || k < 1) throw std::invalid_argument(s);
        return k;
    } catch (const std::exception&) {
        throw kiln::InputError("window must be a positive integer or 'all', got '" + s + "'");
    }
}

struct ModelFlags {
    int hidden = 64, heads = 4, enc_layers = 2, dec_layers = 1, ffn = 256, max_position = 128;
    std::string window = "2";
    std::string span_rep = "marker";
    bool untied = false;

    void attach(CLI::App* sub) {
        sub->add_option("--hidden", hidden, "Hidden width");
        sub->add_option("--heads", heads, "Attention heads");
        sub->add_option("--encoder-layers", enc_layers, "Encoder depth");
        sub->add_option("--decoder-layers", dec_layers, "Decoder depth");
        sub->add_option("--ffn", ffn, "Feed-forward width");
        sub->add_option("--max-position", max_position, "Longest supported sequence");
        sub->add_option("--window-k", window, "Decoder attention window (positive integer or 'all')");
        sub->add_option("--span-rep", span_rep, "Span representation: marker or token-concat");
        sub->add_flag("--untied-embeddings", untied, "Separate input and output embeddings");
    }

    void merge(ConfigMerge& m) {
        m.merge("hidden", hidden);
        m.merge("heads", heads);
        m.merge("encoder-layers", enc_layers);
        m.merge("decoder-layers", dec_layers);
        m.merge("ffn", ffn);
        m.merge("max-position", max_position);
        m.merge("window-k", window);
        m.merge("span-rep", span_rep);
        m.merge_flag("untied-embeddings", untied);
    }

    kiln::ModelConfig build() const {
        kiln::ModelConfig c;
        c.hidden = hidden;
        c.heads = heads;
        c.encoder_layers = enc_layers;
        c.decoder_layers = dec_layers;
        c.ffn = ffn;
        c.max_position = max_position;
        c.window_k = parse_window(window);
        c.span_rep = kiln::span_rep_from_name(span_rep);
        c.tied_embeddings = !untied;
        return c;
    }
};

struct TrainFlags {
    long steps = 300;
    int batch = 8;
    double peak_lr = 2e-3, warmup = 0.1;
    uint64_t seed = 7;
    long checkpoint_every = 100;
    int max_text_len = 64, max_pairs = 8;
    double clip_norm = 0.0;
    double mlm_rate = 0.15;
    bool plain_mask = false, keep_anchor_spans = false;
    std::string variant = "E+R";

    void attach(CLI::App* sub) {
        sub->add_option("--steps", steps, "Optimizer steps");
        sub->add_option("--batch", batch, "Sequences per step");
        sub->add_option("--peak-lr", peak_lr, "Peak learning rate");
        sub->add_option("--warmup", warmup, "Warmup fraction of total steps");
        sub->add_option("--seed", seed, "Run seed");
        sub->add_option("--checkpoint-every", checkpoint_every, "Checkpoint interval in steps");
        sub->add_option("--max-text-len", max_text_len, "Text budget per sequence incl. [CLS]/[SEP]");
        sub->add_option("--max-pairs", max_pairs, "Marker pairs per sequence before splitting");
        sub->add_option("--clip-norm", clip_norm, "Clip gradient norm (0 disables)");
        sub->add_option("--mlm-rate", mlm_rate, "Fraction of text positions corrupted");
        sub->add_flag("--plain-mask", plain_mask, "Always corrupt with [MASK] (no 80/10/10 split)");
        sub->add_flag("--keep-anchor-spans", keep_anchor_spans, "Exempt anchor spans from corruption");
        sub->add_option("--variant", variant, "Objective set: E+R, E, R, or mlm-only");
    }

    void merge(ConfigMerge& m) {
        m.merge("steps", steps);
        m.merge("batch", batch);
        m.merge("peak-lr", peak_lr);
        m.merge("warmup", warmup);
        m.merge("seed", seed);
        m.merge("checkpoint-every", checkpoint_every);
        m.merge("max-text-len", max_text_len);
        m.merge("max-pairs", max_pairs);
        m.merge("clip-norm", clip_norm);
        m.merge("mlm-rate", mlm_rate);
        m.merge_flag("plain-mask", plain_mask);
        m.merge_flag("keep-anchor-spans", keep_anchor_spans);
        m.merge("variant", variant);
    }

    kiln::TrainConfig build() const {
        kiln::TrainConfig c;
        c.total_steps = steps;
        c.batch_size = batch;
        c.peak_lr = peak_lr;
        c.warmup_fraction = warmup;
        c.seed = seed;
        c.checkpoint_every = checkpoint_every;
        c.max_text_len = max_text_len;
        c.max_pairs = max_pairs;
        c.clip = clip_norm > 0.0;
        c.clip_norm = clip_norm > 0.0 ? clip_norm : 1.0;
        c.mlm.rate = mlm_rate;
        c.mlm.bert_split = !plain_mask;
        c.mlm.corrupt_anchor_spans = !keep_anchor_spans;
        c.variant = kiln::variant_from_name(variant);
        return c;
    }
};

void print_summary(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unified knowledge injection trainer"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON file with defaults for any subcommand");

    // gen-toy --------------------------------------------------------------
    auto* gen = app.add_subcommand("gen-toy", "Write a synthetic corpus and task files");
    kiln::GenToyOpts gen_opts;
    std::string gen_out;
    gen->add_option("--seed", gen_opts.seed, "World seed");
    gen->add_option("--sentences", gen_opts.sentences, "Corpus size in sentences");
    gen->add_option("--out", gen_out, "Output directory")->required();

    // build-data -----------------------------------------------------------
    auto* bd = app.add_subcommand("build-data", "Align facts to text and emit training examples");
    std::string bd_corpus, bd_docs, bd_entities, bd_facts, bd_relations, bd_heldout, bd_out;
    kiln::BuildDataOpts bd_opts;
    bd->add_option("--corpus", bd_corpus, "Directory from gen-toy (fills the file options below)");
    bd->add_option("--docs", bd_docs, "Documents JSONL");
    bd->add_option("--entities", bd_entities, "Entities JSONL");
    bd->add_option("--facts", bd_facts, "Facts TSV");
    bd->add_option("--relations", bd_relations, "Relation surfaces TSV");
    bd->add_option("--heldout-facts", bd_heldout, "Facts to scrub from alignments");
    bd->add_option("--top-k-relations", bd_opts.top_k, "Drop the k most frequent relations");
    bd->add_option("--page-prefix-len", bd_opts.page_prefix_len, "Entity page target length");
    bd->add_option("--out", bd_out, "Output directory")->required();

    // pretrain -------------------------------------------------------------
    auto* pt = app.add_subcommand("pretrain", "Train the encoder and restricted decoder");
    std::string pt_data, pt_docs, pt_out;
    bool pt_resume = false;
    ModelFlags pt_model;
    TrainFlags pt_train;
    pt->add_option("--data", pt_data, "Directory from build-data")->required();
    pt->add_option("--docs", pt_docs, "Documents JSONL")->required();
    pt->add_option("--out", pt_out, "Run directory")->required();
    pt->add_flag("--resume", pt_resume, "Continue from the newest checkpoint in the run directory");
    pt_model.attach(pt);
    pt_train.attach(pt);

    // finetune -------------------------------------------------------------
    auto* ft = app.add_subcommand("finetune", "Adapt a checkpoint to a downstream task");
    std::string ft_ckpt, ft_task = "relc", ft_train_p, ft_test_p, ft_out;
    std::vector<double> ft_fractions;
    std::vector<uint64_t> ft_seeds;
    int ft_epochs = -1, ft_batch = -1, ft_mult = 25;
    double ft_lr = 1e-3, ft_warmup = 0.1;
    ft->add_option("--checkpoint", ft_ckpt, "Checkpoint directory")->required();
    ft->add_option("--task", ft_task, "typing, ner, or relc")->required();
    ft->add_option("--train", ft_train_p, "Training JSONL")->required();
    ft->add_option("--test", ft_test_p, "Test JSONL")->required();
    ft->add_option("--out", ft_out, "Output directory")->required();
    ft->add_option("--fractions", ft_fractions, "Training-set fractions to run")->delimiter(',');
    ft->add_option("--seeds", ft_seeds, "Seeds (one run per fraction and seed)")->delimiter(',');
    ft->add_option("--epochs", ft_epochs, "Epochs at full data (default depends on task)");
    ft->add_option("--batch", ft_batch, "Batch size (default depends on task)");
    ft->add_option("--lr", ft_lr, "Peak learning rate");
    ft->add_option("--warmup", ft_warmup, "Warmup fraction");
    ft->add_option("--low-resource-multiplier", ft_mult, "Epoch multiplier below full data");

    // eval -----------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "Aggregate results, optionally against a baseline");
    std::string ev_results, ev_baseline, ev_out;
    ev->add_option("--results", ev_results, "summary.json from finetune")->required();
    ev->add_option("--baseline", ev_baseline, "summary.json to compare against");
    ev->add_option("--out", ev_out, "Output directory")->required();

    // ablate ---------------------------------------------------------------
    auto* ab = app.add_subcommand("ablate", "Sweep window, decoder depth, and span representation");
    std::string ab_data, ab_docs, ab_train_p, ab_test_p, ab_out;
    ModelFlags ab_model;
    TrainFlags ab_train;
    double ab_fraction = 0.05;
    std::vector<uint64_t> ab_seeds;
    int ab_epochs = 5, ab_batch = 16, ab_mult = 25;
    double ab_lr = 1e-3, ab_warmup = 0.1;
    ab->add_option("--data", ab_data, "Directory from build-data")->required();
    ab->add_option("--docs", ab_docs, "Documents JSONL")->required();
    ab->add_option("--relc-train", ab_train_p, "Relation classification training JSONL")->required();
    ab->add_option("--relc-test", ab_test_p, "Relation classification test JSONL")->required();
    ab->add_option("--out", ab_out, "Output directory")->required();
    ab->add_option("--fraction", ab_fraction, "Training fraction for the probe task");
    ab->add_option("--seeds", ab_seeds, "Seeds per cell")->delimiter(',');
    ab->add_option("--probe-epochs", ab_epochs, "Probe epochs at full data");
    ab->add_option("--probe-batch", ab_batch, "Probe batch size");
    ab->add_option("--probe-lr", ab_lr, "Probe learning rate");
    ab->add_option("--probe-warmup", ab_warmup, "Probe warmup fraction");
    ab->add_option("--low-resource-multiplier", ab_mult, "Epoch multiplier below full data");
    ab_model.attach(ab);
    ab_train.attach(ab);

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            int code = app.exit(e);
            return code == 0 ? 0 : 2;
        }
        json cfg;
        if (!config_path.empty()) cfg = json::parse(kiln::read_file(config_path));

        if (gen->parsed()) {
            ConfigMerge m(gen, config_section(cfg, "gen-toy"));
            m.merge("seed", gen_opts.seed);
            m.merge("sentences", gen_opts.sentences);
            m.merge("out", gen_out);
            gen_opts.out = gen_out;
            print_summary(kiln::run_gen_toy(gen_opts));
        } else if (bd->parsed()) {
            ConfigMerge m(bd, config_section(cfg, "build-data"));
            m.merge("corpus", bd_corpus);
            m.merge("docs", bd_docs);
            m.merge("entities", bd_entities);
            m.merge("facts", bd_facts);
            m.merge("relations", bd_relations);
            m.merge("heldout-facts", bd_heldout);
            m.merge("top-k-relations", bd_opts.top_k);
            m.merge("page-prefix-len", bd_opts.page_prefix_len);
            m.merge("out", bd_out);
            if (!bd_corpus.empty()) {
                kiln::fs::path c = bd_corpus;
                if (bd_docs.empty()) bd_docs = (c / "docs.jsonl").string();
                if (bd_entities.empty()) bd_entities = (c / "entities.jsonl").string();
                if (bd_facts.empty()) bd_facts = (c / "facts.tsv").string();
                if (bd_relations.empty()) bd_relations = (c / "relations.tsv").string();
            }
            if (bd_docs.empty() || bd_entities.empty() || bd_facts.empty() || bd_relations.empty())
                throw kiln::InputError("build-data needs --corpus or all of --docs/--entities/--facts/--relations");
            bd_opts.docs = bd_docs;
            bd_opts.entities = bd_entities;
            bd_opts.facts = bd_facts;
            bd_opts.relations = bd_relations;
            bd_opts.heldout = bd_heldout;
            bd_opts.out = bd_out;
            print_summary(kiln::run_build_data(bd_opts));
        } else if (pt->parsed()) {
            ConfigMerge m(pt, config_section(cfg, "pretrain"));
            m.merge("data", pt_data);
            m.merge("docs", pt_docs);
            m.merge("out", pt_out);
            m.merge_flag("resume", pt_resume);
            pt_model.merge(m);
            pt_train.merge(m);
            kiln::PretrainOpts o;
            o.data_dir = pt_data;
            o.docs = pt_docs;
            o.out = pt_out;
            o.model = pt_model.build();
            o.train = pt_train.build();
            o.resume = pt_resume;
            print_summary(kiln::run_pretrain(o));
        } else if (ft->parsed()) {
            ConfigMerge m(ft, config_section(cfg, "finetune"));
            m.merge("checkpoint", ft_ckpt);
            m.merge("task", ft_task);
            m.merge("train", ft_train_p);
            m.merge("test", ft_test_p);
            m.merge("out", ft_out);
            m.merge("fractions", ft_fractions);
            m.merge("seeds", ft_seeds);
            m.merge("epochs", ft_epochs);
            m.merge("batch", ft_batch);
            m.merge("lr", ft_lr);
            m.merge("warmup", ft_warmup);
            m.merge("low-resource-multiplier", ft_mult);
            kiln::FinetuneOpts o;
            o.checkpoint = ft_ckpt;
            o.task = ft_task;
            o.train_path = ft_train_p;
            o.test_path = ft_test_p;
            o.out = ft_out;
            if (!ft_fractions.empty()) o.fractions = ft_fractions;
            if (!ft_seeds.empty()) o.seeds = ft_seeds;
            kiln::Task task = kiln::task_from_name(ft_task);
            int def_epochs = task == kiln::Task::Typing ? 10 : task == kiln::Task::Ner ? 3 : 5;
            int def_batch = task == kiln::Task::Ner ? 8 : 16;
            o.hp.epochs = ft_epochs > 0 ? ft_epochs : def_epochs;
            o.hp.batch = ft_batch > 0 ? ft_batch : def_batch;
            o.hp.lr = ft_lr;
            o.hp.warmup_fraction = ft_warmup;
            o.low_resource_multiplier = ft_mult;
            print_summary(kiln::run_finetune(o));
        } else if (ev->parsed()) {
            ConfigMerge m(ev, config_section(cfg, "eval"));
            m.merge("results", ev_results);
            m.merge("baseline", ev_baseline);
            m.merge("out", ev_out);
            kiln::EvalOpts o;
            o.results = ev_results;
            o.baseline = ev_baseline;
            o.out = ev_out;
            print_summary(kiln::run_eval(o));
        } else if (ab->parsed()) {
            ConfigMerge m(ab, config_section(cfg, "ablate"));
            m.merge("data", ab_data);
            m.merge("docs", ab_docs);
            m.merge("relc-train", ab_train_p);
            m.merge("relc-test", ab_test_p);
            m.merge("out", ab_out);
            m.merge("fraction", ab_fraction);
            m.merge("seeds", ab_seeds);
            m.merge("probe-epochs", ab_epochs);
            m.merge("probe-batch", ab_batch);
            m.merge("probe-lr", ab_lr);
            m.merge("probe-warmup", ab_warmup);
            m.merge("low-resource-multiplier", ab_mult);
            ab_model.merge(m);
            ab_train.merge(m);
            kiln::AblateOpts o;
            o.data_dir = ab_data;
            o.docs = ab_docs;
            o.relc_train = ab_train_p;
            o.relc_test = ab_test_p;
            o.out = ab_out;
            o.model = ab_model.build();
            o.train = ab_train.build();
            o.fraction = ab_fraction;
            if (!ab_seeds.empty()) o.seeds = ab_seeds;
            o.hp.epochs = ab_epochs;
            o.hp.batch = ab_batch;
            o.hp.lr = ab_lr;
            o.hp.warmup_fraction = ab_warmup;
            o.low_resource_multiplier = ab_mult;
            print_summary(kiln::run_ablate(o));
        }
        return 0;
    } catch (const kiln::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const kiln::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
