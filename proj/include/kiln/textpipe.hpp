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

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "kiln/common.hpp"
#include "kiln/io.hpp"

namespace kiln {

// Reserved vocabulary ids.  The order is fixed; surface tokens start at
// kNumReserved.  [P1]..[P3] are the soft prompt slots whose embedding rows are
// trained through decoder targets; [E1]/[E2] pairs enclose entity mentions
// inline for downstream tasks and are distinct from the levitated [ME]/[MR]
// pairs appended during pre-training.
struct Vocab {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kSep = 3;
    static constexpr int kMask = 4;
    static constexpr int kEntOpen = 5;    // [ME]
    static constexpr int kEntClose = 6;   // [/ME]
    static constexpr int kRelOpen = 7;    // [MR]
    static constexpr int kRelClose = 8;   // [/MR]
    static constexpr int kPrompt1 = 9;
    static constexpr int kPrompt2 = 10;
    static constexpr int kPrompt3 = 11;
    static constexpr int kE1Open = 12;
    static constexpr int kE1Close = 13;
    static constexpr int kE2Open = 14;
    static constexpr int kE2Close = 15;
    static constexpr int kNumReserved = 16;

    std::vector<std::string> tokens;
    std::unordered_map<std::string, int> index;

    static const std::vector<std::string>& reserved_tokens() {
        static const std::vector<std::string> r = {
            "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[ME]", "[/ME]", "[MR]", "[/MR]",
            "[P1]",  "[P2]",  "[P3]",  "[E1]",  "[/E1]",  "[E2]", "[/E2]"};
        return r;
    }

    int size() const { return static_cast<int>(tokens.size()); }

    int id(const std::string& tok) const {
        auto it = index.find(tok);
        return it == index.end() ? kUnk : it->second;
    }

    bool contains(const std::string& tok) const { return index.count(tok) > 0; }

    const std::string& token(int id) const {
        if (id < 0 || id >= size()) throw InputError("vocab id out of range: " + std::to_string(id));
        return tokens[static_cast<size_t>(id)];
    }

    static bool is_reserved(int id) { return id >= 0 && id < kNumReserved; }

    // Reserved ids other than [UNK] never stand for surface text.  [UNK] does
    // (it replaces out-of-vocabulary surface tokens), so corruption treats it
    // like any other text token.
    static bool mlm_eligible_id(int id) { return id == kUnk || !is_reserved(id); }

    std::vector<int> encode(const std::vector<std::string>& toks) const {
        std::vector<int> ids;
        ids.reserve(toks.size());
        for (const auto& t : toks) ids.push_back(id(t));
        return ids;
    }

    std::vector<std::string> decode(const std::vector<int>& ids) const {
        std::vector<std::string> out;
        out.reserve(ids.size());
        for (int i : ids) out.push_back(token(i));
        return out;
    }

    // Builds a vocab from surface-token counts: reserved ids first, then
    // surface tokens sorted by (count desc, token asc) so the mapping is a
    // pure function of the corpus.
    static Vocab build(const std::map<std::string, long>& counts) {
        Vocab v;
        v.tokens = reserved_tokens();
        std::vector<std::pair<std::string, long>> surface;
        surface.reserve(counts.size());
        for (const auto& [tok, n] : counts) {
            if (tok.empty()) throw InputError("empty token in vocab counts");
            bool reserved = false;
            for (const auto& r : reserved_tokens())
                if (tok == r) reserved = true;
            if (!reserved) surface.emplace_back(tok, n);
        }
        std::sort(surface.begin(), surface.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        for (auto& [tok, n] : surface) v.tokens.push_back(tok);
        v.rebuild_index();
        return v;
    }

    void rebuild_index() {
        index.clear();
        for (int i = 0; i < size(); ++i) {
            if (!index.emplace(tokens[static_cast<size_t>(i)], i).second)
                throw InputError("duplicate token in vocab: " + tokens[static_cast<size_t>(i)]);
        }
    }

    // One token per line; the line number is the id.
    void save(const fs::path& path) const {
        std::string buf;
        for (const auto& t : tokens) {
            buf += t;
            buf += '\n';
        }
        write_file(path, buf);
    }

    static Vocab load(const fs::path& path) {
        Vocab v;
        for (auto& line : read_lines(path)) {
            if (line.empty()) throw InputError(path.string() + ": empty vocab line");
            v.tokens.push_back(line);
        }
        if (v.size() < kNumReserved) throw InputError(path.string() + ": vocab misses reserved ids");
        for (int i = 0; i < kNumReserved; ++i) {
            if (v.tokens[static_cast<size_t>(i)] != reserved_tokens()[static_cast<size_t>(i)])
                throw InputError(path.string() + ": reserved token mismatch at id " + std::to_string(i));
        }
        v.rebuild_index();
        return v;
    }
};

enum class Role : uint8_t { Text, MarkerOpen, MarkerClose };

enum class SpanKind : uint8_t { EntityPage, Relational };

inline std::string span_kind_name(SpanKind k) {
    return k == SpanKind::EntityPage ? "entity_page" : "relational";
}

inline SpanKind span_kind_from_name(const std::string& s) {
    if (s == "entity_page") return SpanKind::EntityPage;
    if (s == "relational") return SpanKind::Relational;
    throw InputError("unknown span kind: " + s);
}

// A levitated marker pair appended after the text region.  Indices address the
// full id sequence; the span is in text-token coordinates of the original
// sentence (0-based, inclusive ends).
struct MarkerPair {
    int open_index = 0;
    int close_index = 0;
    int span_start = 0;
    int span_end = 0;
    SpanKind kind = SpanKind::EntityPage;
};

// Text region layout: [CLS] t_0 .. t_{n-1} [SEP], position ids 0..n+1; marker
// pairs follow, each copying the position ids of its span boundary tokens.
struct EncoderInput {
    std::vector<int> ids;
    std::vector<int> position_ids;
    std::vector<Role> roles;
    std::vector<MarkerPair> pairs;
    // Original id at corrupted positions, -1 elsewhere.  Empty when no
    // corruption has been applied.
    std::vector<int> mlm_labels;

    int length() const { return static_cast<int>(ids.size()); }

    int text_length() const {
        int n = 0;
        while (n < length() && roles[static_cast<size_t>(n)] == Role::Text) ++n;
        return n;
    }
};

struct SpanRequest {
    int start = 0;  // inclusive, 0-based in sentence tokens
    int end = 0;    // inclusive
    SpanKind kind = SpanKind::EntityPage;
};

// Assembles the encoder input for one sentence plus its requested spans.
// Spans must lie inside the sentence; each request appends one marker pair
// ([ME]/[/ME] for entity pages, [MR]/[/MR] for relational targets) whose
// position ids equal those of the span boundary tokens (offset by one for the
// leading [CLS]).  Markers sit after [SEP] so text positions are unaffected.
inline EncoderInput assemble_encoder_input(const std::vector<std::string>& sentence,
                                           const std::vector<SpanRequest>& spans,
                                           const Vocab& vocab) {
    if (sentence.empty()) throw InputError("assemble_encoder_input: empty sentence");
    EncoderInput out;
    int n = static_cast<int>(sentence.size());
    out.ids.push_back(Vocab::kCls);
    for (const auto& t : sentence) out.ids.push_back(vocab.id(t));
    out.ids.push_back(Vocab::kSep);
    for (int i = 0; i < n + 2; ++i) {
        out.position_ids.push_back(i);
        out.roles.push_back(Role::Text);
    }
    for (const auto& s : spans) {
        if (s.start < 0 || s.end < s.start || s.end >= n)
            throw InputError("span out of range: [" + std::to_string(s.start) + "," +
                             std::to_string(s.end) + "] in sentence of " + std::to_string(n));
        MarkerPair p;
        p.span_start = s.start;
        p.span_end = s.end;
        p.kind = s.kind;
        p.open_index = out.length();
        out.ids.push_back(s.kind == SpanKind::EntityPage ? Vocab::kEntOpen : Vocab::kRelOpen);
        out.position_ids.push_back(s.start + 1);
        out.roles.push_back(Role::MarkerOpen);
        p.close_index = out.length();
        out.ids.push_back(s.kind == SpanKind::EntityPage ? Vocab::kEntClose : Vocab::kRelClose);
        out.position_ids.push_back(s.end + 1);
        out.roles.push_back(Role::MarkerClose);
        out.pairs.push_back(p);
    }
    return out;
}

struct MlmConfig {
    double rate = 0.15;
    // 80% [MASK] / 10% random surface token / 10% unchanged; when false every
    // corrupted position becomes [MASK].
    bool bert_split = true;
    // When false, text positions covered by any marker pair's span are exempt.
    bool corrupt_anchor_spans = true;
};

// Applies masked-token corruption in place.  Only text-role tokens are
// eligible, and of those only ids that stand for surface text.  Random
// replacements are drawn from surface ids (>= kNumReserved).  Labels record
// the original id at each corrupted position.
inline void apply_mlm(EncoderInput& input, const MlmConfig& cfg, const Vocab& vocab,
                      uint64_t rng_seed) {
    if (cfg.rate < 0.0 || cfg.rate > 1.0) throw InputError("mlm rate outside [0,1]");
    int n_surface = vocab.size() - Vocab::kNumReserved;
    if (cfg.rate > 0.0 && n_surface <= 0) throw InputError("vocab has no surface tokens");
    Rng rng(rng_seed);
    input.mlm_labels.assign(static_cast<size_t>(input.length()), -1);
    std::vector<bool> in_span(static_cast<size_t>(input.length()), false);
    if (!cfg.corrupt_anchor_spans) {
        for (const auto& p : input.pairs)
            for (int i = p.span_start + 1; i <= p.span_end + 1 && i < input.length(); ++i)
                in_span[static_cast<size_t>(i)] = true;
    }
    for (int i = 0; i < input.length(); ++i) {
        if (input.roles[static_cast<size_t>(i)] != Role::Text) continue;
        if (!Vocab::mlm_eligible_id(input.ids[static_cast<size_t>(i)])) continue;
        if (in_span[static_cast<size_t>(i)]) continue;
        if (!rng.bernoulli(cfg.rate)) continue;
        input.mlm_labels[static_cast<size_t>(i)] = input.ids[static_cast<size_t>(i)];
        if (cfg.bert_split) {
            double u = rng.uniform();
            if (u < 0.8) {
                input.ids[static_cast<size_t>(i)] = Vocab::kMask;
            } else if (u < 0.9) {
                input.ids[static_cast<size_t>(i)] =
                    Vocab::kNumReserved + static_cast<int>(rng.below(static_cast<uint64_t>(n_surface)));
            }  // else: keep the original token
        } else {
            input.ids[static_cast<size_t>(i)] = Vocab::kMask;
        }
    }
}

inline void apply_mlm(EncoderInput& input, double rate, const Vocab& vocab, uint64_t rng_seed) {
    MlmConfig cfg;
    cfg.rate = rate;
    apply_mlm(input, cfg, vocab, rng_seed);
}

// Decoder target: one vocab id per slot plus a loss mask.  Soft prompt slots
// carry their reserved ids with the mask off; every masked-off slot still
// feeds the decoder as input so the prompts are trained through the slots
// after them.
struct DecoderTarget {
    std::vector<int> slot_ids;
    std::vector<bool> loss_mask;

    int length() const { return static_cast<int>(slot_ids.size()); }
};

// Flattens a relation fact into soft-prompt-interleaved decoder slots:
// [P1] <relation surface> [P2] <tail name> [P3].
inline DecoderTarget flatten_fact(const std::vector<std::string>& relation_surface,
                                  const std::vector<std::string>& tail_name, const Vocab& vocab) {
    if (relation_surface.empty()) throw InputError("flatten_fact: empty relation surface");
    if (tail_name.empty()) throw InputError("flatten_fact: empty tail name");
    DecoderTarget t;
    auto push = [&](int id, bool loss) {
        t.slot_ids.push_back(id);
        t.loss_mask.push_back(loss);
    };
    push(Vocab::kPrompt1, false);
    for (const auto& tok : relation_surface) push(vocab.id(tok), true);
    push(Vocab::kPrompt2, false);
    for (const auto& tok : tail_name) push(vocab.id(tok), true);
    push(Vocab::kPrompt3, false);
    return t;
}

// Entity-page prefix target: the first up-to-prefix_len page tokens, all
// loss-bearing.
inline DecoderTarget page_prefix_target(const std::vector<std::string>& page, int prefix_len,
                                        const Vocab& vocab) {
    if (page.empty()) throw InputError("page_prefix_target: empty page");
    if (prefix_len <= 0) throw InputError("page_prefix_target: prefix_len must be positive");
    DecoderTarget t;
    int n = std::min<int>(prefix_len, static_cast<int>(page.size()));
    for (int i = 0; i < n; ++i) {
        t.slot_ids.push_back(vocab.id(page[static_cast<size_t>(i)]));
        t.loss_mask.push_back(true);
    }
    return t;
}

}  // namespace kiln
