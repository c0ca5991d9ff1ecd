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

#include <set>
#include <tuple>

#include "kiln/io.hpp"
#include "kiln/textpipe.hpp"

namespace kiln {

struct EntityEntry {
    std::string id;
    std::vector<std::string> name;
    std::vector<std::string> page;
};

struct FactTriple {
    std::string head, relation, tail;

    auto tie() const { return std::tie(head, relation, tail); }
    bool operator<(const FactTriple& o) const { return tie() < o.tie(); }
    bool operator==(const FactTriple& o) const { return tie() == o.tie(); }
};

// Inclusive token span of one entity mention.
struct Anchor {
    int sent = 0;
    int start = 0;
    int end = 0;
    std::string entity;
};

struct Document {
    std::string doc_id;
    std::vector<std::vector<std::string>> sentences;
    std::vector<Anchor> anchors;
};

struct Kb {
    std::map<std::string, EntityEntry> entities;
    std::vector<FactTriple> facts;
    std::map<std::string, std::vector<std::string>> relation_surface;
    std::map<std::pair<std::string, std::string>, std::vector<int>> facts_by_pair;
    long n_duplicate_facts = 0;
    long n_self_loops = 0;
};

inline Kb load_kb(const fs::path& entities_path, const fs::path& facts_path,
                  const fs::path& relations_path) {
    Kb kb;
    for (const auto& j : read_jsonl(entities_path)) {
        EntityEntry e;
        e.id = require_field(j, "entity", entities_path.string()).get<std::string>();
        e.name = require_field(j, "name", entities_path.string()).get<std::vector<std::string>>();
        if (j.contains("page")) e.page = j.at("page").get<std::vector<std::string>>();
        if (e.name.empty()) throw InputError(entities_path.string() + ": entity '" + e.id + "' has empty name");
        if (!kb.entities.emplace(e.id, e).second)
            throw InputError(entities_path.string() + ": duplicate entity id '" + e.id + "'");
    }
    for (const auto& row : read_tsv(relations_path, 2)) {
        auto toks = split_ws(row[1]);
        if (toks.empty()) throw InputError(relations_path.string() + ": empty surface for relation '" + row[0] + "'");
        if (!kb.relation_surface.emplace(row[0], toks).second)
            throw InputError(relations_path.string() + ": duplicate relation '" + row[0] + "'");
    }
    std::set<FactTriple> seen;
    auto rows = read_tsv(facts_path, 3);
    for (size_t i = 0; i < rows.size(); ++i) {
        FactTriple f{rows[i][0], rows[i][1], rows[i][2]};
        if (!kb.entities.count(f.head))
            throw InputError(facts_path.string() + ": fact " + std::to_string(i + 1) + " references unknown head '" + f.head + "'");
        if (!kb.entities.count(f.tail))
            throw InputError(facts_path.string() + ": fact " + std::to_string(i + 1) + " references unknown tail '" + f.tail + "'");
        if (!kb.relation_surface.count(f.relation))
            throw InputError(facts_path.string() + ": fact " + std::to_string(i + 1) + " uses relation '" + f.relation + "' with no surface form");
        if (!seen.insert(f).second) {
            ++kb.n_duplicate_facts;
            continue;
        }
        if (f.head == f.tail) ++kb.n_self_loops;
        kb.facts_by_pair[{f.head, f.tail}].push_back(static_cast<int>(kb.facts.size()));
        kb.facts.push_back(std::move(f));
    }
    return kb;
}

// Documents sorted by ascending doc_id so downstream outputs are independent
// of file order.
inline std::vector<Document> load_docs(const fs::path& path) {
    std::vector<Document> docs;
    std::set<std::string> ids;
    for (const auto& j : read_jsonl(path)) {
        Document d;
        d.doc_id = require_field(j, "doc_id", path.string()).get<std::string>();
        if (!ids.insert(d.doc_id).second)
            throw InputError(path.string() + ": duplicate doc_id '" + d.doc_id + "'");
        d.sentences = require_field(j, "sentences", path.string()).get<std::vector<std::vector<std::string>>>();
        for (const auto& s : d.sentences)
            if (s.empty()) throw InputError(path.string() + ": empty sentence in doc '" + d.doc_id + "'");
        if (j.contains("anchors")) {
            for (const auto& a : j.at("anchors")) {
                Anchor an;
                an.sent = require_field(a, "sent", path.string()).get<int>();
                an.start = require_field(a, "start", path.string()).get<int>();
                an.end = require_field(a, "end", path.string()).get<int>();
                an.entity = require_field(a, "entity", path.string()).get<std::string>();
                if (an.sent < 0 || an.sent >= static_cast<int>(d.sentences.size()))
                    throw InputError(path.string() + ": anchor sentence index out of range in doc '" + d.doc_id + "'");
                int n = static_cast<int>(d.sentences[static_cast<size_t>(an.sent)].size());
                if (an.start < 0 || an.end < an.start || an.end >= n)
                    throw InputError(path.string() + ": anchor span out of range in doc '" + d.doc_id + "'");
                d.anchors.push_back(std::move(an));
            }
        }
        docs.push_back(std::move(d));
    }
    std::sort(docs.begin(), docs.end(), [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
    return docs;
}

inline std::set<FactTriple> load_heldout_facts(const fs::path& path) {
    std::set<FactTriple> out;
    for (const auto& row : read_tsv(path, 3)) out.insert(FactTriple{row[0], row[1], row[2]});
    return out;
}

struct BuildStats {
    long docs = 0, sentences = 0;
    long anchors_total = 0, anchors_unresolved = 0, anchors_overlap_dropped = 0;
    long anchors_without_page = 0;
    long alignments_raw = 0, alignments_after_filter = 0, alignments_after_scrub = 0;
    long scrub_removed = 0;
    long duplicate_facts = 0, self_loop_facts = 0;
    long examples_entity_page = 0, examples_relational = 0;
    long distinct_relations = 0;
    std::vector<std::string> removed_relations;

    json to_json() const {
        return json{{"docs", docs},
                    {"sentences", sentences},
                    {"anchors_total", anchors_total},
                    {"anchors_unresolved", anchors_unresolved},
                    {"anchors_overlap_dropped", anchors_overlap_dropped},
                    {"anchors_without_page", anchors_without_page},
                    {"alignments_raw", alignments_raw},
                    {"alignments_after_filter", alignments_after_filter},
                    {"alignments_after_scrub", alignments_after_scrub},
                    {"scrub_removed", scrub_removed},
                    {"duplicate_facts", duplicate_facts},
                    {"self_loop_facts", self_loop_facts},
                    {"examples_entity_page", examples_entity_page},
                    {"examples_relational", examples_relational},
                    {"distinct_relations", distinct_relations},
                    {"removed_relations", removed_relations}};
    }
};

// Drops anchors naming unknown entities, then resolves overlaps within each
// sentence by keeping the longer span (earlier listed wins ties).
inline std::vector<Anchor> resolve_anchors(const Document& doc, const Kb& kb, BuildStats* stats) {
    std::vector<Anchor> known;
    for (const auto& a : doc.anchors) {
        if (stats) ++stats->anchors_total;
        if (!kb.entities.count(a.entity)) {
            if (stats) ++stats->anchors_unresolved;
            continue;
        }
        known.push_back(a);
    }
    std::vector<int> order(known.size());
    for (size_t i = 0; i < known.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        int lx = known[static_cast<size_t>(x)].end - known[static_cast<size_t>(x)].start;
        int ly = known[static_cast<size_t>(y)].end - known[static_cast<size_t>(y)].start;
        if (lx != ly) return lx > ly;
        return x < y;
    });
    std::vector<bool> keep(known.size(), false);
    std::vector<std::vector<std::pair<int, int>>> taken;  // per sentence, accepted spans
    taken.resize(doc.sentences.size());
    for (int idx : order) {
        const Anchor& a = known[static_cast<size_t>(idx)];
        bool clash = false;
        for (const auto& [s, e] : taken[static_cast<size_t>(a.sent)])
            if (!(a.end < s || e < a.start)) clash = true;
        if (clash) {
            if (stats) ++stats->anchors_overlap_dropped;
            continue;
        }
        taken[static_cast<size_t>(a.sent)].push_back({a.start, a.end});
        keep[static_cast<size_t>(idx)] = true;
    }
    std::vector<Anchor> out;
    for (size_t i = 0; i < known.size(); ++i)
        if (keep[i]) out.push_back(known[i]);
    return out;
}

struct FactAlignment {
    int doc_index = 0;
    Anchor head_anchor;
    Anchor tail_anchor;
    int fact_index = 0;
};

// Distant supervision: every ordered pair of distinct anchors in the same
// sentence emits one alignment per matching fact.
inline std::vector<FactAlignment> align_facts(const std::vector<Document>& docs, const Kb& kb,
                                              BuildStats* stats) {
    std::vector<FactAlignment> out;
    for (size_t di = 0; di < docs.size(); ++di) {
        auto anchors = resolve_anchors(docs[di], kb, stats);
        if (stats) {
            stats->docs += 1;
            stats->sentences += static_cast<long>(docs[di].sentences.size());
        }
        for (size_t i = 0; i < anchors.size(); ++i) {
            for (size_t j = 0; j < anchors.size(); ++j) {
                if (i == j || anchors[i].sent != anchors[j].sent) continue;
                auto it = kb.facts_by_pair.find({anchors[i].entity, anchors[j].entity});
                if (it == kb.facts_by_pair.end()) continue;
                for (int fi : it->second) {
                    FactAlignment fa;
                    fa.doc_index = static_cast<int>(di);
                    fa.head_anchor = anchors[i];
                    fa.tail_anchor = anchors[j];
                    fa.fact_index = fi;
                    out.push_back(fa);
                }
            }
        }
    }
    if (stats) stats->alignments_raw = static_cast<long>(out.size());
    return out;
}

inline std::map<std::string, long> relation_frequency(const std::vector<FactAlignment>& alignments,
                                                      const Kb& kb) {
    std::map<std::string, long> freq;
    for (const auto& fa : alignments) ++freq[kb.facts[static_cast<size_t>(fa.fact_index)].relation];
    return freq;
}

// The top_k relations by alignment count (ties: lexicographically earlier
// relation ranks higher) are dropped entirely; growing top_k only ever grows
// the removed set.
inline std::vector<std::string> top_k_relations(const std::map<std::string, long>& freq, int top_k) {
    if (top_k < 0) throw InputError("top_k_relations must be >= 0");
    if (top_k == 0) return {};
    if (top_k >= static_cast<int>(freq.size()))
        throw InputError("top_k_relations (" + std::to_string(top_k) + ") must be smaller than the number of aligned relations (" + std::to_string(freq.size()) + ")");
    std::vector<std::pair<std::string, long>> order(freq.begin(), freq.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> removed;
    for (int i = 0; i < top_k; ++i) removed.push_back(order[static_cast<size_t>(i)].first);
    std::sort(removed.begin(), removed.end());
    return removed;
}

inline std::vector<FactAlignment> filter_relations(const std::vector<FactAlignment>& alignments,
                                                   const Kb& kb,
                                                   const std::vector<std::string>& removed) {
    std::set<std::string> drop(removed.begin(), removed.end());
    std::vector<FactAlignment> out;
    for (const auto& fa : alignments)
        if (!drop.count(kb.facts[static_cast<size_t>(fa.fact_index)].relation)) out.push_back(fa);
    return out;
}

// Removes alignments whose fact appears in the held-out set, so injected
// knowledge cannot leak evaluation answers.
inline std::vector<FactAlignment> scrub_heldout(const std::vector<FactAlignment>& alignments,
                                                const Kb& kb, const std::set<FactTriple>& heldout,
                                                long* removed) {
    std::vector<FactAlignment> out;
    long n = 0;
    for (const auto& fa : alignments) {
        if (heldout.count(kb.facts[static_cast<size_t>(fa.fact_index)])) {
            ++n;
            continue;
        }
        out.push_back(fa);
    }
    if (removed) *removed = n;
    return out;
}

struct InjectionExample {
    std::string doc_id;
    int sent = 0;
    std::vector<std::string> sentence;
    int start = 0, end = 0;  // inclusive span
    SpanKind kind = SpanKind::EntityPage;
    std::vector<std::string> target;

    json to_json() const {
        return json{{"doc_id", doc_id}, {"sent", sent},       {"sentence", sentence},
                    {"span", {start, end}}, {"kind", span_kind_name(kind)}, {"target", target}};
    }

    static InjectionExample from_json(const json& j, const std::string& where) {
        InjectionExample e;
        e.doc_id = require_field(j, "doc_id", where).get<std::string>();
        e.sent = require_field(j, "sent", where).get<int>();
        e.sentence = require_field(j, "sentence", where).get<std::vector<std::string>>();
        auto span = require_field(j, "span", where).get<std::vector<int>>();
        if (span.size() != 2) throw InputError(where + ": span must be [start, end]");
        e.start = span[0];
        e.end = span[1];
        e.kind = span_kind_from_name(require_field(j, "kind", where).get<std::string>());
        e.target = require_field(j, "target", where).get<std::vector<std::string>>();
        return e;
    }
};

// Emits entity-page examples for every resolved anchor with a page, then one
// relational example per alignment: the head anchor's span paired with
// [P1] <relation surface> [P2] <tail name> [P3].
inline std::vector<InjectionExample> build_examples(const std::vector<Document>& docs, const Kb& kb,
                                                    const std::vector<FactAlignment>& alignments,
                                                    int page_prefix_len, BuildStats* stats) {
    if (page_prefix_len <= 0) throw InputError("page_prefix_len must be positive");
    std::vector<InjectionExample> out;
    for (size_t di = 0; di < docs.size(); ++di) {
        for (const auto& a : resolve_anchors(docs[di], kb, nullptr)) {
            const EntityEntry& e = kb.entities.at(a.entity);
            if (e.page.empty()) {
                if (stats) ++stats->anchors_without_page;
                continue;
            }
            InjectionExample ex;
            ex.doc_id = docs[di].doc_id;
            ex.sent = a.sent;
            ex.sentence = docs[di].sentences[static_cast<size_t>(a.sent)];
            ex.start = a.start;
            ex.end = a.end;
            ex.kind = SpanKind::EntityPage;
            int n = std::min<int>(page_prefix_len, static_cast<int>(e.page.size()));
            ex.target.assign(e.page.begin(), e.page.begin() + n);
            out.push_back(std::move(ex));
        }
    }
    for (const auto& fa : alignments) {
        const FactTriple& fact = kb.facts[static_cast<size_t>(fa.fact_index)];
        const Document& doc = docs[static_cast<size_t>(fa.doc_index)];
        InjectionExample ex;
        ex.doc_id = doc.doc_id;
        ex.sent = fa.head_anchor.sent;
        ex.sentence = doc.sentences[static_cast<size_t>(fa.head_anchor.sent)];
        ex.start = fa.head_anchor.start;
        ex.end = fa.head_anchor.end;
        ex.kind = SpanKind::Relational;
        ex.target.push_back("[P1]");
        for (const auto& t : kb.relation_surface.at(fact.relation)) ex.target.push_back(t);
        ex.target.push_back("[P2]");
        for (const auto& t : kb.entities.at(fact.tail).name) ex.target.push_back(t);
        ex.target.push_back("[P3]");
        out.push_back(std::move(ex));
    }
    if (stats) {
        for (const auto& ex : out)
            (ex.kind == SpanKind::EntityPage ? stats->examples_entity_page : stats->examples_relational)++;
    }
    return out;
}

// Vocabulary counts cover document text, entity names, relation surfaces, and
// usable page prefixes.
inline std::map<std::string, long> vocab_counts(const std::vector<Document>& docs, const Kb& kb,
                                                int page_prefix_len) {
    std::map<std::string, long> counts;
    for (const auto& d : docs)
        for (const auto& s : d.sentences)
            for (const auto& t : s) ++counts[t];
    for (const auto& [id, e] : kb.entities) {
        for (const auto& t : e.name) ++counts[t];
        int n = std::min<int>(page_prefix_len, static_cast<int>(e.page.size()));
        for (int i = 0; i < n; ++i) ++counts[e.page[static_cast<size_t>(i)]];
    }
    for (const auto& [rel, toks] : kb.relation_surface)
        for (const auto& t : toks) ++counts[t];
    return counts;
}

struct BuildResult {
    std::vector<InjectionExample> examples;
    Vocab vocab;
    std::map<std::string, long> relation_freq;
    BuildStats stats;
};

// Full pipeline: align, filter frequent relations, scrub held-out facts, emit
// examples, build the vocabulary.
inline BuildResult build_data(const std::vector<Document>& docs, const Kb& kb,
                              const std::set<FactTriple>& heldout, int top_k_filter,
                              int page_prefix_len) {
    BuildResult r;
    r.stats.duplicate_facts = kb.n_duplicate_facts;
    r.stats.self_loop_facts = kb.n_self_loops;
    auto alignments = align_facts(docs, kb, &r.stats);
    r.relation_freq = relation_frequency(alignments, kb);
    r.stats.distinct_relations = static_cast<long>(r.relation_freq.size());
    r.stats.removed_relations = top_k_relations(r.relation_freq, top_k_filter);
    alignments = filter_relations(alignments, kb, r.stats.removed_relations);
    r.stats.alignments_after_filter = static_cast<long>(alignments.size());
    alignments = scrub_heldout(alignments, kb, heldout, &r.stats.scrub_removed);
    r.stats.alignments_after_scrub = static_cast<long>(alignments.size());
    r.examples = build_examples(docs, kb, alignments, page_prefix_len, &r.stats);
    r.vocab = Vocab::build(vocab_counts(docs, kb, page_prefix_len));
    return r;
}

}  // namespace kiln
