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

// Synthetic world for desk-scale experiments: ~50 entities, 10 relations, a
// document corpus with entity anchors, and downstream task files.
//
// The relation inventory pairs confusable alternatives with identical type
// signatures (studied_at/worked_at, born_in/died_in, married_to/rival_of,
// based_in/founded_in), so a model cannot guess a pair's relation from entity
// categories alone.  Two bookkeeping relations (located_in, part_of) are
// mentioned in almost every document and dominate alignment counts, playing
// the role of frequent-but-simple relations for the top-k filter.
//
// Facts split into train and test halves.  Train facts are stated openly in
// revealing template sentences.  Test facts are never stated in text: their
// entity pairs only co-occur in neutral sentences, so the only path from
// corpus to test-fact knowledge is span-level injection (relational targets
// aligned by distant supervision, and entity pages, which appear exclusively
// as decoder targets).  The relation-classification test set asks exactly
// those test pairs.

#pragma once

#include "kiln/kbcorpus.hpp"

namespace kiln {

namespace toy {

inline const std::vector<std::string>& first_names() {
    static const std::vector<std::string> v = {
        "Alba",  "Boris", "Clara",  "Daven", "Edwin",  "Flora", "Gavin", "Hazel", "Ivor",  "Jonas",
        "Kiera", "Laszlo", "Mirela", "Nolan", "Odette", "Pavel", "Quinn", "Rosa",  "Stellan", "Tamsin"};
    return v;
}

inline const std::vector<std::string>& last_names() {
    static const std::vector<std::string> v = {
        "Ashford",  "Brubeck", "Calloway", "Dorsey",  "Ennis",   "Farrow",  "Grantham",
        "Holloway", "Irving",  "Jessup",   "Kovacs",  "Lindqvist", "Moravec", "Norwood",
        "Oakes",    "Pellerin", "Quimby",  "Rutherford", "Sandoval", "Tennant"};
    return v;
}

inline const std::vector<std::string>& org_stems() {
    static const std::vector<std::string> v = {"Aldercrest", "Briarwood", "Cinderpeak", "Duskmere",
                                               "Eastgrove",  "Fennimore", "Glasswater", "Hollowpine",
                                               "Ironvale",   "Juniperfield", "Kestrelmoor", "Larkspur"};
    return v;
}

inline const std::vector<std::string>& org_kinds() {
    static const std::vector<std::string> v = {"College", "Institute", "Laboratories", "University"};
    return v;
}

inline const std::vector<std::string>& towns() {
    static const std::vector<std::string> v = {"Arlenport", "Bexhill", "Cravenmoor", "Dunwich",
                                               "Elmsworth", "Fairhaven", "Gorsevale", "Harlington",
                                               "Ivybridge", "Jarrowfield"};
    return v;
}

inline const std::vector<std::string>& regions() {
    static const std::vector<std::string> v = {"Kelmscott", "Lowdham", "Marrowgate", "Nethercote", "Ostergard"};
    return v;
}

inline const std::vector<std::pair<std::string, std::string>>& umbrellas() {
    static const std::vector<std::pair<std::string, std::string>> v = {
        {"Meridian", "Trust"}, {"Concord", "Alliance"}, {"Vantage", "Group"}};
    return v;
}

struct Template {
    std::vector<std::string> tokens;  // "{H}", "{T}", "{S}", "{O}", "{A}" expand in place
};

inline const std::map<std::string, std::vector<Template>>& reveal_templates() {
    static const std::map<std::string, std::vector<Template>> m = {
        {"studied_at", {{{"{H}", "studied", "at", "{T}", "for", "three", "years", "."}},
                        {{"Years", "ago", "{H}", "studied", "at", "{T}", "."}}}},
        {"worked_at", {{{"{H}", "worked", "at", "{T}", "for", "a", "decade", "."}},
                       {{"{H}", "worked", "at", "{T}", "until", "retirement", "."}}}},
        {"born_in", {{{"{H}", "was", "born", "in", "{T}", "."}},
                     {{"{H}", "was", "born", "in", "{T}", "one", "winter", "."}}}},
        {"died_in", {{{"{H}", "died", "in", "{T}", "."}},
                     {{"{H}", "died", "in", "{T}", "after", "a", "long", "life", "."}}}},
        {"married_to", {{{"{H}", "married", "{T}", "in", "the", "spring", "."}},
                        {{"{H}", "married", "{T}", "."}}}},
        {"rival_of", {{{"{H}", "rivaled", "{T}", "for", "years", "."}},
                      {{"{H}", "rivaled", "{T}", "in", "every", "contest", "."}}}},
        {"based_in", {{{"{H}", "is", "based", "in", "{T}", "."}},
                      {{"{H}", "has", "long", "been", "based", "in", "{T}", "."}}}},
        {"founded_in", {{{"{H}", "was", "founded", "in", "{T}", "."}},
                        {{"{H}", "was", "founded", "in", "{T}", "decades", "ago", "."}}}},
        {"located_in", {{{"{H}", "is", "located", "in", "{T}", "."}},
                        {{"Maps", "show", "{H}", "located", "in", "{T}", "."}}}},
        {"part_of", {{{"{H}", "is", "part", "of", "{T}", "."}},
                     {{"{H}", "remains", "part", "of", "{T}", "."}}}},
    };
    return m;
}

inline const std::vector<Template>& neutral_templates() {
    static const std::vector<Template> v = {
        {{"Witnesses", "saw", "{S}", "near", "{O}", "{A}", "."}},
        {{"A", "column", "about", "{S}", "and", "{O}", "ran", "{A}", "."}},
        {{"The", "festival", "brought", "{S}", "and", "{O}", "together", "{A}", "."}},
        {{"Many", "stories", "mention", "{S}", "alongside", "{O}", "{A}", "."}},
        {{"{S}", "and", "{O}", "drew", "a", "crowd", "{A}", "."}},
        {{"The", "archive", "holds", "letters", "from", "{S}", "about", "{O}", "{A}", "."}},
    };
    return v;
}

inline const std::vector<std::string>& neutral_adverbs() {
    static const std::vector<std::string> v = {"quietly", "briefly", "twice", "often",
                                               "later",   "again",   "soon",  "once"};
    return v;
}

inline const std::vector<Template>& single_templates() {
    static const std::vector<Template> v = {
        {{"Everyone", "in", "town", "knew", "{S}", "well", "."}},
        {{"The", "story", "began", "when", "{S}", "arrived", "."}},
        {{"{S}", "drew", "attention", "at", "the", "fair", "."}},
        {{"Reporters", "asked", "about", "{S}", "yesterday", "."}},
    };
    return v;
}

inline const std::vector<Template>& filler_templates() {
    static const std::vector<Template> v = {
        {{"The", "winter", "that", "year", "was", "mild", "."}},
        {{"Rain", "fell", "for", "days", "on", "end", "."}},
        {{"The", "market", "opened", "late", "as", "usual", "."}},
        {{"A", "quiet", "week", "passed", "without", "news", "."}},
    };
    return v;
}

inline const std::vector<Template>& ner_templates() {
    static const std::vector<Template> v = {
        {{"{S}", "met", "{O}", "at", "{A}", "."}},
        {{"{S}", "spoke", "about", "{O}", "near", "{A}", "."}},
        {{"{S}", "and", "{O}", "toured", "{A}", "."}},
        {{"Crowds", "followed", "{S}", "through", "{O}", "."}},
        {{"{S}", "wrote", "to", "{O}", "every", "month", "."}},
    };
    return v;
}

struct World {
    std::vector<EntityEntry> entities;          // with pages
    std::map<std::string, std::vector<std::string>> categories;  // id -> typing labels
    std::map<std::string, std::string> ner_cat;                  // id -> PER/ORG/LOC
    std::vector<FactTriple> facts;
    std::vector<FactTriple> train_content, test_content, frequent;
    std::map<std::string, std::vector<std::string>> surfaces;
};

inline const EntityEntry& entity_of(const World& w, const std::string& id) {
    for (const auto& e : w.entities)
        if (e.id == id) return e;
    throw InputError("toy world: unknown entity " + id);
}

// Expands a template, recording an anchor for each slot filled with an entity.
struct BuiltSentence {
    std::vector<std::string> tokens;
    std::vector<std::pair<int, int>> spans;  // aligned with the slot fill order
};

inline BuiltSentence expand(const Template& tpl,
                            const std::map<std::string, std::vector<std::string>>& slot_fills) {
    BuiltSentence out;
    std::map<std::string, std::pair<int, int>> positions;
    for (const auto& tok : tpl.tokens) {
        auto it = slot_fills.find(tok);
        if (it != slot_fills.end()) {
            int start = static_cast<int>(out.tokens.size());
            for (const auto& t : it->second) out.tokens.push_back(t);
            positions[tok] = {start, static_cast<int>(out.tokens.size()) - 1};
        } else {
            out.tokens.push_back(tok);
        }
    }
    for (const auto& slot : {"{H}", "{T}", "{S}", "{O}"})
        if (positions.count(slot)) out.spans.push_back(positions.at(slot));
    return out;
}

inline World build_world(uint64_t seed) {
    World w;
    Rng rng(seed_mix(seed, "world"));
    auto add_entity = [&](const std::string& id, std::vector<std::string> name,
                          std::vector<std::string> cats, const std::string& ner) {
        EntityEntry e;
        e.id = id;
        e.name = std::move(name);
        w.entities.push_back(std::move(e));
        w.categories[id] = std::move(cats);
        w.ner_cat[id] = ner;
    };
    const std::vector<std::string> person_kinds = {"scientist", "artist", "athlete"};
    for (int i = 0; i < 20; ++i) {
        std::string id = "P" + std::to_string(i / 10) + std::to_string(i % 10);
        add_entity(id, {first_names()[static_cast<size_t>(i)], last_names()[static_cast<size_t>(i)]},
                   {"person", person_kinds[static_cast<size_t>(i % 3)]}, "PER");
    }
    for (int i = 0; i < 12; ++i) {
        std::string id = "O" + std::to_string(i / 10) + std::to_string(i % 10);
        const std::string& kind = org_kinds()[static_cast<size_t>(i % 4)];
        bool school = kind == "College" || kind == "University";
        add_entity(id, {org_stems()[static_cast<size_t>(i)], kind},
                   {"organization", school ? "school" : "company"}, "ORG");
    }
    for (int i = 0; i < 3; ++i) {
        std::string id = "O1" + std::to_string(2 + i);
        add_entity(id, {umbrellas()[static_cast<size_t>(i)].first, umbrellas()[static_cast<size_t>(i)].second},
                   {"organization", "company"}, "ORG");
    }
    for (int i = 0; i < 10; ++i) {
        std::string id = "L" + std::to_string(i / 10) + std::to_string(i % 10);
        add_entity(id, {towns()[static_cast<size_t>(i)]}, {"location"}, "LOC");
    }
    for (int i = 0; i < 5; ++i) {
        std::string id = "L1" + std::to_string(i);
        add_entity(id, {regions()[static_cast<size_t>(i)]}, {"location", "region"}, "LOC");
    }
    w.surfaces = {
        {"studied_at", {"studied", "at"}},   {"worked_at", {"worked", "at"}},
        {"born_in", {"was", "born", "in"}},  {"died_in", {"died", "in"}},
        {"married_to", {"married"}},         {"rival_of", {"rivaled"}},
        {"based_in", {"based", "in"}},       {"founded_in", {"founded", "in"}},
        {"located_in", {"located", "in"}},   {"part_of", {"part", "of"}},
    };
    auto eid = [](char c, int i) { return std::string(1, c) + std::to_string(i / 10) + std::to_string(i % 10); };
    std::vector<FactTriple> content;
    for (int i = 0; i < 20; ++i) {
        content.push_back({eid('P', i), rng.bernoulli(0.5) ? "studied_at" : "worked_at",
                           eid('O', static_cast<int>(rng.below(12)))});
        content.push_back({eid('P', i), rng.bernoulli(0.5) ? "born_in" : "died_in",
                           eid('L', static_cast<int>(rng.below(10)))});
    }
    std::vector<int> people(20);
    for (int i = 0; i < 20; ++i) people[static_cast<size_t>(i)] = i;
    rng.shuffle(people);
    for (int i = 0; i + 1 < 20; i += 2)
        content.push_back({eid('P', people[static_cast<size_t>(i)]),
                           rng.bernoulli(0.5) ? "married_to" : "rival_of",
                           eid('P', people[static_cast<size_t>(i + 1)])});
    for (int i = 0; i < 12; ++i)
        content.push_back({eid('O', i), rng.bernoulli(0.5) ? "based_in" : "founded_in",
                           eid('L', static_cast<int>(rng.below(10)))});
    for (int i = 0; i < 10; ++i)
        w.frequent.push_back({eid('L', i), "located_in", eid('L', 10 + i % 5)});
    for (int i = 0; i < 12; ++i)
        w.frequent.push_back({eid('O', i), "part_of", eid('O', 12 + i % 3)});
    std::vector<int> order(content.size());
    for (size_t i = 0; i < content.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    for (size_t i = 0; i < order.size(); ++i) {
        const FactTriple& f = content[static_cast<size_t>(order[i])];
        if (i % 4 == 0) w.test_content.push_back(f);
        else w.train_content.push_back(f);
    }
    for (const auto& f : content) w.facts.push_back(f);
    for (const auto& f : w.frequent) w.facts.push_back(f);

    // Pages: each entity's page states its own facts, so page knowledge covers
    // fact knowledge.  Pages never enter the text corpus.
    auto facts_of = [&](const std::string& id, const std::string& rel_a, const std::string& rel_b) {
        for (const auto& f : w.facts)
            if (f.head == id && (f.relation == rel_a || f.relation == rel_b)) return f;
        throw InputError("toy world: missing fact for " + id);
    };
    for (auto& e : w.entities) {
        char kind = e.id[0];
        if (kind == 'P') {
            FactTriple fo = facts_of(e.id, "studied_at", "worked_at");
            FactTriple fp = facts_of(e.id, "born_in", "died_in");
            e.page = e.name;
            e.page.insert(e.page.end(), {"is", "a", w.categories[e.id][1], "who"});
            for (const auto& t : w.surfaces[fo.relation]) e.page.push_back(t);
            for (const auto& t : entity_of(w, fo.tail).name) e.page.push_back(t);
            e.page.push_back("and");
            for (const auto& t : w.surfaces[fp.relation]) e.page.push_back(t);
            for (const auto& t : entity_of(w, fp.tail).name) e.page.push_back(t);
            e.page.push_back(".");
        } else if (kind == 'O') {
            int idx = std::stoi(e.id.substr(1));
            e.page = e.name;
            if (idx < 12) {
                FactTriple fb = facts_of(e.id, "based_in", "founded_in");
                e.page.insert(e.page.end(), {"is", "a", w.categories[e.id][1]});
                for (const auto& t : w.surfaces[fb.relation]) e.page.push_back(t);
                for (const auto& t : entity_of(w, fb.tail).name) e.page.push_back(t);
                e.page.push_back(".");
            } else {
                e.page.insert(e.page.end(), {"is", "a", "large", "group", "."});
            }
        } else {
            int idx = std::stoi(e.id.substr(1));
            if (idx < 10) {
                FactTriple fl = facts_of(e.id, "located_in", "located_in");
                e.page = e.name;
                e.page.insert(e.page.end(), {"is", "a", "town", "located", "in"});
                for (const auto& t : entity_of(w, fl.tail).name) e.page.push_back(t);
                e.page.push_back(".");
            } else {
                e.page = e.name;
                e.page.insert(e.page.end(), {"is", "a", "wide", "region", "."});
            }
        }
    }
    return w;
}

}  // namespace toy

struct ToySummary {
    long docs = 0, sentences = 0, facts = 0, entities = 0;
    long train_facts = 0, heldout_facts = 0;
};

// Writes the corpus, knowledge files, and downstream datasets for one seed.
inline ToySummary gen_toy(uint64_t seed, long n_sentences, const fs::path& out_dir) {
    if (n_sentences < 50) throw InputError("gen-toy needs at least 50 sentences");
    toy::World w = toy::build_world(seed);
    fs::create_directories(out_dir / "downstream");

    std::vector<json> entity_rows;
    for (const auto& e : w.entities)
        entity_rows.push_back({{"entity", e.id}, {"name", e.name}, {"page", e.page}});
    write_jsonl(out_dir / "entities.jsonl", entity_rows);
    {
        std::string buf;
        for (const auto& f : w.facts) buf += f.head + "\t" + f.relation + "\t" + f.tail + "\n";
        write_file(out_dir / "facts.tsv", buf);
        buf.clear();
        for (const auto& [rel, toks] : w.surfaces) buf += rel + "\t" + join(toks, " ") + "\n";
        write_file(out_dir / "relations.tsv", buf);
        buf.clear();
        for (const auto& f : w.test_content) buf += f.head + "\t" + f.relation + "\t" + f.tail + "\n";
        write_file(out_dir / "heldout_facts.tsv", buf);
    }

    // Corpus.  Every document states a couple of train facts, mentions the two
    // bookkeeping relations, and co-mentions fact pairs neutrally.
    Rng rng(seed_mix(seed, "docs"));
    std::vector<json> doc_rows;
    long total_sentences = 0;
    long doc_idx = 0;
    size_t reveal_rr = 0, neutral_rr = 0, located_rr = 0, part_rr = 0;
    std::vector<const FactTriple*> all_content;
    for (const auto& f : w.train_content) all_content.push_back(&f);
    for (const auto& f : w.test_content) all_content.push_back(&f);
    std::vector<const FactTriple*> located, part;
    for (const auto& f : w.frequent)
        (f.relation == "located_in" ? located : part).push_back(&f);
    while (total_sentences < n_sentences) {
        json doc;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "doc%05ld", doc_idx);
        doc["doc_id"] = idbuf;
        std::vector<std::vector<std::string>> sentences;
        std::vector<json> anchors;
        auto add = [&](const toy::BuiltSentence& b, const std::vector<std::string>& ents) {
            int si = static_cast<int>(sentences.size());
            sentences.push_back(b.tokens);
            for (size_t i = 0; i < ents.size() && i < b.spans.size(); ++i)
                anchors.push_back({{"sent", si},
                                   {"start", b.spans[i].first},
                                   {"end", b.spans[i].second},
                                   {"entity", ents[i]}});
        };
        auto reveal = [&](const FactTriple& f) {
            const auto& tpls = toy::reveal_templates().at(f.relation);
            const toy::Template& tpl = tpls[static_cast<size_t>(rng.below(tpls.size()))];
            auto b = toy::expand(tpl, {{"{H}", toy::entity_of(w, f.head).name},
                                       {"{T}", toy::entity_of(w, f.tail).name}});
            add(b, {f.head, f.tail});
        };
        reveal(w.train_content[reveal_rr++ % w.train_content.size()]);
        reveal(w.train_content[static_cast<size_t>(rng.below(w.train_content.size()))]);
        reveal(*located[located_rr++ % located.size()]);
        reveal(*part[part_rr++ % part.size()]);
        for (int nn = 0; nn < 2; ++nn) {
            const toy::Template& tpl = rng.pick(toy::neutral_templates());
            std::string s_id, o_id;
            if (rng.uniform() < 0.8) {
                const FactTriple* f = all_content[neutral_rr++ % all_content.size()];
                s_id = f->head;
                o_id = f->tail;
            } else {
                s_id = w.entities[static_cast<size_t>(rng.below(w.entities.size()))].id;
                do {
                    o_id = w.entities[static_cast<size_t>(rng.below(w.entities.size()))].id;
                } while (o_id == s_id);
            }
            auto b = toy::expand(tpl, {{"{S}", toy::entity_of(w, s_id).name},
                                       {"{O}", toy::entity_of(w, o_id).name},
                                       {"{A}", {rng.pick(toy::neutral_adverbs())}}});
            add(b, {s_id, o_id});
        }
        if (rng.bernoulli(0.6)) {
            const std::string& id = w.entities[static_cast<size_t>(rng.below(w.entities.size()))].id;
            auto b = toy::expand(rng.pick(toy::single_templates()), {{"{S}", toy::entity_of(w, id).name}});
            add(b, {id});
        } else {
            auto b = toy::expand(rng.pick(toy::filler_templates()), {});
            add(b, {});
        }
        total_sentences += static_cast<long>(sentences.size());
        doc["sentences"] = sentences;
        doc["anchors"] = anchors;
        doc_rows.push_back(std::move(doc));
        ++doc_idx;
    }
    write_jsonl(out_dir / "docs.jsonl", doc_rows);

    // Relation classification: neutral sentences only; test facts never share
    // a template instance with training.
    Rng rrng(seed_mix(seed, "relc"));
    auto relc_rows = [&](const std::vector<FactTriple>& facts, int per_fact) {
        std::vector<json> rows;
        for (const auto& f : facts) {
            std::vector<std::pair<int, int>> combos;
            for (int t = 0; t < static_cast<int>(toy::neutral_templates().size()); ++t)
                for (int a = 0; a < static_cast<int>(toy::neutral_adverbs().size()); ++a)
                    combos.push_back({t, a});
            rrng.shuffle(combos);
            for (int i = 0; i < per_fact && i < static_cast<int>(combos.size()); ++i) {
                const toy::Template& tpl = toy::neutral_templates()[static_cast<size_t>(combos[static_cast<size_t>(i)].first)];
                auto b = toy::expand(tpl, {{"{S}", toy::entity_of(w, f.head).name},
                                           {"{O}", toy::entity_of(w, f.tail).name},
                                           {"{A}", {toy::neutral_adverbs()[static_cast<size_t>(combos[static_cast<size_t>(i)].second)]}}});
                rows.push_back({{"tokens", b.tokens},
                                {"subj", {b.spans[0].first, b.spans[0].second}},
                                {"obj", {b.spans[1].first, b.spans[1].second}},
                                {"label", f.relation}});
            }
        }
        return rows;
    };
    write_jsonl(out_dir / "downstream" / "relc_train.jsonl", relc_rows(w.train_content, 32));
    write_jsonl(out_dir / "downstream" / "relc_test.jsonl", relc_rows(w.test_content, 12));

    // Entity typing.
    Rng trng(seed_mix(seed, "typing"));
    auto typing_rows = [&](int per_entity) {
        std::vector<json> rows;
        for (const auto& e : w.entities) {
            for (int i = 0; i < per_entity; ++i) {
                auto b = toy::expand(trng.pick(toy::single_templates()), {{"{S}", e.name}});
                rows.push_back({{"tokens", b.tokens},
                                {"span", {b.spans[0].first, b.spans[0].second}},
                                {"labels", w.categories[e.id]}});
            }
        }
        return rows;
    };
    write_jsonl(out_dir / "downstream" / "typing_train.jsonl", typing_rows(5));
    write_jsonl(out_dir / "downstream" / "typing_test.jsonl", typing_rows(2));

    // NER.
    Rng nrng(seed_mix(seed, "ner"));
    auto ner_rows = [&](int count) {
        std::vector<json> rows;
        for (int i = 0; i < count; ++i) {
            const toy::Template& tpl = nrng.pick(toy::ner_templates());
            int slots = 0;
            for (const auto& t : tpl.tokens)
                if (t == "{S}" || t == "{O}" || t == "{A}") ++slots;
            std::vector<const EntityEntry*> ents;
            while (static_cast<int>(ents.size()) < slots) {
                const EntityEntry& e = w.entities[static_cast<size_t>(nrng.below(w.entities.size()))];
                bool dup = false;
                for (const auto* x : ents) dup = dup || x->id == e.id;
                if (!dup) ents.push_back(&e);
            }
            std::map<std::string, std::vector<std::string>> fills;
            const char* slot_names[] = {"{S}", "{O}", "{A}"};
            for (int s = 0; s < slots; ++s) fills[slot_names[s]] = ents[static_cast<size_t>(s)]->name;
            toy::BuiltSentence b;
            std::vector<std::string> tags;
            for (const auto& tok : tpl.tokens) {
                auto it = fills.find(tok);
                if (it == fills.end()) {
                    b.tokens.push_back(tok);
                    tags.push_back("O");
                } else {
                    int which = tok == "{S}" ? 0 : tok == "{O}" ? 1 : 2;
                    const std::string& cat = w.ner_cat[ents[static_cast<size_t>(which)]->id];
                    for (size_t ti = 0; ti < it->second.size(); ++ti) {
                        b.tokens.push_back(it->second[ti]);
                        tags.push_back((ti == 0 ? "B-" : "I-") + cat);
                    }
                }
            }
            rows.push_back({{"tokens", b.tokens}, {"tags", tags}});
        }
        return rows;
    };
    write_jsonl(out_dir / "downstream" / "ner_train.jsonl", ner_rows(240));
    write_jsonl(out_dir / "downstream" / "ner_test.jsonl", ner_rows(80));

    ToySummary s;
    s.docs = doc_idx;
    s.sentences = total_sentences;
    s.facts = static_cast<long>(w.facts.size());
    s.entities = static_cast<long>(w.entities.size());
    s.train_facts = static_cast<long>(w.train_content.size());
    s.heldout_facts = static_cast<long>(w.test_content.size());
    return s;
}

}  // namespace kiln
