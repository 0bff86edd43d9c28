#include "topicrec/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace topicrec {

namespace {

bool has_whitespace(const std::string& s) {
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') return true;
    }
    return false;
}

void check_doc_id(const std::string& id, const std::string& where) {
    if (id.empty()) throw std::runtime_error(where + ": empty doc_id");
    if (has_whitespace(id)) {
        throw std::runtime_error(where + ": doc_id contains whitespace: '" + id + "'");
    }
}

}  // namespace

const Document* Corpus::find(const std::string& doc_id) const {
    for (const auto& d : docs) {
        if (d.doc_id == doc_id) return &d;
    }
    return nullptr;
}

void Corpus::recount() {
    n = docs.size();
    r = s = m = 0;
    for (const auto& d : docs) {
        bool ne = !d.ne_annotations.empty();
        bool dt = !d.dt_annotations.empty();
        if (ne) ++r;
        if (dt) ++s;
        if (ne && dt) ++m;
    }
}

Corpus load_corpus(const std::string& docs_path,
                   const std::string& ne_path,
                   const std::string& dt_path) {
    std::ifstream in(docs_path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + docs_path);

    Corpus corpus;
    std::set<std::string> seen;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(docs_path + ":" + std::to_string(line_no) +
                                     ": invalid JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("doc_id") || !j.contains("text")) {
            throw std::runtime_error(docs_path + ":" + std::to_string(line_no) +
                                     ": expected object with doc_id and text");
        }
        Document d;
        d.doc_id = j.at("doc_id").get<std::string>();
        d.raw_text = j.at("text").get<std::string>();
        check_doc_id(d.doc_id, docs_path + ":" + std::to_string(line_no));
        if (!seen.insert(d.doc_id).second) {
            throw std::runtime_error(docs_path + ":" + std::to_string(line_no) +
                                     ": duplicate doc_id: " + d.doc_id);
        }
        corpus.docs.push_back(std::move(d));
    }
    if (corpus.docs.empty()) {
        throw std::runtime_error("corpus file holds no documents: " + docs_path);
    }
    if (!ne_path.empty()) load_annotations(ne_path, corpus, true);
    if (!dt_path.empty()) load_annotations(dt_path, corpus, false);
    corpus.recount();
    return corpus;
}

void load_annotations(const std::string& path, Corpus& corpus, bool named_entities) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open annotation file: " + path);

    std::map<std::string, Document*> index;
    for (auto& d : corpus.docs) index[d.doc_id] = &d;

    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected doc_id<TAB>annotation");
        }
        std::string doc_id = line.substr(0, tab);
        std::string unit = normalize_annotation(line.substr(tab + 1));
        check_doc_id(doc_id, path + ":" + std::to_string(line_no));
        auto it = index.find(doc_id);
        if (it == index.end()) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": unknown doc_id: " + doc_id);
        }
        if (unit.empty()) continue;  // annotation collapsed to nothing
        if (named_entities) {
            it->second->ne_annotations.push_back(unit);
        } else {
            it->second->dt_annotations.push_back(unit);
        }
    }
    corpus.recount();
}

std::vector<std::string> preprocess(const std::string& raw_text,
                                    const std::set<std::string>& stopwords,
                                    const Stemmer& stemmer) {
    std::vector<std::string> out;
    for (auto& tok : tokenize_letters(raw_text)) {
        if (stopwords.count(tok)) continue;
        std::string stem = stemmer ? stemmer(tok) : tok;
        if (stem.empty()) continue;
        out.push_back(std::move(stem));
    }
    return out;
}

const char* view_name(View v) {
    switch (v) {
        case View::technical: return "technical";
        case View::named_entity: return "named_entity";
        case View::domain_term: return "domain_term";
    }
    throw std::invalid_argument("view_name: bad view");
}

int ViewMatrix::row_index(const std::string& doc_id) const {
    if (!index_built_) {
        index_.clear();
        for (size_t i = 0; i < row_ids.size(); ++i) {
            index_[row_ids[i]] = static_cast<int>(i);
        }
        index_built_ = true;
    }
    auto it = index_.find(doc_id);
    return it == index_.end() ? -1 : it->second;
}

void ViewMatrix::validate() const {
    if (rows.size() != row_ids.size()) {
        throw std::runtime_error("view matrix: row/id count mismatch");
    }
    for (size_t i = 0; i < rows.size(); ++i) {
        double norm2 = 0.0;
        int prev = -1;
        for (const auto& e : rows[i]) {
            if (e.term <= prev || e.term >= static_cast<int>(vocabulary.size())) {
                throw std::runtime_error("view matrix: bad term index in row " + row_ids[i]);
            }
            prev = e.term;
            norm2 += e.weight * e.weight;
        }
        if (rows[i].empty() || std::fabs(norm2 - 1.0) > 1e-9) {
            throw std::runtime_error("view matrix: row " + row_ids[i] +
                                     " is not unit-normalized");
        }
    }
}

double row_dot(const std::vector<ViewEntry>& a, const std::vector<ViewEntry>& b) {
    double dot = 0.0;
    size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i].term < b[j].term) {
            ++i;
        } else if (a[i].term > b[j].term) {
            ++j;
        } else {
            dot += a[i].weight * b[j].weight;
            ++i;
            ++j;
        }
    }
    return dot;
}

void SkipReport::add(const std::string& doc_id, const std::string& reason) {
    entries.push_back({doc_id, reason});
}

void SkipReport::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write skip report: " + path);
    for (const auto& e : entries) {
        out << e.doc_id << '\t' << e.reason << '\n';
    }
}

ViewMatrix build_view_matrix(const Corpus& corpus, View view,
                             const PreprocessOptions& prep,
                             SkipReport* skips) {
    // Token multiset per candidate document, in corpus order.
    std::vector<std::pair<std::string, std::map<std::string, int>>> cand;

    // The privileged views only consider documents that survive as
    // technical rows, so the privileged row sets stay nested inside the
    // technical one even when a document's body tokenizes to nothing.
    std::set<std::string> technical_rows;
    if (view != View::technical) {
        for (const auto& d : corpus.docs) {
            auto toks = preprocess(d.raw_text, prep.stopwords, prep.stemmer);
            if (!toks.empty()) technical_rows.insert(d.doc_id);
        }
    }

    for (const auto& d : corpus.docs) {
        std::map<std::string, int> counts;
        if (view == View::technical) {
            for (auto& t : preprocess(d.raw_text, prep.stopwords, prep.stemmer)) {
                ++counts[t];
            }
        } else {
            if (!technical_rows.count(d.doc_id)) continue;
            const auto& ann = (view == View::named_entity) ? d.ne_annotations
                                                           : d.dt_annotations;
            for (const auto& a : ann) ++counts[a];
        }
        if (counts.empty()) {
            if (view == View::technical && skips) {
                skips->add(d.doc_id, std::string("no tokens in ") + view_name(view) + " view");
            }
            continue;
        }
        cand.emplace_back(d.doc_id, std::move(counts));
    }

    // Document frequencies over the candidate rows. A term hitting every
    // candidate row has idf ln(1)=0 and is dropped before normalization.
    const size_t n_view = cand.size();
    std::map<std::string, int> df;
    for (const auto& [id, counts] : cand) {
        for (const auto& [term, c] : counts) ++df[term];
    }

    std::vector<std::string> vocab;
    for (const auto& [term, d] : df) {
        if (static_cast<size_t>(d) < n_view) vocab.push_back(term);
    }
    std::map<std::string, int> term_index;
    for (size_t i = 0; i < vocab.size(); ++i) term_index[vocab[i]] = static_cast<int>(i);

    ViewMatrix out;
    out.view = view;
    out.vocabulary = std::move(vocab);

    for (auto& [id, counts] : cand) {
        std::vector<ViewEntry> row;
        double norm2 = 0.0;
        for (const auto& [term, c] : counts) {
            auto it = term_index.find(term);
            if (it == term_index.end()) continue;  // dropped ubiquitous term
            double w = static_cast<double>(c) *
                       std::log(static_cast<double>(n_view) / df[term]);
            if (w == 0.0) continue;
            row.push_back({it->second, w, c});
            norm2 += w * w;
        }
        if (row.empty()) {
            if (skips) {
                skips->add(id, std::string("all-zero ") + view_name(view) + " vector");
            }
            continue;
        }
        double inv = 1.0 / std::sqrt(norm2);
        for (auto& e : row) e.weight *= inv;
        out.row_ids.push_back(id);
        out.rows.push_back(std::move(row));
    }
    return out;
}

PrivilegedSplit split_privileged(const Corpus& corpus) {
    PrivilegedSplit split;
    for (const auto& d : corpus.docs) {
        if (!d.ne_annotations.empty() && !d.dt_annotations.empty()) {
            split.privileged.push_back(d.doc_id);
        } else {
            split.remainder.push_back(d.doc_id);
        }
    }
    std::sort(split.privileged.begin(), split.privileged.end());
    std::sort(split.remainder.begin(), split.remainder.end());
    if (split.privileged.size() < 2) {
        throw std::runtime_error(
            "privileged subset needs at least 2 documents with both "
            "annotation kinds, found " + std::to_string(split.privileged.size()));
    }
    return split;
}

ViewMatrix restrict_rows(const ViewMatrix& m, const std::set<std::string>& ids) {
    ViewMatrix out;
    out.view = m.view;
    out.vocabulary = m.vocabulary;
    for (size_t i = 0; i < m.row_ids.size(); ++i) {
        if (ids.count(m.row_ids[i])) {
            out.row_ids.push_back(m.row_ids[i]);
            out.rows.push_back(m.rows[i]);
        }
    }
    if (out.row_ids.size() != ids.size()) {
        std::set<std::string> present(m.row_ids.begin(), m.row_ids.end());
        for (const auto& id : ids) {
            if (!present.count(id)) {
                throw std::runtime_error("restrict_rows: id " + id +
                                         " has no row in this view");
            }
        }
    }
    return out;
}

void save_view_matrix(const ViewMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write view matrix: " + path);
    out << view_name(m.view) << '\n';
    out << m.vocabulary.size();
    for (const auto& t : m.vocabulary) out << '\t' << t;
    out << '\n';
    out << m.rows.size() << '\n';
    char buf[64];
    for (size_t i = 0; i < m.rows.size(); ++i) {
        out << m.row_ids[i] << '\t' << m.rows[i].size();
        for (const auto& e : m.rows[i]) {
            std::snprintf(buf, sizeof buf, "%.17g", e.weight);
            out << '\t' << e.term << ':' << buf << ':' << e.count;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

ViewMatrix load_view_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open view matrix: " + path);
    std::string line;

    auto next_line = [&]() {
        if (!std::getline(in, line)) {
            throw std::runtime_error("truncated view matrix file: " + path);
        }
    };

    next_line();
    ViewMatrix m;
    if (line == "technical") m.view = View::technical;
    else if (line == "named_entity") m.view = View::named_entity;
    else if (line == "domain_term") m.view = View::domain_term;
    else throw std::runtime_error(path + ": unknown view tag: " + line);

    next_line();
    {
        std::istringstream ss(line);
        size_t vocab_n = 0;
        std::string cell;
        if (!std::getline(ss, cell, '\t')) throw std::runtime_error(path + ": bad vocab line");
        vocab_n = std::stoull(cell);
        while (std::getline(ss, cell, '\t')) m.vocabulary.push_back(cell);
        if (m.vocabulary.size() != vocab_n) {
            throw std::runtime_error(path + ": vocabulary count mismatch");
        }
    }

    next_line();
    size_t n_rows = std::stoull(line);
    for (size_t i = 0; i < n_rows; ++i) {
        next_line();
        std::istringstream ss(line);
        std::string cell;
        if (!std::getline(ss, cell, '\t')) throw std::runtime_error(path + ": bad row line");
        std::string id = cell;
        if (!std::getline(ss, cell, '\t')) throw std::runtime_error(path + ": bad row line");
        size_t n_entries = std::stoull(cell);
        std::vector<ViewEntry> row;
        row.reserve(n_entries);
        while (std::getline(ss, cell, '\t')) {
            auto c1 = cell.find(':');
            auto c2 = cell.rfind(':');
            if (c1 == std::string::npos || c2 == c1) {
                throw std::runtime_error(path + ": bad entry: " + cell);
            }
            ViewEntry e;
            e.term = std::stoi(cell.substr(0, c1));
            e.weight = std::stod(cell.substr(c1 + 1, c2 - c1 - 1));
            e.count = std::stoi(cell.substr(c2 + 1));
            row.push_back(e);
        }
        if (row.size() != n_entries) {
            throw std::runtime_error(path + ": entry count mismatch in row " + id);
        }
        m.row_ids.push_back(id);
        m.rows.push_back(std::move(row));
    }
    return m;
}

}  // namespace topicrec
