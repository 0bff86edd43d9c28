#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "topicrec/text.hpp"

namespace topicrec {

struct Document {
    std::string doc_id;
    std::string raw_text;
    std::vector<std::string> ne_annotations;  // named entities, normalized
    std::vector<std::string> dt_annotations;  // domain terms, normalized
};

// A document collection with its privileged-annotation bookkeeping:
// n = all documents, r = with named entities, s = with domain terms,
// m = with both kinds (the privileged subset Y).
struct Corpus {
    std::vector<Document> docs;
    size_t n = 0;
    size_t m = 0;
    size_t r = 0;
    size_t s = 0;

    const Document* find(const std::string& doc_id) const;
    void recount();
};

// Corpus file: JSON lines, one object {"doc_id": ..., "text": ...} per line.
// Annotation sidecars: tab-separated (doc_id, annotation) pairs, one per line.
Corpus load_corpus(const std::string& docs_path,
                   const std::string& ne_path,
                   const std::string& dt_path);

void load_annotations(const std::string& path, Corpus& corpus, bool named_entities);

struct PreprocessOptions {
    std::set<std::string> stopwords;
    Stemmer stemmer = identity_stemmer();
};

// Lowercase, tokenize on letter boundaries, drop stopwords, stem.
// Order-preserving; an empty result is legal.
std::vector<std::string> preprocess(const std::string& raw_text,
                                    const std::set<std::string>& stopwords,
                                    const Stemmer& stemmer);

enum class View { technical, named_entity, domain_term };

const char* view_name(View v);

struct ViewEntry {
    int term = 0;        // index into vocabulary
    double weight = 0.0; // TF-IDF, L2-normalized per row
    int count = 0;       // raw term frequency, kept for topic labeling
};

struct ViewMatrix {
    View view = View::technical;
    std::vector<std::string> row_ids;                 // corpus order
    std::vector<std::string> vocabulary;              // sorted
    std::vector<std::vector<ViewEntry>> rows;         // entries sorted by term

    int row_index(const std::string& doc_id) const;   // -1 if absent
    void validate() const;

private:
    mutable std::map<std::string, int> index_;
    mutable bool index_built_ = false;
};

// Dot product of two L2-normalized sparse rows = their cosine.
double row_dot(const std::vector<ViewEntry>& a, const std::vector<ViewEntry>& b);

struct SkipReport {
    struct Entry {
        std::string doc_id;
        std::string reason;
    };
    std::vector<Entry> entries;

    void add(const std::string& doc_id, const std::string& reason);
    void write(const std::string& path) const;
};

// TF-IDF view construction: value(d,t) = tf * ln(n_view/df), rows
// L2-normalized. Terms present in every candidate row are dropped.
// Documents whose vector ends up all-zero are skipped and reported.
// Privileged views only take rows for documents that also produce a
// technical row, keeping privileged row sets inside the technical one.
ViewMatrix build_view_matrix(const Corpus& corpus, View view,
                             const PreprocessOptions& prep,
                             SkipReport* skips = nullptr);

// Y = documents carrying both privileged kinds; remainder = everything else.
// Throws if |Y| < 2 (nothing to cluster).
struct PrivilegedSplit {
    std::vector<std::string> privileged;  // Y, sorted
    std::vector<std::string> remainder;   // sorted
};

PrivilegedSplit split_privileged(const Corpus& corpus);

// Keeps only the given rows (ids must exist in the matrix); vocabulary and
// weights are left untouched. Row order follows the matrix, not `ids`.
ViewMatrix restrict_rows(const ViewMatrix& m, const std::set<std::string>& ids);

void save_view_matrix(const ViewMatrix& m, const std::string& path);
ViewMatrix load_view_matrix(const std::string& path);

}  // namespace topicrec
