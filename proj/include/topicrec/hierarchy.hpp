#pragma once

#include <map>
#include <string>
#include <vector>

#include "topicrec/corpus.hpp"
#include "topicrec/ensemble.hpp"

namespace topicrec {

// Nodes 0..n-1 are the leaves (in `leaves` order); merge t creates node n+t.
struct Merge {
    int node_a = 0;  // side holding the smaller representative id
    int node_b = 0;
    double height = 0.0;
};

struct Dendrogram {
    std::vector<std::string> leaves;
    std::vector<Merge> merges;

    size_t n_leaves() const { return leaves.size(); }
    int root() const { return static_cast<int>(leaves.size() + merges.size()) - 1; }

    // Sorted member doc_ids for every node, leaves first.
    std::vector<std::vector<std::string>> node_members() const;

    void validate() const;  // |Y|-1 merges, heights non-decreasing (1e-12 slack)
};

// Average-linkage agglomeration on d(i,j) = 1 - consensus(i,j). Equal-height
// candidate pairs are ordered by their (smaller, larger) representative ids,
// where a cluster's representative is its smallest member; the merge always
// lists the smaller-representative side first.
Dendrogram agglomerate(const CoAssocMatrix& consensus);

struct Granularity {
    int min_items = 1;  // x
    int max_items = 1;  // y

    void validate() const;
    std::string id() const;  // e.g. "g15-20"
};

struct Topic {
    std::string topic_id;
    std::vector<std::string> member_ids;   // sorted; privileged docs only
    std::vector<std::string> label_terms;
};

inline constexpr const char* kOverflowTopicId = "t_overflow";

// Maximal dendrogram nodes with size in [x, y], found top-down; leaves under
// no selected node are pooled into the reserved overflow topic (appended
// last, only when the pool is non-empty). Topic ids t0001, t0002, ... follow
// the order of each topic's smallest member id. No labels yet.
std::vector<Topic> select_topics(const Dendrogram& dendro, Granularity g);

// The t terms with the greatest summed raw frequency over the member docs'
// technical rows, descending, ties lexicographic. Members without a
// technical row contribute nothing; an empty tally labels the topic "∅".
std::vector<std::string> label_topic(const std::vector<std::string>& member_ids,
                                     const ViewMatrix& technical, int t);

struct TopicModel {
    Granularity granularity;
    std::vector<Topic> topics;
    std::map<std::string, std::string> doc_topic;  // total after insertion

    const Topic* find_topic(const std::string& topic_id) const;
    void validate() const;
};

TopicModel build_topic_model(const Dendrogram& dendro, Granularity g,
                             const ViewMatrix& technical, int label_size);

// Nearest-neighbor insertion of the non-privileged documents: each doc takes
// the topic of its most cosine-similar privileged doc (ties: smallest doc_id).
// Docs without a technical row fall into the overflow topic, which is
// materialized on demand. Inserted docs join doc_topic but never member_ids.
void insert_remainder(TopicModel& model, const ViewMatrix& technical,
                      const std::vector<std::string>& remainder_ids);

void save_dendrogram(const Dendrogram& d, const std::string& path);
Dendrogram load_dendrogram(const std::string& path);

void save_topic_model(const TopicModel& m, const std::string& topics_path,
                      const std::string& contexts_path);
TopicModel load_topic_model(const std::string& topics_path,
                            const std::string& contexts_path);

}  // namespace topicrec
