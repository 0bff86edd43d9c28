#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "topicrec/ensemble.hpp"
#include "topicrec/rng.hpp"

using namespace topicrec;

namespace {

// Unit rows scattered over a handful of directions in a small dense space.
ViewMatrix random_view(size_t n_rows, size_t n_terms, uint64_t seed) {
    ViewMatrix m;
    m.view = View::technical;
    for (size_t t = 0; t < n_terms; ++t) m.vocabulary.push_back("t" + std::to_string(t));
    Rng rng(seed);
    for (size_t r = 0; r < n_rows; ++r) {
        m.row_ids.push_back("d" + std::string(1, static_cast<char>('a' + r / 26)) +
                            std::string(1, static_cast<char>('a' + r % 26)));
        std::vector<ViewEntry> row;
        double norm = 0.0;
        for (size_t t = 0; t < n_terms; ++t) {
            if (rng.below(3) == 0) continue;  // sparse-ish
            double w = 0.05 + rng.uniform01();
            row.push_back({static_cast<int>(t), w, 1});
            norm += w * w;
        }
        if (row.empty()) {
            row.push_back({0, 1.0, 1});
            norm = 1.0;
        }
        norm = std::sqrt(norm);
        for (auto& e : row) e.weight /= norm;
        m.rows.push_back(row);
    }
    return m;
}

CoAssocMatrix random_coassoc(const std::vector<std::string>& ids, uint64_t seed) {
    CoAssocMatrix m;
    m.ids = ids;
    const size_t n = ids.size();
    m.values.assign(n * n, 0.0);
    Rng rng(seed);
    for (size_t i = 0; i < n; ++i) {
        m.at(i, i) = 1.0;
        for (size_t j = 0; j < i; ++j) {
            double v = static_cast<double>(rng.below(101)) / 100.0;
            m.at(i, j) = v;
            m.at(j, i) = v;
        }
    }
    return m;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("default ensemble spec spans 2..ceil(sqrt(n))") {
    EnsembleSpec spec = default_ensemble_spec(450, 7);
    REQUIRE(!spec.ks.empty());
    CHECK(spec.ks.front() == 2);
    CHECK(spec.ks.back() == 22);

    EnsembleSpec tiny = default_ensemble_spec(3, 7);
    CHECK(tiny.ks == std::vector<int>{2});

    CHECK_THROWS_AS(default_ensemble_spec(1, 7), std::invalid_argument);
}

TEST_CASE("spherical k-means yields k non-empty clusters deterministically") {
    ViewMatrix m = random_view(30, 12, 99);
    for (int k : {2, 3, 7}) {
        Partition p = spherical_kmeans(m, k, 1234, "test");
        CHECK(p.k == k);
        CHECK(p.assignment.size() == m.row_ids.size());
        std::vector<int> sizes(k, 0);
        for (const auto& [id, c] : p.assignment) {
            REQUIRE(c >= 0);
            REQUIRE(c < k);
            ++sizes[c];
        }
        for (int c = 0; c < k; ++c) CHECK(sizes[c] > 0);

        Partition again = spherical_kmeans(m, k, 1234, "test");
        CHECK(again.assignment == p.assignment);
    }
}

TEST_CASE("k-means survives duplicate points without emptying clusters") {
    ViewMatrix m = random_view(4, 6, 5);
    m.rows[1] = m.rows[0];
    m.rows[3] = m.rows[2];
    Partition p = spherical_kmeans(m, 3, 42, "dup");
    std::vector<int> sizes(3, 0);
    for (const auto& [id, c] : p.assignment) ++sizes[c];
    for (int c = 0; c < 3; ++c) CHECK(sizes[c] > 0);
}

TEST_CASE("ensemble runs every k times every seed") {
    ViewMatrix m = random_view(10, 8, 3);
    EnsembleSpec spec;
    spec.ks = {2, 3, 4};
    spec.seeds_per_k = 5;
    spec.base_seed = 11;
    auto partitions = run_ensemble(m, spec);
    CHECK(partitions.size() == 15);
    // Tags identify view, k and seed so a missing id can be traced.
    CHECK(partitions[0].source.find("k2") != std::string::npos);

    // A k larger than the row count is skipped rather than crashing.
    spec.ks = {2, 3, 64};
    CHECK(run_ensemble(m, spec).size() == 10);
}

TEST_CASE("co-association matches the pair-counting oracle bit for bit") {
    std::vector<std::string> ids;
    for (int i = 0; i < 9; ++i) ids.push_back("d" + std::to_string(i));

    Rng rng(2024);
    std::vector<Partition> partitions;
    for (int p = 0; p < 13; ++p) {
        Partition part;
        part.k = 3;
        part.source = "fixture" + std::to_string(p);
        for (const auto& id : ids) {
            part.assignment[id] = static_cast<int>(rng.below(3));
        }
        partitions.push_back(part);
    }

    CoAssocMatrix m = co_association(partitions, ids, "technical");
    m.validate();
    auto expected = oracles::co_association(partitions, m.ids);
    for (size_t i = 0; i < m.size(); ++i) {
        for (size_t j = 0; j < m.size(); ++j) {
            CHECK(m.at(i, j) == expected[i][j]);  // same integer ratio, bit-exact
        }
    }
}

TEST_CASE("co-association reports which partition lost a document") {
    Partition p;
    p.k = 2;
    p.source = "technical/k2/seed0";
    p.assignment = {{"a", 0}, {"b", 1}};
    CHECK_THROWS_WITH_AS(co_association({p}, {"a", "b", "c"}, "technical"),
                         doctest::Contains("technical/k2/seed0"), std::runtime_error);
}

TEST_CASE("weight grid covers every split of every alpha") {
    auto grid = consensus_weight_grid();
    REQUIRE(grid.size() == 12);
    std::set<double> alphas;
    for (const auto& w : grid) {
        w.validate();
        alphas.insert(w.alpha);
        CHECK(std::fabs(w.beta + w.theta - w.alpha) <= 1e-12);
    }
    CHECK(alphas == std::set<double>{0.3, 0.5, 0.7, 1.0});
    // Each alpha appears with all-entities, all-terms and the even split.
    int even = 0, ne_only = 0, dt_only = 0;
    for (const auto& w : grid) {
        if (w.theta == 0.0) ne_only++;
        else if (w.beta == 0.0) dt_only++;
        else if (w.beta == w.theta) even++;
    }
    CHECK(even == 4);
    CHECK(ne_only == 4);
    CHECK(dt_only == 4);
}

TEST_CASE("consensus combination follows the stated weighting") {
    std::vector<std::string> ids{"a", "b", "c"};
    CoAssocMatrix t = random_coassoc(ids, 1);
    CoAssocMatrix ne = random_coassoc(ids, 2);
    CoAssocMatrix dt = random_coassoc(ids, 3);

    SUBCASE("zero alpha keeps the technical matrix bit for bit") {
        CoAssocMatrix m = combine_consensus(t, ne, dt, {0.0, 0.0, 0.0});
        for (size_t i = 0; i < m.values.size(); ++i) CHECK(m.values[i] == t.values[i]);
    }

    SUBCASE("hand-checked mixed entry") {
        t.at(1, 0) = t.at(0, 1) = 0.4;
        ne.at(1, 0) = ne.at(0, 1) = 0.8;
        dt.at(1, 0) = dt.at(0, 1) = 0.0;
        CoAssocMatrix m = combine_consensus(t, ne, dt, {0.5, 0.25, 0.25});
        CHECK(m.at(1, 0) == 0.4);  // 0.5*0.4 + 0.25*0.8 + 0.25*0
        m.validate();
    }

    SUBCASE("theta zero reduces to the two-matrix combination exactly") {
        for (double alpha : {0.0, 0.3, 0.5, 0.7, 1.0}) {
            CoAssocMatrix full = combine_consensus(t, ne, dt, {alpha, alpha, 0.0});
            CoAssocMatrix two = combine_privileged(t, ne, alpha);
            for (size_t i = 0; i < full.values.size(); ++i) {
                CHECK(full.values[i] == two.values[i]);
            }
        }
    }

    SUBCASE("invariants hold for every grid row") {
        for (const auto& w : consensus_weight_grid()) {
            CoAssocMatrix m = combine_consensus(t, ne, dt, w);
            m.validate();  // symmetry, diagonal, range within 1e-12
            for (size_t i = 0; i < m.size(); ++i) {
                CHECK(std::fabs(m.at(i, i) - 1.0) <= 1e-12);
                for (size_t j = 0; j < i; ++j) {
                    double expected = (1.0 - w.alpha) * t.at(i, j) +
                                      w.beta * ne.at(i, j) + w.theta * dt.at(i, j);
                    CHECK(m.at(i, j) == expected);
                    CHECK(m.at(i, j) == m.at(j, i));
                }
            }
        }
    }

    SUBCASE("weights that do not sum are rejected") {
        CHECK_THROWS_AS(combine_consensus(t, ne, dt, {0.5, 0.1, 0.1}),
                        std::invalid_argument);
        CHECK_THROWS_AS(combine_consensus(t, ne, dt, {1.5, 1.0, 0.5}),
                        std::invalid_argument);
    }
}

TEST_CASE("co-association files round-trip at nine significant digits") {
    std::vector<std::string> ids{"a", "b", "c", "d"};
    CoAssocMatrix m = random_coassoc(ids, 77);
    m.at(1, 0) = m.at(0, 1) = 1.0 / 3.0;

    std::string dir =
        (std::filesystem::temp_directory_path() / "topicrec_coassoc_io").string();
    std::filesystem::create_directories(dir);
    std::string path = dir + "/m.txt";
    save_coassoc(m, path);

    CoAssocMatrix back = load_coassoc(path, "technical");
    CHECK(back.ids == m.ids);
    CHECK(back.view_tag == "technical");
    for (size_t i = 0; i < m.size(); ++i) {
        for (size_t j = 0; j < m.size(); ++j) {
            CHECK(back.at(i, j) == doctest::Approx(m.at(i, j)).epsilon(1e-9));
        }
    }
    save_coassoc(back, path + ".again");
    CHECK(slurp(path) == slurp(path + ".again"));
}
