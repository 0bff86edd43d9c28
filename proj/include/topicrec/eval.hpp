#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "topicrec/recsys.hpp"
#include "topicrec/stats.hpp"

namespace topicrec {

struct FoldPlan {
    std::map<std::string, int> user_fold;  // eligible users only
    int n_folds = 10;
    uint64_t seed = 0;

    std::set<std::string> fold_users(int fold) const;
    void validate() const;  // fold sizes differ by at most 1
};

// Seeded shuffle of the eligible users, then round-robin assignment.
// Users unable to form a case never enter the plan (they stay training-only).
FoldPlan make_folds(const std::set<std::string>& eligible_users, uint64_t seed,
                    int n_folds = 10);

struct RankedCase {
    std::vector<ScoredItem> ranked;  // may be longer than n
    std::string hidden;
};

// Mean average precision with a single relevant item per case:
// AP = 1/rank of the hidden item inside the top n, or 0 when absent.
double map_at_n(const std::vector<RankedCase>& cases, int n);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    bool significant = false;  // two-sided, 95%
};

// Paired Student t-test on the fold-wise differences a - b.
// All-zero differences give t = 0, p = 1; zero variance around a non-zero
// mean gives an infinite statistic and p = 0.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace topicrec
