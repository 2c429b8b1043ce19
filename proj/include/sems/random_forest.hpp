#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "sems/forecast.hpp"
#include "sems/rng.hpp"

namespace sems {

struct RfConfig {
    int n_trees = 50;
    int max_depth = 8;
    int min_leaf = 1;
    double feature_fraction = 0.7;  // features tried per split
    bool bootstrap = true;          // false trains every tree on the full set
    std::uint64_t seed = 0;
};

/// Bagged CART classifier over day features. Deterministic for a fixed seed;
/// ties in the majority vote resolve to the lowest cluster index.
class RandomForest final : public Classifier {
public:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1, right = -1;
        int label = 0;
    };
    struct Tree {
        std::vector<Node> nodes;
        int walk(const Vector& f) const {
            int at = 0;
            while (nodes[at].feature >= 0)
                at = f[nodes[at].feature] < nodes[at].threshold ? nodes[at].left : nodes[at].right;
            return nodes[at].label;
        }
    };

    int predict(const Vector& features) const override {
        if (trees_.empty()) throw std::logic_error("RandomForest: untrained");
        std::vector<int> votes(n_classes_, 0);
        for (const auto& t : trees_) ++votes[t.walk(features)];
        return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }

    std::string kind() const override { return "random_forest"; }

    double oob_accuracy() const { return oob_accuracy_; }
    bool constant() const { return constant_; }
    int n_classes() const { return n_classes_; }
    std::vector<Tree>& trees() { return trees_; }
    const std::vector<Tree>& trees() const { return trees_; }

    friend RandomForest rf_fit(const std::vector<Vector>&, const std::vector<int>&, int, const RfConfig&);

private:
    std::vector<Tree> trees_;
    int n_classes_ = 0;
    double oob_accuracy_ = 0.0;
    bool constant_ = false;
};

namespace rf_detail {

inline double gini(const std::vector<int>& counts, int total) {
    if (total == 0) return 0.0;
    double g = 1.0;
    for (int c : counts) {
        const double p = static_cast<double>(c) / total;
        g -= p * p;
    }
    return g;
}

inline int majority(const std::vector<int>& counts) {
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

struct Builder {
    const std::vector<Vector>& x;
    const std::vector<int>& y;
    int n_classes;
    const RfConfig& cfg;
    Rng& rng;
    std::vector<RandomForest::Node> nodes;

    int build(std::vector<int>& idx, int depth) {
        std::vector<int> counts(n_classes, 0);
        for (int i : idx) ++counts[y[i]];
        const int node_id = static_cast<int>(nodes.size());
        nodes.push_back({});
        nodes[node_id].label = majority(counts);
        const bool pure = *std::max_element(counts.begin(), counts.end()) == static_cast<int>(idx.size());
        if (pure || depth >= cfg.max_depth || static_cast<int>(idx.size()) < 2 * cfg.min_leaf) return node_id;

        const int d = static_cast<int>(x[0].size());
        const int mtry = std::max(1, static_cast<int>(std::ceil(cfg.feature_fraction * d)));
        std::vector<int> feats(d);
        std::iota(feats.begin(), feats.end(), 0);
        for (int i = 0; i < mtry; ++i) std::swap(feats[i], feats[i + rng.index(d - i)]);
        feats.resize(mtry);
        std::sort(feats.begin(), feats.end());  // deterministic evaluation order

        double best_score = std::numeric_limits<double>::max();
        int best_feat = -1;
        double best_thr = 0.0;
        std::vector<double> vals;
        for (int f : feats) {
            vals.clear();
            for (int i : idx) vals.push_back(x[i][f]);
            std::sort(vals.begin(), vals.end());
            vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
            for (size_t v = 1; v < vals.size(); ++v) {
                const double thr = 0.5 * (vals[v - 1] + vals[v]);
                std::vector<int> lc(n_classes, 0), rc(n_classes, 0);
                int ln = 0, rn = 0;
                for (int i : idx)
                    if (x[i][f] < thr) { ++lc[y[i]]; ++ln; } else { ++rc[y[i]]; ++rn; }
                if (ln < cfg.min_leaf || rn < cfg.min_leaf) continue;
                const double score = (ln * gini(lc, ln) + rn * gini(rc, rn)) / idx.size();
                if (score < best_score - 1e-12) {
                    best_score = score;
                    best_feat = f;
                    best_thr = thr;
                }
            }
        }
        if (best_feat < 0) return node_id;

        std::vector<int> left, right;
        for (int i : idx)
            (x[i][best_feat] < best_thr ? left : right).push_back(i);
        nodes[node_id].feature = best_feat;
        nodes[node_id].threshold = best_thr;
        nodes[node_id].left = build(left, depth + 1);
        nodes[node_id].right = build(right, depth + 1);
        return node_id;
    }
};

}  // namespace rf_detail

/// Train a forest on day features labelled by cluster assignment. Single-class
/// label sets degrade to a constant classifier (flagged on the model).
inline RandomForest rf_fit(const std::vector<Vector>& features, const std::vector<int>& labels, int n_classes,
                           const RfConfig& cfg = {}) {
    if (features.size() != labels.size() || features.empty())
        throw std::invalid_argument("rf_fit: features and labels must align and be non-empty");
    RandomForest rf;
    rf.n_classes_ = n_classes;
    const int n = static_cast<int>(features.size());

    bool single_class = true;
    for (int l : labels) single_class = single_class && l == labels[0];
    if (single_class) {
        rf.constant_ = true;
        RandomForest::Tree t;
        t.nodes.push_back({-1, 0.0, -1, -1, labels[0]});
        rf.trees_.push_back(t);
        rf.oob_accuracy_ = 1.0;
        return rf;
    }

    Rng rng(cfg.seed);
    std::vector<std::vector<bool>> in_bag(cfg.n_trees, std::vector<bool>(n, false));
    for (int t = 0; t < cfg.n_trees; ++t) {
        std::vector<int> idx;
        if (cfg.bootstrap) {
            for (int i = 0; i < n; ++i) {
                const int pick = rng.index(n);
                idx.push_back(pick);
                in_bag[t][pick] = true;
            }
        } else {
            idx.resize(n);
            std::iota(idx.begin(), idx.end(), 0);
            in_bag[t].assign(n, true);
        }
        rf_detail::Builder b{features, labels, n_classes, cfg, rng, {}};
        b.build(idx, 0);
        RandomForest::Tree tree;
        tree.nodes = std::move(b.nodes);
        rf.trees_.push_back(std::move(tree));
    }

    int oob_total = 0, oob_hit = 0;
    for (int i = 0; i < n; ++i) {
        std::vector<int> votes(n_classes, 0);
        bool any = false;
        for (int t = 0; t < cfg.n_trees; ++t) {
            if (in_bag[t][i]) continue;
            ++votes[rf.trees_[t].walk(features[i])];
            any = true;
        }
        if (!any) continue;
        ++oob_total;
        if (rf_detail::majority(votes) == labels[i]) ++oob_hit;
    }
    rf.oob_accuracy_ = oob_total > 0 ? static_cast<double>(oob_hit) / oob_total : 0.0;
    return rf;
}

}  // namespace sems
