#include "fedexdnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedexdnn/util.hpp"

namespace fedexdnn {

namespace {

void validate(const ScoredSet& s, bool need_both_classes) {
    if (s.scores.size() != s.labels.size())
        throw ContractError("ScoredSet: scores and labels lengths differ");
    if (s.scores.empty()) throw ContractError("ScoredSet: empty");
    for (double v : s.scores)
        if (!std::isfinite(v)) throw ContractError("ScoredSet: non-finite score");
    if (need_both_classes) {
        bool has0 = false, has1 = false;
        for (int l : s.labels) (l != 0 ? has1 : has0) = true;
        if (!has0 || !has1)
            throw ContractError("ScoredSet: both classes required for this metric");
    }
}

}  // namespace

double auc(const ScoredSet& scored) {
    validate(scored, true);
    const std::size_t n = scored.scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scored.scores[a] < scored.scores[b]; });

    // rank sum of positives with average ranks over tie groups
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0, n_neg = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scored.scores[idx[j]] == scored.scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
        for (std::size_t k = i; k < j; ++k)
            if (scored.labels[idx[k]] != 0) pos_rank_sum += avg_rank;
        i = j;
    }
    for (int l : scored.labels) (l != 0 ? n_pos : n_neg) += 1;
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

ThresholdMetrics metrics_at_threshold(const ScoredSet& scored, double threshold) {
    validate(scored, false);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scored.scores.size(); ++i) {
        const bool pred = scored.scores[i] >= threshold;
        const bool is_anom = scored.labels[i] != 0;
        if (pred && is_anom) ++tp;
        else if (pred && !is_anom) ++fp;
        else if (!pred && is_anom) ++fn;
    }
    ThresholdMetrics m;
    m.threshold = threshold;
    m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.f1 = 2.0 * tp + fp + fn == 0
        ? 0.0
        : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    return m;
}

ThresholdMetrics best_f1(const ScoredSet& scored) {
    validate(scored, true);
    const std::size_t n = scored.scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // descending by score; sweep thresholds at distinct scores
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scored.scores[a] > scored.scores[b]; });

    std::size_t total_pos = 0;
    for (int l : scored.labels)
        if (l != 0) ++total_pos;

    ThresholdMetrics best;
    best.f1 = -1.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < n) {
        const double thr = scored.scores[idx[i]];
        while (i < n && scored.scores[idx[i]] == thr) {
            if (scored.labels[idx[i]] != 0) ++tp;
            else ++fp;
            ++i;
        }
        const std::size_t fn = total_pos - tp;
        const double f1 = 2 * tp + fp + fn == 0
            ? 0.0
            : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
        // strict > keeps the highest threshold among ties
        if (f1 > best.f1) {
            best.f1 = f1;
            best.threshold = thr;
            best.precision = tp + fp == 0 ? 0.0
                                          : static_cast<double>(tp) / static_cast<double>(tp + fp);
            best.recall = total_pos == 0 ? 0.0
                                         : static_cast<double>(tp) / static_cast<double>(total_pos);
        }
    }
    return best;
}

TestMetrics select_then_apply(const ScoredSet& val, const ScoredSet& test) {
    const ThresholdMetrics chosen = best_f1(val);
    TestMetrics out;
    out.at_threshold = metrics_at_threshold(test, chosen.threshold);
    out.auc = auc(test);
    return out;
}

}  // namespace fedexdnn
