#pragma once

#include <vector>

namespace fedexdnn {

struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;  // 0 normal, 1 anomaly
};

struct ThresholdMetrics {
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double threshold = 0.0;
};

struct TestMetrics {
    double auc = 0.0;
    ThresholdMetrics at_threshold;
};

// Mann-Whitney AUC: probability that a random anomaly outscores a random
// normal, ties counted 1/2. Requires both classes.
double auc(const ScoredSet& scored);

// Sweeps every distinct score as "predict anomaly when score >= threshold"
// and returns the best F1 (ties broken toward the higher threshold).
ThresholdMetrics best_f1(const ScoredSet& scored);

// F1/precision/recall on a set at a fixed threshold.
ThresholdMetrics metrics_at_threshold(const ScoredSet& scored, double threshold);

// Threshold chosen on val, applied unchanged to test; also reports test AUC.
TestMetrics select_then_apply(const ScoredSet& val, const ScoredSet& test);

}  // namespace fedexdnn
