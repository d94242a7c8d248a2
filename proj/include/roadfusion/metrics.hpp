#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "roadfusion/tensor.hpp"
#include "roadfusion/types.hpp"

namespace rf::metrics {

// Per-class pixel counts over the evaluated set (ground-truth class 0 is
// excluded from evaluation).
struct ConfusionCounts {
    int num_classes = 0;
    std::vector<std::uint64_t> tp, fp, fn, tn;
    std::uint64_t evaluated = 0;

    ConfusionCounts() = default;
    explicit ConfusionCounts(int classes)
        : num_classes(classes), tp(classes, 0), fp(classes, 0), fn(classes, 0), tn(classes, 0) {}

    ConfusionCounts& merge(const ConfusionCounts& other);
};

ConfusionCounts confusion(const LabelImage& pred, const LabelImage& gt, int num_classes = 3);

struct ClassScore {
    double fsc = 0.0;
    double iou = 0.0;
    bool degenerate = false;  // zero denominator, metric forced to 0
};

// Fsc = 2PR/(P+R), IoU = TP/(TP+FP+FN) for one class's counts.
ClassScore fsc_iou(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct PrCurve {
    std::vector<PrPoint> points;  // thresholds descending, recall ascending
    double ap = 0.0;
};

// Sweeps every distinct score as a threshold (prediction positive when
// score >= threshold); AP is the exact area under the precision envelope
// (all-points interpolation). Pixels with gt class 0 are excluded.
PrCurve pr_curve(const std::vector<double>& scores, const std::vector<int>& gt, int cls);

// Convenience overload for per-pixel probability maps.
PrCurve pr_curve(const Tensor& probs, const LabelImage& gt, int cls);

// Eq.-style efficiency ratio: mIoU gain per millisecond of runtime increase.
// Throws UndefinedMetricError on a zero runtime difference (baseline row).
double eta(double miou, double runtime_ms, double miou_base, double runtime_base_ms);

// Coefficient of variation sigma/mu with the population standard deviation.
double coeff_variation(const std::vector<double>& values);

struct EvalReport {
    std::vector<int> class_ids;
    std::vector<ClassScore> scores;        // parallel to class_ids
    std::vector<std::optional<double>> ap;  // parallel; empty when no probabilities given
    double mean_fsc = 0.0;
    double mean_iou = 0.0;
    std::optional<double> mean_ap;
};

// Aggregates confusion counts (and optional per-class PR curves) into
// per-class and mean metrics.
EvalReport make_report(const ConfusionCounts& counts,
                       const std::vector<std::optional<PrCurve>>& curves = {});

void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report_csv(const std::filesystem::path& path);

void write_pr_csv(const PrCurve& curve, const std::filesystem::path& path);

}  // namespace rf::metrics
