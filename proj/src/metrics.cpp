#include "roadfusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "roadfusion/error.hpp"

namespace rf::metrics {

ConfusionCounts& ConfusionCounts::merge(const ConfusionCounts& other) {
    if (num_classes != other.num_classes) throw ShapeError("confusion merge: class count mismatch");
    for (int c = 0; c < num_classes; ++c) {
        tp[c] += other.tp[c];
        fp[c] += other.fp[c];
        fn[c] += other.fn[c];
        tn[c] += other.tn[c];
    }
    evaluated += other.evaluated;
    return *this;
}

ConfusionCounts confusion(const LabelImage& pred, const LabelImage& gt, int num_classes) {
    if (pred.width != gt.width || pred.height != gt.height) {
        throw ShapeError("confusion: prediction and ground truth dims differ");
    }
    ConfusionCounts counts(num_classes);
    for (std::size_t i = 0; i < gt.classes.size(); ++i) {
        const int g = gt.classes[i];
        if (g == 0) continue;  // unlabeled pixels are excluded
        const int p = pred.classes[i];
        ++counts.evaluated;
        for (int c = 1; c < num_classes; ++c) {
            const bool is_gt = g == c;
            const bool is_pred = p == c;
            if (is_gt && is_pred) ++counts.tp[c];
            else if (!is_gt && is_pred) ++counts.fp[c];
            else if (is_gt && !is_pred) ++counts.fn[c];
            else ++counts.tn[c];
        }
    }
    if (counts.evaluated == 0) throw EmptyInputError("confusion: every ground-truth pixel is unlabeled");
    return counts;
}

ClassScore fsc_iou(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
    ClassScore s;
    const double denom_p = static_cast<double>(tp + fp);
    const double denom_r = static_cast<double>(tp + fn);
    const double denom_iou = static_cast<double>(tp + fp + fn);
    if (tp == 0 || denom_p == 0.0 || denom_r == 0.0 || denom_iou == 0.0) {
        s.degenerate = true;
        return s;
    }
    const double p = tp / denom_p;
    const double r = tp / denom_r;
    s.fsc = 2.0 * p * r / (p + r);
    s.iou = tp / denom_iou;
    return s;
}

PrCurve pr_curve(const std::vector<double>& scores, const std::vector<int>& gt, int cls) {
    if (scores.size() != gt.size()) throw ShapeError("pr_curve: scores/gt size mismatch");
    // Evaluated set: gt != 0. Order by score descending; sweeping the
    // threshold down adds pixels one score level at a time.
    std::vector<std::size_t> order;
    std::uint64_t positives = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (gt[i] == 0) continue;
        if (scores[i] < 0.0 || scores[i] > 1.0) {
            throw RangeError("pr_curve: score outside [0,1] at index " + std::to_string(i));
        }
        order.push_back(i);
        if (gt[i] == cls) ++positives;
    }
    if (positives == 0) {
        throw UndefinedMetricError("pr_curve: class " + std::to_string(cls) +
                                   " absent from ground truth, AP undefined");
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    PrCurve curve;
    std::uint64_t tp = 0, pp = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const double thr = scores[order[k]];
        ++pp;
        if (gt[order[k]] == cls) ++tp;
        // Emit one point per distinct threshold, after absorbing ties.
        if (k + 1 < order.size() && scores[order[k + 1]] == thr) continue;
        curve.points.push_back({thr, static_cast<double>(tp) / pp,
                                static_cast<double>(tp) / positives});
    }

    // Exact area under the precision envelope (all-points interpolation):
    // AP = sum (r_i - r_{i-1}) * max_{j >= i} p_j over recall-ascending points.
    double env = 0.0;
    double prev_recall = 0.0;
    double ap = 0.0;
    std::vector<double> envelope(curve.points.size());
    for (std::size_t k = curve.points.size(); k-- > 0;) {
        env = std::max(env, curve.points[k].precision);
        envelope[k] = env;
    }
    for (std::size_t k = 0; k < curve.points.size(); ++k) {
        ap += (curve.points[k].recall - prev_recall) * envelope[k];
        prev_recall = curve.points[k].recall;
    }
    curve.ap = ap;
    return curve;
}

PrCurve pr_curve(const Tensor& probs, const LabelImage& gt, int cls) {
    if (probs.rank() != 3 || probs.dim(0) != gt.height || probs.dim(1) != gt.width) {
        throw ShapeError("pr_curve: probability map shape mismatch");
    }
    if (cls < 0 || cls >= probs.dim(2)) throw ShapeError("pr_curve: class channel out of range");
    std::vector<double> scores(gt.classes.size());
    std::vector<int> labels(gt.classes.size());
    for (int v = 0; v < gt.height; ++v) {
        for (int u = 0; u < gt.width; ++u) {
            const std::size_t i = gt.idx(u, v);
            scores[i] = probs.at(v, u, cls);
            labels[i] = gt.classes[i];
        }
    }
    return pr_curve(scores, labels, cls);
}

double eta(double miou, double runtime_ms, double miou_base, double runtime_base_ms) {
    const double dr = runtime_ms - runtime_base_ms;
    if (dr == 0.0) {
        throw UndefinedMetricError("eta undefined: runtime difference is zero (baseline row)");
    }
    return (miou - miou_base) / dr;
}

double coeff_variation(const std::vector<double>& values) {
    if (values.empty()) throw EmptyInputError("coeff_variation: empty input");
    const double mu = std::accumulate(values.begin(), values.end(), 0.0) /
                      static_cast<double>(values.size());
    if (mu == 0.0) throw UndefinedMetricError("coeff_variation undefined: zero mean");
    double ss = 0.0;
    for (double v : values) ss += (v - mu) * (v - mu);
    // Population standard deviation, no Bessel correction.
    const double sigma = std::sqrt(ss / static_cast<double>(values.size()));
    return sigma / mu;
}

EvalReport make_report(const ConfusionCounts& counts,
                       const std::vector<std::optional<PrCurve>>& curves) {
    if (!curves.empty() && static_cast<int>(curves.size()) != counts.num_classes) {
        throw ShapeError("make_report: curves size must match class count");
    }
    EvalReport rep;
    double sum_fsc = 0.0, sum_iou = 0.0, sum_ap = 0.0;
    int n_ap = 0;
    for (int c = 1; c < counts.num_classes; ++c) {
        rep.class_ids.push_back(c);
        rep.scores.push_back(fsc_iou(counts.tp[c], counts.fp[c], counts.fn[c]));
        sum_fsc += rep.scores.back().fsc;
        sum_iou += rep.scores.back().iou;
        if (!curves.empty() && curves[c].has_value()) {
            rep.ap.push_back(curves[c]->ap);
            sum_ap += curves[c]->ap;
            ++n_ap;
        } else {
            rep.ap.push_back(std::nullopt);
        }
    }
    const double n = static_cast<double>(rep.class_ids.size());
    if (n == 0) throw EmptyInputError("make_report: no evaluated classes");
    rep.mean_fsc = sum_fsc / n;
    rep.mean_iou = sum_iou / n;
    if (n_ap == static_cast<int>(rep.class_ids.size())) rep.mean_ap = sum_ap / n;
    return rep;
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot create " + path.string());
    f.precision(17);
    f << "class,fsc,iou,ap\n";
    for (std::size_t i = 0; i < report.class_ids.size(); ++i) {
        f << report.class_ids[i] << "," << report.scores[i].fsc << "," << report.scores[i].iou << ",";
        if (report.ap[i].has_value()) f << *report.ap[i];
        f << "\n";
    }
    f << "mFsc," << report.mean_fsc << ",,\n";
    f << "mIoU," << report.mean_iou << ",,\n";
    f << "mAP,";
    if (report.mean_ap.has_value()) f << *report.mean_ap;
    f << ",,\n";
    if (!f) throw IoError("write failed: " + path.string());
}

EvalReport read_report_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path.string());
    EvalReport rep;
    std::string line;
    if (!std::getline(f, line) || line != "class,fsc,iou,ap") {
        throw FormatError("report csv: bad header");
    }
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string c0, c1, c2, c3;
        std::getline(is, c0, ',');
        std::getline(is, c1, ',');
        std::getline(is, c2, ',');
        std::getline(is, c3, ',');
        try {
            if (c0 == "mFsc") {
                rep.mean_fsc = std::stod(c1);
            } else if (c0 == "mIoU") {
                rep.mean_iou = std::stod(c1);
            } else if (c0 == "mAP") {
                if (!c1.empty()) rep.mean_ap = std::stod(c1);
            } else {
                rep.class_ids.push_back(std::stoi(c0));
                ClassScore s;
                s.fsc = std::stod(c1);
                s.iou = std::stod(c2);
                rep.scores.push_back(s);
                rep.ap.push_back(c3.empty() ? std::nullopt : std::optional<double>(std::stod(c3)));
            }
        } catch (const std::invalid_argument&) {
            throw FormatError("report csv: non-numeric field in line '" + line + "'");
        }
    }
    return rep;
}

void write_pr_csv(const PrCurve& curve, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot create " + path.string());
    f.precision(17);
    f << "threshold,precision,recall\n";
    for (const auto& p : curve.points) {
        f << p.threshold << "," << p.precision << "," << p.recall << "\n";
    }
    if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace rf::metrics
