#include "roadfusion/disparity_transform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "roadfusion/error.hpp"
#include "roadfusion/rng.hpp"

namespace rf {

double RoadModel::profile(double u, double v) const {
    return a0 + a1 * (v * std::cos(theta) - u * std::sin(theta));
}

std::size_t CoarseMask::count() const {
    std::size_t n = 0;
    for (auto m : mask) n += m != 0;
    return n;
}

}  // namespace rf

namespace rf::dt {

VDisparityMap build_v_disparity(const DisparityImage& d) {
    double dmax = -1.0;
    for (std::size_t i = 0; i < d.data.size(); ++i) {
        if (d.valid[i]) dmax = std::max(dmax, d.data[i]);
    }
    if (dmax < 0.0) throw EmptyInputError("v-disparity: no valid pixels");
    VDisparityMap map;
    map.rows = d.height;
    map.bins = static_cast<int>(std::floor(dmax)) + 1;
    map.counts.assign(static_cast<std::size_t>(map.rows) * map.bins, 0);
    for (int v = 0; v < d.height; ++v) {
        for (int u = 0; u < d.width; ++u) {
            if (!d.is_valid(u, v)) continue;
            const int b = static_cast<int>(std::floor(d.at(u, v)));
            ++map.counts[static_cast<std::size_t>(v) * map.bins + b];
        }
    }
    return map;
}

namespace {

struct RowPeak {
    double v = 0.0;
    double d = 0.0;  // mean disparity of the pixels in the row's argmax bin
};

// Per-row candidate: the most populated disparity bin (subject to a count
// floor), refined to the mean disparity of the pixels inside it so the
// candidate keeps sub-bin precision.
std::vector<RowPeak> row_peaks(const DisparityImage& d, const VDisparityMap& vd,
                               std::uint32_t min_count) {
    std::vector<RowPeak> peaks;
    for (int v = 0; v < vd.rows; ++v) {
        int best_bin = -1;
        std::uint32_t best_count = 0;
        for (int b = 0; b < vd.bins; ++b) {
            const std::uint32_t c = vd.at(v, b);
            if (c > best_count) {
                best_count = c;
                best_bin = b;
            }
        }
        if (best_bin < 0 || best_count < min_count) continue;
        double sum = 0.0;
        std::uint32_t n = 0;
        for (int u = 0; u < d.width; ++u) {
            if (!d.is_valid(u, v)) continue;
            if (static_cast<int>(std::floor(d.at(u, v))) == best_bin) {
                sum += d.at(u, v);
                ++n;
            }
        }
        peaks.push_back({static_cast<double>(v), sum / n});
    }
    return peaks;
}

RoadLine least_squares_line(const std::vector<RowPeak>& pts) {
    double sv = 0.0, sd = 0.0;
    for (const auto& p : pts) {
        sv += p.v;
        sd += p.d;
    }
    const double mv = sv / pts.size();
    const double md = sd / pts.size();
    double cov = 0.0, var = 0.0;
    for (const auto& p : pts) {
        cov += (p.v - mv) * (p.d - md);
        var += (p.v - mv) * (p.v - mv);
    }
    if (var <= 0.0) throw DegenerateFitError("v-disparity line fit: rows do not vary");
    RoadLine line;
    line.m = cov / var;
    line.c = md - line.m * mv;
    return line;
}

}  // namespace

CoarseResult coarse_road_mask(const DisparityImage& d, const DtOptions& opts) {
    const VDisparityMap vd = build_v_disparity(d);
    const std::vector<RowPeak> peaks = row_peaks(d, vd, opts.min_row_count);
    if (peaks.size() < 2) {
        throw NoRoadFoundError("coarse segmentation: fewer than 2 candidate rows");
    }

    Rng rng(opts.ransac_seed);
    std::vector<std::size_t> best_inliers;
    for (int it = 0; it < opts.ransac_iterations; ++it) {
        const std::size_t i = rng.uniform_int(peaks.size());
        const std::size_t j = rng.uniform_int(peaks.size());
        if (i == j || peaks[i].v == peaks[j].v) continue;
        const double m = (peaks[j].d - peaks[i].d) / (peaks[j].v - peaks[i].v);
        const double c = peaks[i].d - m * peaks[i].v;
        std::vector<std::size_t> inliers;
        for (std::size_t k = 0; k < peaks.size(); ++k) {
            if (std::fabs(peaks[k].d - (m * peaks[k].v + c)) < opts.ransac_inlier_threshold) {
                inliers.push_back(k);
            }
        }
        if (inliers.size() > best_inliers.size()) best_inliers = std::move(inliers);
    }
    const std::size_t consensus_floor = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::ceil(opts.min_consensus * peaks.size())));
    if (best_inliers.size() < consensus_floor) {
        throw NoRoadFoundError("coarse segmentation: RANSAC consensus " +
                               std::to_string(best_inliers.size()) + "/" +
                               std::to_string(peaks.size()) + " below floor");
    }

    std::vector<RowPeak> inlier_pts;
    inlier_pts.reserve(best_inliers.size());
    for (std::size_t k : best_inliers) inlier_pts.push_back(peaks[k]);
    CoarseResult res;
    res.line = least_squares_line(inlier_pts);

    res.mask = CoarseMask(d.width, d.height);
    for (int v = 0; v < d.height; ++v) {
        const double dv = res.line.m * v + res.line.c;
        for (int u = 0; u < d.width; ++u) {
            if (!d.is_valid(u, v)) continue;
            if (std::fabs(d.at(u, v) - dv) < opts.mask_tau) res.mask.set(u, v, true);
        }
    }
    return res;
}

namespace {

struct LsSolution {
    double a0 = 0.0;
    double a1 = 0.0;
    double energy = 0.0;
};

// Least-squares fit of d ~ a0 + a1 w with w = v cos(theta) - u sin(theta),
// solved in centered form; T'T is singular exactly when w has no variance.
LsSolution ls_fit(const std::vector<DispSample>& samples, double theta) {
    if (samples.size() < 3) {
        throw DegenerateFitError("profile fit needs at least 3 samples, got " +
                                 std::to_string(samples.size()));
    }
    const double ct = std::cos(theta), st = std::sin(theta);
    const std::size_t k = samples.size();
    double sw = 0.0, sd = 0.0;
    for (const auto& s : samples) {
        sw += s.v * ct - s.u * st;
        sd += s.d;
    }
    const double mw = sw / k, md = sd / k;
    double cov = 0.0, var = 0.0;
    for (const auto& s : samples) {
        const double w = s.v * ct - s.u * st;
        cov += (w - mw) * (s.d - md);
        var += (w - mw) * (w - mw);
    }
    // Relative rank test: w spreads of ~1e-9 rows over a 1e2-row image are
    // numerically flat.
    if (var <= 1e-18 * k * (1.0 + mw * mw)) {
        throw DegenerateFitError("T'T is singular: rotated row coordinate has no variance");
    }
    LsSolution sol;
    sol.a1 = cov / var;
    sol.a0 = md - sol.a1 * mw;
    double e = 0.0;
    for (const auto& s : samples) {
        const double w = s.v * ct - s.u * st;
        const double r = s.d - sol.a0 - sol.a1 * w;
        e += r * r;
    }
    sol.energy = e;
    return sol;
}

}  // namespace

double roll_energy(const std::vector<DispSample>& samples, double theta) {
    return ls_fit(samples, theta).energy;
}

RollEstimate estimate_roll(const std::vector<DispSample>& samples, const DtOptions& opts) {
    const int n = std::max(3, opts.coarse_grid_points);
    const double lo = -opts.theta_bound, hi = opts.theta_bound;
    const double step = (hi - lo) / (n - 1);
    int best = 0;
    double best_e = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const double e = roll_energy(samples, lo + i * step);
        if (e < best_e) {
            best_e = e;
            best = i;
        }
    }
    double a = std::max(lo, lo + (best - 1) * step);
    double b = std::min(hi, lo + (best + 1) * step);

    // Golden-section refinement inside the bracketing grid cell pair.
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = roll_energy(samples, x1);
    double f2 = roll_energy(samples, x2);
    while (b - a > opts.theta_tolerance) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = roll_energy(samples, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = roll_energy(samples, x2);
        }
    }
    RollEstimate est;
    est.theta = (a + b) / 2.0;
    est.energy = roll_energy(samples, est.theta);
    if (best_e < est.energy) {
        est.theta = lo + best * step;
        est.energy = best_e;
    }
    return est;
}

Profile fit_profile(const std::vector<DispSample>& samples, double theta) {
    const LsSolution sol = ls_fit(samples, theta);
    return {sol.a0, sol.a1};
}

double required_delta(const DisparityImage& d, const RoadModel& model) {
    double min_res = std::numeric_limits<double>::infinity();
    for (int v = 0; v < d.height; ++v) {
        for (int u = 0; u < d.width; ++u) {
            if (!d.is_valid(u, v)) continue;
            min_res = std::min(min_res, d.at(u, v) - model.profile(u, v));
        }
    }
    if (!std::isfinite(min_res)) throw EmptyInputError("transform: no valid pixels");
    return std::ceil(std::max(0.0, -min_res) + 1.0);
}

TransformResult transform(const DisparityImage& d, const RoadModel& model) {
    TransformResult res;
    res.image = DisparityImage(d.width, d.height);
    res.image.scale = d.scale;
    res.delta_used = model.delta;

    double min_out = std::numeric_limits<double>::infinity();
    for (int v = 0; v < d.height; ++v) {
        for (int u = 0; u < d.width; ++u) {
            if (!d.is_valid(u, v)) continue;
            min_out = std::min(min_out, d.at(u, v) - model.profile(u, v) + model.delta);
        }
    }
    if (!std::isfinite(min_out)) throw EmptyInputError("transform: no valid pixels");
    if (min_out < 0.0) {
        res.delta_used = required_delta(d, model);
    }
    for (int v = 0; v < d.height; ++v) {
        for (int u = 0; u < d.width; ++u) {
            if (!d.is_valid(u, v)) continue;
            res.image.at(u, v) = d.at(u, v) - model.profile(u, v) + res.delta_used;
            res.image.valid[res.image.idx(u, v)] = 1;
        }
    }
    return res;
}

std::vector<DispSample> sample_mask(const DisparityImage& d, const CoarseMask& mask,
                                    int max_samples) {
    std::vector<DispSample> all;
    for (int v = 0; v < d.height; ++v) {
        for (int u = 0; u < d.width; ++u) {
            if (mask.at(u, v) && d.is_valid(u, v)) {
                all.push_back({static_cast<double>(u), static_cast<double>(v), d.at(u, v)});
            }
        }
    }
    if (static_cast<int>(all.size()) <= max_samples) return all;
    std::vector<DispSample> out;
    out.reserve(static_cast<std::size_t>(max_samples));
    const double stride = static_cast<double>(all.size()) / max_samples;
    for (int i = 0; i < max_samples; ++i) {
        out.push_back(all[static_cast<std::size_t>(i * stride)]);
    }
    return out;
}

namespace {

// Pixels within mask_tau of the fitted road profile; symmetric around the
// model, so a refit on it is free of the histogram-bin truncation bias the
// v-disparity candidates carry.
CoarseMask model_inlier_mask(const DisparityImage& d, const RoadModel& model, double tau) {
    CoarseMask mask(d.width, d.height);
    for (int v = 0; v < d.height; ++v) {
        for (int u = 0; u < d.width; ++u) {
            if (!d.is_valid(u, v)) continue;
            if (std::fabs(d.at(u, v) - model.profile(u, v)) < tau) mask.set(u, v, true);
        }
    }
    return mask;
}

}  // namespace

PipelineResult run_pipeline(const DisparityImage& d, const DtOptions& opts) {
    const CoarseResult coarse = coarse_road_mask(d, opts);

    PipelineResult res;
    res.mask = coarse.mask;
    std::vector<DispSample> samples = sample_mask(d, coarse.mask, opts.max_fit_samples);
    // Two rounds: the coarse-mask fit, then a refit on the model's own
    // inlier set.
    for (int round = 0; round < 2; ++round) {
        const RollEstimate roll = estimate_roll(samples, opts);
        const Profile prof = fit_profile(samples, roll.theta);
        res.model.a0 = prof.a0;
        res.model.a1 = prof.a1;
        res.model.theta = roll.theta;
        res.model.energy = roll.energy;
        res.model.inlier_count = static_cast<int>(samples.size());
        if (round == 0) {
            res.mask = model_inlier_mask(d, res.model, opts.mask_tau);
            if (res.mask.count() < 3) break;
            samples = sample_mask(d, res.mask, opts.max_fit_samples);
        }
    }
    res.model.delta = required_delta(d, res.model);
    TransformResult t = transform(d, res.model);
    res.model.delta = t.delta_used;
    res.transformed = std::move(t.image);
    return res;
}

}  // namespace rf::dt
