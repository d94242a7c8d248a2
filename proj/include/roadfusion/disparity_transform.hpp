#pragma once

#include <cstdint>
#include <vector>

#include "roadfusion/types.hpp"

namespace rf::dt {

// Tunables for the coarse v-disparity segmentation and the roll search.
// Defaults follow the documented choices: 1 px bins, 500 RANSAC iterations,
// 2-bin inlier threshold, 3 px mask distance, 20% consensus floor,
// +/-30 deg roll bound, up to 5000 fit samples.
struct DtOptions {
    int ransac_iterations = 500;
    double ransac_inlier_threshold = 2.0;
    std::uint32_t min_row_count = 3;
    double mask_tau = 3.0;
    double min_consensus = 0.20;
    double theta_bound = 30.0 * 3.14159265358979323846 / 180.0;
    int coarse_grid_points = 61;
    double theta_tolerance = 1e-9;  // radians, golden-section stop
    int max_fit_samples = 5000;
    std::uint64_t ransac_seed = 0x524f414453454721ull;
};

// counts[v][b] = number of valid pixels in row v whose floor(disparity) == b.
VDisparityMap build_v_disparity(const DisparityImage& d);

struct RoadLine {
    double m = 0.0;  // disparity per row
    double c = 0.0;  // disparity at row 0
};

struct CoarseResult {
    CoarseMask mask;
    RoadLine line;
};

// Fits the dominant v-disparity line d = m v + c with RANSAC over per-row
// histogram peaks, then marks pixels within mask_tau of the line.
CoarseResult coarse_road_mask(const DisparityImage& d, const DtOptions& opts = {});

// Residual energy of the least-squares road profile fit at roll angle theta
// (computed in residual form, which is algebraically the projection form
// d'd - d'T(T'T)^-1 T'd but immune to cancellation).
double roll_energy(const std::vector<DispSample>& samples, double theta);

struct RollEstimate {
    double theta = 0.0;
    double energy = 0.0;
};

// Minimizes the residual energy over [-theta_bound, +theta_bound]: coarse
// grid, then golden-section refinement.
RollEstimate estimate_roll(const std::vector<DispSample>& samples,
                           const DtOptions& opts = {});

struct Profile {
    double a0 = 0.0;
    double a1 = 0.0;
};

// Least-squares road profile at fixed theta.
Profile fit_profile(const std::vector<DispSample>& samples, double theta);

// Smallest integer offset that keeps the transformed disparity non-negative
// for this image: ceil(max(0, -min residual) + 1).
double required_delta(const DisparityImage& d, const RoadModel& model);

struct TransformResult {
    DisparityImage image;
    double delta_used = 0.0;
};

// D_t(p) = D_o(p) - (a0 + a1 (v cos theta - u sin theta)) + delta on valid
// pixels; invalid pixels stay invalid. If model.delta cannot keep the result
// non-negative the offset is recomputed per required_delta and reported via
// delta_used.
TransformResult transform(const DisparityImage& d, const RoadModel& model);

// Uniformly strided subsample of the coarse-mask pixels, at most
// opts.max_fit_samples entries.
std::vector<DispSample> sample_mask(const DisparityImage& d, const CoarseMask& mask,
                                    int max_samples);

struct PipelineResult {
    DisparityImage transformed;
    RoadModel model;
    CoarseMask mask;
};

// coarse_road_mask -> sample -> estimate_roll -> fit_profile -> transform.
PipelineResult run_pipeline(const DisparityImage& d, const DtOptions& opts = {});

}  // namespace rf::dt
