#pragma once

#include <cstdint>
#include <vector>

#include "roadfusion/tensor.hpp"
#include "roadfusion/types.hpp"

namespace rf::feat {

enum class FeatureKind { depth, normal3, elevation, hha3, tdisp };

// A feature map derived from disparity plus camera geometry, with a
// per-pixel validity mask (borders and unknown-disparity pixels drop out).
struct DerivedFeature {
    FeatureKind kind = FeatureKind::depth;
    Tensor map;                       // H x W x 1 or H x W x 3
    std::vector<std::uint8_t> valid;  // H*W
};

// Fixed normalization ranges for HHA channels; recorded here so the encoding
// is deterministic across images and reversible.
struct HhaRanges {
    double disparity_lo = 0.0, disparity_hi = 64.0;   // pixels
    double elevation_lo = -0.5, elevation_hi = 2.0;   // meters
    double angle_lo = 0.0, angle_hi = 90.0;           // degrees
};

// z = fx * baseline / disparity; pixels with unknown or non-positive
// disparity are masked out.
DerivedFeature depth_from_disparity(const DisparityImage& d, const CameraModel& cam);

// Unit surface normals from central-difference tangents of the back-projected
// point grid, oriented toward the camera (n_z < 0). Pixels lacking a valid
// 4-neighborhood are masked.
DerivedFeature normal_image(const DisparityImage& d, const CameraModel& cam);

struct GroundPlane {
    double nx = 0.0, ny = 0.0, nz = 0.0;  // unit normal, oriented so the camera side is positive
    double cx = 0.0, cy = 0.0, cz = 0.0;  // centroid of the fitted points
};

// Least-squares plane through the back-projected mask pixels.
GroundPlane fit_ground_plane(const DisparityImage& d, const CameraModel& cam,
                             const CoarseMask& mask);

// Signed point-to-plane distance in meters, positive above the road.
DerivedFeature elevation_map(const DisparityImage& d, const CameraModel& cam,
                             const CoarseMask& mask);

// Channels before normalization: disparity (px), elevation (m), angle between
// the pixel normal and the ground-plane normal (deg).
DerivedFeature hha_raw(const DisparityImage& d, const CameraModel& cam,
                       const CoarseMask& mask);

// hha_raw rescaled channel-wise into [0, 1] with the fixed HhaRanges.
DerivedFeature hha_image(const DisparityImage& d, const CameraModel& cam,
                         const CoarseMask& mask, const HhaRanges& ranges = {});

// Mean over channels of the [0,1]-encoded normal image ((n+1)/2), restricted
// to pixels where `roi` is set; input to the flatness comparison.
std::vector<double> normal_mean_channel(const DerivedFeature& normals,
                                        const std::vector<std::uint8_t>& roi);

}  // namespace rf::feat
