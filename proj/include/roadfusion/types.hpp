#pragma once

#include <cstdint>
#include <vector>

namespace rf {

// Dense per-pixel disparity grid with validity mask. On disk this is a
// 16-bit PGM with fixed-point samples (denominator `scale`, KITTI style);
// sample 0 marks an unknown disparity.
struct DisparityImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;         // width*height, row-major
    std::vector<std::uint8_t> valid;  // width*height, 1 = disparity known
    int scale = 256;                  // fixed-point denominator used on disk

    DisparityImage() = default;
    DisparityImage(int w, int h)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0.0),
          valid(static_cast<std::size_t>(w) * h, 0) {}

    std::size_t idx(int u, int v) const {
        return static_cast<std::size_t>(v) * width + u;
    }
    double at(int u, int v) const { return data[idx(u, v)]; }
    double& at(int u, int v) { return data[idx(u, v)]; }
    bool is_valid(int u, int v) const { return valid[idx(u, v)] != 0; }
};

// Per-pixel class labels: 0 = unlabeled, 1 = drivable area, 2 = road anomaly.
struct LabelImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> classes;

    LabelImage() = default;
    LabelImage(int w, int h)
        : width(w), height(h), classes(static_cast<std::size_t>(w) * h, 0) {}

    std::size_t idx(int u, int v) const {
        return static_cast<std::size_t>(v) * width + u;
    }
    std::uint8_t at(int u, int v) const { return classes[idx(u, v)]; }
    std::uint8_t& at(int u, int v) { return classes[idx(u, v)]; }
};

// Simple 8-bit RGB image, used for the synthetic RGB proxies (PPM on disk).
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // width*height*3, row-major, RGB

    RgbImage() = default;
    RgbImage(int w, int h)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::size_t idx(int u, int v) const {
        return (static_cast<std::size_t>(v) * width + u) * 3;
    }
};

// Pinhole stereo camera intrinsics plus baseline; realizes depth/height/
// normal features from disparity.
struct CameraModel {
    double fx = 0.0;        // focal length, pixels
    double fy = 0.0;
    double u0 = 0.0;        // principal point, pixels
    double v0 = 0.0;
    double baseline = 0.0;  // meters
};

// Fitted road geometry: disparity profile a = (a0; a1), rig roll angle theta,
// non-negativity offset delta, plus the minimized residual energy and the
// number of samples that entered the fit.
struct RoadModel {
    double a0 = 0.0;      // disparity offset, pixels
    double a1 = 0.0;      // disparity slope, pixels per rotated row
    double theta = 0.0;   // roll angle, radians
    double delta = 0.0;   // transform offset, disparity pixels
    double energy = 0.0;  // residual energy at theta
    int inlier_count = 0;

    // Road disparity profile evaluated at pixel (u, v).
    double profile(double u, double v) const;
};

// Histogram of disparities per image row; a planar road maps to a line here.
struct VDisparityMap {
    int rows = 0;
    int bins = 0;                       // bin width is 1 disparity pixel
    std::vector<std::uint32_t> counts;  // rows*bins, row-major

    std::uint32_t at(int v, int b) const {
        return counts[static_cast<std::size_t>(v) * bins + b];
    }
};

// Per-pixel boolean coarse drivable-area mask.
struct CoarseMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> mask;

    CoarseMask() = default;
    CoarseMask(int w, int h)
        : width(w), height(h), mask(static_cast<std::size_t>(w) * h, 0) {}

    std::size_t idx(int u, int v) const {
        return static_cast<std::size_t>(v) * width + u;
    }
    bool at(int u, int v) const { return mask[idx(u, v)] != 0; }
    void set(int u, int v, bool on) { mask[idx(u, v)] = on ? 1 : 0; }
    std::size_t count() const;
};

// One (u, v, disparity) observation used by the roll/profile fits.
struct DispSample {
    double u = 0.0;
    double v = 0.0;
    double d = 0.0;
};

}  // namespace rf
