#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "roadfusion/types.hpp"

namespace rf::synth {

struct AnomalyRect {
    int x = 0;       // left, pixels
    int y = 0;       // top, pixels
    int w = 0;
    int h = 0;
    double delta = 0.0;  // disparity offset, positive = above road

    bool contains(int u, int v) const {
        return u >= x && u < x + w && v >= y && v < y + h;
    }
};

// Full description of a synthetic road scene. Road disparity follows
// d = a0 + a1 (v cos(theta) - u sin(theta)); anomaly rects add their delta
// and are labeled class 2, road pixels class 1.
struct SceneSpec {
    int width = 96;
    int height = 64;
    double a0 = 2.0;
    double a1 = 0.5;
    double theta = 0.0;  // radians
    std::vector<AnomalyRect> anomalies;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    double planar(int u, int v) const;
};

struct Scene {
    DisparityImage disparity;
    LabelImage labels;
    CameraModel camera;
};

// Deterministic given spec.seed. Throws RangeError naming the offending
// pixel if the deterministic disparity (road + anomaly delta) is not
// positive anywhere, and ShapeError if an anomaly rect leaves the image.
Scene generate(const SceneSpec& spec);

// Fixed intrinsics every synthetic scene is rendered with.
CameraModel scene_camera(int width, int height);

// Shaded grayscale render with per-anomaly tint; the second modality for
// fusion experiments (geometry, not photorealism, is what matters here).
RgbImage render_rgb_proxy(const SceneSpec& spec, const Scene& scene);

struct ManifestEntry {
    std::string id;
    std::string split;  // train | val | test | all
    SceneSpec spec;
};

struct SplitCounts {
    int train = 0;
    int val = 0;
    int test = 0;
};

SplitCounts split_counts(int n);

// Draws a random scene spec within the documented ranges, resampling until
// the deterministic disparity keeps a positive margin everywhere.
SceneSpec random_spec(std::uint64_t seed, std::uint64_t index, int width, int height,
                      double noise_sigma);

// Writes n scenes into <out>/{train,val,test}/{disp,rgb,label}/<id>.{pgm,ppm,pgm}
// at a 70/15/15 ratio plus manifest.csv listing the true parameters.
std::vector<ManifestEntry> make_split(int n, std::uint64_t seed,
                                      const std::filesystem::path& out_dir,
                                      double noise_sigma = 0.25,
                                      int width = 96, int height = 64);

// Flat variant (no split subdirectories): <out>/{disp,rgb,label}/<id>.*
std::vector<ManifestEntry> make_flat(int n, std::uint64_t seed,
                                     const std::filesystem::path& out_dir,
                                     double noise_sigma = 0.25,
                                     int width = 96, int height = 64);

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& csv_path);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& csv_path);

}  // namespace rf::synth
