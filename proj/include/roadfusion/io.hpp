#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "roadfusion/tensor.hpp"
#include "roadfusion/types.hpp"

namespace rf::io {

// 16-bit binary PGM (P5, maxval 65535, big-endian samples). Samples are
// fixed-point disparities with denominator `scale`; sample 0 means "invalid".
DisparityImage read_pgm16(const std::filesystem::path& path, int scale = 256);
DisparityImage read_pgm16(std::istream& in, int scale = 256);
void write_pgm16(const DisparityImage& img, const std::filesystem::path& path);

// 8-bit binary PGM (P5, maxval 255) holding raw class ids {0,1,2}.
LabelImage read_label_pgm(const std::filesystem::path& path);
LabelImage read_label_pgm(std::istream& in);
void write_label_pgm(const LabelImage& img, const std::filesystem::path& path);

// Binary PPM (P6, maxval 255) for the RGB proxies.
RgbImage read_ppm(const std::filesystem::path& path);
RgbImage read_ppm(std::istream& in);
void write_ppm(const RgbImage& img, const std::filesystem::path& path);

// Grayscale PFM ("Pf"); the sign of the scale line encodes endianness and
// rows are stored bottom-up. Returns/accepts an H x W x 1 map. Writing
// rejects NaN samples; the round trip is bitwise lossless for f32 data.
Tensor read_pfm(const std::filesystem::path& path);
Tensor read_pfm(std::istream& in);
void write_pfm(const Tensor& map, const std::filesystem::path& path);

// Minimal bespoke tensor container: magic "TNSR", u32 version = 1, u32 rank,
// rank x u32 dims, then f32 little-endian payload, row-major with the channel
// dimension innermost.
Tensor read_tensor(const std::filesystem::path& path);
Tensor read_tensor(std::istream& in);
void write_tensor(const Tensor& t, const std::filesystem::path& path);
void write_tensor(const Tensor& t, std::ostream& out);

// Key-value text documents (key=value per line).
RoadModel read_road_model(const std::filesystem::path& path);
RoadModel read_road_model(std::istream& in);
void write_road_model(const RoadModel& m, const std::filesystem::path& path);

CameraModel read_camera(const std::filesystem::path& path);
CameraModel read_camera(std::istream& in);
void write_camera(const CameraModel& cam, const std::filesystem::path& path);

}  // namespace rf::io
