#pragma once

#include <cstdint>
#include <vector>

#include "roadfusion/rng.hpp"
#include "roadfusion/types.hpp"

namespace rf {

// Dense real tensor of rank 1..4, row-major with the last dimension
// innermost. Network feature maps use (H, W, C); conv kernels use
// (Kh, Kw, Cin, Cout). Values are 64-bit; f32 only appears at the I/O
// boundary.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> dims, double fill = 0.0);

    static Tensor zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }
    // He-style normal init for conv/fc weights (fan_in computed by caller).
    static Tensor randn(std::vector<int> dims, Rng& rng, double stddev = 1.0);

    int rank() const { return static_cast<int>(dims_.size()); }
    const std::vector<int>& dims() const { return dims_; }
    int dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // rank-3 (H, W, C)
    double& at(int y, int x, int c) {
        return data_[(static_cast<std::size_t>(y) * dims_[1] + x) * dims_[2] + c];
    }
    double at(int y, int x, int c) const {
        return data_[(static_cast<std::size_t>(y) * dims_[1] + x) * dims_[2] + c];
    }
    // rank-2 (M, N)
    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * dims_[1] + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * dims_[1] + j]; }
    // rank-4 (Kh, Kw, Cin, Cout)
    double& at4(int a, int b, int c, int d) {
        return data_[((static_cast<std::size_t>(a) * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
    }
    double at4(int a, int b, int c, int d) const {
        return data_[((static_cast<std::size_t>(a) * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
    }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }
    bool all_finite() const;
    Tensor reshaped(std::vector<int> dims) const;

private:
    std::vector<int> dims_;
    std::vector<double> data_;
};

enum class Padding { same, valid };

// Standard cross-correlation. x: (H, W, Cin); w: (Kh, Kw, Cin, Cout);
// b: (Cout). "same" zero-pads so that stride 1 preserves H x W; with
// stride s the output is floor((H + 2p - K)/s) + 1, p = (K-1)/2.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              Padding pad = Padding::same, int stride = 1);

Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor upsample_nearest2x(const Tensor& x);

// Per-channel mean over the spatial extent: (H, W, C) -> (1, 1, C).
Tensor avg_pool_global(const Tensor& x);

// y = W x + b with x: (N), W: (M, N), b: (M).
Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& b);

struct SoftmaxCeResult {
    double loss = 0.0;
    Tensor grad;    // d loss / d logits, same shape as logits
    Tensor probs;   // softmax probabilities, same shape as logits
};

// Mean weighted cross-entropy over pixels whose label != ignore_class,
// numerically stabilized by max subtraction. class_weights may be empty
// (all ones) or one weight per class.
SoftmaxCeResult softmax_ce(const Tensor& logits, const LabelImage& labels,
                           const std::vector<double>& class_weights = {},
                           int ignore_class = 0);

}  // namespace rf
