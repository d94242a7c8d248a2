#include "roadfusion/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "roadfusion/error.hpp"

namespace rf {

namespace {

std::size_t product(const std::vector<int>& dims) {
    std::size_t n = 1;
    for (int d : dims) {
        if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + std::to_string(d));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

}  // namespace

Tensor::Tensor(std::vector<int> dims, double fill)
    : dims_(std::move(dims)), data_(product(dims_), fill) {
    if (dims_.empty() || dims_.size() > 4) {
        throw ShapeError("tensor rank must be 1..4");
    }
}

Tensor Tensor::randn(std::vector<int> dims, Rng& rng, double stddev) {
    Tensor t(std::move(dims));
    for (auto& v : t.data_) v = stddev * rng.gaussian();
    return t;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(std::vector<int> dims) const {
    Tensor t(std::move(dims));
    require(t.size() == size(), "reshape changes element count");
    t.data_ = data_;
    return t;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, Padding pad, int stride) {
    require(x.rank() == 3, "conv2d input must be rank 3");
    require(w.rank() == 4, "conv2d kernel must be rank 4");
    require(b.rank() == 1, "conv2d bias must be rank 1");
    const int h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
    const int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
    require(w.dim(2) == cin, "conv2d kernel input channels mismatch");
    require(b.dim(0) == cout, "conv2d bias size mismatch");
    require(stride >= 1, "conv2d stride must be >= 1");

    const int py = pad == Padding::same ? (kh - 1) / 2 : 0;
    const int px = pad == Padding::same ? (kw - 1) / 2 : 0;
    const int oh = (h + 2 * py - kh) / stride + 1;
    const int ow = (wd + 2 * px - kw) / stride + 1;
    require(oh >= 1 && ow >= 1, "conv2d output would be empty");

    Tensor out({oh, ow, cout});
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int oc = 0; oc < cout; ++oc) {
                double acc = b[static_cast<std::size_t>(oc)];
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride + ky - py;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox * stride + kx - px;
                        if (ix < 0 || ix >= wd) continue;
                        for (int ic = 0; ic < cin; ++ic) {
                            acc += x.at(iy, ix, ic) * w.at4(ky, kx, ic, oc);
                        }
                    }
                }
                out.at(oy, ox, oc) = acc;
            }
        }
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "add shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require(a.rank() == 3 && b.rank() == 3, "concat inputs must be rank 3");
    require(a.dim(0) == b.dim(0) && a.dim(1) == b.dim(1), "concat spatial mismatch");
    const int h = a.dim(0), w = a.dim(1), ca = a.dim(2), cb = b.dim(2);
    Tensor out({h, w, ca + cb});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < ca; ++c) out.at(y, x, c) = a.at(y, x, c);
            for (int c = 0; c < cb; ++c) out.at(y, x, ca + c) = b.at(y, x, c);
        }
    }
    return out;
}

Tensor upsample_nearest2x(const Tensor& x) {
    require(x.rank() == 3, "upsample input must be rank 3");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor out({h * 2, w * 2, c});
    for (int y = 0; y < 2 * h; ++y) {
        for (int xx = 0; xx < 2 * w; ++xx) {
            for (int cc = 0; cc < c; ++cc) {
                out.at(y, xx, cc) = x.at(y / 2, xx / 2, cc);
            }
        }
    }
    return out;
}

Tensor avg_pool_global(const Tensor& x) {
    require(x.rank() == 3, "avg_pool_global input must be rank 3");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor out({1, 1, c});
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (int cc = 0; cc < c; ++cc) {
        double acc = 0.0;
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) acc += x.at(y, xx, cc);
        out.at(0, 0, cc) = acc * inv;
    }
    return out;
}

Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& b) {
    require(x.rank() == 1, "fully_connected input must be rank 1");
    require(w.rank() == 2, "fully_connected weight must be rank 2");
    require(b.rank() == 1, "fully_connected bias must be rank 1");
    const int n = x.dim(0), m = w.dim(0);
    require(w.dim(1) == n, "fully_connected weight columns mismatch");
    require(b.dim(0) == m, "fully_connected bias size mismatch");
    Tensor out({m});
    for (int i = 0; i < m; ++i) {
        double acc = b[static_cast<std::size_t>(i)];
        for (int j = 0; j < n; ++j) acc += w.at(i, j) * x[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

SoftmaxCeResult softmax_ce(const Tensor& logits, const LabelImage& labels,
                           const std::vector<double>& class_weights, int ignore_class) {
    require(logits.rank() == 3, "softmax_ce logits must be rank 3");
    const int h = logits.dim(0), w = logits.dim(1), cls = logits.dim(2);
    require(cls >= 2, "softmax_ce needs at least 2 classes");
    require(labels.height == h && labels.width == w, "softmax_ce label shape mismatch");
    if (!class_weights.empty() && static_cast<int>(class_weights.size()) != cls) {
        throw ShapeError("softmax_ce class weight count mismatch");
    }

    SoftmaxCeResult res;
    res.grad = Tensor::zeros({h, w, cls});
    res.probs = Tensor::zeros({h, w, cls});

    double weight_sum = 0.0;
    double loss_sum = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double mx = logits.at(y, x, 0);
            for (int c = 1; c < cls; ++c) mx = std::max(mx, logits.at(y, x, c));
            double denom = 0.0;
            for (int c = 0; c < cls; ++c) denom += std::exp(logits.at(y, x, c) - mx);
            for (int c = 0; c < cls; ++c) {
                res.probs.at(y, x, c) = std::exp(logits.at(y, x, c) - mx) / denom;
            }
            const int lab = labels.at(x, y);
            if (lab == ignore_class) continue;
            require(lab >= 0 && lab < cls, "label id out of range");
            const double wgt = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(lab)];
            weight_sum += wgt;
            loss_sum += -wgt * (logits.at(y, x, lab) - mx - std::log(denom));
        }
    }
    if (weight_sum <= 0.0) {
        throw EmptyInputError("softmax_ce: every pixel is ignored");
    }
    res.loss = loss_sum / weight_sum;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int lab = labels.at(x, y);
            if (lab == ignore_class) continue;
            const double wgt = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(lab)];
            for (int c = 0; c < cls; ++c) {
                const double onehot = (c == lab) ? 1.0 : 0.0;
                res.grad.at(y, x, c) = wgt * (res.probs.at(y, x, c) - onehot) / weight_sum;
            }
        }
    }
    return res;
}

}  // namespace rf
