#include "roadfusion/dfm.hpp"

#include <algorithm>
#include <cmath>

#include "roadfusion/error.hpp"

namespace rf::dfm {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw ShapeError(msg);
}

void check_pair(const Tensor& f_r, const Tensor& f_t) {
    require(f_r.rank() == 3 && f_t.rank() == 3, "dfm inputs must be rank 3");
    require(f_r.same_shape(f_t), "dfm inputs must have equal shapes");
}

}  // namespace

DfmParams DfmParams::zeros(int c, int c_out, int k) {
    require(k % 2 == 1, "dfm kernel size must be odd");
    DfmParams p;
    p.k = k;
    p.c_in = c;
    p.c_out = c_out;
    p.omega1_w = Tensor::zeros({3, 3, c, k * k * c});
    p.omega1_b = Tensor::zeros({k * k * c});
    p.omega2_w = Tensor::zeros({c_out * c, c});
    p.omega2_b = Tensor::zeros({c_out * c});
    return p;
}

DfmParams DfmParams::identity_init(int c, int c_out, int k) {
    DfmParams p = zeros(c, c_out, k);
    const int center = (k * k - 1) / 2;
    for (int ch = 0; ch < c; ++ch) {
        p.omega1_b[static_cast<std::size_t>(center * c + ch)] = 1.0;
    }
    for (int o = 0; o < c_out; ++o) {
        if (o < c) p.omega2_b[static_cast<std::size_t>(o * c + o)] = 1.0;
    }
    return p;
}

DfmParams DfmParams::random_init(int c, int c_out, Rng& rng, int k, double stddev) {
    DfmParams p = zeros(c, c_out, k);
    p.omega1_w = Tensor::randn({3, 3, c, k * k * c}, rng, stddev);
    p.omega1_b = Tensor::randn({k * k * c}, rng, stddev);
    p.omega2_w = Tensor::randn({c_out * c, c}, rng, stddev);
    p.omega2_b = Tensor::randn({c_out * c}, rng, stddev);
    return p;
}

NaiveDfmParams NaiveDfmParams::random_init(int c, int c_out, Rng& rng, int k, double stddev) {
    require(k % 2 == 1, "dfm kernel size must be odd");
    NaiveDfmParams p;
    p.k = k;
    p.c_in = c;
    p.c_out = c_out;
    p.w = Tensor::randn({3, 3, c, k * k * c * c_out}, rng, stddev);
    p.b = Tensor::randn({k * k * c * c_out}, rng, stddev);
    return p;
}

Tensor dynamic_channelwise_conv(const Tensor& f_r, const Tensor& w1, int k) {
    require(f_r.rank() == 3 && w1.rank() == 3, "stage1 tensors must be rank 3");
    const int h = f_r.dim(0), w = f_r.dim(1), c = f_r.dim(2);
    require(w1.dim(0) == h && w1.dim(1) == w, "stage1 kernel map spatial mismatch");
    require(w1.dim(2) == k * k * c, "stage1 kernel map channel count mismatch");
    const int half = k / 2;
    Tensor out({h, w, c});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int q = 0; q < k * k; ++q) {
                    const int dy = q / k - half;
                    const int dx = q % k - half;
                    const int iy = y + dy, ix = x + dx;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                    acc += w1.at(y, x, q * c + ch) * f_r.at(iy, ix, ch);
                }
                out.at(y, x, ch) = acc;
            }
        }
    }
    return out;
}

Tensor per_pixel_channel_mix(const Tensor& f_fp, const Tensor& w2) {
    require(f_fp.rank() == 3 && w2.rank() == 2, "stage2 expects rank-3 input and rank-2 kernel");
    const int h = f_fp.dim(0), w = f_fp.dim(1), c = f_fp.dim(2);
    require(w2.dim(1) == c, "stage2 kernel columns must equal input channels");
    const int c_out = w2.dim(0);
    Tensor out({h, w, c_out});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int o = 0; o < c_out; ++o) {
                double acc = 0.0;
                for (int ch = 0; ch < c; ++ch) acc += w2.at(o, ch) * f_fp.at(y, x, ch);
                out.at(y, x, o) = acc;
            }
        }
    }
    return out;
}

Stage1Result dfm_stage1(const Tensor& f_r, const Tensor& f_t, const DfmParams& params) {
    check_pair(f_r, f_t);
    require(f_r.dim(2) == params.c_in, "stage1 channel count does not match params");
    Stage1Result res;
    res.w1 = conv2d(f_t, params.omega1_w, params.omega1_b, Padding::same);
    res.fused = dynamic_channelwise_conv(f_r, res.w1, params.k);
    return res;
}

Stage2Result dfm_stage2(const Tensor& f_fp, const Tensor& f_t, const DfmParams& params) {
    require(f_fp.rank() == 3 && f_t.rank() == 3, "stage2 inputs must be rank 3");
    require(f_t.dim(2) == params.c_in, "stage2 feature channel count does not match params");
    require(f_fp.dim(2) == params.c_in, "stage2 intermediate channel count does not match params");
    Stage2Result res;
    const Tensor pooled = avg_pool_global(f_t).reshaped({params.c_in});
    const Tensor z = fully_connected(pooled, params.omega2_w, params.omega2_b);
    res.w2 = z.reshaped({params.c_out, params.c_in});
    res.fused = per_pixel_channel_mix(f_fp, res.w2);
    return res;
}

Tensor dfm_forward(const Tensor& f_r, const Tensor& f_t, const DfmParams& params) {
    require(params.c_in == params.c_out, "residual dfm requires C == C'");
    const Stage1Result s1 = dfm_stage1(f_r, f_t, params);
    const Stage2Result s2 = dfm_stage2(s1.fused, f_t, params);
    return add(f_r, s2.fused);
}

Tensor naive_generate(const Tensor& f_t, const NaiveDfmParams& params) {
    require(f_t.rank() == 3, "naive generator input must be rank 3");
    require(f_t.dim(2) == params.c_in, "naive generator channel count mismatch");
    return conv2d(f_t, params.w, params.b, Padding::same);
}

Tensor naive_apply(const Tensor& f_r, const Tensor& w, int k, int c_out) {
    require(f_r.rank() == 3 && w.rank() == 3, "naive apply tensors must be rank 3");
    const int h = f_r.dim(0), wd = f_r.dim(1), c = f_r.dim(2);
    require(w.dim(0) == h && w.dim(1) == wd, "naive kernel map spatial mismatch");
    require(w.dim(2) == k * k * c * c_out, "naive kernel map channel count mismatch");
    const int half = k / 2;
    Tensor out({h, wd, c_out});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < wd; ++x) {
            for (int o = 0; o < c_out; ++o) {
                double acc = 0.0;
                for (int q = 0; q < k * k; ++q) {
                    const int dy = q / k - half;
                    const int dx = q % k - half;
                    const int iy = y + dy, ix = x + dx;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                    for (int ch = 0; ch < c; ++ch) {
                        acc += w.at(y, x, (o * k * k + q) * c + ch) * f_r.at(iy, ix, ch);
                    }
                }
                out.at(y, x, o) = acc;
            }
        }
    }
    return out;
}

Tensor dfm_naive_forward(const Tensor& f_r, const Tensor& f_t, const NaiveDfmParams& params) {
    check_pair(f_r, f_t);
    return naive_apply(f_r, naive_generate(f_t, params), params.k, params.c_out);
}

Tape::NodeId dynamic_channelwise_conv(Tape& tape, Tape::NodeId f_r, Tape::NodeId w1, int k) {
    Tensor out = dynamic_channelwise_conv(tape.value(f_r), tape.value(w1), k);
    auto bwd = [k](const Tensor& up, const std::vector<const Tensor*>& in,
                   const std::vector<Tensor*>& gr) {
        const Tensor& fr = *in[0];
        const Tensor& w1v = *in[1];
        Tensor& gfr = *gr[0];
        Tensor& gw1 = *gr[1];
        const int h = fr.dim(0), w = fr.dim(1), c = fr.dim(2);
        const int half = k / 2;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int ch = 0; ch < c; ++ch) {
                    const double g = up.at(y, x, ch);
                    if (g == 0.0) continue;
                    for (int q = 0; q < k * k; ++q) {
                        const int iy = y + q / k - half;
                        const int ix = x + q % k - half;
                        if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                        gfr.at(iy, ix, ch) += g * w1v.at(y, x, q * c + ch);
                        gw1.at(y, x, q * c + ch) += g * fr.at(iy, ix, ch);
                    }
                }
            }
        }
    };
    return tape.custom({f_r, w1}, std::move(out), bwd);
}

Tape::NodeId per_pixel_channel_mix(Tape& tape, Tape::NodeId f_fp, Tape::NodeId w2) {
    Tensor out = per_pixel_channel_mix(tape.value(f_fp), tape.value(w2));
    auto bwd = [](const Tensor& up, const std::vector<const Tensor*>& in,
                  const std::vector<Tensor*>& gr) {
        const Tensor& fp = *in[0];
        const Tensor& w2v = *in[1];
        Tensor& gfp = *gr[0];
        Tensor& gw2 = *gr[1];
        const int h = fp.dim(0), w = fp.dim(1), c = fp.dim(2);
        const int c_out = w2v.dim(0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int o = 0; o < c_out; ++o) {
                    const double g = up.at(y, x, o);
                    if (g == 0.0) continue;
                    for (int ch = 0; ch < c; ++ch) {
                        gfp.at(y, x, ch) += g * w2v.at(o, ch);
                        gw2.at(o, ch) += g * fp.at(y, x, ch);
                    }
                }
            }
        }
    };
    return tape.custom({f_fp, w2}, std::move(out), bwd);
}

DfmParamNodes attach_params(Tape& tape, const DfmParams& params) {
    DfmParamNodes n;
    n.omega1_w = tape.leaf(params.omega1_w);
    n.omega1_b = tape.leaf(params.omega1_b);
    n.omega2_w = tape.leaf(params.omega2_w);
    n.omega2_b = tape.leaf(params.omega2_b);
    return n;
}

Tape::NodeId dfm_attach(Tape& tape, Tape::NodeId f_r, Tape::NodeId f_t,
                        const DfmParamNodes& nodes, int k, int c_in, int c_out) {
    if (c_in != c_out) throw ShapeError("residual dfm requires C == C'");
    const Tape::NodeId w1 = tape.conv2d(f_t, nodes.omega1_w, nodes.omega1_b, Padding::same);
    const Tape::NodeId ffp = dynamic_channelwise_conv(tape, f_r, w1, k);
    const Tape::NodeId pooled = tape.reshape(tape.avg_pool_global(f_t), {c_in});
    const Tape::NodeId z = tape.fully_connected(pooled, nodes.omega2_w, nodes.omega2_b);
    const Tape::NodeId w2 = tape.reshape(z, {c_out, c_in});
    const Tape::NodeId ff = per_pixel_channel_mix(tape, ffp, w2);
    return tape.add(f_r, ff);
}

DfmGrads dfm_backward(const Tensor& f_r, const Tensor& f_t, const DfmParams& params,
                      const Tensor& upstream) {
    check_pair(f_r, f_t);
    Tape tape;
    const Tape::NodeId nr = tape.leaf(f_r);
    const Tape::NodeId nt = tape.leaf(f_t);
    const DfmParamNodes nodes = attach_params(tape, params);
    const Tape::NodeId out = dfm_attach(tape, nr, nt, nodes, params.k, params.c_in, params.c_out);
    tape.backward(out, &upstream);
    DfmGrads g;
    g.f_r = tape.grad(nr);
    g.f_t = tape.grad(nt);
    g.omega1_w = tape.grad(nodes.omega1_w);
    g.omega1_b = tape.grad(nodes.omega1_b);
    g.omega2_w = tape.grad(nodes.omega2_w);
    g.omega2_b = tape.grad(nodes.omega2_b);
    return g;
}

std::uint64_t cost_model(int h, int w, int c, int c_out, int k, CostVariant variant,
                         bool include_generation) {
    if (h <= 0 || w <= 0 || c <= 0 || c_out <= 0 || k <= 0) {
        throw RangeError("cost_model requires positive dimensions");
    }
    const std::uint64_t hw = static_cast<std::uint64_t>(h) * static_cast<std::uint64_t>(w);
    const std::uint64_t kk = static_cast<std::uint64_t>(k) * k;
    const std::uint64_t cc = static_cast<std::uint64_t>(c);
    const std::uint64_t co = static_cast<std::uint64_t>(c_out);
    std::uint64_t macs = 0;
    if (variant == CostVariant::naive) {
        macs = hw * kk * cc * co;
        if (include_generation) macs += hw * 9 * cc * (kk * cc * co);
    } else {
        macs = hw * kk * cc + hw * cc * co;
        if (include_generation) {
            macs += hw * 9 * cc * (kk * cc);  // Omega1 convolution
            macs += hw * cc;                  // global average pooling accumulations
            macs += cc * co * cc;             // fully connected layer
        }
    }
    return macs;
}

Tensor mean_activation_map(const Tensor& f) {
    if (f.rank() != 3) throw ShapeError("mean_activation_map input must be rank 3");
    const int h = f.dim(0), w = f.dim(1), c = f.dim(2);
    Tensor out({h, w, 1});
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int ch = 0; ch < c; ++ch) acc += f.at(y, x, ch);
            const double m = acc / c;
            out.at(y, x, 0) = m;
            lo = std::min(lo, m);
            hi = std::max(hi, m);
        }
    }
    if (hi - lo <= 0.0) return Tensor::zeros({h, w, 1});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - lo) / (hi - lo);
    return out;
}

}  // namespace rf::dfm
