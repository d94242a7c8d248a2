#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace oracle {

rf::Tensor conv2d_loops(const rf::Tensor& x, const rf::Tensor& w, const rf::Tensor& b,
                        bool same_padding) {
    const int h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
    const int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
    const int py = same_padding ? (kh - 1) / 2 : 0;
    const int px = same_padding ? (kw - 1) / 2 : 0;
    const int oh = h + 2 * py - kh + 1;
    const int ow = wd + 2 * px - kw + 1;
    rf::Tensor out({oh, ow, cout});
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int oc = 0; oc < cout; ++oc) {
                double acc = b[oc];
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx)
                        for (int ic = 0; ic < cin; ++ic) {
                            const int iy = oy + ky - py;
                            const int ix = ox + kx - px;
                            const double xv =
                                (iy < 0 || iy >= h || ix < 0 || ix >= wd) ? 0.0 : x.at(iy, ix, ic);
                            acc += xv * w.at4(ky, kx, ic, oc);
                        }
                out.at(oy, ox, oc) = acc;
            }
    return out;
}

rf::Tensor dfm_stage1_loops(const rf::Tensor& f_r, const rf::Tensor& w1, int k,
                            std::uint64_t* macs) {
    const int h = f_r.dim(0), w = f_r.dim(1), c = f_r.dim(2);
    rf::Tensor out({h, w, c});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int dy = -(k / 2); dy <= k / 2; ++dy)
                    for (int dx = -(k / 2); dx <= k / 2; ++dx) {
                        const int q = (dy + k / 2) * k + (dx + k / 2);
                        const int iy = y + dy, ix = x + dx;
                        const double fv =
                            (iy < 0 || iy >= h || ix < 0 || ix >= w) ? 0.0 : f_r.at(iy, ix, ch);
                        acc += w1.at(y, x, q * c + ch) * fv;
                        if (macs) ++*macs;
                    }
                out.at(y, x, ch) = acc;
            }
    return out;
}

rf::Tensor dfm_stage2_loops(const rf::Tensor& f_fp, const rf::Tensor& w2, std::uint64_t* macs) {
    const int h = f_fp.dim(0), w = f_fp.dim(1), c = f_fp.dim(2);
    const int c_out = w2.dim(0);
    rf::Tensor out({h, w, c_out});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int o = 0; o < c_out; ++o) {
                double acc = 0.0;
                for (int ch = 0; ch < c; ++ch) {
                    acc += w2.at(o, ch) * f_fp.at(y, x, ch);
                    if (macs) ++*macs;
                }
                out.at(y, x, o) = acc;
            }
    return out;
}

rf::Tensor dfm_naive_apply_loops(const rf::Tensor& f_r, const rf::Tensor& w, int k, int c_out,
                                 std::uint64_t* macs) {
    const int h = f_r.dim(0), wd = f_r.dim(1), c = f_r.dim(2);
    rf::Tensor out({h, wd, c_out});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < wd; ++x)
            for (int o = 0; o < c_out; ++o) {
                double acc = 0.0;
                for (int dy = -(k / 2); dy <= k / 2; ++dy)
                    for (int dx = -(k / 2); dx <= k / 2; ++dx) {
                        const int q = (dy + k / 2) * k + (dx + k / 2);
                        const int iy = y + dy, ix = x + dx;
                        for (int ch = 0; ch < c; ++ch) {
                            const double fv =
                                (iy < 0 || iy >= h || ix < 0 || ix >= wd) ? 0.0 : f_r.at(iy, ix, ch);
                            acc += w.at(y, x, (o * k * k + q) * c + ch) * fv;
                            if (macs) ++*macs;
                        }
                    }
                out.at(y, x, o) = acc;
            }
    return out;
}

NormalEq plane_fit_normal_equations(const std::vector<rf::DispSample>& samples, double theta) {
    const double ct = std::cos(theta), st = std::sin(theta);
    const double k = static_cast<double>(samples.size());
    double sw = 0.0, sww = 0.0, sd = 0.0, swd = 0.0, sdd = 0.0;
    for (const auto& s : samples) {
        const double w = s.v * ct - s.u * st;
        sw += w;
        sww += w * w;
        sd += s.d;
        swd += w * s.d;
        sdd += s.d * s.d;
    }
    // T'T = [[k, sw], [sw, sww]]; T'd = [sd; swd]
    const double det = k * sww - sw * sw;
    NormalEq r;
    r.a0 = (sww * sd - sw * swd) / det;
    r.a1 = (k * swd - sw * sd) / det;
    // Projection form, evaluated exactly as written.
    const double inv00 = sww / det, inv01 = -sw / det, inv11 = k / det;
    r.energy_projection_form =
        sdd - (sd * (inv00 * sd + inv01 * swd) + swd * (inv01 * sd + inv11 * swd));
    double e = 0.0;
    for (const auto& s : samples) {
        const double w = s.v * ct - s.u * st;
        const double resid = s.d - r.a0 - r.a1 * w;
        e += resid * resid;
    }
    r.energy_residual_form = e;
    return r;
}

double grid_search_roll(const std::vector<rf::DispSample>& samples, double lo, double hi,
                        double step) {
    double best_theta = lo;
    double best_e = std::numeric_limits<double>::infinity();
    for (double t = lo; t <= hi + 1e-15; t += step) {
        const double e = plane_fit_normal_equations(samples, t).energy_residual_form;
        if (e < best_e) {
            best_e = e;
            best_theta = t;
        }
    }
    return best_theta;
}

double average_precision_exhaustive(const std::vector<double>& scores,
                                    const std::vector<int>& gt, int cls) {
    std::set<double> distinct;
    std::uint64_t positives = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (gt[i] == 0) continue;
        distinct.insert(scores[i]);
        if (gt[i] == cls) ++positives;
    }
    struct Pr {
        double p, r;
    };
    std::vector<Pr> pts;
    for (auto it = distinct.rbegin(); it != distinct.rend(); ++it) {
        const double thr = *it;
        std::uint64_t tp = 0, pp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (gt[i] == 0 || scores[i] < thr) continue;
            ++pp;
            if (gt[i] == cls) ++tp;
        }
        pts.push_back({static_cast<double>(tp) / pp, static_cast<double>(tp) / positives});
    }
    std::sort(pts.begin(), pts.end(), [](const Pr& a, const Pr& b) { return a.r < b.r; });
    double ap = 0.0, prev_r = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double env = 0.0;
        for (std::size_t j = i; j < pts.size(); ++j) env = std::max(env, pts[j].p);
        ap += (pts[i].r - prev_r) * env;
        prev_r = pts[i].r;
    }
    return ap;
}

double coeff_variation_direct(const std::vector<double>& values) {
    double mu = 0.0;
    for (double v : values) mu += v;
    mu /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mu) * (v - mu);
    return std::sqrt(ss / static_cast<double>(values.size())) / mu;
}

}  // namespace oracle
