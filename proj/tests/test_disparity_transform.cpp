#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "roadfusion/disparity_transform.hpp"
#include "roadfusion/error.hpp"
#include "roadfusion/metrics.hpp"
#include "roadfusion/synth.hpp"

using namespace rf;

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

std::vector<DispSample> scene_samples(const synth::Scene& s, int stride = 7) {
    std::vector<DispSample> out;
    for (int v = 0; v < s.disparity.height; ++v) {
        for (int u = 0; u < s.disparity.width; ++u) {
            if ((v * s.disparity.width + u) % stride) continue;
            out.push_back({static_cast<double>(u), static_cast<double>(v), s.disparity.at(u, v)});
        }
    }
    return out;
}

}  // namespace

TEST_CASE("v-disparity histogram") {
    SUBCASE("constant disparity puts all row mass in one bin") {
        DisparityImage d(4, 4);
        for (std::size_t i = 0; i < d.data.size(); ++i) {
            d.data[i] = 2.0;
            d.valid[i] = 1;
        }
        const VDisparityMap vd = dt::build_v_disparity(d);
        for (int v = 0; v < 4; ++v) {
            for (int b = 0; b < vd.bins; ++b) CHECK(vd.at(v, b) == (b == 2 ? 4u : 0u));
        }
    }
    SUBCASE("planar rows land in floor(2 + 0.5 v)") {
        DisparityImage d(6, 4);
        for (int v = 0; v < 4; ++v)
            for (int u = 0; u < 6; ++u) {
                d.at(u, v) = 2.0 + 0.5 * v;
                d.valid[d.idx(u, v)] = 1;
            }
        const VDisparityMap vd = dt::build_v_disparity(d);
        for (int v = 0; v < 4; ++v) {
            const int expect = static_cast<int>(std::floor(2.0 + 0.5 * v));
            for (int b = 0; b < vd.bins; ++b) CHECK(vd.at(v, b) == (b == expect ? 6u : 0u));
        }
    }
    SUBCASE("counts sum to valid pixel count") {
        synth::SceneSpec spec;
        spec.noise_sigma = 0.25;
        spec.seed = 5;
        const synth::Scene s = synth::generate(spec);
        const VDisparityMap vd = dt::build_v_disparity(s.disparity);
        std::uint64_t total = 0;
        for (auto c : vd.counts) total += c;
        CHECK(total == s.disparity.data.size());
    }
    SUBCASE("all-invalid image errors") {
        DisparityImage d(4, 4);
        CHECK_THROWS_AS(dt::build_v_disparity(d), EmptyInputError);
    }
}

TEST_CASE("coarse road mask") {
    SUBCASE("noise-free planar scene recovers the exact line") {
        synth::SceneSpec spec;
        spec.a0 = 2.0;
        spec.a1 = 0.5;
        const synth::Scene s = synth::generate(spec);
        const dt::CoarseResult res = dt::coarse_road_mask(s.disparity);
        CHECK(res.line.m == doctest::Approx(0.5).epsilon(1e-6));
        CHECK(res.line.c == doctest::Approx(2.0).epsilon(1e-6));
        // Mask covers every road pixel.
        CHECK(res.mask.count() == s.disparity.data.size());

        // RANSAC refit agrees with a plain least-squares line on the same
        // per-row peak coordinates (all rows are inliers here).
        std::vector<double> vs, ds;
        for (int v = 0; v < spec.height; ++v) {
            vs.push_back(v);
            ds.push_back(2.0 + 0.5 * v);
        }
        double mv = 0.0, md = 0.0;
        for (std::size_t i = 0; i < vs.size(); ++i) {
            mv += vs[i];
            md += ds[i];
        }
        mv /= vs.size();
        md /= ds.size();
        double cov = 0.0, var = 0.0;
        for (std::size_t i = 0; i < vs.size(); ++i) {
            cov += (vs[i] - mv) * (ds[i] - md);
            var += (vs[i] - mv) * (vs[i] - mv);
        }
        CHECK(res.line.m == doctest::Approx(cov / var).epsilon(1e-9));
        CHECK(res.line.c == doctest::Approx(md - (cov / var) * mv).epsilon(1e-9));
    }
    SUBCASE("anomaly pixels are excluded from the mask") {
        synth::SceneSpec spec;
        spec.a0 = 2.0;
        spec.a1 = 0.5;
        spec.anomalies.push_back({20, 20, 32, 19, 10.0});  // ~10% of pixels
        const synth::Scene s = synth::generate(spec);
        const dt::CoarseResult res = dt::coarse_road_mask(s.disparity);
        for (int v = 0; v < spec.height; ++v) {
            for (int u = 0; u < spec.width; ++u) {
                if (s.labels.at(u, v) == 2) CHECK_FALSE(res.mask.at(u, v));
            }
        }
    }
    SUBCASE("constant disparity gives a flat line") {
        DisparityImage d(16, 12);
        for (std::size_t i = 0; i < d.data.size(); ++i) {
            d.data[i] = 7.25;
            d.valid[i] = 1;
        }
        const dt::CoarseResult res = dt::coarse_road_mask(d);
        CHECK(res.line.m == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(res.line.c == doctest::Approx(7.25).epsilon(1e-9));
    }
    SUBCASE("mask only contains valid pixels") {
        synth::SceneSpec spec;
        spec.noise_sigma = 0.25;
        spec.seed = 21;
        synth::Scene s = synth::generate(spec);
        for (int u = 0; u < spec.width; ++u) {
            s.disparity.valid[s.disparity.idx(u, 10)] = 0;
        }
        const dt::CoarseResult res = dt::coarse_road_mask(s.disparity);
        for (int u = 0; u < spec.width; ++u) CHECK_FALSE(res.mask.at(u, 10));
    }
}

TEST_CASE("roll energy matches the dense normal-equations oracle") {
    synth::SceneSpec spec;
    spec.a0 = 6.0;
    spec.a1 = 0.45;
    spec.theta = 5.0 * kDeg;
    spec.noise_sigma = 0.2;
    spec.seed = 77;
    const synth::Scene s = synth::generate(spec);
    std::vector<DispSample> samples = scene_samples(s);
    samples.resize(100);

    SUBCASE("probe away from the optimum equals the oracle residual") {
        const double probe = 0.0;
        const auto ora = oracle::plane_fit_normal_equations(samples, probe);
        const double e = dt::roll_energy(samples, probe);
        CHECK(e == doctest::Approx(ora.energy_residual_form).epsilon(1e-10));
        // The projection form agrees too (same quantity, other algebra).
        CHECK(e == doctest::Approx(ora.energy_projection_form).epsilon(1e-6));
    }
    SUBCASE("exact-fit residual is zero at the true roll") {
        synth::SceneSpec clean = spec;
        clean.noise_sigma = 0.0;
        const synth::Scene cs = synth::generate(clean);
        const auto cls = scene_samples(cs);
        double dtd = 0.0;
        for (const auto& smp : cls) dtd += smp.d * smp.d;
        CHECK(dt::roll_energy(cls, clean.theta) < 1e-9 * dtd);
    }
    SUBCASE("wrong roll has strictly larger energy on a noise-free plane") {
        synth::SceneSpec clean = spec;
        clean.noise_sigma = 0.0;
        const synth::Scene cs = synth::generate(clean);
        const auto cls = scene_samples(cs);
        CHECK(dt::roll_energy(cls, clean.theta + 2.0 * kDeg) > dt::roll_energy(cls, clean.theta));
        CHECK(dt::roll_energy(cls, clean.theta - 2.0 * kDeg) > dt::roll_energy(cls, clean.theta));
    }
    SUBCASE("energy is non-negative everywhere") {
        for (double t = -30.0; t <= 30.0; t += 1.5) {
            CHECK(dt::roll_energy(samples, t * kDeg) >= -1e-9);
        }
    }
    SUBCASE("degenerate geometry errors") {
        std::vector<DispSample> flat = {{0, 5, 1}, {1, 5, 1}, {2, 5, 1}};
        // At theta = 0, w = v is constant across these samples.
        CHECK_THROWS_AS(dt::roll_energy(flat, 0.0), DegenerateFitError);
        CHECK_THROWS_AS(dt::roll_energy({{0, 0, 1}, {1, 1, 1}}, 0.0), DegenerateFitError);
    }
}

TEST_CASE("estimate_roll") {
    SUBCASE("noise-free 5 degree scene within 0.1 degree, matches dense grid") {
        synth::SceneSpec spec;
        spec.a0 = 6.5;
        spec.a1 = 0.5;
        spec.theta = 5.0 * kDeg;
        const synth::Scene s = synth::generate(spec);
        const auto samples = scene_samples(s);
        const dt::RollEstimate est = dt::estimate_roll(samples);
        CHECK(std::fabs(est.theta - spec.theta) < 0.1 * kDeg);

        const double grid = oracle::grid_search_roll(samples, spec.theta - 0.02, spec.theta + 0.02,
                                                     1e-4);
        CHECK(std::fabs(est.theta - grid) < 2e-4);
    }
    SUBCASE("zero roll by symmetry") {
        synth::SceneSpec spec;
        const synth::Scene s = synth::generate(spec);
        const dt::RollEstimate est = dt::estimate_roll(scene_samples(s));
        CHECK(std::fabs(est.theta) < 0.1 * kDeg);
    }
    SUBCASE("noisy scenes stay within half a degree over 20 seeds") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            synth::SceneSpec spec;
            spec.a0 = 10.0;
            spec.a1 = 0.5;
            spec.theta = (static_cast<double>(seed) - 10.0) * kDeg * 0.8;
            spec.noise_sigma = 0.25;
            spec.seed = seed;
            const synth::Scene s = synth::generate(spec);
            const dt::RollEstimate est = dt::estimate_roll(scene_samples(s, 3));
            CHECK(std::fabs(est.theta - spec.theta) < 0.5 * kDeg);
        }
    }
}

TEST_CASE("fit_profile") {
    SUBCASE("noise-free samples recover the profile within 1e-9") {
        synth::SceneSpec spec;
        spec.a0 = 3.5;
        spec.a1 = 0.5;
        spec.theta = 3.0 * kDeg;
        const synth::Scene s = synth::generate(spec);
        const dt::Profile p = dt::fit_profile(scene_samples(s), spec.theta);
        CHECK(p.a0 == doctest::Approx(3.5).epsilon(1e-9));
        CHECK(p.a1 == doctest::Approx(0.5).epsilon(1e-9));
    }
    SUBCASE("no row variation is degenerate") {
        std::vector<DispSample> flat = {{0, 5, 1}, {3, 5, 2}, {7, 5, 3}};
        CHECK_THROWS_AS(dt::fit_profile(flat, 0.0), DegenerateFitError);
    }
    SUBCASE("noisy fit matches the independent normal-equations solver to 1e-9") {
        synth::SceneSpec spec;
        spec.noise_sigma = 0.3;
        spec.seed = 1312;
        const synth::Scene s = synth::generate(spec);
        const auto samples = scene_samples(s);
        const dt::Profile p = dt::fit_profile(samples, 0.01);
        const auto ora = oracle::plane_fit_normal_equations(samples, 0.01);
        CHECK(p.a0 == doctest::Approx(ora.a0).epsilon(1e-9));
        CHECK(p.a1 == doctest::Approx(ora.a1).epsilon(1e-9));
    }
    SUBCASE("local optimality: perturbing coefficients never lowers the residual") {
        synth::SceneSpec spec;
        spec.noise_sigma = 0.25;
        spec.seed = 8;
        const synth::Scene s = synth::generate(spec);
        const auto samples = scene_samples(s);
        const double theta = 0.0;
        const dt::Profile p = dt::fit_profile(samples, theta);
        auto residual = [&](double a0, double a1) {
            double e = 0.0;
            for (const auto& smp : samples) {
                const double r = smp.d - a0 - a1 * (smp.v * std::cos(theta) - smp.u * std::sin(theta));
                e += r * r;
            }
            return e;
        };
        const double at_fit = residual(p.a0, p.a1);
        for (const double da : {-1e-6, 1e-6}) {
            CHECK(residual(p.a0 + da, p.a1) >= at_fit);
            CHECK(residual(p.a0, p.a1 + da) >= at_fit);
        }
    }
}

TEST_CASE("transform") {
    SUBCASE("correct model flattens the road to exactly delta") {
        synth::SceneSpec spec;
        spec.a0 = 6.0;
        spec.a1 = 0.5;
        spec.theta = 4.0 * kDeg;
        const synth::Scene s = synth::generate(spec);
        RoadModel m;
        m.a0 = spec.a0;
        m.a1 = spec.a1;
        m.theta = spec.theta;
        m.delta = 5.0;
        const dt::TransformResult res = dt::transform(s.disparity, m);
        CHECK(res.delta_used == 5.0);
        for (int v = 0; v < spec.height; ++v)
            for (int u = 0; u < spec.width; ++u)
                CHECK(res.image.at(u, v) == doctest::Approx(5.0).epsilon(1e-9));
    }
    SUBCASE("anomaly pixels land at delta + their offset") {
        synth::SceneSpec spec;
        spec.anomalies.push_back({40, 30, 12, 10, 10.0});
        const synth::Scene s = synth::generate(spec);
        RoadModel m;
        m.a0 = spec.a0;
        m.a1 = spec.a1;
        m.theta = spec.theta;
        m.delta = 3.0;
        const dt::TransformResult res = dt::transform(s.disparity, m);
        for (int v = 0; v < spec.height; ++v)
            for (int u = 0; u < spec.width; ++u) {
                const double expect = s.labels.at(u, v) == 2 ? 13.0 : 3.0;
                CHECK(res.image.at(u, v) == doctest::Approx(expect).epsilon(1e-9));
            }
    }
    SUBCASE("ignoring a 5 degree roll leaves a residual that varies with u") {
        synth::SceneSpec spec;
        spec.a0 = 7.0;
        spec.a1 = 0.5;
        spec.theta = 5.0 * kDeg;
        const synth::Scene s = synth::generate(spec);
        RoadModel wrong;
        // Best theta=0 fit of the rolled scene, computed on all pixels.
        std::vector<DispSample> samples = scene_samples(s, 1);
        const dt::Profile p = dt::fit_profile(samples, 0.0);
        wrong.a0 = p.a0;
        wrong.a1 = p.a1;
        wrong.theta = 0.0;
        wrong.delta = dt::required_delta(s.disparity, wrong);
        const dt::TransformResult res = dt::transform(s.disparity, wrong);
        // Regress the mid-row residual against u: slope must be clearly nonzero.
        const int v = spec.height / 2;
        double su = 0.0, sr = 0.0, suu = 0.0, sur = 0.0;
        for (int u = 0; u < spec.width; ++u) {
            su += u;
            sr += res.image.at(u, v);
            suu += static_cast<double>(u) * u;
            sur += u * res.image.at(u, v);
        }
        const double n = spec.width;
        const double slope = (n * sur - su * sr) / (n * suu - su * su);
        CHECK(std::fabs(slope) > 1e-3);
    }
    SUBCASE("invalid pixels stay invalid") {
        synth::SceneSpec spec;
        synth::Scene s = synth::generate(spec);
        s.disparity.valid[5] = 0;
        RoadModel m;
        m.delta = 0.0;
        const dt::TransformResult res = dt::transform(s.disparity, m);
        CHECK_FALSE(res.image.valid[5]);
    }
    SUBCASE("insufficient delta is recomputed and reported") {
        synth::SceneSpec spec;
        const synth::Scene s = synth::generate(spec);
        RoadModel m;
        m.a0 = spec.a0 + 4.0;  // profile above every disparity -> negative residuals
        m.a1 = spec.a1;
        m.delta = 0.0;
        const dt::TransformResult res = dt::transform(s.disparity, m);
        CHECK(res.delta_used > 0.0);
        CHECK(res.delta_used == std::ceil(res.delta_used));
        double lo = 1e300;
        for (std::size_t i = 0; i < res.image.data.size(); ++i) {
            if (res.image.valid[i]) lo = std::min(lo, res.image.data[i]);
        }
        CHECK(lo >= 0.0);
    }
    SUBCASE("transform is invertible") {
        synth::SceneSpec spec;
        spec.noise_sigma = 0.25;
        spec.seed = 3;
        const synth::Scene s = synth::generate(spec);
        RoadModel m;
        m.a0 = 1.8;
        m.a1 = 0.52;
        m.theta = 0.01;
        m.delta = dt::required_delta(s.disparity, m);
        const dt::TransformResult res = dt::transform(s.disparity, m);
        for (int v = 0; v < spec.height; ++v)
            for (int u = 0; u < spec.width; ++u) {
                const double back = res.image.at(u, v) + m.profile(u, v) - res.delta_used;
                CHECK(back == doctest::Approx(s.disparity.at(u, v)).epsilon(1e-9));
            }
    }
    SUBCASE("zero model is the identity") {
        synth::SceneSpec spec;
        spec.seed = 9;
        spec.noise_sigma = 0.1;
        const synth::Scene s = synth::generate(spec);
        RoadModel zero;
        const dt::TransformResult res = dt::transform(s.disparity, zero);
        CHECK(res.delta_used == 0.0);
        for (std::size_t i = 0; i < s.disparity.data.size(); ++i) {
            CHECK(res.image.data[i] == s.disparity.data[i]);
        }
    }
}

TEST_CASE("full pipeline") {
    SUBCASE("recovers the model of a noisy scene with anomalies") {
        synth::SceneSpec spec;
        spec.a0 = 6.5;
        spec.a1 = 0.5;
        spec.theta = 5.0 * kDeg;
        spec.noise_sigma = 0.25;
        spec.seed = 314;
        spec.anomalies.push_back({10, 8, 12, 10, 9.0});
        spec.anomalies.push_back({60, 40, 14, 12, -7.0});
        const synth::Scene s = synth::generate(spec);
        const dt::PipelineResult res = dt::run_pipeline(s.disparity);
        CHECK(std::fabs(res.model.a0 - spec.a0) < 0.05);
        CHECK(std::fabs(res.model.a1 - spec.a1) < 0.01);
        CHECK(std::fabs(res.model.theta - spec.theta) < 0.5 * kDeg);
        CHECK(res.model.inlier_count >= 2);
    }
    SUBCASE("flattens the road: c_v drops versus the input") {
        synth::SceneSpec spec;
        spec.a0 = 2.5;
        spec.a1 = 0.45;
        spec.theta = -3.0 * kDeg;
        spec.noise_sigma = 0.25;
        spec.seed = 11;
        spec.anomalies.push_back({20, 20, 16, 12, 11.0});
        const synth::Scene s = synth::generate(spec);
        const dt::PipelineResult res = dt::run_pipeline(s.disparity);
        std::vector<double> before, after;
        for (int v = 0; v < spec.height; ++v)
            for (int u = 0; u < spec.width; ++u) {
                if (s.labels.at(u, v) != 1) continue;
                before.push_back(s.disparity.at(u, v));
                after.push_back(res.transformed.at(u, v));
            }
        CHECK(metrics::coeff_variation(after) < metrics::coeff_variation(before));
    }
    SUBCASE("all-invalid input errors") {
        DisparityImage d(8, 8);
        CHECK_THROWS_AS(dt::run_pipeline(d), EmptyInputError);
    }
}
