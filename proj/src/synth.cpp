#include "roadfusion/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "roadfusion/error.hpp"
#include "roadfusion/io.hpp"
#include "roadfusion/rng.hpp"

namespace rf::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDeg = kPi / 180.0;

}  // namespace

// fx*baseline = 60 puts the synthetic road between roughly 2 m and 30 m.
CameraModel scene_camera(int width, int height) {
    CameraModel cam;
    cam.fx = 120.0;
    cam.fy = 120.0;
    cam.u0 = width / 2.0;
    cam.v0 = height / 2.0;
    cam.baseline = 0.5;
    return cam;
}

double SceneSpec::planar(int u, int v) const {
    return a0 + a1 * (v * std::cos(theta) - u * std::sin(theta));
}

Scene generate(const SceneSpec& spec) {
    for (const auto& r : spec.anomalies) {
        if (r.x < 0 || r.y < 0 || r.w <= 0 || r.h <= 0 ||
            r.x + r.w > spec.width || r.y + r.h > spec.height) {
            throw ShapeError("anomaly rect leaves the image bounds");
        }
    }
    Scene s;
    s.disparity = DisparityImage(spec.width, spec.height);
    s.labels = LabelImage(spec.width, spec.height);
    s.camera = scene_camera(spec.width, spec.height);

    Rng rng(spec.seed);
    for (int v = 0; v < spec.height; ++v) {
        for (int u = 0; u < spec.width; ++u) {
            double d = spec.planar(u, v);
            int label = 1;
            for (const auto& r : spec.anomalies) {
                if (r.contains(u, v)) {
                    d += r.delta;
                    label = 2;
                    break;
                }
            }
            if (d <= 0.0) {
                throw RangeError("non-positive disparity " + std::to_string(d) +
                                 " at pixel (" + std::to_string(u) + "," + std::to_string(v) + ")");
            }
            if (spec.noise_sigma > 0.0) {
                d = std::max(0.0, d + spec.noise_sigma * rng.gaussian());
            }
            s.disparity.at(u, v) = d;
            s.disparity.valid[s.disparity.idx(u, v)] = 1;
            s.labels.at(u, v) = static_cast<std::uint8_t>(label);
        }
    }
    return s;
}

RgbImage render_rgb_proxy(const SceneSpec& spec, const Scene& scene) {
    RgbImage img(spec.width, spec.height);
    double dmin = 1e300, dmax = -1e300;
    for (double d : scene.disparity.data) {
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
    }
    const double span = std::max(1e-9, dmax - dmin);
    for (int v = 0; v < spec.height; ++v) {
        for (int u = 0; u < spec.width; ++u) {
            const double t = (scene.disparity.at(u, v) - dmin) / span;
            const int g = static_cast<int>(std::lround(40.0 + 170.0 * t));
            int r = g, gg = g, b = g;
            for (std::size_t k = 0; k < spec.anomalies.size(); ++k) {
                if (spec.anomalies[k].contains(u, v)) {
                    // Cycle a small tint palette so anomalies are visible in RGB.
                    switch (k % 3) {
                        case 0: r += 50; b -= 30; break;
                        case 1: gg += 50; r -= 30; break;
                        default: b += 50; gg -= 30; break;
                    }
                    break;
                }
            }
            const std::size_t i = img.idx(u, v);
            img.data[i + 0] = static_cast<std::uint8_t>(std::clamp(r, 0, 255));
            img.data[i + 1] = static_cast<std::uint8_t>(std::clamp(gg, 0, 255));
            img.data[i + 2] = static_cast<std::uint8_t>(std::clamp(b, 0, 255));
        }
    }
    return img;
}

SplitCounts split_counts(int n) {
    SplitCounts c;
    c.train = static_cast<int>(std::llround(0.70 * n));
    c.val = static_cast<int>(std::llround(0.15 * n));
    c.test = n - c.train - c.val;
    return c;
}

SceneSpec random_spec(std::uint64_t seed, std::uint64_t index, int width, int height,
                      double noise_sigma) {
    Rng rng = Rng::derive(seed, index);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        SceneSpec s;
        s.width = width;
        s.height = height;
        s.noise_sigma = noise_sigma;
        s.seed = rng.next_u64();
        s.theta = rng.uniform(-10.0 * kDeg, 10.0 * kDeg);
        s.a0 = rng.uniform(1.0, 4.0);
        s.a1 = rng.uniform(0.2, 0.8);
        const int n_anom = static_cast<int>(rng.uniform_int(4));
        const int min_side_w = std::max(3, width / 12);
        const int max_side_w = std::max(min_side_w + 1, width / 4);
        const int min_side_h = std::max(3, height / 12);
        const int max_side_h = std::max(min_side_h + 1, height / 4);
        for (int k = 0; k < n_anom; ++k) {
            AnomalyRect r;
            r.w = min_side_w + static_cast<int>(rng.uniform_int(max_side_w - min_side_w + 1));
            r.h = min_side_h + static_cast<int>(rng.uniform_int(max_side_h - min_side_h + 1));
            r.x = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(width - r.w + 1)));
            r.y = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(height - r.h + 1)));
            double delta = rng.uniform(5.0, 15.0);
            if (rng.uniform() < 0.5) delta = -delta;
            r.delta = delta;
            s.anomalies.push_back(r);
        }
        // The deterministic disparity must keep a margin of 8 noise sigmas so
        // additive noise cannot reach zero. The planar model is affine in
        // (u, v), so minima live at region corners: check the image corners
        // for the road and each rect's corners for its anomaly.
        const double margin = std::max(2.0, 8.0 * noise_sigma);
        double lowest = 1e300;
        for (int v : {0, height - 1}) {
            for (int u : {0, width - 1}) {
                lowest = std::min(lowest, s.planar(u, v));
            }
        }
        for (const auto& r : s.anomalies) {
            for (int v : {r.y, r.y + r.h - 1}) {
                for (int u : {r.x, r.x + r.w - 1}) {
                    lowest = std::min(lowest, s.planar(u, v) + r.delta);
                }
            }
        }
        if (lowest > margin) return s;
    }
    throw Error("could not sample a valid scene spec");
}

namespace {

std::string scene_id(int i) {
    std::ostringstream os;
    os << "scene_";
    os.width(4);
    os.fill('0');
    os << i;
    return os.str();
}

void write_scene_files(const std::filesystem::path& base, const std::string& id,
                       const SceneSpec& spec, const Scene& scene) {
    namespace fs = std::filesystem;
    std::error_code ec;
    for (const char* sub : {"disp", "rgb", "label"}) {
        fs::create_directories(base / sub, ec);
        if (ec) throw IoError("cannot create directory " + (base / sub).string() + ": " + ec.message());
    }
    io::write_pgm16(scene.disparity, base / "disp" / (id + ".pgm"));
    io::write_ppm(render_rgb_proxy(spec, scene), base / "rgb" / (id + ".ppm"));
    io::write_label_pgm(scene.labels, base / "label" / (id + ".pgm"));
}

std::vector<ManifestEntry> generate_many(int n, std::uint64_t seed,
                                         const std::filesystem::path& out_dir,
                                         double noise_sigma, int width, int height,
                                         bool split) {
    if (n <= 0) throw RangeError("scene count must be positive");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir.string() + ": " + ec.message());
    io::write_camera(scene_camera(width, height), out_dir / "camera.txt");
    const SplitCounts c = split_counts(n);
    std::vector<ManifestEntry> entries;
    entries.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        ManifestEntry e;
        e.id = scene_id(i);
        if (!split) {
            e.split = "all";
        } else if (i < c.train) {
            e.split = "train";
        } else if (i < c.train + c.val) {
            e.split = "val";
        } else {
            e.split = "test";
        }
        e.spec = random_spec(seed, static_cast<std::uint64_t>(i), width, height, noise_sigma);
        const Scene scene = generate(e.spec);
        const auto base = split ? out_dir / e.split : out_dir;
        write_scene_files(base, e.id, e.spec, scene);
        entries.push_back(std::move(e));
    }
    write_manifest(entries, out_dir / "manifest.csv");
    return entries;
}

}  // namespace

std::vector<ManifestEntry> make_split(int n, std::uint64_t seed,
                                      const std::filesystem::path& out_dir,
                                      double noise_sigma, int width, int height) {
    return generate_many(n, seed, out_dir, noise_sigma, width, height, true);
}

std::vector<ManifestEntry> make_flat(int n, std::uint64_t seed,
                                     const std::filesystem::path& out_dir,
                                     double noise_sigma, int width, int height) {
    return generate_many(n, seed, out_dir, noise_sigma, width, height, false);
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& csv_path) {
    std::ofstream f(csv_path);
    if (!f) throw IoError("cannot create " + csv_path.string());
    f.precision(17);
    f << "id,split,a0,a1,theta_rad,noise_sigma,n_anomalies\n";
    for (const auto& e : entries) {
        f << e.id << "," << e.split << "," << e.spec.a0 << "," << e.spec.a1 << ","
          << e.spec.theta << "," << e.spec.noise_sigma << "," << e.spec.anomalies.size() << "\n";
    }
    if (!f) throw IoError("write failed: " + csv_path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& csv_path) {
    std::ifstream f(csv_path);
    if (!f) throw IoError("cannot open " + csv_path.string());
    std::vector<ManifestEntry> entries;
    std::string line;
    if (!std::getline(f, line)) throw FormatError("empty manifest");
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string field;
        ManifestEntry e;
        auto next = [&](const char* what) {
            if (!std::getline(is, field, ',')) {
                throw FormatError(std::string("manifest row missing field ") + what);
            }
            return field;
        };
        e.id = next("id");
        e.split = next("split");
        try {
            e.spec.a0 = std::stod(next("a0"));
            e.spec.a1 = std::stod(next("a1"));
            e.spec.theta = std::stod(next("theta_rad"));
            e.spec.noise_sigma = std::stod(next("noise_sigma"));
            e.spec.anomalies.resize(static_cast<std::size_t>(std::stoul(next("n_anomalies"))));
        } catch (const std::invalid_argument&) {
            throw FormatError("non-numeric manifest field: '" + field + "'");
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace rf::synth
