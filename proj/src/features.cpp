#include "roadfusion/features.hpp"

#include <algorithm>
#include <cmath>

#include "roadfusion/error.hpp"

namespace rf::feat {

namespace {

constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;

struct Point3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

Point3 back_project(int u, int v, double z, const CameraModel& cam) {
    return {(u - cam.u0) * z / cam.fx, (v - cam.v0) * z / cam.fy, z};
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

DerivedFeature depth_from_disparity(const DisparityImage& d, const CameraModel& cam) {
    DerivedFeature f;
    f.kind = FeatureKind::depth;
    f.map = Tensor::zeros({d.height, d.width, 1});
    f.valid.assign(d.data.size(), 0);
    const double fb = cam.fx * cam.baseline;
    for (int v = 0; v < d.height; ++v) {
        for (int u = 0; u < d.width; ++u) {
            if (!d.is_valid(u, v) || d.at(u, v) <= 0.0) continue;
            f.map.at(v, u, 0) = fb / d.at(u, v);
            f.valid[d.idx(u, v)] = 1;
        }
    }
    return f;
}

DerivedFeature normal_image(const DisparityImage& d, const CameraModel& cam) {
    const DerivedFeature depth = depth_from_disparity(d, cam);
    DerivedFeature f;
    f.kind = FeatureKind::normal3;
    f.map = Tensor::zeros({d.height, d.width, 3});
    f.valid.assign(d.data.size(), 0);

    auto z_at = [&](int u, int v) { return depth.map.at(v, u, 0); };
    auto ok = [&](int u, int v) { return depth.valid[d.idx(u, v)] != 0; };

    for (int v = 1; v < d.height - 1; ++v) {
        for (int u = 1; u < d.width - 1; ++u) {
            if (!ok(u, v) || !ok(u - 1, v) || !ok(u + 1, v) || !ok(u, v - 1) || !ok(u, v + 1)) {
                continue;
            }
            const Point3 pl = back_project(u - 1, v, z_at(u - 1, v), cam);
            const Point3 pr = back_project(u + 1, v, z_at(u + 1, v), cam);
            const Point3 pu = back_project(u, v - 1, z_at(u, v - 1), cam);
            const Point3 pd = back_project(u, v + 1, z_at(u, v + 1), cam);
            const Point3 tu{pr.x - pl.x, pr.y - pl.y, pr.z - pl.z};
            const Point3 tv{pd.x - pu.x, pd.y - pu.y, pd.z - pu.z};
            double nx = tu.y * tv.z - tu.z * tv.y;
            double ny = tu.z * tv.x - tu.x * tv.z;
            double nz = tu.x * tv.y - tu.y * tv.x;
            const double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
            if (norm <= 0.0) continue;
            nx /= norm;
            ny /= norm;
            nz /= norm;
            if (nz > 0.0) {
                nx = -nx;
                ny = -ny;
                nz = -nz;
            }
            f.map.at(v, u, 0) = nx;
            f.map.at(v, u, 1) = ny;
            f.map.at(v, u, 2) = nz;
            f.valid[d.idx(u, v)] = 1;
        }
    }
    return f;
}

GroundPlane fit_ground_plane(const DisparityImage& d, const CameraModel& cam,
                             const CoarseMask& mask) {
    if (mask.width != d.width || mask.height != d.height) {
        throw ShapeError("ground plane: mask shape mismatch");
    }
    const DerivedFeature depth = depth_from_disparity(d, cam);
    double sx = 0.0, sy = 0.0, sz = 0.0;
    std::size_t n = 0;
    for (int v = 0; v < d.height; ++v) {
        for (int u = 0; u < d.width; ++u) {
            if (!mask.at(u, v) || depth.valid[d.idx(u, v)] == 0) continue;
            const Point3 p = back_project(u, v, depth.map.at(v, u, 0), cam);
            sx += p.x;
            sy += p.y;
            sz += p.z;
            ++n;
        }
    }
    if (n < 3) throw EmptyInputError("ground plane: fewer than 3 mask pixels with depth");
    const double cx = sx / n, cy = sy / n, cz = sz / n;

    // Fit z = p x + q y + r on centered coordinates; the plane normal is
    // then (p, q, -1) up to orientation.
    double sxx = 0.0, sxy = 0.0, syy = 0.0, sxz = 0.0, syz = 0.0;
    for (int v = 0; v < d.height; ++v) {
        for (int u = 0; u < d.width; ++u) {
            if (!mask.at(u, v) || depth.valid[d.idx(u, v)] == 0) continue;
            const Point3 p = back_project(u, v, depth.map.at(v, u, 0), cam);
            const double x = p.x - cx, y = p.y - cy, z = p.z - cz;
            sxx += x * x;
            sxy += x * y;
            syy += y * y;
            sxz += x * z;
            syz += y * z;
        }
    }
    const double det = sxx * syy - sxy * sxy;
    const double scale = std::max(sxx, syy);
    if (scale <= 0.0 || std::fabs(det) <= 1e-12 * scale * scale) {
        throw DegenerateFitError("ground plane: mask points are collinear");
    }
    const double p = (syy * sxz - sxy * syz) / det;
    const double q = (sxx * syz - sxy * sxz) / det;
    double nx = p, ny = q, nz = -1.0;
    const double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
    nx /= norm;
    ny /= norm;
    nz /= norm;
    // Orient so the camera origin (which sits above the road) is positive.
    const double cam_side = -(cx * nx + cy * ny + cz * nz);
    if (cam_side < 0.0) {
        nx = -nx;
        ny = -ny;
        nz = -nz;
    }
    return {nx, ny, nz, cx, cy, cz};
}

DerivedFeature elevation_map(const DisparityImage& d, const CameraModel& cam,
                             const CoarseMask& mask) {
    const GroundPlane g = fit_ground_plane(d, cam, mask);
    const DerivedFeature depth = depth_from_disparity(d, cam);
    DerivedFeature f;
    f.kind = FeatureKind::elevation;
    f.map = Tensor::zeros({d.height, d.width, 1});
    f.valid.assign(d.data.size(), 0);
    for (int v = 0; v < d.height; ++v) {
        for (int u = 0; u < d.width; ++u) {
            if (depth.valid[d.idx(u, v)] == 0) continue;
            const Point3 p = back_project(u, v, depth.map.at(v, u, 0), cam);
            f.map.at(v, u, 0) = (p.x - g.cx) * g.nx + (p.y - g.cy) * g.ny + (p.z - g.cz) * g.nz;
            f.valid[d.idx(u, v)] = 1;
        }
    }
    return f;
}

DerivedFeature hha_raw(const DisparityImage& d, const CameraModel& cam,
                       const CoarseMask& mask) {
    const GroundPlane g = fit_ground_plane(d, cam, mask);
    const DerivedFeature elev = elevation_map(d, cam, mask);
    const DerivedFeature normals = normal_image(d, cam);
    DerivedFeature f;
    f.kind = FeatureKind::hha3;
    f.map = Tensor::zeros({d.height, d.width, 3});
    f.valid.assign(d.data.size(), 0);
    for (int v = 0; v < d.height; ++v) {
        for (int u = 0; u < d.width; ++u) {
            const std::size_t i = d.idx(u, v);
            if (elev.valid[i] == 0 || normals.valid[i] == 0) continue;
            const double dot = normals.map.at(v, u, 0) * g.nx + normals.map.at(v, u, 1) * g.ny +
                               normals.map.at(v, u, 2) * g.nz;
            f.map.at(v, u, 0) = d.at(u, v);
            f.map.at(v, u, 1) = elev.map.at(v, u, 0);
            f.map.at(v, u, 2) = std::acos(std::clamp(dot, -1.0, 1.0)) * kRadToDeg;
            f.valid[i] = 1;
        }
    }
    return f;
}

DerivedFeature hha_image(const DisparityImage& d, const CameraModel& cam,
                         const CoarseMask& mask, const HhaRanges& r) {
    DerivedFeature f = hha_raw(d, cam, mask);
    for (int v = 0; v < d.height; ++v) {
        for (int u = 0; u < d.width; ++u) {
            if (f.valid[d.idx(u, v)] == 0) continue;
            f.map.at(v, u, 0) =
                clamp01((f.map.at(v, u, 0) - r.disparity_lo) / (r.disparity_hi - r.disparity_lo));
            f.map.at(v, u, 1) =
                clamp01((f.map.at(v, u, 1) - r.elevation_lo) / (r.elevation_hi - r.elevation_lo));
            f.map.at(v, u, 2) = clamp01((f.map.at(v, u, 2) - r.angle_lo) / (r.angle_hi - r.angle_lo));
        }
    }
    return f;
}

std::vector<double> normal_mean_channel(const DerivedFeature& normals,
                                        const std::vector<std::uint8_t>& roi) {
    if (normals.kind != FeatureKind::normal3) {
        throw ShapeError("normal_mean_channel expects a normal3 feature");
    }
    if (roi.size() != normals.valid.size()) {
        throw ShapeError("normal_mean_channel roi size mismatch");
    }
    const int h = normals.map.dim(0), w = normals.map.dim(1);
    std::vector<double> out;
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            const std::size_t i = static_cast<std::size_t>(v) * w + u;
            if (roi[i] == 0 || normals.valid[i] == 0) continue;
            double acc = 0.0;
            for (int c = 0; c < 3; ++c) acc += (normals.map.at(v, u, c) + 1.0) / 2.0;
            out.push_back(acc / 3.0);
        }
    }
    return out;
}

}  // namespace rf::feat
