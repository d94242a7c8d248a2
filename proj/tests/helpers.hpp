#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>

#include "roadfusion/rng.hpp"
#include "roadfusion/tensor.hpp"

namespace testutil {

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("roadfusion_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

inline double max_abs_diff(const rf::Tensor& a, const rf::Tensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
    return worst;
}

inline double max_rel_err(const rf::Tensor& a, const rf::Tensor& b, double floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
    }
    return worst;
}

// Uniform values in [-1, 1); float-representable so f32 round trips are exact.
inline rf::Tensor random_f32_tensor(std::vector<int> dims, rf::Rng& rng) {
    rf::Tensor t(std::move(dims));
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<double>(static_cast<float>(rng.uniform(-1.0, 1.0)));
    }
    return t;
}

}  // namespace testutil
