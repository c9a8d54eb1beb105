#pragma once

// Shared fixtures: random scene builders, finite-difference helpers, and a
// scratch-directory guard for IO tests.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "splat/camera.hpp"
#include "splat/gaussian.hpp"
#include "splat/detail/rng.hpp"

namespace test_helpers {

// Small random cloud with well-conditioned covariances, suitable for both
// rasterization and density-field tests.
inline splat::GaussianCloud random_cloud(std::size_t count, std::uint64_t seed,
                                         int sh_degree = 1, double extent = 0.5) {
    splat::detail::Rng rng(seed);
    splat::GaussianCloud cloud;
    cloud.sh_degree = sh_degree;
    const int coeffs = splat::sh_coeff_count(sh_degree);
    for (std::size_t i = 0; i < count; ++i) {
        splat::SplatParams p;
        p.position = splat::Vec3(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                                 rng.uniform(-extent, extent));
        splat::Vec4 q(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
                      rng.uniform(-1, 1));
        if (q.norm() < 1e-3) q = splat::Vec4(1, 0, 0, 0);
        p.rotation = q;
        p.log_scale = splat::Vec3(rng.uniform(-3.5, -1.5), rng.uniform(-3.5, -1.5),
                                  rng.uniform(-3.5, -1.5));
        p.opacity_logit = rng.uniform(-1.5, 2.5);
        p.sh_coeffs.resize(static_cast<std::size_t>(3 * coeffs));
        for (double& c : p.sh_coeffs) c = rng.uniform(-0.4, 0.4);
        for (int ch = 0; ch < 3; ++ch) p.sh(0, ch) = rng.uniform(0.2, 2.5);
        cloud.splats.push_back(std::move(p));
    }
    return cloud;
}

// Creates an empty scratch directory under the system temp dir and removes it
// on scope exit.
class ScratchDir {
  public:
    explicit ScratchDir(const std::string& name)
        : path_((std::filesystem::temp_directory_path() / name).string()) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() { std::filesystem::remove_all(path_); }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    const std::string& path() const { return path_; }
    std::string file(const std::string& name) const { return path_ + "/" + name; }

  private:
    std::string path_;
};

}  // namespace test_helpers
