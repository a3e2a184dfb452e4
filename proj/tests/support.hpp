#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "vcnn/rng.hpp"
#include "vcnn/volume.hpp"

namespace testing_support {

inline std::string fixture(const std::string& rel) { return std::string(VCNN_FIXTURES) + "/" + rel; }

inline std::string arch(const std::string& name) { return fixture("architectures/" + name + ".json"); }

template <class T = double>
vcnn::Volume<T> random_volume(const vcnn::Dims& d, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    vcnn::Rng rng(seed);
    vcnn::Volume<T> v(d);
    for (auto& e : v.data()) e = static_cast<T>(rng.uniform(lo, hi));
    return v;
}

/// |a - n| / max(|a|, |n|, floor): relative error with an absolute floor for
/// components whose true value is ~0.
inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / scale;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("vcnn_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testing_support
