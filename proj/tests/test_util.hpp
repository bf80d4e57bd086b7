#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "din/tensor.hpp"

namespace din::test {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = false, double lo = -1.0,
                        double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<T> v(static_cast<std::size_t>(shape.numel()));
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return Tensor<T>::from(shape, std::move(v), requires_grad);
}

template <typename T>
std::vector<T> values(const Tensor<T>& t) {
    return {t.data().begin(), t.data().end()};
}

inline std::filesystem::path data_dir() { return DIN_TEST_DATA_DIR; }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("din_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace din::test
