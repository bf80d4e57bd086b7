#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "din/tensor.hpp"

namespace din {

enum class ValueRange {
    Unit,  // [0, 1], the model range
    Byte,  // [0, 255], the metric range
};

enum class ColorSpace { RGB, YCbCr, Y };

// Planar (channel, row, column) floating-point image with explicit range and
// colour-space tags.
struct ImagePlane {
    int width = 0;
    int height = 0;
    int channels = 0;
    ValueRange range = ValueRange::Byte;
    ColorSpace space = ColorSpace::RGB;
    std::vector<double> values;

    static ImagePlane blank(int width, int height, int channels, ValueRange range, ColorSpace space);

    [[nodiscard]] double at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

// 8-bit PNG. Grey inputs are expanded to RGB; alpha is dropped.
[[nodiscard]] ImagePlane read_png(const std::filesystem::path& path);
// Values are converted to [0, 255], rounded half away from zero and clamped.
void write_png(const std::filesystem::path& path, const ImagePlane& image);

[[nodiscard]] ImagePlane to_range(const ImagePlane& image, ValueRange range);
// Rounds a byte-range image to integers in [0, 255], as an 8-bit save would.
[[nodiscard]] ImagePlane quantize(const ImagePlane& image);

// Top-left crop to the largest extent divisible by `multiple`.
[[nodiscard]] ImagePlane modcrop(const ImagePlane& image, int multiple);
[[nodiscard]] ImagePlane crop(const ImagePlane& image, int x0, int y0, int width, int height);

struct ResizeFactor {
    int num = 1;
    int den = 1;
    [[nodiscard]] double value() const { return static_cast<double>(num) / den; }
    [[nodiscard]] int apply(int length) const;  // ceil(length * num / den)
};

// Keys cubic convolution kernel with a = -0.5.
[[nodiscard]] double cubic_kernel(double x);

// Sparse resampling matrix for one axis: output i reads input indices
// [index[i][k]] with weights [weight[i][k]] (rows sum to 1).
struct Contributions {
    std::vector<std::vector<int>> index;
    std::vector<std::vector<double>> weight;
};

// Interpolation weights following imresize: sample positions
// u = i / s + (1 - 1 / s) / 2, kernel widened by 1 / s when downscaling,
// symmetric (edge-inclusive) reflection at the borders.
[[nodiscard]] Contributions bicubic_contributions(int in_length, int out_length, double scale);

// Separable bicubic resampling, rows first then columns.
[[nodiscard]] ImagePlane bicubic_resize(const ImagePlane& image, ResizeFactor factor);

// ITU-R BT.601 studio-swing luma of a byte-range RGB image.
[[nodiscard]] ImagePlane rgb_to_y(const ImagePlane& image);

// Luma of an RGB image, or the image itself if already Y.
[[nodiscard]] ImagePlane luma(const ImagePlane& image);

// 10 log10(255^2 / MSE) over the plane after removing `border` pixels from
// each side. Identical inputs give +infinity.
[[nodiscard]] double psnr_y(const ImagePlane& a, const ImagePlane& b, int border);

// Mean SSIM over valid 11x11 windows (Gaussian sigma 1.5, K1 0.01, K2 0.03,
// L 255), after removing `border` pixels from each side.
[[nodiscard]] double ssim_y(const ImagePlane& a, const ImagePlane& b, int border = 0);

// (1, c, h, w) tensor in the model range.
template <typename T>
[[nodiscard]] Tensor<T> image_to_tensor(const ImagePlane& image);

// Batch item `n` of a (N, c, h, w) model-range tensor.
template <typename T>
[[nodiscard]] ImagePlane tensor_to_image(const Tensor<T>& t, std::int64_t n = 0);

struct ImagePair {
    std::filesystem::path hr;
    std::filesystem::path lr;
};

// Sorted *.png files of a directory. Throws IoError if unreadable or empty.
[[nodiscard]] std::vector<std::filesystem::path> list_png(const std::filesystem::path& dir);

// Writes `<stem>x<r>.png` LR images for every HR PNG (cropped to a multiple of
// r first) plus a `pairs.txt` manifest of `hr<TAB>lr` lines.
std::vector<ImagePair> degrade_dataset(const std::filesystem::path& hr_dir, int scale,
                                       const std::filesystem::path& lr_dir);

}  // namespace din
