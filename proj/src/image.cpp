#include "din/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "din/error.hpp"

namespace din {
namespace fs = std::filesystem;

namespace {

double range_max(ValueRange r) { return r == ValueRange::Unit ? 1.0 : 255.0; }

void require_same_dims(const ImagePlane& a, const ImagePlane& b, const char* what) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
        throw ShapeError(std::string(what) + ": image dimensions differ (" + std::to_string(a.width) +
                         "x" + std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                         std::to_string(b.height) + ")");
    }
}

ImagePlane cropped_luma(const ImagePlane& img, int border, const char* what) {
    ImagePlane y = to_range(luma(img), ValueRange::Byte);
    if (border < 0) throw ConfigError(std::string(what) + ": negative border");
    if (2 * border >= y.width || 2 * border >= y.height) {
        throw ShapeError(std::string(what) + ": border crop removes the whole image");
    }
    return crop(y, border, border, y.width - 2 * border, y.height - 2 * border);
}

}  // namespace

ImagePlane ImagePlane::blank(int width, int height, int channels, ValueRange range, ColorSpace space) {
    if (width < 1 || height < 1 || (channels != 1 && channels != 3)) {
        throw ShapeError("ImagePlane: invalid dimensions");
    }
    ImagePlane p;
    p.width = width;
    p.height = height;
    p.channels = channels;
    p.range = range;
    p.space = space;
    p.values.assign(static_cast<std::size_t>(width) * height * channels, 0.0);
    return p;
}

ImagePlane read_png(const fs::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&image, path.string().c_str()) == 0) {
        throw IoError("cannot read PNG '" + path.string() + "': " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr) == 0) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw IoError("cannot decode PNG '" + path.string() + "': " + msg);
    }
    const int w = static_cast<int>(image.width);
    const int h = static_cast<int>(image.height);
    ImagePlane out = ImagePlane::blank(w, h, 3, ValueRange::Byte, ColorSpace::RGB);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(c, y, x) = buffer[(static_cast<std::size_t>(y) * w + x) * 3 + c];
            }
        }
    }
    return out;
}

void write_png(const fs::path& path, const ImagePlane& img) {
    const ImagePlane q = quantize(to_range(img, ValueRange::Byte));
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(q.width);
    image.height = static_cast<png_uint_32>(q.height);
    image.format = q.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    for (int y = 0; y < q.height; ++y) {
        for (int x = 0; x < q.width; ++x) {
            for (int c = 0; c < q.channels; ++c) {
                buffer[(static_cast<std::size_t>(y) * q.width + x) * q.channels + c] =
                    static_cast<png_byte>(q.at(c, y, x));
            }
        }
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (png_image_write_to_file(&image, path.string().c_str(), 0, buffer.data(), 0, nullptr) == 0) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw IoError("cannot write PNG '" + path.string() + "': " + msg);
    }
}

ImagePlane to_range(const ImagePlane& img, ValueRange range) {
    if (img.range == range) return img;
    ImagePlane out = img;
    const double k = range_max(range) / range_max(img.range);
    for (double& v : out.values) v *= k;
    out.range = range;
    return out;
}

ImagePlane quantize(const ImagePlane& img) {
    if (img.range != ValueRange::Byte) throw Error("quantize: expected a byte-range image");
    ImagePlane out = img;
    for (double& v : out.values) v = std::clamp(std::round(v), 0.0, 255.0);
    return out;
}

ImagePlane crop(const ImagePlane& img, int x0, int y0, int width, int height) {
    if (x0 < 0 || y0 < 0 || width < 1 || height < 1 || x0 + width > img.width ||
        y0 + height > img.height) {
        throw ShapeError("crop: window outside image");
    }
    ImagePlane out = ImagePlane::blank(width, height, img.channels, img.range, img.space);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
        }
    }
    return out;
}

ImagePlane modcrop(const ImagePlane& img, int multiple) {
    if (multiple < 1) throw ConfigError("modcrop: multiple must be >= 1");
    const int w = img.width - img.width % multiple;
    const int h = img.height - img.height % multiple;
    if (w < 1 || h < 1) throw ShapeError("modcrop: image smaller than the scale factor");
    return crop(img, 0, 0, w, h);
}

int ResizeFactor::apply(int length) const {
    if (num < 1 || den < 1) throw ConfigError("resize factor must be positive");
    const std::int64_t p = static_cast<std::int64_t>(length) * num;
    return static_cast<int>((p + den - 1) / den);
}

double cubic_kernel(double x) {
    const double ax = std::abs(x);
    const double ax2 = ax * ax;
    const double ax3 = ax2 * ax;
    if (ax <= 1.0) return 1.5 * ax3 - 2.5 * ax2 + 1.0;
    if (ax <= 2.0) return -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0;
    return 0.0;
}

Contributions bicubic_contributions(int in_length, int out_length, double scale) {
    if (in_length < 1 || out_length < 1 || !(scale > 0.0)) {
        throw ShapeError("bicubic_contributions: degenerate size");
    }
    const bool antialias = scale < 1.0;
    const double width = antialias ? 4.0 / scale : 4.0;
    const auto kernel = [&](double x) {
        return antialias ? scale * cubic_kernel(scale * x) : cubic_kernel(x);
    };
    const int taps = static_cast<int>(std::ceil(width)) + 2;
    // Symmetric extension including the edge sample: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
    const auto reflect = [in_length](int i) {
        const int period = 2 * in_length;
        int k = i % period;
        if (k < 0) k += period;
        return k < in_length ? k : period - 1 - k;
    };

    Contributions out;
    out.index.resize(static_cast<std::size_t>(out_length));
    out.weight.resize(static_cast<std::size_t>(out_length));
    for (int i = 0; i < out_length; ++i) {
        // 1-based positions, as in the reference function.
        const double u = (i + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
        const int left = static_cast<int>(std::floor(u - width / 2.0));
        std::vector<double> w(static_cast<std::size_t>(taps));
        double total = 0.0;
        for (int k = 0; k < taps; ++k) {
            w[k] = kernel(u - (left + k));
            total += w[k];
        }
        auto& idx = out.index[i];
        auto& wt = out.weight[i];
        for (int k = 0; k < taps; ++k) {
            if (w[k] == 0.0) continue;
            idx.push_back(reflect(left + k - 1));
            wt.push_back(w[k] / total);
        }
    }
    return out;
}

namespace {

// Resamples along one axis of every channel. axis 0 = rows (height), 1 = columns.
ImagePlane resample_axis(const ImagePlane& img, int axis, int out_length, double scale) {
    const int in_length = axis == 0 ? img.height : img.width;
    const Contributions cw = bicubic_contributions(in_length, out_length, scale);
    const int w = axis == 0 ? img.width : out_length;
    const int h = axis == 0 ? out_length : img.height;
    ImagePlane out = ImagePlane::blank(w, h, img.channels, img.range, img.space);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int o = axis == 0 ? y : x;
                const auto& idx = cw.index[o];
                const auto& wt = cw.weight[o];
                const auto sample = [&](int k) { return axis == 0 ? img.at(c, idx[k], x) : img.at(c, y, idx[k]); };
                // Weights sum to one, so anchoring on one tap keeps flat regions exactly flat.
                const double anchor = sample(static_cast<int>(idx.size() / 2));
                double acc = 0.0;
                for (std::size_t k = 0; k < idx.size(); ++k) acc += wt[k] * (sample(static_cast<int>(k)) - anchor);
                out.at(c, y, x) = anchor + acc;
            }
        }
    }
    return out;
}

}  // namespace

ImagePlane bicubic_resize(const ImagePlane& img, ResizeFactor factor) {
    const int out_h = factor.apply(img.height);
    const int out_w = factor.apply(img.width);
    if (out_h < 1 || out_w < 1) throw ShapeError("bicubic_resize: degenerate output size");
    if (factor.num == factor.den) return img;
    const double s = factor.value();
    return resample_axis(resample_axis(img, 0, out_h, s), 1, out_w, s);
}

ImagePlane rgb_to_y(const ImagePlane& img) {
    if (img.space != ColorSpace::RGB || img.channels != 3) {
        throw Error("rgb_to_y: expected an RGB image");
    }
    if (img.range != ValueRange::Byte) throw Error("rgb_to_y: expected a [0, 255] image");
    ImagePlane out = ImagePlane::blank(img.width, img.height, 1, ValueRange::Byte, ColorSpace::Y);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            out.at(0, y, x) = 16.0 + (65.738 * img.at(0, y, x) + 129.057 * img.at(1, y, x) +
                                      25.064 * img.at(2, y, x)) /
                                         256.0;
        }
    }
    return out;
}

ImagePlane luma(const ImagePlane& img) {
    if (img.space == ColorSpace::Y) return img;
    if (img.space == ColorSpace::YCbCr) {
        ImagePlane out = ImagePlane::blank(img.width, img.height, 1, img.range, ColorSpace::Y);
        std::copy_n(img.values.begin(), out.values.size(), out.values.begin());
        return out;
    }
    return rgb_to_y(to_range(img, ValueRange::Byte));
}

double psnr_y(const ImagePlane& a, const ImagePlane& b, int border) {
    const ImagePlane ya = cropped_luma(a, border, "psnr_y");
    const ImagePlane yb = cropped_luma(b, border, "psnr_y");
    require_same_dims(ya, yb, "psnr_y");
    double sse = 0.0;
    for (std::size_t i = 0; i < ya.values.size(); ++i) {
        const double d = ya.values[i] - yb.values[i];
        sse += d * d;
    }
    const double mse = sse / static_cast<double>(ya.values.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim_y(const ImagePlane& a, const ImagePlane& b, int border) {
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    const ImagePlane ya = cropped_luma(a, border, "ssim_y");
    const ImagePlane yb = cropped_luma(b, border, "ssim_y");
    require_same_dims(ya, yb, "ssim_y");
    const int w = ya.width;
    const int h = ya.height;
    if (w < kWin || h < kWin) throw ShapeError("ssim_y: image smaller than the 11x11 window");

    // The normalised 2-D Gaussian is the outer product of the normalised 1-D one.
    std::array<double, kWin> g{};
    double gs = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - (kWin - 1) / 2.0;
        g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        gs += g[i];
    }
    for (double& v : g) v /= gs;

    const int ow = w - kWin + 1;
    const int oh = h - kWin + 1;
    // Valid separable filtering of one plane.
    const auto filter = [&](const std::vector<double>& src) {
        std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (int k = 0; k < kWin; ++k) acc += g[k] * src[static_cast<std::size_t>(y) * w + x + k];
                tmp[static_cast<std::size_t>(y) * ow + x] = acc;
            }
        }
        std::vector<double> dst(static_cast<std::size_t>(oh) * ow);
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (int k = 0; k < kWin; ++k) acc += g[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
                dst[static_cast<std::size_t>(y) * ow + x] = acc;
            }
        }
        return dst;
    };

    const auto& pa = ya.values;
    const auto& pb = yb.values;
    std::vector<double> aa(pa.size()), bb(pa.size()), ab(pa.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        aa[i] = pa[i] * pa[i];
        bb[i] = pb[i] * pb[i];
        ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter(pa);
    const auto mu_b = filter(pb);
    const auto s_aa = filter(aa);
    const auto s_bb = filter(bb);
    const auto s_ab = filter(ab);

    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i];
        const double mb = mu_b[i];
        const double va = s_aa[i] - ma * ma;
        const double vb = s_bb[i] - mb * mb;
        const double cov = s_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(mu_a.size());
}

template <typename T>
Tensor<T> image_to_tensor(const ImagePlane& img) {
    const ImagePlane u = to_range(img, ValueRange::Unit);
    std::vector<T> v(u.values.size());
    std::transform(u.values.begin(), u.values.end(), v.begin(), [](double x) { return static_cast<T>(x); });
    return Tensor<T>::from(Shape{1, u.channels, u.height, u.width}, std::move(v));
}

template <typename T>
ImagePlane tensor_to_image(const Tensor<T>& t, std::int64_t n) {
    const Shape s = t.shape();
    if (n < 0 || n >= s.n || (s.c != 1 && s.c != 3)) throw ShapeError("tensor_to_image: bad tensor shape");
    ImagePlane out = ImagePlane::blank(static_cast<int>(s.w), static_cast<int>(s.h), static_cast<int>(s.c),
                                       ValueRange::Unit, s.c == 3 ? ColorSpace::RGB : ColorSpace::Y);
    const auto d = t.data();
    const std::size_t base = static_cast<std::size_t>(n * s.c * s.h * s.w);
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = static_cast<double>(d[base + i]);
    return out;
}

template Tensor<float> image_to_tensor<float>(const ImagePlane&);
template Tensor<double> image_to_tensor<double>(const ImagePlane&);
template ImagePlane tensor_to_image<float>(const Tensor<float>&, std::int64_t);
template ImagePlane tensor_to_image<double>(const Tensor<double>&, std::int64_t);

std::vector<fs::path> list_png(const fs::path& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw IoError("not a readable directory: '" + dir.string() + "'");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png") files.push_back(entry.path());
    }
    if (ec) throw IoError("cannot list '" + dir.string() + "': " + ec.message());
    if (files.empty()) throw IoError("no PNG images in '" + dir.string() + "'");
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<ImagePair> degrade_dataset(const fs::path& hr_dir, int scale, const fs::path& lr_dir) {
    if (scale < 2 || scale > 4) throw ConfigError("degrade: scale must be 2, 3 or 4");
    const auto files = list_png(hr_dir);
    fs::create_directories(lr_dir);
    std::vector<ImagePair> pairs;
    for (const auto& hr_path : files) {
        const ImagePlane hr = modcrop(read_png(hr_path), scale);
        const ImagePlane lr = bicubic_resize(hr, ResizeFactor{1, scale});
        const fs::path lr_path = lr_dir / (hr_path.stem().string() + "x" + std::to_string(scale) + ".png");
        write_png(lr_path, lr);
        pairs.push_back({hr_path, lr_path});
    }
    std::ofstream manifest(lr_dir / "pairs.txt", std::ios::binary);
    if (!manifest) throw IoError("cannot write manifest in '" + lr_dir.string() + "'");
    for (const auto& p : pairs) manifest << p.hr.string() << '\t' << p.lr.string() << '\n';
    return pairs;
}

}  // namespace din
