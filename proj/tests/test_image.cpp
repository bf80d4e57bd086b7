#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "din/error.hpp"
#include "din/image.hpp"
#include "test_util.hpp"

using namespace din;
namespace fs = std::filesystem;

namespace {

ImagePlane random_image(int w, int h, int channels, std::mt19937_64& rng, ColorSpace space = ColorSpace::RGB) {
    ImagePlane img = ImagePlane::blank(w, h, channels, ValueRange::Byte, space);
    std::uniform_int_distribution<int> dist(0, 255);
    for (double& v : img.values) v = dist(rng);
    return img;
}

ImagePlane constant_y(int w, int h, double v) {
    ImagePlane img = ImagePlane::blank(w, h, 1, ValueRange::Byte, ColorSpace::Y);
    for (double& x : img.values) x = v;
    return img;
}

// Window-by-window SSIM with an explicitly normalised 2-D Gaussian.
double brute_force_ssim(const ImagePlane& a, const ImagePlane& b) {
    double win[11][11];
    double total = 0.0;
    for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
            win[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
            total += win[i][j];
        }
    }
    const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
    double score = 0.0;
    int count = 0;
    for (int y = 0; y + 11 <= a.height; ++y) {
        for (int x = 0; x + 11 <= a.width; ++x) {
            double ma = 0, mb = 0;
            for (int i = 0; i < 11; ++i) {
                for (int j = 0; j < 11; ++j) {
                    const double w = win[i][j] / total;
                    ma += w * a.at(0, y + i, x + j);
                    mb += w * b.at(0, y + i, x + j);
                }
            }
            double va = 0, vb = 0, cov = 0;
            for (int i = 0; i < 11; ++i) {
                for (int j = 0; j < 11; ++j) {
                    const double w = win[i][j] / total;
                    const double da = a.at(0, y + i, x + j) - ma;
                    const double db = b.at(0, y + i, x + j) - mb;
                    va += w * da * da;
                    vb += w * db * db;
                    cov += w * da * db;
                }
            }
            score += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    }
    return score / count;
}

struct Fixture {
    int h, w, c, num, den, oh, ow;
    std::vector<double> input, output;
};

std::vector<Fixture> load_fixtures() {
    std::ifstream is(test::data_dir() / "imresize_fixtures.txt");
    REQUIRE(is.good());
    std::vector<Fixture> out;
    std::string line;
    std::getline(is, line);  // header comment
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        Fixture f{};
        std::istringstream head(line);
        head >> f.h >> f.w >> f.c >> f.num >> f.den >> f.oh >> f.ow;
        const auto read_row = [&is](std::size_t n) {
            std::string row;
            std::getline(is, row);
            std::istringstream ss(row);
            std::vector<double> v(n);
            for (auto& x : v) ss >> x;
            return v;
        };
        f.input = read_row(static_cast<std::size_t>(f.h) * f.w * f.c);
        f.output = read_row(static_cast<std::size_t>(f.oh) * f.ow * f.c);
        out.push_back(std::move(f));
    }
    return out;
}

}  // namespace

TEST_SUITE("imaging") {

TEST_CASE("cubic kernel interpolates") {
    CHECK(cubic_kernel(0.0) == 1.0);
    for (double x : {-2.0, -1.0, 1.0, 2.0, 2.5, -3.0}) CHECK(cubic_kernel(x) == 0.0);
    CHECK(cubic_kernel(0.5) == doctest::Approx(0.5625));
    CHECK(cubic_kernel(1.5) == doctest::Approx(-0.0625));
    CHECK(cubic_kernel(0.3) == cubic_kernel(-0.3));
}

TEST_CASE("resampling rows sum to one at every position") {
    for (const auto& [in, out] : std::vector<std::pair<int, int>>{{10, 20}, {12, 6}, {12, 4}, {13, 4}, {5, 20}, {1, 3}, {9, 3}}) {
        const auto cw = bicubic_contributions(in, out, static_cast<double>(out) / in);
        REQUIRE(cw.weight.size() == static_cast<std::size_t>(out));
        for (std::size_t i = 0; i < cw.weight.size(); ++i) {
            double s = 0.0;
            for (double w : cw.weight[i]) s += w;
            CHECK(std::abs(s - 1.0) < 1e-12);
            for (int k : cw.index[i]) {
                CHECK(k >= 0);
                CHECK(k < in);
            }
        }
    }
}

TEST_CASE("output size is ceil(in * factor)") {
    CHECK(ResizeFactor{1, 2}.apply(101) == 51);
    CHECK(ResizeFactor{1, 3}.apply(10) == 4);
    CHECK(ResizeFactor{2, 3}.apply(10) == 7);
    CHECK_THROWS_AS((ResizeFactor{0, 1}.apply(4)), ConfigError);
}

TEST_CASE("factor one is the identity; constants stay constant") {
    std::mt19937_64 rng(1);
    const ImagePlane img = random_image(9, 7, 3, rng);
    const ImagePlane same = bicubic_resize(img, ResizeFactor{3, 3});
    for (std::size_t i = 0; i < img.values.size(); ++i) CHECK(std::abs(same.values[i] - img.values[i]) < 1e-12);

    for (const ResizeFactor f : {ResizeFactor{1, 2}, ResizeFactor{1, 3}, ResizeFactor{1, 4}, ResizeFactor{2, 1},
                                 ResizeFactor{3, 1}, ResizeFactor{4, 1}, ResizeFactor{2, 3}}) {
        const ImagePlane flat = bicubic_resize(constant_y(13, 11, 117.0), f);
        CHECK(flat.width == f.apply(13));
        CHECK(flat.height == f.apply(11));
        for (double v : flat.values) CHECK(v == 117.0);
    }
}

TEST_CASE("bicubic resize matches the frozen reference values") {
    const auto fixtures = load_fixtures();
    REQUIRE(fixtures.size() == 7);
    for (const auto& f : fixtures) {
        ImagePlane img = ImagePlane::blank(f.w, f.h, f.c, ValueRange::Unit, ColorSpace::RGB);
        img.values = f.input;
        const ImagePlane out = bicubic_resize(img, ResizeFactor{f.num, f.den});
        REQUIRE(out.width == f.ow);
        REQUIRE(out.height == f.oh);
        double worst = 0.0;
        for (std::size_t i = 0; i < out.values.size(); ++i) worst = std::max(worst, std::abs(out.values[i] - f.output[i]));
        INFO(f.h << "x" << f.w << " by " << f.num << "/" << f.den);
        CHECK(worst < 2e-6);
    }
}

TEST_CASE("rgb_to_y reference points and affinity") {
    ImagePlane px = ImagePlane::blank(3, 1, 3, ValueRange::Byte, ColorSpace::RGB);
    for (int c = 0; c < 3; ++c) {
        px.at(c, 0, 0) = 255;
        px.at(c, 0, 1) = 0;
        px.at(c, 0, 2) = 128;
    }
    const ImagePlane y = rgb_to_y(px);
    CHECK(y.space == ColorSpace::Y);
    CHECK(std::abs(y.at(0, 0, 0) - 235.0) <= 0.01);
    CHECK(y.at(0, 0, 1) == 16.0);
    CHECK(y.at(0, 0, 2) == doctest::Approx(125.93).epsilon(1e-4));

    std::mt19937_64 rng(2);
    const ImagePlane p = random_image(4, 4, 3, rng);
    const ImagePlane q = random_image(4, 4, 3, rng);
    for (double t : {0.0, 0.25, 0.7, 1.0}) {
        ImagePlane mix = p;
        for (std::size_t i = 0; i < mix.values.size(); ++i) mix.values[i] = t * p.values[i] + (1 - t) * q.values[i];
        const ImagePlane ym = rgb_to_y(mix), yp = rgb_to_y(p), yq = rgb_to_y(q);
        for (std::size_t i = 0; i < ym.values.size(); ++i) {
            CHECK(std::abs(ym.values[i] - (t * yp.values[i] + (1 - t) * yq.values[i])) < 1e-9);
        }
    }
    CHECK_THROWS_AS(rgb_to_y(constant_y(2, 2, 3)), Error);
    CHECK_THROWS_AS(rgb_to_y(to_range(p, ValueRange::Unit)), Error);
}

TEST_CASE("psnr reference values") {
    std::mt19937_64 rng(3);
    const ImagePlane a = random_image(20, 16, 1, rng, ColorSpace::Y);
    CHECK(psnr_y(a, a, 2) == std::numeric_limits<double>::infinity());

    ImagePlane b = a;
    for (std::size_t i = 0; i < b.values.size(); ++i) b.values[i] += (i % 2 ? 1.0 : -1.0);
    CHECK(psnr_y(a, b, 0) == doctest::Approx(48.1308).epsilon(1e-6));
    CHECK(psnr_y(constant_y(8, 8, 0.0), constant_y(8, 8, 255.0), 1) == doctest::Approx(0.0));
    CHECK(psnr_y(a, b, 3) == psnr_y(b, a, 3));

    // Only the cropped border differs.
    ImagePlane c = a;
    c.at(0, 0, 0) += 50.0;
    CHECK(psnr_y(a, c, 1) == std::numeric_limits<double>::infinity());

    CHECK_THROWS_AS(psnr_y(a, constant_y(20, 15, 0.0), 0), ShapeError);
    CHECK_THROWS_AS(psnr_y(a, a, 8), ShapeError);
}

TEST_CASE("psnr decreases monotonically with noise amplitude") {
    std::mt19937_64 rng(4);
    const ImagePlane a = random_image(24, 24, 1, rng, ColorSpace::Y);
    std::vector<double> noise(a.values.size());
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : noise) v = n(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double amp : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
        ImagePlane b = a;
        for (std::size_t i = 0; i < b.values.size(); ++i) b.values[i] += amp * noise[i];
        const double p = psnr_y(a, b, 2);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("psnr and ssim of RGB images go through the luma channel") {
    std::mt19937_64 rng(5);
    const ImagePlane a = random_image(16, 16, 3, rng);
    const ImagePlane b = random_image(16, 16, 3, rng);
    CHECK(psnr_y(a, b, 2) == psnr_y(rgb_to_y(a), rgb_to_y(b), 2));
    CHECK(psnr_y(to_range(a, ValueRange::Unit), b, 2) == doctest::Approx(psnr_y(a, b, 2)).epsilon(1e-12));
    CHECK(ssim_y(a, b) == ssim_y(rgb_to_y(a), rgb_to_y(b)));
}

TEST_CASE("ssim identities and the brute-force oracle") {
    std::mt19937_64 rng(6);
    ImagePlane a = ImagePlane::blank(23, 19, 1, ValueRange::Byte, ColorSpace::Y);
    std::normal_distribution<double> n(0.0, 12.0);
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) a.at(0, y, x) = std::clamp(128 + 60 * std::sin(x * 0.4) * std::cos(y * 0.3) + n(rng), 0.0, 255.0);
    }
    CHECK(ssim_y(a, a) == 1.0);
    ImagePlane inv = a;
    for (double& v : inv.values) v = 255.0 - v;
    CHECK(ssim_y(a, inv) < 1.0);

    ImagePlane b = a;
    for (double& v : b.values) v = std::clamp(v + n(rng), 0.0, 255.0);
    CHECK(ssim_y(a, b) == ssim_y(b, a));
    CHECK(std::abs(ssim_y(a, b) - brute_force_ssim(a, b)) < 1e-6);
    CHECK(std::abs(ssim_y(a, inv) - brute_force_ssim(a, inv)) < 1e-6);
    const double s = ssim_y(a, b);
    CHECK(s > -1.0);
    CHECK(s < 1.0);

    CHECK(std::abs(ssim_y(a, b, 2) - brute_force_ssim(crop(a, 2, 2, 19, 15), crop(b, 2, 2, 19, 15))) < 1e-6);
    CHECK_THROWS_AS(ssim_y(constant_y(10, 12, 1), constant_y(10, 12, 1)), ShapeError);
}

TEST_CASE("range conversion and quantisation") {
    ImagePlane u = ImagePlane::blank(2, 1, 1, ValueRange::Unit, ColorSpace::Y);
    u.values = {0.5, 1.2};
    const ImagePlane b = to_range(u, ValueRange::Byte);
    CHECK(b.values[0] == 127.5);
    const ImagePlane q = quantize(b);
    CHECK(q.values[0] == 128.0);
    CHECK(q.values[1] == 255.0);
    CHECK_THROWS_AS(quantize(u), Error);
}

TEST_CASE("png round trip and tensor conversion") {
    const auto dir = test::scratch_dir("png");
    std::mt19937_64 rng(7);
    const ImagePlane img = random_image(7, 5, 3, rng);
    write_png(dir / "a.png", img);
    const ImagePlane back = read_png(dir / "a.png");
    CHECK(back.width == 7);
    CHECK(back.height == 5);
    CHECK(back.values == img.values);

    const auto t = image_to_tensor<double>(img);
    CHECK(t.shape() == Shape{1, 3, 5, 7});
    CHECK(t.at(0, 1, 2, 3) == img.at(1, 2, 3) / 255.0);
    const ImagePlane again = quantize(to_range(tensor_to_image(t), ValueRange::Byte));
    CHECK(again.values == img.values);

    CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
}

TEST_CASE("modcrop keeps the top-left multiple of r") {
    std::mt19937_64 rng(8);
    const ImagePlane img = random_image(101, 99, 3, rng);
    const ImagePlane c = modcrop(img, 2);
    CHECK(c.width == 100);
    CHECK(c.height == 98);
    CHECK(c.at(2, 97, 99) == img.at(2, 97, 99));
    CHECK(modcrop(img, 3).width == 99);
}

TEST_CASE("degrade_dataset geometry, manifest and determinism") {
    const auto hr = test::scratch_dir("degrade_hr");
    std::mt19937_64 rng(9);
    write_png(hr / "even.png", random_image(100, 100, 3, rng));
    write_png(hr / "odd.png", random_image(101, 101, 3, rng));
    const auto lr = test::scratch_dir("degrade_lr");
    const auto pairs = degrade_dataset(hr, 2, lr);
    REQUIRE(pairs.size() == 2);
    for (const auto& p : pairs) {
        const ImagePlane img = read_png(p.lr);
        CHECK(img.width == 50);
        CHECK(img.height == 50);
    }
    CHECK(pairs[0].lr.filename() == "evenx2.png");
    CHECK(fs::exists(lr / "pairs.txt"));
    std::ifstream manifest(lr / "pairs.txt");
    std::string line;
    int lines = 0;
    while (std::getline(manifest, line)) {
        CHECK(line.find('\t') != std::string::npos);
        ++lines;
    }
    CHECK(lines == 2);

    const auto read_bytes = [](const fs::path& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(is), {});
    };
    const std::string first = read_bytes(pairs[1].lr);
    const auto lr2 = test::scratch_dir("degrade_lr2");
    const auto again = degrade_dataset(hr, 2, lr2);
    CHECK(read_bytes(again[1].lr) == first);

    const auto empty = test::scratch_dir("degrade_empty");
    CHECK_THROWS_AS(degrade_dataset(empty, 2, lr2), IoError);
    CHECK_THROWS_AS(degrade_dataset(empty / "nope", 2, lr2), IoError);
}

}  // TEST_SUITE
