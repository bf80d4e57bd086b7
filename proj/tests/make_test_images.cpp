// Writes a few deterministic RGB test PNGs: make_test_images <dir> [count]
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <string>

#include "din/image.hpp"

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: make_test_images <dir> [count]\n";
        return 1;
    }
    const std::filesystem::path dir = argv[1];
    const int count = argc > 2 ? std::atoi(argv[2]) : 3;
    std::filesystem::create_directories(dir);
    for (int k = 0; k < count; ++k) {
        const int w = 24 + 5 * k, h = 20 + 3 * k;
        auto img = din::ImagePlane::blank(w, h, 3, din::ValueRange::Byte, din::ColorSpace::RGB);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                img.at(0, y, x) = std::round(128 + 100 * std::sin(0.3 * x + k) * std::cos(0.2 * y));
                img.at(1, y, x) = std::round(128 + 90 * std::cos(0.15 * (x + y) + k));
                img.at(2, y, x) = ((x / 4 + y / 4 + k) % 2) ? 200 : 50;
            }
        }
        din::write_png(dir / ("img" + std::to_string(k) + ".png"), img);
    }
    return 0;
}
