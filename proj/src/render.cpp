#include "graphonomy/render.hpp"

#include <cmath>
#include <fstream>

namespace graphonomy {

namespace {

constexpr Rgb kPalette[] = {
    {60, 60, 60},    // 0: background
    {230, 25, 75},   {60, 180, 75},   {255, 225, 25},  {0, 130, 200},
    {245, 130, 48},  {145, 30, 180},  {70, 240, 240},  {240, 50, 230},
    {210, 245, 60},  {250, 190, 212}, {0, 128, 128},   {220, 190, 255},
    {170, 110, 40},  {255, 250, 200}, {128, 0, 0},     {170, 255, 195},
    {128, 128, 0},   {255, 215, 180}, {0, 0, 128},     {128, 128, 128},
    {255, 255, 255}, {100, 200, 50},  {200, 100, 255},
};
constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

}  // namespace

Rgb palette_color(std::size_t label) { return kPalette[label % kPaletteSize]; }

void write_ppm(const std::string& path, std::size_t height, std::size_t width,
               const std::vector<Rgb>& pixels) {
    if (pixels.size() != height * width)
        throw InputError("pixel count does not match image size for " + path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << "P6\n" << width << ' ' << height << "\n255\n";
    for (const Rgb& p : pixels) {
        out.put(static_cast<char>(p.r));
        out.put(static_cast<char>(p.g));
        out.put(static_cast<char>(p.b));
    }
    if (!out) throw IoError("short write to " + path);
}

std::vector<Rgb> render_label_map(const std::vector<int>& labels) {
    std::vector<Rgb> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        out[i] = palette_color(static_cast<std::size_t>(labels[i] < 0 ? 0 : labels[i]));
    return out;
}

std::vector<Rgb> render_feature_magnitude(const Tensor& features) {
    const std::size_t h = features.dim(0), w = features.dim(1), c = features.dim(2);
    std::vector<double> mag(h * w, 0.0);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (std::size_t p = 0; p < h * w; ++p) {
        double sq = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double v = features[p * c + ch];
            sq += v * v;
        }
        mag[p] = std::sqrt(sq);
        lo = std::min(lo, mag[p]);
        hi = std::max(hi, mag[p]);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    std::vector<Rgb> out(h * w);
    for (std::size_t p = 0; p < h * w; ++p) {
        const auto v = static_cast<std::uint8_t>(255.0 * (mag[p] - lo) / span);
        out[p] = {v, v, v};
    }
    return out;
}

}  // namespace graphonomy
