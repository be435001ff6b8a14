#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphonomy/tensor.hpp"

namespace graphonomy {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

// Fixed palette, stable across runs; label 0 renders dark gray.
Rgb palette_color(std::size_t label);

// Binary PPM (P6).
void write_ppm(const std::string& path, std::size_t height, std::size_t width,
               const std::vector<Rgb>& pixels);

std::vector<Rgb> render_label_map(const std::vector<int>& labels);

// Per-pixel L2 feature norm as grayscale, normalized over the map.
std::vector<Rgb> render_feature_magnitude(const Tensor& features);

}  // namespace graphonomy
