#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iaunet/data.hpp"
#include "iaunet/tensor.hpp"

namespace iaunet::imageio {

// Binary PPM (P6), 8-bit. Tensors are [3,H,W] in [0,1]; quantization is
// round(v*255) clamped.
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

// Binary PGM (P5); masks stored as 0/255.
void write_pgm(const std::string& path, const data::MaskGrid& mask);
data::MaskGrid read_pgm(const std::string& path);

}  // namespace iaunet::imageio
