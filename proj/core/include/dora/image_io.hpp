#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dora/frame.hpp"
#include "dora/tensor.hpp"

namespace dora {

/// Binary PPM (P6), 8-bit RGB, maxval 255. Values map to [0,1].
Frame<float> read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Frame<float>& frame);

/// Binary PGM (P5), 8-bit grayscale. Used for per-object masks and maps.
/// The tensor is rank-2 {h, w} with values in [0,1].
Tensor<float> read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Tensor<float>& image);

}  // namespace dora
