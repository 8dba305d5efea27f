#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace dora {

/// One image or video frame: height x width x channels, values in [0,1],
/// row-major (y, x, c).
template <typename S>
struct Frame {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<S> pix;

  Frame() = default;
  Frame(int h, int w, int c, S fill = S(0))
      : height(h), width(w), channels(c),
        pix(static_cast<size_t>(h) * w * c, fill) {}

  S& at(int y, int x, int c) {
    return pix[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  S at(int y, int x, int c) const {
    return pix[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  size_t size() const { return pix.size(); }

  template <typename T>
  Frame<T> cast() const {
    Frame<T> out(height, width, channels);
    for (size_t i = 0; i < pix.size(); ++i) out.pix[i] = static_cast<T>(pix[i]);
    return out;
  }
};

/// Checks the FrameTensor invariants: finite values in [0,1], 1 or 3 channels.
template <typename S>
void validate_frame(const Frame<S>& f) {
  if (f.channels != 1 && f.channels != 3)
    throw std::invalid_argument("frame: channels must be 1 or 3");
  if (f.pix.size() != static_cast<size_t>(f.height) * f.width * f.channels)
    throw std::invalid_argument("frame: pixel buffer size mismatch");
  for (S v : f.pix) {
    if (!std::isfinite(static_cast<double>(v)) || v < S(0) || v > S(1))
      throw std::invalid_argument("frame: values must be finite and in [0,1]");
  }
}

}  // namespace dora
