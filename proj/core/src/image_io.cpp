#include "dora/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "dora/errors.hpp"

namespace dora {
namespace {

// Skips whitespace and '#' comment lines between header tokens.
int next_header_int(std::istream& in, const std::string& path) {
  for (;;) {
    int c = in.peek();
    if (c == EOF) throw data_error(path + ": truncated header");
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  int value = 0;
  if (!(in >> value)) throw data_error(path + ": malformed header integer");
  return value;
}

std::vector<uint8_t> read_payload(std::istream& in, size_t count,
                                  const std::string& path) {
  // single whitespace byte separates maxval from payload
  in.get();
  std::vector<uint8_t> bytes(count);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
  if (static_cast<size_t>(in.gcount()) != count)
    throw data_error(path + ": truncated pixel payload");
  return bytes;
}

uint8_t to_byte(float v) {
  float scaled = std::round(v * 255.0f);
  if (scaled < 0.0f) scaled = 0.0f;
  if (scaled > 255.0f) scaled = 255.0f;
  return static_cast<uint8_t>(scaled);
}

}  // namespace

Frame<float> read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error(path + ": cannot open");
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6') throw data_error(path + ": not a binary PPM (P6)");
  int w = next_header_int(in, path);
  int h = next_header_int(in, path);
  int maxval = next_header_int(in, path);
  if (w < 1 || h < 1) throw data_error(path + ": bad dimensions");
  if (maxval != 255) throw data_error(path + ": only maxval 255 supported");
  auto bytes = read_payload(in, static_cast<size_t>(w) * h * 3, path);
  Frame<float> f(h, w, 3);
  for (size_t i = 0; i < bytes.size(); ++i)
    f.pix[i] = static_cast<float>(bytes[i]) / 255.0f;
  return f;
}

void write_ppm(const std::string& path, const Frame<float>& frame) {
  if (frame.channels != 3)
    throw std::invalid_argument("write_ppm: frame must have 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open for writing");
  out << "P6\n" << frame.width << " " << frame.height << "\n255\n";
  std::vector<uint8_t> bytes(frame.pix.size());
  for (size_t i = 0; i < frame.pix.size(); ++i) bytes[i] = to_byte(frame.pix[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw data_error(path + ": write failed");
}

Tensor<float> read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error(path + ": cannot open");
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '5') throw data_error(path + ": not a binary PGM (P5)");
  int w = next_header_int(in, path);
  int h = next_header_int(in, path);
  int maxval = next_header_int(in, path);
  if (w < 1 || h < 1) throw data_error(path + ": bad dimensions");
  if (maxval != 255) throw data_error(path + ": only maxval 255 supported");
  auto bytes = read_payload(in, static_cast<size_t>(w) * h, path);
  Tensor<float> t({h, w});
  for (size_t i = 0; i < bytes.size(); ++i)
    t.data[i] = static_cast<float>(bytes[i]) / 255.0f;
  return t;
}

void write_pgm(const std::string& path, const Tensor<float>& image) {
  if (image.rank() != 2) throw std::invalid_argument("write_pgm: rank-2 tensor expected");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open for writing");
  out << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
  std::vector<uint8_t> bytes(image.data.size());
  for (size_t i = 0; i < image.data.size(); ++i) bytes[i] = to_byte(image.data[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw data_error(path + ": write failed");
}

}  // namespace dora
