#include "posecal/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "posecal/common.hpp"

namespace posecal {

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  if (img.empty()) throw std::invalid_argument("save_pgm: empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_pgm: cannot open " + path.string());
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> row(static_cast<std::size_t>(img.width));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      float v = std::clamp(img.at(x, y), 0.0f, 1.0f);
      row[static_cast<std::size_t>(x)] =
          static_cast<uint8_t>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("save_pgm: write failed for " + path.string());
}

namespace {

// Reads the next whitespace/comment-delimited token of a PGM header.
std::string next_header_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

GrayImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_pgm: cannot open " + path.string());
  if (next_header_token(in) != "P5")
    throw IoError("load_pgm: not a binary PGM: " + path.string());
  const int width = std::stoi(next_header_token(in));
  const int height = std::stoi(next_header_token(in));
  const int maxval = std::stoi(next_header_token(in));
  if (width <= 0 || height <= 0 || maxval != 255)
    throw IoError("load_pgm: unsupported header in " + path.string());

  GrayImage img(width, height);
  std::vector<uint8_t> raw(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw IoError("load_pgm: truncated file " + path.string());
  for (std::size_t i = 0; i < raw.size(); ++i)
    img.pixels[i] = static_cast<float>(raw[i]) / 255.0f;
  return img;
}

}  // namespace posecal
