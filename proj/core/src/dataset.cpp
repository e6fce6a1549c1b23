#include "posecal/dataset.hpp"

#include <cstring>
#include <fstream>

#include "posecal/threading.hpp"

namespace posecal {

namespace {
constexpr char kMagic[4] = {'P', 'C', 'F', 'B'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
}  // namespace

void save_features(const FeatureMatrix& features,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_features: cannot open " + path.string());
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<uint32_t>(features.n_samples()));
  write_u32(out, static_cast<uint32_t>(features.dim()));
  std::vector<float> row(static_cast<std::size_t>(features.dim()));
  for (int i = 0; i < features.n_samples(); ++i) {
    features.copy_row(i, row);
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * 4));
  }
  if (!out) throw IoError("save_features: write failed for " + path.string());
}

FeatureMatrix load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_features: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("load_features: bad magic in " + path.string());
  if (read_u32(in) != kVersion)
    throw IoError("load_features: unsupported version in " + path.string());
  const uint32_t count = read_u32(in);
  const uint32_t dims = read_u32(in);
  FeatureMatrix m(static_cast<int>(count), static_cast<int>(dims));
  std::vector<float> row(dims);
  for (uint32_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * 4));
    if (!in) throw IoError("load_features: truncated file " + path.string());
    for (uint32_t f = 0; f < dims; ++f)
      m.set(static_cast<int>(i), static_cast<int>(f), row[f]);
  }
  return m;
}

FeatureMatrix featurize_dataset(const DatasetManifest& manifest,
                                unsigned n_threads) {
  FeatureMatrix m(static_cast<int>(manifest.entries.size()), kImageFeatureDim);
  parallel_for(manifest.entries.size(), n_threads, [&](std::size_t i) {
    const GrayImage img = load_pgm(manifest.root / manifest.entries[i].path);
    const ImageFeature feat = featurize(img);
    for (int f = 0; f < kImageFeatureDim; ++f)
      m.set(static_cast<int>(i), f, feat.value(f));
  });
  return m;
}

std::vector<PoseLabel> manifest_labels(const DatasetManifest& manifest) {
  std::vector<PoseLabel> labels;
  labels.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) labels.push_back(e.view);
  return labels;
}

}  // namespace posecal
