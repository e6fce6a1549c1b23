#include "posecal/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "posecal/rng.hpp"
#include "posecal/threading.hpp"

namespace posecal {

namespace {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
Vec3 normalized(const Vec3& a) {
  const double n = std::sqrt(dot(a, a));
  return {a.x / n, a.y / n, a.z / n};
}

// A quad face of a cuboid; split into two triangles at raster time so
// both halves share one flat shade.
struct Face {
  std::array<Vec3, 4> corners;
};

// Axis-aligned cuboid [lo, hi], corners wound so normals face outward.
void add_cuboid(std::vector<Face>& faces, const Vec3& lo, const Vec3& hi) {
  const Vec3 c[8] = {
      {lo.x, lo.y, lo.z}, {hi.x, lo.y, lo.z}, {hi.x, hi.y, lo.z}, {lo.x, hi.y, lo.z},
      {lo.x, lo.y, hi.z}, {hi.x, lo.y, hi.z}, {hi.x, hi.y, hi.z}, {lo.x, hi.y, hi.z}};
  faces.push_back({{c[0], c[3], c[2], c[1]}});  // bottom (-z)
  faces.push_back({{c[4], c[5], c[6], c[7]}});  // top (+z)
  faces.push_back({{c[0], c[1], c[5], c[4]}});  // front (-y)
  faces.push_back({{c[2], c[3], c[7], c[6]}});  // rear (+y)
  faces.push_back({{c[0], c[4], c[7], c[3]}});  // left (-x)
  faces.push_back({{c[1], c[2], c[6], c[5]}});  // right (+x)
}

// Chair: seat slab + tilted back slab + 4 legs. The front of the chair
// faces -y; +z is up.
std::vector<Face> build_chair(const ShapeParams& s) {
  std::vector<Face> faces;
  const double w = s.seat_width, d = s.seat_depth, h = s.seat_height;
  const double t = s.leg_thickness;
  const double seat_thick = 1.5 * t;

  add_cuboid(faces, {-w / 2, -d / 2, h - seat_thick}, {w / 2, d / 2, h});

  // Legs, inset to the seat corners.
  const double leg_top = h - seat_thick;
  const double xs[2] = {-w / 2, w / 2 - t};
  const double ys[2] = {-d / 2, d / 2 - t};
  for (double lx : xs)
    for (double ly : ys)
      add_cuboid(faces, {lx, ly, 0.0}, {lx + t, ly + t, leg_top});

  // Back slab rises from the rear seat edge, tilted by back_tilt_deg
  // about the x axis (top leans toward +y, away from the viewer at
  // azimuth 0).
  const double tilt = s.back_tilt_deg * M_PI / 180.0;
  const double ct = std::cos(tilt), st = std::sin(tilt);
  const double y0 = d / 2 - t;  // slab base, rear edge
  std::vector<Face> back;
  add_cuboid(back, {-w / 2, y0, 0.0}, {w / 2, y0 + t, s.back_height});
  for (auto& f : back) {
    for (auto& p : f.corners) {
      const double ry = y0 + (p.y - y0) * ct - p.z * st;
      const double rz = (p.y - y0) * st + p.z * ct;
      p.y = ry;
      p.z = h + rz;
    }
    faces.push_back(f);
  }
  return faces;
}

struct Camera {
  double cos_az, sin_az, cos_el, sin_el;

  // Object -> camera frame: rotate about z by the view azimuth, then
  // tip about x by the elevation. Screen x = q.x, screen y = -q.z
  // (raster rows grow downward), depth = q.y (larger is farther).
  Vec3 transform(const Vec3& p) const {
    const double x = cos_az * p.x - sin_az * p.y;
    const double y = sin_az * p.x + cos_az * p.y;
    return {x, cos_el * y - sin_el * p.z, sin_el * y + cos_el * p.z};
  }
};

constexpr float kBackground = 0.85f;
constexpr double kCameraElevationDeg = 15.0;
constexpr double kFitFraction = 0.72;  // projected bbox relative to frame

void fill_rect(GrayImage& img, int x0, int y0, int x1, int y1, float value) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, img.width);
  y1 = std::min(y1, img.height);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) img.at(x, y) = value;
}

void draw_segment(GrayImage& img, double x0, double y0, double x1, double y1,
                  int thickness, float value) {
  const int steps = static_cast<int>(std::ceil(
      std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i < steps; ++i) {
    const double u = static_cast<double>(i) / steps;
    const int cx = static_cast<int>(std::lround(x0 + (x1 - x0) * u));
    const int cy = static_cast<int>(std::lround(y0 + (y1 - y0) * u));
    fill_rect(img, cx, cy, cx + thickness, cy + thickness, value);
  }
}

void draw_clutter(GrayImage& img, double level, Rng& rng) {
  const int n_rects = static_cast<int>(std::lround(level * 10.0));
  const int n_lines = static_cast<int>(std::lround(level * 8.0));
  const double sz = img.width;
  for (int i = 0; i < n_rects; ++i) {
    const int x = rng.uniform_int(0, img.width - 1);
    const int y = rng.uniform_int(0, img.height - 1);
    const int rw = rng.uniform_int(4, static_cast<int>(sz * 0.45));
    const int rh = rng.uniform_int(4, static_cast<int>(sz * 0.45));
    fill_rect(img, x, y, x + rw, y + rh, static_cast<float>(rng.uniform()));
  }
  for (int i = 0; i < n_lines; ++i) {
    draw_segment(img, rng.uniform(0, sz), rng.uniform(0, sz),
                 rng.uniform(0, sz), rng.uniform(0, sz),
                 rng.uniform_int(1, 2), static_cast<float>(rng.uniform()));
  }
}

void raster_triangle(GrayImage& img, std::vector<float>& zbuf, const Vec3& a,
                     const Vec3& b, const Vec3& c, float shade) {
  // Orthographic screen-space triangle with z-buffering. Vertices carry
  // (screen x, screen y, depth) in their (x, y, z) slots here.
  const double area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  if (area == 0.0) return;
  const int min_x = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}))));
  const int max_x = std::min(img.width - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}))));
  const int min_y = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}))));
  const int max_y = std::min(img.height - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}))));

  for (int y = min_y; y <= max_y; ++y) {
    for (int x = min_x; x <= max_x; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double w0 = ((b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)) / area;
      const double w1 = ((c.x - b.x) * (py - b.y) - (c.y - b.y) * (px - b.x)) / area;
      const double w2 = 1.0 - w0 - w1;
      if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
      const double depth = w2 * a.z + w0 * b.z + w1 * c.z;
      float& zref = zbuf[static_cast<std::size_t>(y) * img.width + x];
      if (depth < zref) {
        zref = static_cast<float>(depth);
        img.at(x, y) = shade;
      }
    }
  }
}

}  // namespace

ShapeParams sample_shape(uint64_t rng_seed) {
  Rng rng = derive_stream(rng_seed, 0x53484150u);  // "SHAP"
  ShapeParams s;
  s.seat_width = rng.uniform(0.75, 1.35);
  s.seat_depth = rng.uniform(0.75, 1.35);
  s.seat_height = rng.uniform(0.65, 1.05);
  s.back_height = rng.uniform(0.75, 1.35);
  s.back_tilt_deg = rng.uniform(0.0, 28.0);
  s.leg_thickness = rng.uniform(0.06, 0.13);
  s.style_seed = rng_seed;
  return s;
}

GrayImage render(const ShapeParams& shape, PoseLabel view,
                 const RenderOptions& opts) {
  if (!shape.valid()) throw InvalidShapeError("render: degenerate shape");
  if (!valid_pose_label(view)) throw std::invalid_argument("render: view out of range");
  if (opts.image_size < 32) throw std::invalid_argument("render: image_size < 32");

  Rng rng(opts.rng_seed);
  GrayImage img(opts.image_size, opts.image_size, kBackground);
  if (opts.clutter_level > 0.0) draw_clutter(img, opts.clutter_level, rng);

  const std::vector<Face> faces = build_chair(shape);

  const double az = azimuth_degrees(view) * M_PI / 180.0;
  const double el = kCameraElevationDeg * M_PI / 180.0;
  const Camera cam{std::cos(az), std::sin(az), std::cos(el), std::sin(el)};

  // Project all corners, then fit the screen-space bounding box into
  // the frame with a margin so the border stays clear of the object.
  double min_x = 1e30, max_x = -1e30, min_y = 1e30, max_y = -1e30;
  std::vector<std::array<Vec3, 4>> projected(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int k = 0; k < 4; ++k) {
      const Vec3 q = cam.transform(faces[f].corners[k]);
      projected[f][k] = {q.x, -q.z, q.y};
      min_x = std::min(min_x, q.x);
      max_x = std::max(max_x, q.x);
      min_y = std::min(min_y, -q.z);
      max_y = std::max(max_y, -q.z);
    }
  }
  const double extent = std::max(max_x - min_x, max_y - min_y);
  const double scale = kFitFraction * opts.image_size / extent;
  const double off_x = 0.5 * opts.image_size - scale * 0.5 * (min_x + max_x);
  const double off_y = 0.5 * opts.image_size - scale * 0.5 * (min_y + max_y);
  for (auto& quad : projected) {
    for (auto& p : quad) {
      p.x = p.x * scale + off_x;
      p.y = p.y * scale + off_y;
    }
  }

  // Fixed directional light in the camera frame, slightly up-left and
  // toward the viewer.
  const Vec3 light = normalized({-0.45, -0.65, 0.62});
  constexpr double kAmbient = 0.18;
  constexpr double kDiffuse = 0.62;

  std::vector<float> zbuf(img.pixels.size(), 1e30f);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& o = faces[f].corners;
    Vec3 n = cross(o[1] - o[0], o[3] - o[0]);
    const double len = std::sqrt(dot(n, n));
    double shade = kAmbient;
    if (len > 0.0) {
      // Normal into camera frame (pure rotation, so lengths keep).
      const Vec3 nc = cam.transform({n.x / len, n.y / len, n.z / len});
      shade += kDiffuse * std::max(0.0, dot(nc, light));
    }
    if (opts.lighting_jitter > 0.0)
      shade *= 1.0 + opts.lighting_jitter * rng.uniform(-1.0, 1.0);
    const float value = static_cast<float>(std::clamp(shade, 0.02, 1.0));

    const auto& q = projected[f];
    raster_triangle(img, zbuf, q[0], q[1], q[2], value);
    raster_triangle(img, zbuf, q[0], q[2], q[3], value);
  }
  return img;
}

namespace {

PoseLabel draw_view(const PoseDistribution& prior, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int v = 0; v < kNumViews; ++v) {
    acc += prior[static_cast<std::size_t>(v)];
    if (u < acc) return v + 1;
  }
  return kNumViews;
}

bool is_uniform(const PoseDistribution& p) {
  for (double x : p)
    if (std::abs(x - 1.0 / kNumViews) > 1e-12) return false;
  return true;
}

}  // namespace

DatasetManifest generate_dataset(int n_models, int views_per_model,
                                 const PoseDistribution& pose_prior,
                                 const RenderOptions& opts,
                                 const std::filesystem::path& out_dir,
                                 unsigned n_threads) {
  if (n_models < 1) throw std::invalid_argument("generate_dataset: n_models < 1");
  if (views_per_model < 1)
    throw std::invalid_argument("generate_dataset: views_per_model < 1");
  require_valid_distribution(pose_prior, "generate_dataset");

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("generate_dataset: cannot create " + out_dir.string());

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.prior_used = pose_prior;

  // Decide all labels first (sequential, cheap), then render them in
  // parallel. Label streams are derived per model so results do not
  // depend on iteration or thread order.
  const bool exhaustive = is_uniform(pose_prior) && views_per_model == kNumViews;
  for (int m = 0; m < n_models; ++m) {
    for (int k = 0; k < views_per_model; ++k) {
      PoseLabel view;
      if (exhaustive) {
        view = k + 1;
      } else {
        Rng label_rng = derive_stream(opts.rng_seed, static_cast<uint64_t>(m),
                                      0x56494557u, static_cast<uint64_t>(k));
        view = draw_view(pose_prior, label_rng);
      }
      char name[64];
      std::snprintf(name, sizeof(name), "images/m%d_v%d.pgm", m, view);
      manifest.entries.push_back({name, view, m});
    }
  }

  parallel_for(manifest.entries.size(), n_threads, [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    const ShapeParams shape = sample_shape(
        derive_seed(opts.rng_seed, static_cast<uint64_t>(e.model_id), 0x4d4f444cu));
    RenderOptions per_image = opts;
    per_image.rng_seed = derive_seed(opts.rng_seed,
                                     static_cast<uint64_t>(e.model_id),
                                     static_cast<uint64_t>(e.view));
    save_pgm(render(shape, e.view, per_image), out_dir / e.path);
  });

  save_prior_file(pose_prior, out_dir / "prior.csv");

  const auto tmp = out_dir / "manifest.csv.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("generate_dataset: cannot write manifest");
    out << "path,view,model_id\n";
    for (const auto& e : manifest.entries)
      out << e.path << "," << e.view << "," << e.model_id << "\n";
  }
  std::filesystem::rename(tmp, out_dir / "manifest.csv", ec);
  if (ec) throw IoError("generate_dataset: manifest rename failed");
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  const auto csv = dir / "manifest.csv";
  std::ifstream in(csv);
  if (!in) throw IoError("load_manifest: cannot open " + csv.string());

  DatasetManifest manifest;
  manifest.root = dir;
  std::string line;
  if (!std::getline(in, line) || line.rfind("path,view,model_id", 0) != 0)
    throw IoError("load_manifest: bad header in " + csv.string());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    DatasetManifest::Entry e;
    std::string field;
    if (!std::getline(ss, e.path, ',')) throw IoError("load_manifest: bad row");
    if (!std::getline(ss, field, ',')) throw IoError("load_manifest: bad row");
    e.view = std::stoi(field);
    if (!std::getline(ss, field)) throw IoError("load_manifest: bad row");
    e.model_id = std::stoll(field);
    if (!valid_pose_label(e.view))
      throw IoError("load_manifest: view label out of range");
    if (!std::filesystem::exists(dir / e.path))
      throw IoError("load_manifest: missing image " + e.path);
    manifest.entries.push_back(std::move(e));
  }
  if (std::filesystem::exists(dir / "prior.csv"))
    manifest.prior_used = load_prior_file(dir / "prior.csv");
  return manifest;
}

PoseDistribution load_prior_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_prior_file: cannot open " + path.string());
  // Accepts one probability per line, either bare or as the last field
  // of a "view,p" row; header lines without numbers are skipped.
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string piece;
    bool found = false;
    double last = 0.0;
    while (std::getline(ss, piece, ',')) {
      try {
        std::size_t used = 0;
        const double v = std::stod(piece, &used);
        while (used < piece.size() && std::isspace(static_cast<unsigned char>(piece[used])))
          ++used;
        if (used == piece.size()) {
          last = v;
          found = true;
        }
      } catch (const std::exception&) {
        // non-numeric field; ignored
      }
    }
    if (found) values.push_back(last);
  }
  if (values.size() != kNumViews)
    throw IoError("load_prior_file: expected 16 values, got " +
                  std::to_string(values.size()));
  PoseDistribution p;
  double sum = 0.0;
  for (int v = 0; v < kNumViews; ++v) {
    if (values[static_cast<std::size_t>(v)] < 0.0)
      throw IoError("load_prior_file: negative entry");
    p[static_cast<std::size_t>(v)] = values[static_cast<std::size_t>(v)];
    sum += values[static_cast<std::size_t>(v)];
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw IoError("load_prior_file: entries sum to " + std::to_string(sum));
  for (double& x : p) x /= sum;
  return p;
}

void save_prior_file(const PoseDistribution& prior,
                     const std::filesystem::path& path) {
  require_valid_distribution(prior, "save_prior_file");
  std::ofstream out(path);
  if (!out) throw IoError("save_prior_file: cannot open " + path.string());
  out << "view,p\n";
  char buf[40];
  for (int v = 0; v < kNumViews; ++v) {
    std::snprintf(buf, sizeof(buf), "%.17g", prior[static_cast<std::size_t>(v)]);
    out << (v + 1) << "," << buf << "\n";
  }
}

}  // namespace posecal
