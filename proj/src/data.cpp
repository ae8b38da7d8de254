#include "iaunet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "iaunet/image_io.hpp"
#include "json.hpp"

namespace iaunet::data {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

MaskGrid rasterize_polygon(const Polygon& polygon, int height, int width) {
  if (polygon.size() < 3)
    throw ValidationError(msg("polygon has ", polygon.size(),
                              " vertices, need at least 3"));
  MaskGrid mask(height, width);
  const std::size_t edges = polygon.size();
  std::vector<double> crossings;
  for (int y = 0; y < height; ++y) {
    const double yc = y + 0.5;
    crossings.clear();
    for (std::size_t i = 0; i < edges; ++i) {
      const auto& p1 = polygon[i];
      const auto& p2 = polygon[(i + 1) % edges];
      const double y1 = p1[1], y2 = p2[1];
      // half-open edge rule keeps vertex hits counted exactly once
      if ((y1 <= yc && yc < y2) || (y2 <= yc && yc < y1))
        crossings.push_back(p1[0] + (yc - y1) * (p2[0] - p1[0]) / (y2 - y1));
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      const int x_lo = std::max(
          0, static_cast<int>(std::ceil(crossings[k] - 0.5)));
      const int x_hi = std::min(
          width - 1, static_cast<int>(std::ceil(crossings[k + 1] - 0.5)) - 1);
      for (int x = x_lo; x <= x_hi; ++x) mask.set(y, x, 1);
    }
  }
  if (mask.empty_mask())
    throw ValidationError(
        "polygon rasterizes to an empty mask (degenerate or out of bounds)");
  return mask;
}

double polygon_area(const Polygon& polygon) {
  double twice = 0.0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = polygon[i];
    const auto& b = polygon[(i + 1) % n];
    twice += a[0] * b[1] - b[0] * a[1];
  }
  return std::fabs(twice) / 2.0;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

struct CellShape {
  double cx, cy;       // center
  double a, b;         // semi-axes
  double theta;        // rotation
  double wobble_c[3];  // low-order radial Fourier coefficients
  double wobble_p[3];
  double dip, halo;

  double radius_factor(double ang) const {
    double r = 1.0;
    for (int j = 0; j < 3; ++j)
      r += wobble_c[j] * std::cos((j + 1) * ang + wobble_p[j]);
    return r;
  }

  Polygon polygon(int vertices) const {
    Polygon poly;
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int k = 0; k < vertices; ++k) {
      const double ang = 2.0 * kPi * k / vertices;
      const double r = radius_factor(ang);
      const double u = a * r * std::cos(ang);
      const double v = b * r * std::sin(ang);
      poly.push_back({cx + ct * u - st * v, cy + st * u + ct * v});
    }
    return poly;
  }

  // Normalized radial position of a pixel: 1.0 sits on the wobbled boundary.
  double norm_radius(double px, double py) const {
    const double ct = std::cos(theta), st = std::sin(theta);
    const double dx = px - cx, dy = py - cy;
    const double u = ct * dx + st * dy;
    const double v = -st * dx + ct * dy;
    const double t = std::sqrt((u / a) * (u / a) + (v / b) * (v / b));
    if (t < 1e-12) return 0.0;
    const double ang = std::atan2(v / b, u / a);
    return t / std::max(0.3, radius_factor(ang));
  }
};

double overlap_fraction(const MaskGrid& candidate, const MaskGrid& existing) {
  std::int64_t inter = 0;
  for (std::size_t i = 0; i < candidate.values.size(); ++i)
    inter += (candidate.values[i] && existing.values[i]) ? 1 : 0;
  return static_cast<double>(inter) /
         static_cast<double>(std::max<std::int64_t>(candidate.area(), 1));
}

void shade_cell(std::vector<double>& intensity, int h, int w,
                const CellShape& cell, double interior_sign) {
  const double reach = 1.35 * std::max(cell.a, cell.b);
  const int y0 = std::max(0, static_cast<int>(cell.cy - reach));
  const int y1 = std::min(h - 1, static_cast<int>(cell.cy + reach));
  const int x0 = std::max(0, static_cast<int>(cell.cx - reach));
  const int x1 = std::min(w - 1, static_cast<int>(cell.cx + reach));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double t = cell.norm_radius(x + 0.5, y + 0.5);
      double& px = intensity[static_cast<std::size_t>(y) * w + x];
      if (t < 1.0)
        px += interior_sign * cell.dip * (1.0 - t * t);
      const double rim = (t - 1.0) / 0.12;
      px += cell.halo * std::exp(-rim * rim) * 0.5;
    }
}

}  // namespace

SceneSample generate_scene(const SceneSpec& spec) {
  Rng rng(spec.seed);
  const int h = spec.height, w = spec.width;

  std::vector<double> intensity(static_cast<std::size_t>(h) * w);
  const double slope_x = rng.uniform(-0.04, 0.04);
  const double slope_y = rng.uniform(-0.04, 0.04);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      intensity[static_cast<std::size_t>(y) * w + x] =
          spec.background + slope_x * (static_cast<double>(x) / w - 0.5) +
          slope_y * (static_cast<double>(y) / h - 0.5);

  AnnotationRecord record;
  record.height = h;
  record.width = w;

  const int target = rng.uniform_int(spec.min_instances, spec.max_instances);
  std::vector<CellShape> placed;
  for (int inst = 0; inst < target; ++inst) {
    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      CellShape cell;
      const double max_fit = std::max(
          2.0, std::min(spec.max_axis, std::min(h, w) / 2.8));
      const double lo = std::min(spec.min_axis, max_fit);
      cell.a = rng.uniform(lo, max_fit);
      cell.b = rng.uniform(lo, max_fit);
      cell.theta = rng.uniform(0.0, kPi);
      for (int j = 0; j < 3; ++j) {
        cell.wobble_c[j] = rng.uniform(0.0, 0.10 / (j + 1));
        cell.wobble_p[j] = rng.uniform(0.0, 2.0 * kPi);
      }
      cell.dip = rng.uniform(0.20, 0.34);
      cell.halo = rng.uniform(0.05, 0.12);
      const double margin = 1.3 * std::max(cell.a, cell.b) + 1.0;
      if (2.0 * margin >= w || 2.0 * margin >= h) continue;
      cell.cx = rng.uniform(margin, w - margin);
      cell.cy = rng.uniform(margin, h - margin);

      Polygon poly = cell.polygon(28);
      MaskGrid mask;
      try {
        mask = rasterize_polygon(poly, h, w);
      } catch (const ValidationError&) {
        continue;
      }
      bool ok = true;
      for (const auto& other : record.instances)
        if (overlap_fraction(mask, other.mask) > spec.overlap_allowance) {
          ok = false;
          break;
        }
      if (!ok) continue;

      shade_cell(intensity, h, w, cell, -1.0);
      Instance instance;
      instance.class_id = 0;
      instance.polygon = std::move(poly);
      instance.mask = std::move(mask);
      record.instances.push_back(std::move(instance));
      placed.push_back(cell);
      accepted = true;
    }
    // placement can fail under a tight overlap budget; the record keeps
    // whatever actually fit
  }

  if (spec.num_classes == 2) {
    for (const auto& cell : placed) {
      CellShape nucleus = cell;
      nucleus.a = std::max(1.8, cell.a * 0.4);
      nucleus.b = std::max(1.8, cell.b * 0.4);
      nucleus.dip = rng.uniform(0.12, 0.2);
      nucleus.halo = 0.0;
      for (int j = 0; j < 3; ++j) nucleus.wobble_c[j] *= 0.5;
      Polygon poly = nucleus.polygon(20);
      MaskGrid mask;
      try {
        mask = rasterize_polygon(poly, h, w);
      } catch (const ValidationError&) {
        continue;
      }
      shade_cell(intensity, h, w, nucleus, -1.0);
      Instance instance;
      instance.class_id = 1;
      instance.polygon = std::move(poly);
      instance.mask = std::move(mask);
      record.instances.push_back(std::move(instance));
    }
  }

  std::vector<double> image(3 * intensity.size());
  for (std::size_t i = 0; i < intensity.size(); ++i) {
    const double v =
        std::clamp(intensity[i] + rng.normal(0.0, spec.noise_level), 0.0, 1.0);
    image[i] = v;
    image[intensity.size() + i] = v;
    image[2 * intensity.size() + i] = v;
  }

  SceneSample sample;
  sample.image = Tensor::from_data({3, h, w}, std::move(image));
  sample.record = std::move(record);
  return sample;
}

namespace {

// Plain-array bilinear resize with half-pixel centers (data path only; the
// differentiable 2x op lives with the tensor primitives).
std::vector<double> resize_bilinear(const double* src, int h, int w, int oh,
                                    int ow) {
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    const double sy = (y + 0.5) * h / oh - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fy = std::clamp(sy - std::floor(sy), 0.0, 1.0);
    for (int x = 0; x < ow; ++x) {
      const double sx = (x + 0.5) * w / ow - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const double fx = std::clamp(sx - std::floor(sx), 0.0, 1.0);
      const double top = src[y0 * w + x0] * (1 - fx) + src[y0 * w + x1] * fx;
      const double bot = src[y1 * w + x0] * (1 - fx) + src[y1 * w + x1] * fx;
      out[static_cast<std::size_t>(y) * ow + x] = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

MaskGrid resize_nearest(const MaskGrid& src, int oh, int ow) {
  MaskGrid out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    const int sy = std::clamp(
        static_cast<int>(std::floor((y + 0.5) * src.height / oh)), 0,
        src.height - 1);
    for (int x = 0; x < ow; ++x) {
      const int sx = std::clamp(
          static_cast<int>(std::floor((x + 0.5) * src.width / ow)), 0,
          src.width - 1);
      out.set(y, x, src.at(sy, sx));
    }
  }
  return out;
}

Polygon transform_polygon(const Polygon& poly, double sy, double sx,
                          double off_y, double off_x, bool flip_h, bool flip_v,
                          int out_h, int out_w) {
  Polygon out;
  for (const auto& p : poly) {
    double x = (p[0] + 0.5) * sx - 0.5 - off_x;
    double y = (p[1] + 0.5) * sy - 0.5 - off_y;
    if (flip_h) x = out_w - x;
    if (flip_v) y = out_h - y;
    out.push_back({x, y});
  }
  return out;
}

void flip_plane(std::vector<double>& v, int h, int w, bool flip_h,
                bool flip_v) {
  if (flip_h)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w / 2; ++x)
        std::swap(v[static_cast<std::size_t>(y) * w + x],
                  v[static_cast<std::size_t>(y) * w + (w - 1 - x)]);
  if (flip_v)
    for (int y = 0; y < h / 2; ++y)
      for (int x = 0; x < w; ++x)
        std::swap(v[static_cast<std::size_t>(y) * w + x],
                  v[static_cast<std::size_t>(h - 1 - y) * w + x]);
}

void flip_mask(MaskGrid& m, bool flip_h, bool flip_v) {
  if (flip_h)
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width / 2; ++x) {
        auto tmp = m.at(y, x);
        m.set(y, x, m.at(y, m.width - 1 - x));
        m.set(y, m.width - 1 - x, tmp);
      }
  if (flip_v)
    for (int y = 0; y < m.height / 2; ++y)
      for (int x = 0; x < m.width; ++x) {
        auto tmp = m.at(y, x);
        m.set(y, x, m.at(m.height - 1 - y, x));
        m.set(m.height - 1 - y, x, tmp);
      }
}

}  // namespace

AugmentParams sample_augment(Rng& rng, int height, int width, int out_size) {
  AugmentParams p;
  p.scale = rng.uniform(0.8, 1.5);
  const int sh = std::max(1, static_cast<int>(std::lround(height * p.scale)));
  const int sw = std::max(1, static_cast<int>(std::lround(width * p.scale)));
  const int lo_y = std::min(0, sh - out_size), hi_y = std::max(0, sh - out_size);
  const int lo_x = std::min(0, sw - out_size), hi_x = std::max(0, sw - out_size);
  p.offset_y = rng.uniform_int(lo_y, hi_y);
  p.offset_x = rng.uniform_int(lo_x, hi_x);
  p.flip_h = rng.bernoulli(0.5);
  p.flip_v = rng.bernoulli(0.5);
  return p;
}

SceneSample apply_augment(const SceneSample& sample, const AugmentParams& p,
                          int out_size) {
  const int h = sample.record.height, w = sample.record.width;
  const int sh = std::max(1, static_cast<int>(std::lround(h * p.scale)));
  const int sw = std::max(1, static_cast<int>(std::lround(w * p.scale)));
  const int out = out_size;

  // scale
  const std::int64_t in_plane = static_cast<std::int64_t>(h) * w;
  std::vector<std::vector<double>> scaled(3);
  for (int c = 0; c < 3; ++c)
    scaled[c] = resize_bilinear(sample.image.data() + c * in_plane, h, w, sh,
                                sw);
  MaskGrid base_valid = sample.validity.values.empty()
                            ? MaskGrid()
                            : resize_nearest(sample.validity, sh, sw);

  // crop / pad onto the output canvas
  std::vector<double> canvas(3 * static_cast<std::size_t>(out) * out, 0.0);
  MaskGrid validity(out, out);
  for (int y = 0; y < out; ++y) {
    const int sy = y + p.offset_y;
    if (sy < 0 || sy >= sh) continue;
    for (int x = 0; x < out; ++x) {
      const int sx = x + p.offset_x;
      if (sx < 0 || sx >= sw) continue;
      for (int c = 0; c < 3; ++c)
        canvas[(static_cast<std::size_t>(c) * out + y) * out + x] =
            scaled[c][static_cast<std::size_t>(sy) * sw + sx];
      const bool valid =
          base_valid.values.empty() || base_valid.at(sy, sx) != 0;
      validity.set(y, x, valid ? 1 : 0);
    }
  }
  for (int c = 0; c < 3; ++c) {
    std::vector<double> plane(canvas.begin() + c * out * out,
                              canvas.begin() + (c + 1) * out * out);
    flip_plane(plane, out, out, p.flip_h, p.flip_v);
    std::copy(plane.begin(), plane.end(), canvas.begin() + c * out * out);
  }
  flip_mask(validity, p.flip_h, p.flip_v);

  SceneSample result;
  result.image = Tensor::from_data({3, out, out}, std::move(canvas));
  result.record.image_id = sample.record.image_id;
  result.record.height = out;
  result.record.width = out;
  result.validity = std::move(validity);

  const double fy = static_cast<double>(sh) / h;
  const double fx = static_cast<double>(sw) / w;
  for (const auto& inst : sample.record.instances) {
    MaskGrid scaled_mask = resize_nearest(inst.mask, sh, sw);
    MaskGrid cropped(out, out);
    for (int y = 0; y < out; ++y) {
      const int sy = y + p.offset_y;
      if (sy < 0 || sy >= sh) continue;
      for (int x = 0; x < out; ++x) {
        const int sx = x + p.offset_x;
        if (sx < 0 || sx >= sw) continue;
        cropped.set(y, x, scaled_mask.at(sy, sx));
      }
    }
    flip_mask(cropped, p.flip_h, p.flip_v);
    if (cropped.empty_mask()) continue;  // fell outside the crop
    Instance out_inst;
    out_inst.class_id = inst.class_id;
    out_inst.mask = std::move(cropped);
    out_inst.polygon =
        transform_polygon(inst.polygon, fy, fx, p.offset_y, p.offset_x,
                          p.flip_h, p.flip_v, out, out);
    result.record.instances.push_back(std::move(out_inst));
  }
  return result;
}

SceneSample resize_to_train(const SceneSample& sample, int train_size) {
  const int h = sample.record.height, w = sample.record.width;
  if (h == train_size && w == train_size) return sample;
  const double factor = static_cast<double>(train_size) / std::max(h, w);
  AugmentParams p;
  p.scale = factor;
  p.offset_y = 0;
  p.offset_x = 0;
  return apply_augment(sample, p, train_size);
}

void save_dataset(const std::string& root,
                  const std::vector<SceneSample>& samples) {
  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "annotations");
  for (const auto& s : samples) {
    imageio::write_ppm((fs::path(root) / "images" / (s.record.image_id + ".ppm"))
                           .string(),
                       s.image);
    ordered_json j;
    j["image_id"] = s.record.image_id;
    j["height"] = s.record.height;
    j["width"] = s.record.width;
    j["instances"] = ordered_json::array();
    for (const auto& inst : s.record.instances) {
      ordered_json ji;
      ji["class_id"] = inst.class_id;
      ji["polygon"] = ordered_json::array();
      for (const auto& pt : inst.polygon)
        ji["polygon"].push_back({pt[0], pt[1]});
      j["instances"].push_back(std::move(ji));
    }
    std::ofstream os(fs::path(root) / "annotations" /
                     (s.record.image_id + ".json"));
    if (!os) throw IoError(msg("cannot write annotation for ",
                               s.record.image_id));
    os << j.dump(2) << "\n";
  }
}

std::vector<SceneSample> load_dataset(const std::string& root) {
  const fs::path images = fs::path(root) / "images";
  std::vector<SceneSample> out;
  if (!fs::exists(images)) return out;

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(images))
    if (entry.path().extension() == ".ppm") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<std::string> problems;
  for (const auto& img_path : files) {
    const std::string id = img_path.stem().string();
    const fs::path anno = fs::path(root) / "annotations" / (id + ".json");
    if (!fs::exists(anno)) {
      problems.push_back(msg(id, ": missing annotation file"));
      continue;
    }
    SceneSample sample;
    try {
      sample.image = imageio::read_ppm(img_path.string());
    } catch (const Error& e) {
      problems.push_back(msg(id, ": ", e.what()));
      continue;
    }
    ordered_json j;
    try {
      std::ifstream is(anno);
      j = ordered_json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      problems.push_back(msg(id, ": malformed JSON (", e.what(), ")"));
      continue;
    }
    try {
      sample.record.image_id = j.at("image_id").get<std::string>();
      sample.record.height = j.at("height").get<int>();
      sample.record.width = j.at("width").get<int>();
      int index = 0;
      for (const auto& ji : j.at("instances")) {
        Instance inst;
        inst.class_id = ji.at("class_id").get<int>();
        for (const auto& pt : ji.at("polygon"))
          inst.polygon.push_back({pt.at(0).get<double>(),
                                  pt.at(1).get<double>()});
        if (inst.polygon.size() < 3) {
          problems.push_back(
              msg(id, ": instance ", index, " has ", inst.polygon.size(),
                  " polygon points, need at least 3"));
        } else {
          try {
            inst.mask = rasterize_polygon(inst.polygon, sample.record.height,
                                          sample.record.width);
            sample.record.instances.push_back(std::move(inst));
          } catch (const ValidationError& e) {
            problems.push_back(msg(id, ": instance ", index, ": ", e.what()));
          }
        }
        ++index;
      }
    } catch (const nlohmann::json::exception& e) {
      problems.push_back(msg(id, ": invalid annotation schema (", e.what(),
                             ")"));
      continue;
    }
    out.push_back(std::move(sample));
  }
  if (!problems.empty()) {
    std::string all = msg("dataset '", root, "' has ", problems.size(),
                          " problem(s):");
    for (const auto& p : problems) all += "\n  " + p;
    throw ValidationError(all);
  }
  return out;
}

std::vector<SceneSample> generate_dataset(const SceneSpec& base,
                                          std::uint64_t seed, int count) {
  std::vector<SceneSample> out;
  for (int i = 0; i < count; ++i) {
    SceneSpec spec = base;
    spec.seed = Rng::mix(seed, static_cast<std::uint64_t>(i));
    SceneSample s = generate_scene(spec);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%04d", i);
    s.record.image_id = buf;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace iaunet::data
