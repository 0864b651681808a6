#include "altinc/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "altinc/error.hpp"
#include "altinc/io.hpp"
#include "altinc/rng.hpp"

namespace altinc::synth {

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names{"road", "sky", "terrain", "vehicle", "building", "rickshaw"};
  return names;
}

std::array<Rgb, kNumClosed> default_palette() {
  return {{
      {0.35, 0.35, 0.38},  // road
      {0.55, 0.75, 0.95},  // sky
      {0.30, 0.55, 0.25},  // terrain
      {0.80, 0.15, 0.15},  // vehicle
      {0.60, 0.50, 0.40},  // building
  }};
}

std::vector<Tensor> DomainDataset::images() const {
  std::vector<Tensor> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(s.image);
  return out;
}

std::vector<LabelMap> DomainDataset::labels() const {
  std::vector<LabelMap> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(s.gt);
  return out;
}

namespace {

// Open-class colour direction: pushes red vehicles toward orange/yellow.
constexpr Rgb kOpenDirection{0.10, 0.95, 0.30};

void paint_pixel(Tensor& image, std::size_t y, std::size_t x, const Rgb& base, const Appearance& look, Rng& rng) {
  double stripe = 0.0;
  if (look.stripe_period > 0) stripe = ((x + y) / look.stripe_period) % 2 ? look.stripe_amplitude : -look.stripe_amplitude;
  for (std::size_t k = 0; k < 3; ++k) {
    double v = look.contrast * (base[k] + look.tint[k]) + look.brightness + stripe;
    if (look.noise_sigma > 0.0) v += look.noise_sigma * rng.normal();
    image.at(k, y, x) = std::clamp(v, 0.0, 1.0);
  }
}

void check_config(const SceneConfig& cfg) {
  if (cfg.height < 8 || cfg.width < 8) {
    throw ValueError("image " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width) +
                     " too small for the scene layout (need at least 8x8)");
  }
  const auto& a = cfg.appearance;
  if (!(a.noise_sigma >= 0.0) || !std::isfinite(a.noise_sigma)) throw ValueError("noise sigma must be >= 0");
  for (const auto& rgb : a.base) {
    for (double v : rgb) {
      if (!std::isfinite(v)) throw ValueError("appearance colours must be finite");
    }
  }
  if (!std::isfinite(a.brightness) || !std::isfinite(a.contrast)) throw ValueError("appearance must be finite");
  const auto& l = cfg.layout;
  if (!(l.horizon_min > 0.0 && l.horizon_min <= l.horizon_max && l.horizon_max < 1.0)) {
    throw ValueError("horizon fractions must satisfy 0 < min <= max < 1");
  }
  if (l.vehicles_min > l.vehicles_max) throw ValueError("vehicle count range is empty");
}

Scene make_scene(const SceneConfig& cfg, std::size_t index) {
  const std::size_t h = cfg.height, w = cfg.width;
  Rng rng(cfg.seed, "scene/" + std::to_string(index));
  Scene s{Tensor({3, h, w}), LabelMap(h, w, kSky), {}};

  const auto horizon =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(rng.uniform(cfg.layout.horizon_min, cfg.layout.horizon_max) *
                                                                   static_cast<double>(h))),
                              2, h - 3);
  // Road: trapezoid widening toward the bottom edge.
  const double center = rng.uniform(0.3, 0.7) * static_cast<double>(w);
  const double top_half = rng.uniform(0.5, 2.0);
  const double bottom_half = rng.uniform(0.25, 0.45) * static_cast<double>(w);
  for (std::size_t y = horizon; y < h; ++y) {
    const double t = static_cast<double>(y - horizon) / static_cast<double>(h - 1 - horizon);
    const double half = top_half + t * (bottom_half - top_half);
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = std::abs(static_cast<double>(x) + 0.5 - center);
      s.gt.at(y, x) = dx <= half ? kRoad : kTerrain;
    }
  }

  if (rng.bernoulli(cfg.layout.building_probability)) {
    const auto count = rng.uniform_int(1, 2);
    for (std::int64_t b = 0; b < count; ++b) {
      const std::size_t bw = static_cast<std::size_t>(rng.uniform_int(4, std::max<std::int64_t>(4, static_cast<std::int64_t>(w / 3))));
      const std::size_t bh = static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(horizon) - 1));
      const std::size_t x0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(w - bw)));
      for (std::size_t y = horizon - bh; y < horizon; ++y) {
        for (std::size_t x = x0; x < x0 + bw; ++x) s.gt.at(y, x) = kBuilding;
      }
    }
  }

  const auto vehicles = rng.uniform_int(static_cast<std::int64_t>(cfg.layout.vehicles_min),
                                        static_cast<std::int64_t>(cfg.layout.vehicles_max));
  for (std::int64_t v = 0; v < vehicles; ++v) {
    const std::size_t vw = static_cast<std::size_t>(rng.uniform_int(4, std::max<std::int64_t>(4, static_cast<std::int64_t>(w / 4))));
    const std::size_t vh = static_cast<std::size_t>(rng.uniform_int(3, std::max<std::int64_t>(3, static_cast<std::int64_t>(h / 6))));
    const std::size_t bottom = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(std::min(horizon + vh / 2 + 1, h)), static_cast<std::int64_t>(h)));
    const std::size_t top = bottom >= vh ? bottom - vh : 0;
    const std::size_t x0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(w - vw)));
    Rect r{top, x0, bottom, x0 + vw};
    for (std::size_t y = r.y0; y < r.y1; ++y) {
      for (std::size_t x = r.x0; x < r.x1; ++x) s.gt.at(y, x) = kVehicle;
    }
    s.vehicles.push_back(r);
  }

  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) paint_pixel(s.image, y, x, cfg.appearance.base[s.gt.at(y, x)], cfg.appearance, rng);
  }
  return s;
}

}  // namespace

DomainDataset generate_domain(const SceneConfig& cfg, std::size_t n_images, DomainKind kind, std::string name) {
  if (n_images == 0) throw ValueError("n_images must be at least 1");
  check_config(cfg);
  DomainDataset ds;
  ds.name = std::move(name);
  ds.kind = kind;
  for (std::uint8_t c = 0; c < kNumClosed; ++c) ds.classes.push_back(c);
  if (kind == DomainKind::Target && cfg.open.enabled) ds.classes.push_back(kOpenClass);
  ds.scenes.reserve(n_images);
  for (std::size_t i = 0; i < n_images; ++i) ds.scenes.push_back(make_scene(cfg, i));
  return ds;
}

DomainDataset inject_open_set(DomainDataset ds, const SceneConfig& cfg, InjectStats* stats) {
  if (ds.kind != DomainKind::Target) throw ValueError("open-set objects may only be injected into a target domain");
  InjectStats local;
  const auto& look = cfg.appearance;
  const double norm = std::sqrt(kOpenDirection[0] * kOpenDirection[0] + kOpenDirection[1] * kOpenDirection[1] +
                                kOpenDirection[2] * kOpenDirection[2]);
  Rgb open_base = look.base[cfg.open.similar_class];
  for (std::size_t k = 0; k < 3; ++k) open_base[k] += cfg.open.perturbation * kOpenDirection[k] / norm;

  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    Rng rng(cfg.seed, "open/" + std::to_string(i));
    if (!rng.bernoulli(cfg.open.probability)) continue;
    ++local.selected;
    Scene& s = ds.scenes[i];
    if (s.vehicles.empty()) {
      ++local.skipped_no_vehicle;
      continue;
    }
    const Rect r = s.vehicles[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(s.vehicles.size()) - 1))];
    std::size_t painted = 0;
    for (std::size_t y = r.y0; y < r.y1; ++y) {
      for (std::size_t x = r.x0; x < r.x1; ++x) {
        if (s.gt.at(y, x) != cfg.open.similar_class) continue;
        s.gt.at(y, x) = kOpenClass;
        paint_pixel(s.image, y, x, open_base, look, rng);
        ++painted;
      }
    }
    if (painted > 0) {
      ++local.injected;
    } else {
      ++local.skipped_no_vehicle;
    }
  }
  if (std::find(ds.classes.begin(), ds.classes.end(), kOpenClass) == ds.classes.end()) ds.classes.push_back(kOpenClass);
  if (stats) *stats = local;
  return ds;
}

Appearance shifted_appearance(const Appearance& base, double amount, std::size_t variant) {
  Appearance a = base;
  switch (variant % 3) {
    case 0:  // brighter and warmer
      a.brightness += amount;
      a.tint = {a.tint[0] + 0.5 * amount, a.tint[1], a.tint[2] - 0.5 * amount};
      break;
    case 1:  // darker, bluish, lower contrast
      a.brightness -= 0.6 * amount;
      a.contrast *= 1.0 - 0.5 * amount;
      a.tint = {a.tint[0] - 0.3 * amount, a.tint[1], a.tint[2] + 0.6 * amount};
      break;
    default:  // noisy and striped
      a.noise_sigma += 0.25 * amount;
      a.stripe_period = 3;
      a.stripe_amplitude += 0.5 * amount;
      a.tint = {a.tint[0], a.tint[1] + 0.4 * amount, a.tint[2]};
      break;
  }
  return a;
}

RiggedFixture rigged_target_source(const SceneConfig& target_cfg, std::vector<Appearance> source_looks,
                                   std::size_t twin, std::size_t n_images) {
  if (source_looks.size() < 2) throw ValueError("rigged fixture needs at least 2 sources");
  if (twin >= source_looks.size()) throw ValueError("twin index out of range");
  source_looks[twin] = target_cfg.appearance;
  RiggedFixture f;
  for (std::size_t i = 0; i < source_looks.size(); ++i) {
    SceneConfig cfg = target_cfg;
    cfg.open.enabled = false;
    cfg.appearance = source_looks[i];
    cfg.seed = stream_seed(target_cfg.seed, "rigged/source_" + std::to_string(i));
    f.sources.push_back(generate_domain(cfg, n_images, DomainKind::Source, "source_" + std::to_string(i)));
  }
  f.target = generate_domain(target_cfg, n_images, DomainKind::Target, "target");
  if (target_cfg.open.enabled) f.target = inject_open_set(std::move(f.target), target_cfg);
  return f;
}

namespace {
std::string indexed(const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu%s", prefix, i, ext);
  return buf;
}
}  // namespace

void save_dataset(const std::filesystem::path& dir, const DomainDataset& ds) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    io::ParamFile f{kImageFileHash, {{"image", ds.scenes[i].image}}};
    io::write_param_file(dir / indexed("image", i, ".bin"), f);
    io::write_pgm(dir / indexed("gt", i, ".pgm"), ds.scenes[i].gt);
  }
}

DomainDataset load_dataset(const std::filesystem::path& dir, DomainKind kind, std::string name) {
  DomainDataset ds;
  ds.name = std::move(name);
  ds.kind = kind;
  for (std::size_t i = 0;; ++i) {
    const auto img_path = dir / indexed("image", i, ".bin");
    if (!std::filesystem::exists(img_path)) break;
    const auto f = io::read_param_file(img_path);
    if (f.config_hash != kImageFileHash || f.records.size() != 1 || f.records[0].tensor.rank() != 3) {
      throw FormatError(img_path.string() + " is not an image record file");
    }
    Scene s{f.records[0].tensor, io::read_pgm(dir / indexed("gt", i, ".pgm")), {}};
    ds.scenes.push_back(std::move(s));
  }
  if (ds.scenes.empty()) throw FormatError("no images found in " + dir.string());
  std::uint8_t max_label = 0;
  for (const auto& s : ds.scenes) {
    for (auto l : s.gt.labels()) {
      if (l != kIgnoreLabel) max_label = std::max(max_label, l);
    }
  }
  for (std::uint8_t c = 0; c < kNumClosed; ++c) ds.classes.push_back(c);
  if (kind == DomainKind::Target && max_label >= kNumClosed) ds.classes.push_back(kOpenClass);
  return ds;
}

}  // namespace altinc::synth
