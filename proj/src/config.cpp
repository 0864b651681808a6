#include "altinc/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "altinc/error.hpp"
#include "altinc/io.hpp"
#include "altinc/rng.hpp"

namespace altinc::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  }
  return out;
}

long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not an integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean (true/false)");
}

synth::Rgb to_rgb(const std::string& key, const std::string& v) {
  synth::Rgb out{};
  std::stringstream ss(v);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ',')) {
    if (i == 3) throw ConfigError(key + ": expected three comma-separated numbers");
    out[i++] = to_double(key, trim(part));
  }
  if (i != 3) throw ConfigError(key + ": expected three comma-separated numbers");
  return out;
}

struct Field {
  std::string key;
  std::string doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define ALTINC_FIELD(KEY, DOC, MEMBER, PARSE, PRINT)                                                   \
  Field {                                                                                              \
    KEY, DOC, [](RunConfig& c, const std::string& v) { c.MEMBER = PARSE; },                            \
        [](const RunConfig& c) { return PRINT; }                                                       \
  }

const std::vector<Field>& fields() {
  using std::to_string;
  static const std::vector<Field> table = {
      ALTINC_FIELD("seed", "run seed; every random stream derives from it", seed, to_u64("seed", v), to_string(c.seed)),
      ALTINC_FIELD("num_sources", "number of labeled source domains (>= 2)", num_sources, to_u64("num_sources", v),
                   to_string(c.num_sources)),
      ALTINC_FIELD("images_per_source", "images generated per source domain", images_per_source,
                   to_u64("images_per_source", v), to_string(c.images_per_source)),
      ALTINC_FIELD("target_images", "images generated for the target domain", target_images, to_u64("target_images", v),
                   to_string(c.target_images)),
      ALTINC_FIELD("image_height", "scene height in pixels (>= 8)", image_height, to_u64("image_height", v),
                   to_string(c.image_height)),
      ALTINC_FIELD("image_width", "scene width in pixels (>= 8)", image_width, to_u64("image_width", v),
                   to_string(c.image_width)),
      ALTINC_FIELD("twin_source", "source index that copies the target appearance, -1 for none", twin_source,
                   to_long("twin_source", v), to_string(c.twin_source)),
      ALTINC_FIELD("source_shift", "appearance shift magnitude of non-twin sources", source_shift,
                   to_double("source_shift", v), fmt(c.source_shift)),
      ALTINC_FIELD("layout.horizon_min", "lowest horizon position (fraction of height)", layout.horizon_min,
                   to_double("layout.horizon_min", v), fmt(c.layout.horizon_min)),
      ALTINC_FIELD("layout.horizon_max", "highest horizon position (fraction of height)", layout.horizon_max,
                   to_double("layout.horizon_max", v), fmt(c.layout.horizon_max)),
      ALTINC_FIELD("layout.vehicles_min", "minimum vehicles per scene", layout.vehicles_min,
                   to_u64("layout.vehicles_min", v), to_string(c.layout.vehicles_min)),
      ALTINC_FIELD("layout.vehicles_max", "maximum vehicles per scene", layout.vehicles_max,
                   to_u64("layout.vehicles_max", v), to_string(c.layout.vehicles_max)),
      ALTINC_FIELD("layout.building_probability", "probability that a scene has buildings",
                   layout.building_probability, to_double("layout.building_probability", v),
                   fmt(c.layout.building_probability)),
      ALTINC_FIELD("open.enabled", "inject open-set objects into the target domain", open.enabled,
                   to_bool("open.enabled", v), std::string(c.open.enabled ? "true" : "false")),
      ALTINC_FIELD("open.probability", "per-image probability of converting a vehicle", open.probability,
                   to_double("open.probability", v), fmt(c.open.probability)),
      ALTINC_FIELD("open.perturbation", "colour distance of open objects from the vehicle colour", open.perturbation,
                   to_double("open.perturbation", v), fmt(c.open.perturbation)),
      ALTINC_FIELD("open.similar_class", "closed class the open class resembles", open.similar_class,
                   static_cast<std::uint8_t>(to_u64("open.similar_class", v)), to_string(c.open.similar_class)),
      ALTINC_FIELD("pretrain_epochs", "epochs of single-source adversarial pretraining", train.pretrain_epochs,
                   to_u64("pretrain_epochs", v), to_string(c.train.pretrain_epochs)),
      ALTINC_FIELD("epochs_per_round", "epochs per Alt-Inc round", train.epochs_per_round, to_u64("epochs_per_round", v),
                   to_string(c.train.epochs_per_round)),
      ALTINC_FIELD("max_rounds", "upper bound on Alt-Inc rounds", train.max_rounds, to_u64("max_rounds", v),
                   to_string(c.train.max_rounds)),
      ALTINC_FIELD("lr", "segmentation network learning rate", train.lr, to_double("lr", v), fmt(c.train.lr)),
      ALTINC_FIELD("disc_lr", "discriminator learning rate", train.disc_lr, to_double("disc_lr", v),
                   fmt(c.train.disc_lr)),
      ALTINC_FIELD("momentum", "SGD momentum", train.momentum, to_double("momentum", v), fmt(c.train.momentum)),
      ALTINC_FIELD("batch_size", "source/target image pairs per step", train.batch_size, to_u64("batch_size", v),
                   to_string(c.train.batch_size)),
      Field{"lambda_sup", "weight of the supervised loss",
            [](RunConfig& c, const std::string& v) {
              c.train.weights = losses::LossWeights(to_double("lambda_sup", v), c.train.weights.unsup(),
                                                    c.train.weights.distil());
            },
            [](const RunConfig& c) { return fmt(c.train.weights.sup()); }},
      Field{"lambda_unsup", "weight of the pseudo-label loss",
            [](RunConfig& c, const std::string& v) {
              c.train.weights = losses::LossWeights(c.train.weights.sup(), to_double("lambda_unsup", v),
                                                    c.train.weights.distil());
            },
            [](const RunConfig& c) { return fmt(c.train.weights.unsup()); }},
      Field{"lambda_distil", "weight of the multi-source distillation loss",
            [](RunConfig& c, const std::string& v) {
              c.train.weights = losses::LossWeights(c.train.weights.sup(), c.train.weights.unsup(),
                                                    to_double("lambda_distil", v));
            },
            [](const RunConfig& c) { return fmt(c.train.weights.distil()); }},
      ALTINC_FIELD("lambda_adv", "weight of the adversarial segmentation loss", train.lambda_adv,
                   to_double("lambda_adv", v), fmt(c.train.lambda_adv)),
      ALTINC_FIELD("gan", "adversarial loss: vanilla or lsgan", train.gan, losses::parse_gan_kind(v),
                   std::string(losses::to_string(c.train.gan))),
      ALTINC_FIELD("beta", "sharpness of the dissimilarity-to-weight softmax", train.beta, to_double("beta", v),
                   fmt(c.train.beta)),
      ALTINC_FIELD("churn_epsilon", "stop when the pseudo-label churn falls below this", train.churn_epsilon,
                   to_double("churn_epsilon", v), fmt(c.train.churn_epsilon)),
      ALTINC_FIELD("tau_fraction", "open-set threshold as a fraction of each class's max confidence",
                   train.tau_fraction, to_double("tau_fraction", v), fmt(c.train.tau_fraction)),
      ALTINC_FIELD("round_lr_decay", "learning-rate factor applied per Alt-Inc round after the first",
                   train.round_lr_decay, to_double("round_lr_decay", v), fmt(c.train.round_lr_decay)),
      ALTINC_FIELD("kl_kappa", "KL relabeling: divergence above which a pixel becomes open", kl_kappa,
                   to_double("kl_kappa", v), fmt(c.kl_kappa)),
      ALTINC_FIELD("kl_confident_fraction", "KL relabeling: confidence fraction for class prototypes",
                   kl_confident_fraction, to_double("kl_confident_fraction", v), fmt(c.kl_confident_fraction)),
      ALTINC_FIELD("retrain_boundless", "retrain on the relabeled maps after boundless relabeling", retrain_boundless,
                   to_bool("retrain_boundless", v), std::string(c.retrain_boundless ? "true" : "false")),
  };
  return table;
}

#undef ALTINC_FIELD

const std::vector<std::string>& appearance_keys() {
  static const std::vector<std::string> keys{"brightness",   "contrast",         "noise_sigma",
                                             "stripe_period", "stripe_amplitude", "tint"};
  return keys;
}

void set_appearance(AppearanceOverrides& o, const std::string& key, const std::string& name, const std::string& v) {
  if (name == "brightness") o.brightness = to_double(key, v);
  else if (name == "contrast") o.contrast = to_double(key, v);
  else if (name == "noise_sigma") o.noise_sigma = to_double(key, v);
  else if (name == "stripe_period") o.stripe_period = to_u64(key, v);
  else if (name == "stripe_amplitude") o.stripe_amplitude = to_double(key, v);
  else if (name == "tint") o.tint = to_rgb(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

// Splits "source12.brightness" into (12, "brightness").
std::optional<std::pair<std::size_t, std::string>> source_key(const std::string& key) {
  if (key.rfind("source", 0) != 0) return std::nullopt;
  const auto dot = key.find('.');
  if (dot == std::string::npos || dot == 6) return std::nullopt;
  const std::string digits = key.substr(6, dot - 6);
  std::size_t idx = 0;
  const auto r = std::from_chars(digits.data(), digits.data() + digits.size(), idx);
  if (r.ec != std::errc() || r.ptr != digits.data() + digits.size()) return std::nullopt;
  return std::make_pair(idx, key.substr(dot + 1));
}

void append_look(std::ostringstream& os, const std::string& prefix, const synth::Appearance& a) {
  os << prefix << "brightness = " << fmt(a.brightness) << "\n";
  os << prefix << "contrast = " << fmt(a.contrast) << "\n";
  os << prefix << "noise_sigma = " << fmt(a.noise_sigma) << "\n";
  os << prefix << "stripe_period = " << a.stripe_period << "\n";
  os << prefix << "stripe_amplitude = " << fmt(a.stripe_amplitude) << "\n";
  os << prefix << "tint = " << fmt(a.tint[0]) << "," << fmt(a.tint[1]) << "," << fmt(a.tint[2]) << "\n";
}

}  // namespace

synth::Appearance AppearanceOverrides::apply(synth::Appearance look) const {
  if (brightness) look.brightness = *brightness;
  if (contrast) look.contrast = *contrast;
  if (noise_sigma) look.noise_sigma = *noise_sigma;
  if (stripe_period) look.stripe_period = *stripe_period;
  if (stripe_amplitude) look.stripe_amplitude = *stripe_amplitude;
  if (tint) look.tint = *tint;
  return look;
}

synth::SceneConfig RunConfig::target_scene() const {
  synth::SceneConfig s;
  s.height = image_height;
  s.width = image_width;
  s.layout = layout;
  s.open = open;
  s.appearance = target_look.apply(synth::Appearance{});
  s.seed = stream_seed(seed, "data/target");
  return s;
}

synth::SceneConfig RunConfig::source_scene(std::size_t i) const {
  synth::SceneConfig s = target_scene();
  s.open.enabled = false;
  s.seed = stream_seed(seed, "data/source_" + std::to_string(i));
  synth::Appearance look = twin_source == static_cast<long>(i)
                               ? s.appearance
                               : synth::shifted_appearance(s.appearance, source_shift, i);
  if (i < source_looks.size()) look = source_looks[i].apply(look);
  s.appearance = look;
  return s;
}

pseudo::OpenSetSpec RunConfig::open_set_spec() const {
  pseudo::OpenSetSpec spec;
  spec.num_closed = synth::kNumClosed;
  spec.open.push_back({synth::kOpenClass, {open.similar_class}});
  return spec;
}

void RunConfig::validate() const {
  if (num_sources < 2) throw ConfigError("num_sources: multi-source adaptation needs at least 2 sources");
  if (images_per_source == 0) throw ConfigError("images_per_source: n_images must be at least 1");
  if (target_images == 0) throw ConfigError("target_images: n_images must be at least 1");
  if (image_height < 8 || image_width < 8) throw ConfigError("image_height/image_width: must be at least 8");
  if (twin_source < -1 || twin_source >= static_cast<long>(num_sources)) {
    throw ConfigError("twin_source: must be -1 or a source index");
  }
  if (source_looks.size() > num_sources) {
    throw ConfigError("source" + std::to_string(source_looks.size() - 1) + ".*: index beyond num_sources");
  }
  if (open.similar_class >= synth::kNumClosed) throw ConfigError("open.similar_class: must be a closed class id");
  if (!(open.probability >= 0.0 && open.probability <= 1.0)) throw ConfigError("open.probability: must lie in [0,1]");
  if (!(kl_kappa >= 0.0)) throw ConfigError("kl_kappa: must be non-negative");
  if (!(kl_confident_fraction > 0.0 && kl_confident_fraction <= 1.0)) {
    throw ConfigError("kl_confident_fraction: must lie in (0,1]");
  }
  train.validate();
}

void set(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      try {
        f.set(cfg, value);
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        throw ConfigError(key + ": " + e.what());
      }
      return;
    }
  }
  if (key.rfind("target.", 0) == 0) {
    set_appearance(cfg.target_look, key, key.substr(7), value);
    return;
  }
  if (const auto sk = source_key(key)) {
    if (sk->first >= 64) throw ConfigError("unknown config key '" + key + "'");
    if (cfg.source_looks.size() <= sk->first) cfg.source_looks.resize(sk->first + 1);
    set_appearance(cfg.source_looks[sk->first], key, sk->second, value);
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("duplicate config key '" + key + "'");
    set(cfg, key, value);
  }
  return cfg;
}

RunConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  return parse(io::read_file(path));
}

std::string to_text(const RunConfig& cfg) {
  std::ostringstream os;
  os << "# resolved altinc configuration\n";
  for (const auto& f : fields()) os << f.key << " = " << f.get(cfg) << "\n";
  append_look(os, "target.", cfg.target_scene().appearance);
  for (std::size_t i = 0; i < cfg.num_sources; ++i) {
    append_look(os, "source" + std::to_string(i) + ".", cfg.source_scene(i).appearance);
  }
  return os.str();
}

std::vector<KeyDoc> documented_keys() {
  const RunConfig defaults;
  std::vector<KeyDoc> out;
  for (const auto& f : fields()) out.push_back({f.key, f.get(defaults), f.doc});
  for (const auto& name : appearance_keys()) {
    out.push_back({"target." + name, "(palette default)", "target-domain appearance: " + name});
    out.push_back({"source<i>." + name, "(derived from source_shift)", "appearance of source i: " + name});
  }
  return out;
}

}  // namespace altinc::config
