#include "altinc/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "altinc/error.hpp"
#include "altinc/io.hpp"
#include "altinc/rng.hpp"

namespace altinc {

namespace {

// Uniform(-bound, bound) kernel with bound = gain * sqrt(3 / fan_in).
Tensor uniform_kernel(Shape shape, double gain, std::uint64_t seed, std::string_view stream) {
  Tensor t(std::move(shape));
  const double fan_in = static_cast<double>(t.dim(1) * t.dim(2) * t.dim(3));
  const double bound = gain * std::sqrt(3.0 / fan_in);
  Rng rng(seed, stream);
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

std::vector<ad::Var> bind_params(const ad::ParameterList& params, ad::Tape& tape, bool trainable) {
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(trainable ? tape.variable(p.value) : tape.constant(p.value));
  return vars;
}

void check_bound(std::span<const ad::Var> bound, std::size_t expected, const char* what) {
  if (bound.size() != expected) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(expected) + " bound parameters, got " +
                     std::to_string(bound.size()));
  }
}

bool same_params(const ad::ParameterList& a, const ad::ParameterList& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || !(a[i].value == b[i].value)) return false;
  }
  return true;
}

const double kReluGain = std::sqrt(2.0);
const double kLeakyGain = std::sqrt(2.0 / (1.0 + Discriminator::kLeakySlope * Discriminator::kLeakySlope));

}  // namespace

SegNet::SegNet(std::size_t num_classes, std::uint64_t seed) : num_classes_(num_classes) {
  if (num_classes < 2) throw ValueError("segmentation network needs at least 2 classes");
  const std::size_t c = num_classes, h = kHidden, in = kInputChannels;
  // Hidden layers: Kaiming-uniform for relu. Output head: gain 1/sqrt(3), i.e. bound 1/sqrt(fan_in).
  params_ = {
      {"conv1.weight", uniform_kernel({h, in, 3, 3}, kReluGain, seed, "segnet/conv1")},
      {"conv1.bias", Tensor({h}, 0.0)},
      {"conv2.weight", uniform_kernel({h, h, 3, 3}, kReluGain, seed, "segnet/conv2")},
      {"conv2.bias", Tensor({h}, 0.0)},
      {"head.weight", uniform_kernel({c, h, 1, 1}, 1.0 / std::sqrt(3.0), seed, "segnet/head")},
      {"head.bias", Tensor({c}, 0.0)},
  };
}

std::vector<ad::Var> SegNet::bind(ad::Tape& tape, bool trainable) const { return bind_params(params_, tape, trainable); }

ad::Var SegNet::forward(std::span<const ad::Var> bound, ad::Var image) const {
  check_bound(bound, params_.size(), "SegNet");
  const Tensor& x = image.value();
  if (x.rank() != 3 || x.dim(0) != kInputChannels) {
    throw ShapeError("SegNet expects a [3,h,w] image, got " + shape_to_string(x.shape()));
  }
  if (x.dim(1) < 3 || x.dim(2) < 3) throw ShapeError("SegNet needs h,w >= 3, got " + shape_to_string(x.shape()));
  auto a = ad::relu(ad::conv2d(image, bound[0], bound[1], 1, 1));
  a = ad::relu(ad::conv2d(a, bound[2], bound[3], 1, 1));
  return ad::conv2d(a, bound[4], bound[5], 1, 0);
}

Tensor SegNet::logits(const Tensor& image) const {
  ad::Tape tape;
  const auto bound = bind(tape, false);
  return forward(bound, tape.constant(image)).value();
}

ProbMap SegNet::predict(const Tensor& image) const {
  ad::Tape tape;
  const auto bound = bind(tape, false);
  return ProbMap(ad::softmax_channels(forward(bound, tape.constant(image))).value(), 1e-9);
}

SegNet SegNet::widened(std::size_t extra) const {
  SegNet out = *this;
  out.num_classes_ = num_classes_ + extra;
  const Tensor& w = params_[4].value;
  Tensor nw({out.num_classes_, kHidden, 1, 1}, 0.0);
  std::copy(w.values().begin(), w.values().end(), nw.values().begin());
  Tensor nb({out.num_classes_}, 0.0);
  std::copy(params_[5].value.values().begin(), params_[5].value.values().end(), nb.values().begin());
  out.params_[4].value = std::move(nw);
  out.params_[5].value = std::move(nb);
  return out;
}

bool operator==(const SegNet& a, const SegNet& b) {
  return a.num_classes_ == b.num_classes_ && same_params(a.params_, b.params_);
}

Discriminator::Discriminator(std::size_t num_classes, std::uint64_t seed) : num_classes_(num_classes) {
  if (num_classes < 2) throw ValueError("discriminator needs at least 2 input classes");
  const std::size_t c = num_classes, h = kHidden;
  params_ = {
      {"conv1.weight", uniform_kernel({h, c, 3, 3}, kLeakyGain, seed, "disc/conv1")},
      {"conv1.bias", Tensor({h}, 0.0)},
      {"conv2.weight", uniform_kernel({h, h, 3, 3}, kLeakyGain, seed, "disc/conv2")},
      {"conv2.bias", Tensor({h}, 0.0)},
      {"head.weight", uniform_kernel({1, h, 1, 1}, 1.0 / std::sqrt(3.0), seed, "disc/head")},
      {"head.bias", Tensor({1}, 0.0)},
  };
}

std::vector<ad::Var> Discriminator::bind(ad::Tape& tape, bool trainable) const {
  return bind_params(params_, tape, trainable);
}

ad::Var Discriminator::forward(std::span<const ad::Var> bound, ad::Var probs) const {
  check_bound(bound, params_.size(), "Discriminator");
  const Tensor& p = probs.value();
  if (p.rank() != 3 || p.dim(0) != num_classes_) {
    throw ShapeError("Discriminator expects [" + std::to_string(num_classes_) + ",h,w] input, got " +
                     shape_to_string(p.shape()));
  }
  auto a = ad::leaky_relu(ad::conv2d(probs, bound[0], bound[1], 2, 1), kLeakySlope);
  a = ad::leaky_relu(ad::conv2d(a, bound[2], bound[3], 2, 1), kLeakySlope);
  return ad::conv2d(a, bound[4], bound[5], 1, 0);
}

Tensor Discriminator::logits(const ProbMap& probs) const {
  ad::Tape tape;
  const auto bound = bind(tape, false);
  return forward(bound, tape.constant(probs.tensor())).value();
}

bool operator==(const Discriminator& a, const Discriminator& b) {
  return a.num_classes_ == b.num_classes_ && same_params(a.params_, b.params_);
}

std::uint64_t model_config_hash(std::size_t num_classes, std::size_t num_discriminators) {
  const std::string canonical = "segnet:3-16-16-" + std::to_string(num_classes) + "/k3p1,k3p1,k1|disc:" +
                                std::to_string(num_classes) + "-8-8-1/k3s2p1,k3s2p1,k1/lrelu0.2|discs=" +
                                std::to_string(num_discriminators);
  return fnv1a64(canonical);
}

std::uint64_t ModelBundle::config_hash() const { return model_config_hash(num_classes(), discriminators.size()); }

void save_params(const ModelBundle& bundle, const std::filesystem::path& path) {
  io::ParamFile file;
  file.config_hash = bundle.config_hash();
  for (const auto& p : bundle.seg.params()) file.records.push_back({"seg/" + p.name, p.value});
  for (std::size_t i = 0; i < bundle.discriminators.size(); ++i) {
    for (const auto& p : bundle.discriminators[i].params()) {
      file.records.push_back({"disc" + std::to_string(i) + "/" + p.name, p.value});
    }
  }
  io::write_param_file(path, file);
}

ModelBundle load_params(const std::filesystem::path& path, std::size_t num_classes, std::size_t num_discriminators) {
  const io::ParamFile file = io::read_param_file(path);
  const std::uint64_t expected = model_config_hash(num_classes, num_discriminators);
  if (file.config_hash != expected) {
    throw FormatError("parameter file " + path.string() + ": config hash " + io::hex64(file.config_hash) +
                      " does not match expected " + io::hex64(expected));
  }
  std::map<std::string, const Tensor*> by_name;
  for (const auto& rec : file.records) {
    if (!by_name.emplace(rec.name, &rec.tensor).second) {
      throw FormatError("parameter file " + path.string() + ": duplicate record '" + rec.name + "'");
    }
  }
  ModelBundle bundle;
  bundle.seg = SegNet(num_classes, 0);
  bundle.discriminators.assign(num_discriminators, Discriminator(num_classes, 0));
  std::size_t consumed = 0;
  auto fill = [&](ad::ParameterList& params, const std::string& prefix) {
    for (auto& p : params) {
      const auto it = by_name.find(prefix + p.name);
      if (it == by_name.end()) throw FormatError("parameter file " + path.string() + ": missing '" + prefix + p.name + "'");
      if (it->second->shape() != p.value.shape()) {
        throw FormatError("parameter file " + path.string() + ": '" + it->first + "' has shape " +
                          shape_to_string(it->second->shape()) + ", expected " + shape_to_string(p.value.shape()));
      }
      p.value = *it->second;
      ++consumed;
    }
  };
  fill(bundle.seg.params(), "seg/");
  for (std::size_t i = 0; i < num_discriminators; ++i) {
    fill(bundle.discriminators[i].params(), "disc" + std::to_string(i) + "/");
  }
  if (consumed != file.records.size()) throw FormatError("parameter file " + path.string() + ": unexpected records");
  return bundle;
}

}  // namespace altinc
