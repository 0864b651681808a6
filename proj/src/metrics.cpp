#include "altinc/metrics.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

#include "altinc/error.hpp"

namespace altinc::metrics {

std::uint64_t ConfusionMatrix::row_sum(std::size_t gt) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < n_; ++p) s += at(gt, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::uint64_t s = 0;
  for (std::size_t g = 0; g < n_; ++g) s += at(g, pred);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto v : counts_) s += v;
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t c = 0; c < n_; ++c) s += at(c, c);
  return s;
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw ShapeError("confusion: prediction " + std::to_string(pred.height()) + "x" + std::to_string(pred.width()) +
                     " vs ground truth " + std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  }
  for (std::size_t y = 0; y < gt.height(); ++y) {
    for (std::size_t x = 0; x < gt.width(); ++x) {
      const auto g = gt.at(y, x), p = pred.at(y, x);
      if (g == kIgnoreLabel || p == kIgnoreLabel) continue;
      if (g >= n_ || p >= n_) {
        throw ValueError("confusion: label " + std::to_string(g >= n_ ? g : p) + " at pixel (" + std::to_string(y) +
                         "," + std::to_string(x) + ") outside [0," + std::to_string(n_) + ")");
      }
      ++at(g, p);
    }
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw ShapeError("confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, std::size_t num_classes) {
  ConfusionMatrix m(num_classes);
  m.accumulate(pred, gt);
  return m;
}

std::optional<double> mean_iou(const EvalReport& report, std::span<const std::size_t> classes) {
  double s = 0.0;
  std::size_t n = 0;
  for (auto c : classes) {
    if (c < report.iou.size() && report.iou[c]) {
      s += *report.iou[c];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

EvalReport iou_report(const ConfusionMatrix& m, std::span<const std::size_t> shared,
                      std::span<const std::size_t> private_classes) {
  const std::size_t n = m.num_classes();
  if (n == 0 || m.total() == 0) throw ValueError("iou_report on an empty confusion matrix");
  std::set<std::size_t> seen;
  for (auto c : shared) seen.insert(c);
  for (auto c : private_classes) {
    if (!seen.insert(c).second) throw ValueError("class " + std::to_string(c) + " is both shared and private");
  }
  if (seen.size() != n || (!seen.empty() && *seen.rbegin() != n - 1)) {
    throw ValueError("shared and private class sets must cover all " + std::to_string(n) + " class ids");
  }

  EvalReport r;
  r.confusion = m;
  r.shared.assign(shared.begin(), shared.end());
  r.private_classes.assign(private_classes.begin(), private_classes.end());
  r.iou.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    const std::uint64_t tp = m.at(c, c);
    const std::uint64_t denom = m.row_sum(c) + m.col_sum(c) - tp;
    if (denom > 0) r.iou[c] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  r.miou_shared = mean_iou(r, r.shared);
  r.miou_private = mean_iou(r, r.private_classes);
  r.accuracy = static_cast<double>(m.trace()) / static_cast<double>(m.total());
  return r;
}

namespace {

std::string class_name(std::span<const std::string> names, std::size_t c) {
  return c < names.size() ? names[c] : "class" + std::to_string(c);
}

std::string pct(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
  return buf;
}

}  // namespace

std::string format_table(const EvalReport& report, std::span<const std::string> class_names) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-4s %-12s %-8s %10s\n", "id", "class", "kind", "IoU(%)");
  os << line;
  std::set<std::size_t> priv(report.private_classes.begin(), report.private_classes.end());
  for (std::size_t c = 0; c < report.iou.size(); ++c) {
    std::snprintf(line, sizeof line, "%-4zu %-12s %-8s %10s\n", c, class_name(class_names, c).c_str(),
                  priv.count(c) ? "private" : "shared", pct(report.iou[c]).c_str());
    os << line;
  }
  std::snprintf(line, sizeof line, "%-26s %10s\n", "mIoU(shared)", pct(report.miou_shared).c_str());
  os << line;
  std::snprintf(line, sizeof line, "%-26s %10s\n", "mIoU(private)", pct(report.miou_private).c_str());
  os << line;
  std::snprintf(line, sizeof line, "%-26s %10s\n", "pixel accuracy", pct(report.accuracy).c_str());
  os << line;
  os << "(undefined classes are absent from both prediction and ground truth and excluded from means)\n";
  return os.str();
}

std::string to_json_lines(const EvalReport& report, std::span<const std::string> class_names) {
  std::set<std::size_t> priv(report.private_classes.begin(), report.private_classes.end());
  std::string out;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  for (std::size_t c = 0; c < report.iou.size(); ++c) {
    nlohmann::ordered_json j;
    j["record"] = "class";
    j["id"] = c;
    j["name"] = class_name(class_names, c);
    j["kind"] = priv.count(c) ? "private" : "shared";
    j["iou"] = opt(report.iou[c]);
    j["gt_pixels"] = report.confusion.row_sum(c);
    j["pred_pixels"] = report.confusion.col_sum(c);
    out += j.dump() + "\n";
  }
  nlohmann::ordered_json s;
  s["record"] = "summary";
  s["miou_shared"] = opt(report.miou_shared);
  s["miou_private"] = opt(report.miou_private);
  s["accuracy"] = report.accuracy;
  s["pixels"] = report.confusion.total();
  out += s.dump() + "\n";
  return out;
}

}  // namespace altinc::metrics
