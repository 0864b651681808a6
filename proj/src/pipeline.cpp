#include "altinc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "altinc/error.hpp"
#include "altinc/log.hpp"
#include "altinc/models.hpp"
#include "altinc/pseudo.hpp"

namespace altinc::pipeline {

namespace {

constexpr const char* kManifest = "manifest.txt";

std::string numbered(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu%s", stem, i, ext);
  return buf;
}

fs::path source_dir(const fs::path& run, std::size_t i) { return run / "data" / ("source_" + std::to_string(i)); }
fs::path pretrain_file(const fs::path& run, std::size_t i) {
  return run / "pretrain" / ("source_" + std::to_string(i) + ".params");
}

void echo_config(const config::RunConfig& cfg, const fs::path& run) {
  fs::create_directories(run);
  io::write_file(run / "config.txt", config::to_text(cfg));
}

// A stage rewrites its whole directory so stale files from an earlier run
// cannot leak into its manifest.
fs::path fresh_stage_dir(const fs::path& dir) {
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir);
  return dir;
}

synth::DomainDataset load_target(const fs::path& run) {
  return synth::load_dataset(run / "data" / "target", synth::DomainKind::Target, "target");
}

std::vector<synth::DomainDataset> load_sources(const config::RunConfig& cfg, const fs::path& run) {
  std::vector<synth::DomainDataset> out;
  for (std::size_t i = 0; i < cfg.num_sources; ++i) {
    const auto dir = source_dir(run, i);
    if (!fs::exists(dir)) {
      throw StageError("gen artifacts missing: " + dir.string() + " (config asks for " +
                       std::to_string(cfg.num_sources) + " sources)");
    }
    out.push_back(synth::load_dataset(dir, synth::DomainKind::Source, "source_" + std::to_string(i)));
  }
  return out;
}

std::vector<train::SingleSourceModel> load_pretrained(const config::RunConfig& cfg, const fs::path& run) {
  std::vector<train::SingleSourceModel> out;
  for (std::size_t i = 0; i < cfg.num_sources; ++i) {
    const auto path = pretrain_file(run, i);
    if (!fs::exists(path)) throw StageError("pretrain artifacts missing: " + path.string());
    auto b = load_params(path, synth::kNumClosed, 1);
    out.push_back({std::move(b.seg), std::move(b.discriminators[0])});
  }
  return out;
}

train::EvalSpec eval_spec(const synth::DomainDataset& target) {
  train::EvalSpec e;
  e.gt = target.labels();
  return e;
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

void write_manifest(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel != kManifest) files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  std::string text;
  for (const auto& f : files) text += io::file_digest(dir / f) + "  " + f + "\n";
  io::write_file(dir / kManifest, text);
}

void check_manifest(const fs::path& dir, const std::string& stage) {
  const auto path = dir / kManifest;
  if (!fs::exists(path)) throw StageError(stage + " artifacts missing (no " + path.string() + ")");
  std::istringstream in(io::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto sep = line.find("  ");
    if (sep == std::string::npos) throw StageError(stage + " manifest is malformed: " + path.string());
    const auto file = dir / line.substr(sep + 2);
    if (!fs::exists(file)) throw StageError(stage + " artifacts missing: " + file.string());
    if (io::file_digest(file) != line.substr(0, sep)) {
      throw StageError(stage + " artifact changed since it was written: " + file.string());
    }
  }
}

Datasets generate_data(const config::RunConfig& cfg) {
  cfg.validate();
  Datasets d;
  for (std::size_t i = 0; i < cfg.num_sources; ++i) {
    d.sources.push_back(synth::generate_domain(cfg.source_scene(i), cfg.images_per_source,
                                               synth::DomainKind::Source, "source_" + std::to_string(i)));
  }
  const auto tcfg = cfg.target_scene();
  d.target = synth::generate_domain(tcfg, cfg.target_images, synth::DomainKind::Target, "target");
  if (tcfg.open.enabled) d.target = synth::inject_open_set(std::move(d.target), tcfg, &d.inject);
  return d;
}

void cmd_gen(const config::RunConfig& cfg, const fs::path& run_dir) {
  const auto d = generate_data(cfg);
  echo_config(cfg, run_dir);
  const auto data = fresh_stage_dir(run_dir / "data");
  for (std::size_t i = 0; i < d.sources.size(); ++i) synth::save_dataset(source_dir(run_dir, i), d.sources[i]);
  synth::save_dataset(data / "target", d.target);
  write_manifest(data);
  log::info("gen: " + std::to_string(d.sources.size()) + " sources, " + std::to_string(d.target.size()) +
            " target images");
  if (cfg.open.enabled) {
    log::info("gen: open-set objects in " + std::to_string(d.inject.injected) + " target images, " +
              std::to_string(d.inject.skipped_no_vehicle) + " selected images had no vehicle");
  }
}

void cmd_pretrain(const config::RunConfig& cfg, const fs::path& run_dir) {
  cfg.validate();
  check_manifest(run_dir / "data", "gen");
  echo_config(cfg, run_dir);
  const auto sources = load_sources(cfg, run_dir);
  const auto target = load_target(run_dir);
  const auto eval = eval_spec(target);
  const auto dir = fresh_stage_dir(run_dir / "pretrain");
  for (std::size_t i = 0; i < sources.size(); ++i) {
    auto m = train::pretrain_single_source(sources[i], target, cfg.train, i);
    const auto r = train::evaluate(train::predict_labels(m.seg, target.images()), eval);
    char buf[128];
    std::snprintf(buf, sizeof buf, "pretrain: source %zu target mIoU(shared) %.2f%%", i,
                  r.miou_shared ? 100.0 * *r.miou_shared : NAN);
    log::info(buf);
    save_params(ModelBundle{std::move(m.seg), {std::move(m.disc)}}, pretrain_file(run_dir, i));
  }
  write_manifest(dir);
}

select::DissimilarityReport cmd_select(const config::RunConfig& cfg, const fs::path& run_dir) {
  cfg.validate();
  check_manifest(run_dir / "pretrain", "pretrain");
  check_manifest(run_dir / "data", "gen");
  echo_config(cfg, run_dir);
  const auto pretrained = load_pretrained(cfg, run_dir);
  const auto target = load_target(run_dir);
  auto report = train::select_sources(pretrained, target, cfg.train);
  const auto dir = fresh_stage_dir(run_dir / "select");
  io::write_file(dir / "report.json", select::report_to_json(report));
  write_manifest(dir);
  log::info("select: best source " + std::to_string(report.best_source));
  return report;
}

std::string history_to_jsonl(const std::vector<train::RoundRecord>& history) {
  std::string out;
  for (const auto& r : history) {
    nlohmann::ordered_json j;
    j["round"] = r.round;
    j["churn"] = r.churn;
    j["loss_sup"] = r.loss_sup;
    j["loss_unsup"] = r.loss_unsup;
    j["loss_distil"] = r.loss_distil;
    j["loss_overall"] = r.loss_overall;
    j["loss_adv"] = r.loss_adv;
    j["loss_disc"] = r.loss_disc;
    j["miou_shared"] = opt_json(r.miou);
    j["accuracy"] = opt_json(r.accuracy);
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<train::RoundRecord> cmd_altinc(const config::RunConfig& cfg, const fs::path& run_dir) {
  cfg.validate();
  check_manifest(run_dir / "select", "select");
  check_manifest(run_dir / "pretrain", "pretrain");
  check_manifest(run_dir / "data", "gen");
  echo_config(cfg, run_dir);
  auto report = select::report_from_json(io::read_file(run_dir / "select" / "report.json"));
  const auto sources = load_sources(cfg, run_dir);
  const auto target = load_target(run_dir);
  const auto eval = eval_spec(target);
  const auto& tc = cfg.train;

  const auto dir = fresh_stage_dir(run_dir / "altinc");
  auto state = train::initialize_from_report(load_pretrained(cfg, run_dir), std::move(report), target);
  auto dump_round = [&](const train::AltIncState& s) {
    std::vector<LabelMap> labels;
    for (const auto& p : s.pseudo) labels.push_back(p.labels);
    write_label_dir(dir / "pseudo" / ("round_" + std::to_string(s.round)), labels);
    save_params(s.bundle, dir / ("round_" + std::to_string(s.round) + ".params"));
  };
  dump_round(state);
  const auto& best = sources.at(state.report.best_source);
  while (state.round < tc.max_rounds) {
    train::altinc_round(state, best, target, tc, &eval);
    dump_round(state);
    const auto& h = state.history.back();
    char buf[160];
    std::snprintf(buf, sizeof buf, "altinc: round %zu churn %.4f mIoU(shared) %.2f%%", h.round, h.churn,
                  h.miou ? 100.0 * *h.miou : NAN);
    log::info(buf);
    if (h.churn < tc.churn_epsilon) break;
  }
  io::write_file(dir / "history.jsonl", history_to_jsonl(state.history));

  std::vector<LabelMap> labels;
  fs::create_directories(dir / "final");
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto probs = state.bundle.seg.predict(target.scenes[i].image);
    io::save_probmap(dir / "final" / numbered("prob", i, ".altpm"), probs);
    labels.push_back(pseudo::generate_pseudo_labels(probs, state.round).labels);
  }
  write_label_dir(dir / "final", labels);
  write_manifest(dir);
  return state.history;
}

BoundlessSummary cmd_boundless(const config::RunConfig& cfg, const fs::path& run_dir) {
  cfg.validate();
  check_manifest(run_dir / "altinc", "altinc");
  echo_config(cfg, run_dir);
  const auto spec = cfg.open_set_spec();
  std::vector<ProbMap> probs;
  for (std::size_t i = 0;; ++i) {
    const auto p = run_dir / "altinc" / "final" / numbered("prob", i, ".altpm");
    if (!fs::exists(p)) break;
    probs.push_back(io::load_probmap(p));
  }
  if (probs.empty()) throw StageError("altinc artifacts missing: no final probability maps");
  std::vector<pseudo::PseudoLabels> y;
  for (const auto& p : probs) y.push_back(pseudo::generate_pseudo_labels(p));

  BoundlessSummary sum;
  auto tspec = spec;
  tspec.tau = pseudo::resolve_tau(y, spec.num_closed, cfg.train.tau_fraction);
  sum.tau = tspec.tau;
  std::vector<LabelMap> thr;
  for (const auto& yi : y) {
    pseudo::RelabelStats st;
    thr.push_back(pseudo::boundless_relabel(yi, tspec, &st));
    sum.threshold.relabeled += st.relabeled;
    sum.threshold.conflicts += st.conflicts;
  }
  // The KL variant needs a prototype for every grouped class; a model that
  // never predicts such a class leaves it undefined and the variant is skipped.
  std::vector<LabelMap> kl;
  std::string kl_error;
  try {
    const auto protos = pseudo::class_prototypes(probs, spec.num_closed, cfg.kl_confident_fraction);
    for (const auto& p : probs) {
      pseudo::RelabelStats st;
      kl.push_back(pseudo::kl_similarity_relabel(p, spec, protos, cfg.kl_kappa, &st));
      sum.kl.relabeled += st.relabeled;
      sum.kl.conflicts += st.conflicts;
    }
  } catch (const ValueError& e) {
    kl.clear();
    kl_error = e.what();
    log::error("boundless: KL relabeling skipped: " + kl_error);
  }

  const auto dir = fresh_stage_dir(run_dir / "boundless");
  write_label_dir(dir / "threshold", thr);
  if (!kl.empty()) write_label_dir(dir / "kl", kl);
  if (cfg.retrain_boundless) {
    check_manifest(run_dir / "data", "gen");
    const auto target = load_target(run_dir);
    std::vector<LabelMap> base;
    for (const auto& yi : y) base.push_back(yi.labels);
    std::size_t last = 0;  // the final Alt-Inc network is the last round checkpoint
    while (fs::exists(run_dir / "altinc" / ("round_" + std::to_string(last + 1) + ".params"))) ++last;
    const SegNet final_seg =
        load_params(run_dir / "altinc" / ("round_" + std::to_string(last) + ".params"), synth::kNumClosed,
                    cfg.num_sources)
            .seg;
    const SegNet wide = train::retrain_on_boundless(final_seg, spec.open.size(), target, thr, base, cfg.train);
    write_label_dir(dir / "retrained", train::predict_labels(wide, target.images()));
  }

  nlohmann::ordered_json j;
  j["tau_fraction"] = cfg.train.tau_fraction;
  nlohmann::json tau = nlohmann::json::array();
  for (const auto& t : sum.tau) tau.push_back(opt_json(t));
  j["tau"] = tau;
  j["threshold_relabeled"] = sum.threshold.relabeled;
  j["threshold_conflicts"] = sum.threshold.conflicts;
  j["kl_kappa"] = cfg.kl_kappa;
  j["kl_relabeled"] = sum.kl.relabeled;
  j["kl_conflicts"] = sum.kl.conflicts;
  if (!kl_error.empty()) j["kl_error"] = kl_error;
  io::write_file(dir / "report.json", j.dump(2) + "\n");
  write_manifest(dir);
  log::info("boundless: thresholding relabeled " + std::to_string(sum.threshold.relabeled) + " pixels, KL " +
            std::to_string(sum.kl.relabeled));
  return sum;
}

std::vector<NamedReport> cmd_eval(const config::RunConfig& cfg, const fs::path& run_dir,
                                  const std::optional<fs::path>& labels, const std::string& name) {
  cfg.validate();
  check_manifest(run_dir / "data", "gen");
  const auto target = load_target(run_dir);
  const auto spec = eval_spec(target);

  std::vector<std::pair<std::string, std::vector<LabelMap>>> dumps;
  if (labels) {
    if (fs::is_directory(*labels)) dumps.emplace_back(name, read_label_dir(*labels));
    else dumps.emplace_back(name, std::vector<LabelMap>{read_label_dump(*labels)});
  } else {
    const auto alt = run_dir / "altinc";
    if (!fs::exists(alt / kManifest)) throw StageError("altinc artifacts missing (nothing to evaluate)");
    check_manifest(alt, "altinc");
    dumps.emplace_back("best_source", read_label_dir(alt / "pseudo" / "round_0"));
    dumps.emplace_back("altinc", read_label_dir(alt / "final"));
    const auto bd = run_dir / "boundless";
    if (fs::exists(bd / kManifest)) {
      check_manifest(bd, "boundless");
      dumps.emplace_back("boundless_threshold", read_label_dir(bd / "threshold"));
      if (fs::exists(bd / "kl")) dumps.emplace_back("boundless_kl", read_label_dir(bd / "kl"));
      if (fs::exists(bd / "retrained")) dumps.emplace_back("boundless_retrained", read_label_dir(bd / "retrained"));
    }
  }

  fs::create_directories(run_dir / "eval");
  std::vector<NamedReport> out;
  std::string summary;
  for (const auto& [n, maps] : dumps) {
    if (maps.size() != target.size()) {
      throw ShapeError("eval " + n + ": " + std::to_string(maps.size()) + " label maps for " +
                       std::to_string(target.size()) + " target images");
    }
    auto r = train::evaluate(maps, spec);
    io::write_file(run_dir / "eval" / (n + ".txt"), metrics::format_table(r, synth::class_names()));
    io::write_file(run_dir / "eval" / (n + ".jsonl"), metrics::to_json_lines(r, synth::class_names()));
    nlohmann::ordered_json j;
    j["name"] = n;
    j["miou_shared"] = opt_json(r.miou_shared);
    j["miou_private"] = opt_json(r.miou_private);
    j["accuracy"] = r.accuracy;
    summary += j.dump() + "\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "eval: %-20s mIoU(S) %6.2f%%  mIoU(P) %6.2f%%  acc %6.2f%%", n.c_str(),
                  r.miou_shared ? 100.0 * *r.miou_shared : NAN, r.miou_private ? 100.0 * *r.miou_private : NAN,
                  100.0 * r.accuracy);
    log::info(buf);
    out.push_back({n, std::move(r)});
  }
  if (!labels) io::write_file(run_dir / "eval" / "summary.jsonl", summary);
  return out;
}

void cmd_run(const config::RunConfig& cfg, const fs::path& run_dir) {
  cmd_gen(cfg, run_dir);
  cmd_pretrain(cfg, run_dir);
  cmd_select(cfg, run_dir);
  cmd_altinc(cfg, run_dir);
  cmd_boundless(cfg, run_dir);
  cmd_eval(cfg, run_dir);
}

std::vector<io::Rgb8> default_render_palette() {
  std::vector<io::Rgb8> out;
  for (const auto& c : synth::default_palette()) {
    io::Rgb8 px{};
    for (int k = 0; k < 3; ++k) px[k] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(c[k], 0.0, 1.0)));
    out.push_back(px);
  }
  out.push_back({255, 200, 0});  // open class
  return out;
}

io::RgbImage render_labels(const LabelMap& labels, const std::vector<io::Rgb8>& palette) {
  io::RgbImage img{labels.height(), labels.width(), {}};
  img.pixels.reserve(labels.height() * labels.width());
  for (std::size_t y = 0; y < labels.height(); ++y) {
    for (std::size_t x = 0; x < labels.width(); ++x) {
      const auto c = labels.at(y, x);
      if (c >= palette.size()) {
        throw ValueError("class id " + std::to_string(c) + " at (" + std::to_string(y) + "," + std::to_string(x) +
                         ") is outside the " + std::to_string(palette.size()) + "-colour palette");
      }
      img.pixels.push_back(palette[c]);
    }
  }
  return img;
}

LabelMap read_label_dump(const fs::path& path) {
  const auto bytes = io::read_file(path);
  if (bytes.compare(0, io::kProbMapMagic.size(), io::kProbMapMagic) == 0) {
    return pseudo::generate_pseudo_labels(io::decode_probmap(bytes)).labels;
  }
  return io::decode_pgm(bytes);
}

std::vector<LabelMap> read_label_dir(const fs::path& dir) {
  std::vector<LabelMap> out;
  // dataset directories name their maps gt_NNNN.pgm
  const char* stem = fs::exists(dir / numbered("label", 0, ".pgm")) ? "label" : "gt";
  for (std::size_t i = 0;; ++i) {
    const auto p = dir / numbered(stem, i, ".pgm");
    if (!fs::exists(p)) break;
    out.push_back(io::read_pgm(p));
  }
  if (out.empty()) throw StageError("no label maps in " + dir.string());
  return out;
}

void write_label_dir(const fs::path& dir, const std::vector<LabelMap>& labels) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < labels.size(); ++i) io::write_pgm(dir / numbered("label", i, ".pgm"), labels[i]);
}

void cmd_render(const fs::path& input, const fs::path& out) {
  io::write_ppm(out, render_labels(read_label_dump(input), default_render_palette()));
}

}  // namespace altinc::pipeline
