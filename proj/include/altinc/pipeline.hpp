#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "altinc/config.hpp"
#include "altinc/io.hpp"
#include "altinc/metrics.hpp"
#include "altinc/source_select.hpp"
#include "altinc/trainer.hpp"

// File-based pipeline stages. Each stage reads its prerequisites from the run
// directory, checks their manifest, and writes its own artifacts + manifest.
//
//   data/{source_i,target}/   image_NNNN.bin, gt_NNNN.pgm
//   pretrain/source_i.params
//   select/report.json
//   altinc/round_R.params, altinc/pseudo/round_R/label_NNNN.pgm, altinc/history.jsonl,
//   altinc/final/{prob_NNNN.altpm,label_NNNN.pgm}
//   boundless/{threshold,kl}/label_NNNN.pgm, boundless/report.json
//   eval/<name>.txt, eval/<name>.jsonl
namespace altinc::pipeline {

namespace fs = std::filesystem;

/// Writes `manifest.txt` in `dir`: one "digest  relative/path" line per file, sorted.
void write_manifest(const fs::path& dir);
/// Throws StageError("<stage> artifacts missing") when the manifest is absent,
/// or naming the file whose digest no longer matches.
void check_manifest(const fs::path& dir, const std::string& stage);

struct Datasets {
  std::vector<synth::DomainDataset> sources;
  synth::DomainDataset target;  // open-set objects injected when cfg.open.enabled
  synth::InjectStats inject;
};
/// The datasets cmd_gen writes, built in memory.
Datasets generate_data(const config::RunConfig& cfg);

void cmd_gen(const config::RunConfig& cfg, const fs::path& run_dir);
void cmd_pretrain(const config::RunConfig& cfg, const fs::path& run_dir);
select::DissimilarityReport cmd_select(const config::RunConfig& cfg, const fs::path& run_dir);
std::vector<train::RoundRecord> cmd_altinc(const config::RunConfig& cfg, const fs::path& run_dir);

struct BoundlessSummary {
  pseudo::ClassThresholds tau;
  pseudo::RelabelStats threshold;
  pseudo::RelabelStats kl;
};
BoundlessSummary cmd_boundless(const config::RunConfig& cfg, const fs::path& run_dir);

struct NamedReport {
  std::string name;
  metrics::EvalReport report;
};
/// Without `labels`, evaluates every label dump the earlier stages produced.
/// With it, evaluates that directory (or single file for a one-image target) as `name`.
std::vector<NamedReport> cmd_eval(const config::RunConfig& cfg, const fs::path& run_dir,
                                  const std::optional<fs::path>& labels = std::nullopt,
                                  const std::string& name = "custom");

/// gen, pretrain, select, altinc, boundless, eval.
void cmd_run(const config::RunConfig& cfg, const fs::path& run_dir);

/// Label map or probability map (argmax) to a palette image.
void cmd_render(const fs::path& input, const fs::path& out);

std::vector<io::Rgb8> default_render_palette();
io::RgbImage render_labels(const LabelMap& labels, const std::vector<io::Rgb8>& palette);

/// Reads a PGM label map, or a probability map and takes its argmax.
LabelMap read_label_dump(const fs::path& path);
/// label_0000.pgm, label_0001.pgm, ... (or gt_NNNN.pgm) until the first gap.
std::vector<LabelMap> read_label_dir(const fs::path& dir);
void write_label_dir(const fs::path& dir, const std::vector<LabelMap>& labels);

std::string history_to_jsonl(const std::vector<train::RoundRecord>& history);

}  // namespace altinc::pipeline
