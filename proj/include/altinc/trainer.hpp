#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "altinc/data_synth.hpp"
#include "altinc/losses.hpp"
#include "altinc/metrics.hpp"
#include "altinc/models.hpp"
#include "altinc/pseudo.hpp"
#include "altinc/source_select.hpp"

namespace altinc::train {

struct TrainConfig {
  std::uint64_t seed = 7;
  std::size_t pretrain_epochs = 2;
  std::size_t epochs_per_round = 3;
  std::size_t max_rounds = 4;
  double lr = 0.02;
  double disc_lr = 0.03;
  double momentum = 0.9;
  std::size_t batch_size = 4;
  losses::LossWeights weights{1.0, 0.5, 0.1};
  double lambda_adv = 0.01;
  losses::GanKind gan = losses::GanKind::Vanilla;
  double beta = 5.0;
  double churn_epsilon = 0.01;
  double tau_fraction = 0.85;
  double round_lr_decay = 0.5;  // round r trains at lr * decay^(r-1)

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// Segmentation network and discriminator trained on one source plus the target.
struct SingleSourceModel {
  SegNet seg;
  Discriminator disc;

  friend bool operator==(const SingleSourceModel&, const SingleSourceModel&) = default;
};

/// Ground truth used only for reporting; never enters a loss.
struct EvalSpec {
  std::vector<LabelMap> gt;
  std::size_t num_classes = synth::kNumClosed + 1;
  std::vector<std::size_t> shared{0, 1, 2, 3, 4};
  std::vector<std::size_t> private_classes{5};
};

metrics::EvalReport evaluate(std::span<const LabelMap> predictions, const EvalSpec& eval);
std::vector<LabelMap> predict_labels(const SegNet& seg, std::span<const Tensor> images);

/// Per batch: a segmentation step (supervised loss on source images plus
/// lambda_adv times the adversarial loss on target images), then a
/// discriminator step on the detached probability maps of that batch.
SingleSourceModel pretrain_single_source(const synth::DomainDataset& source, const synth::DomainDataset& target,
                                         const TrainConfig& cfg, std::size_t source_index);

struct RoundRecord {
  std::size_t round = 0;
  double churn = 0.0;
  double loss_sup = 0.0;
  double loss_unsup = 0.0;
  double loss_distil = 0.0;
  double loss_overall = 0.0;
  double loss_adv = 0.0;
  double loss_disc = 0.0;
  std::optional<double> miou;
  std::optional<double> accuracy;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct AltIncState {
  ModelBundle bundle;                  // seg: the Alt-Inc model; one discriminator per source
  std::vector<SegNet> source_models;   // frozen single-source networks
  select::DissimilarityReport report;
  std::vector<std::vector<ProbMap>> teacher_maps;  // [target image][teacher], aligned with report.teachers
  std::vector<pseudo::PseudoLabels> pseudo;        // targets for the next round
  std::size_t round = 0;
  std::vector<RoundRecord> history;
};

/// Dissimilarity of every pretrained source to the target and the resulting weights.
select::DissimilarityReport select_sources(const std::vector<SingleSourceModel>& pretrained,
                                           const synth::DomainDataset& target, const TrainConfig& cfg);
/// Round-0 state from an existing selection report.
AltIncState initialize_from_report(std::vector<SingleSourceModel> pretrained, select::DissimilarityReport report,
                                   const synth::DomainDataset& target);

/// Selects the best source from the pretrained discriminators, copies its
/// network into the Alt-Inc model and labels the target with it (round 0).
AltIncState initialize_best_source(std::vector<SingleSourceModel> pretrained, const synth::DomainDataset& target,
                                   const TrainConfig& cfg);
/// Pretrains every source first.
AltIncState initialize_best_source(const std::vector<synth::DomainDataset>& sources,
                                   const synth::DomainDataset& target, const TrainConfig& cfg);

/// Observes the pseudo labels handed to the unsupervised loss.
using PseudoTargetObserver = std::function<void(std::size_t target_index, const LabelMap& used)>;

/// One round: epochs_per_round epochs of the weighted supervised + pseudo-label
/// + distillation objective plus the adversarial pair, then regenerates the
/// pseudo labels and records churn.
void altinc_round(AltIncState& state, const synth::DomainDataset& best_source, const synth::DomainDataset& target,
                  const TrainConfig& cfg, const EvalSpec* eval = nullptr,
                  const PseudoTargetObserver& observer = nullptr);

struct AltIncResult {
  AltIncState state;
  std::vector<pseudo::PseudoLabels> final_labels;  // argmax labels and confidences of the final model
  std::vector<ProbMap> final_probs;
};

/// Rounds until churn < churn_epsilon or max_rounds rounds have run.
AltIncResult run_altinc(AltIncState state, const std::vector<synth::DomainDataset>& sources,
                        const synth::DomainDataset& target, const TrainConfig& cfg, const EvalSpec* eval = nullptr);

/// Optional extra pass on boundless labels: widens the head by `open_classes`
/// outputs and minimizes L_unsup(relabeled) + 0.5 * L_unsup(y_alt_inc).
SegNet retrain_on_boundless(const SegNet& seg, std::size_t open_classes, const synth::DomainDataset& target,
                            std::span<const LabelMap> relabeled, std::span<const LabelMap> alt_inc_labels,
                            const TrainConfig& cfg);

}  // namespace altinc::train
