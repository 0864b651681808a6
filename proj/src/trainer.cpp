#include "altinc/trainer.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "altinc/error.hpp"
#include "altinc/rng.hpp"

namespace altinc::train {

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
  if (epochs_per_round == 0) fail("epochs_per_round", "must be positive");
  if (max_rounds == 0) fail("max_rounds", "must be positive");
  if (batch_size == 0) fail("batch_size", "must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr", "must be finite and non-negative");
  if (!(disc_lr >= 0.0) || !std::isfinite(disc_lr)) fail("disc_lr", "must be finite and non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must lie in [0,1)");
  if (!(lambda_adv >= 0.0) || !std::isfinite(lambda_adv)) fail("lambda_adv", "must be finite and non-negative");
  if (!(beta > 0.0) || !std::isfinite(beta)) fail("beta", "must be positive");
  if (!(churn_epsilon > 0.0 && churn_epsilon <= 1.0)) fail("churn_epsilon", "must lie in (0,1]");
  if (!(tau_fraction > 0.0 && tau_fraction <= 1.0)) fail("tau_fraction", "must lie in (0,1]");
  if (!(round_lr_decay > 0.0 && round_lr_decay <= 1.0)) fail("round_lr_decay", "must lie in (0,1]");
}

namespace {

std::vector<Tensor> grads_of(const ad::Tape& tape, std::span<const ad::Var> vars) {
  std::vector<Tensor> g;
  g.reserve(vars.size());
  for (auto v : vars) g.push_back(tape.grad(v));
  return g;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  return idx;
}

// Target images handed out in shuffled passes, reshuffled whenever exhausted.
class TargetCursor {
 public:
  TargetCursor(std::size_t n, Rng& rng) : n_(n), rng_(rng) {}
  std::size_t next() {
    if (pos_ == order_.size()) {
      order_ = shuffled(n_, rng_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::size_t n_;
  Rng& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

// What the segmentation step optimizes on the target side beyond the adversarial term.
struct TargetTerms {
  const std::vector<pseudo::PseudoLabels>* pseudo = nullptr;
  const std::vector<std::vector<ProbMap>>* teachers = nullptr;
  const std::vector<double>* weights = nullptr;
  const PseudoTargetObserver* observer = nullptr;
};

struct StepTotals {
  double sup = 0, unsup = 0, distil = 0, overall = 0, adv = 0, disc = 0;
  std::size_t steps = 0;

  void add(const StepTotals& o) {
    sup += o.sup;
    unsup += o.unsup;
    distil += o.distil;
    overall += o.overall;
    adv += o.adv;
    disc += o.disc;
    ++steps;
  }
};

// One segmentation update followed by one discriminator update.
StepTotals adversarial_step(SegNet& seg, Discriminator& disc, ad::Sgd& seg_opt, ad::Sgd& disc_opt,
                            const synth::DomainDataset& source, std::span<const std::size_t> source_batch,
                            const synth::DomainDataset& target, std::span<const std::size_t> target_batch,
                            const TrainConfig& cfg, const losses::LossWeights& lw, const TargetTerms& terms) {
  StepTotals out;
  const double inv_batch = 1.0 / static_cast<double>(source_batch.size());
  std::vector<Tensor> source_probs, target_probs;

  {
    ad::Tape tape;
    const auto seg_vars = seg.bind(tape, true);
    const auto disc_vars = disc.bind(tape, false);
    ad::Var total = tape.constant(Tensor::scalar(0.0));
    for (std::size_t b = 0; b < source_batch.size(); ++b) {
      const auto& s = source.scenes[source_batch[b]];
      const std::size_t ti = target_batch[b];
      const auto& t = target.scenes[ti];

      const ad::Var ps = ad::softmax_channels(seg.forward(seg_vars, tape.constant(s.image)));
      const ad::Var pt = ad::softmax_channels(seg.forward(seg_vars, tape.constant(t.image)));
      source_probs.push_back(ps.value());
      target_probs.push_back(pt.value());

      const ad::Var sup = losses::loss_sup(ps, s.gt);
      ad::Var unsup = tape.constant(Tensor::scalar(0.0));
      ad::Var distil = tape.constant(Tensor::scalar(0.0));
      if (terms.pseudo && lw.unsup() > 0.0) {
        const LabelMap& targets = (*terms.pseudo)[ti].labels;
        if (terms.observer && *terms.observer) (*terms.observer)(ti, targets);
        unsup = losses::loss_unsup(pt, targets);
      }
      if (terms.teachers && lw.distil() > 0.0) {
        distil = losses::loss_distil(pt, (*terms.teachers)[ti], *terms.weights);
      }
      const ad::Var overall = losses::loss_overall(sup, unsup, distil, lw);
      total = ad::add(total, overall);
      out.sup += sup.value().item();
      out.unsup += unsup.value().item();
      out.distil += distil.value().item();
      out.overall += overall.value().item();
      if (cfg.lambda_adv > 0.0) {
        const ad::Var adv = losses::loss_adv(disc.forward(disc_vars, pt), cfg.gan);
        total = ad::add(total, ad::scale(adv, cfg.lambda_adv));
        out.adv += adv.value().item();
      }
    }
    const ad::Var loss = ad::scale(total, inv_batch);
    tape.backward(loss);
    seg_opt.step(seg.params(), grads_of(tape, seg_vars));
  }

  {
    ad::Tape tape;
    const auto disc_vars = disc.bind(tape, true);
    ad::Var total = tape.constant(Tensor::scalar(0.0));
    for (std::size_t b = 0; b < source_probs.size(); ++b) {
      const ad::Var ds = disc.forward(disc_vars, tape.constant(std::move(source_probs[b])));
      const ad::Var dt = disc.forward(disc_vars, tape.constant(std::move(target_probs[b])));
      const ad::Var l = losses::loss_disc(ds, dt, cfg.gan);
      out.disc += l.value().item();
      total = ad::add(total, l);
    }
    tape.backward(ad::scale(total, inv_batch));
    disc_opt.step(disc.params(), grads_of(tape, disc_vars));
  }

  for (double* v : {&out.sup, &out.unsup, &out.distil, &out.overall, &out.adv, &out.disc}) *v *= inv_batch;
  return out;
}

// Runs `epochs` passes over `source`, pairing each source image with a target image.
StepTotals run_epochs(SegNet& seg, Discriminator& disc, const synth::DomainDataset& source,
                      const synth::DomainDataset& target, const TrainConfig& cfg, const losses::LossWeights& lw,
                      const TargetTerms& terms, std::size_t epochs, Rng& rng) {
  if (source.scenes.empty() || target.scenes.empty()) throw ValueError("training needs non-empty source and target");
  ad::Sgd seg_opt(cfg.lr, cfg.momentum);
  ad::Sgd disc_opt(cfg.disc_lr, cfg.momentum);
  TargetCursor cursor(target.size(), rng);
  StepTotals totals;
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto order = shuffled(source.size(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> sb(order.data() + start, end - start);
      std::vector<std::size_t> tb;
      for (std::size_t i = start; i < end; ++i) tb.push_back(cursor.next());
      totals.add(adversarial_step(seg, disc, seg_opt, disc_opt, source, sb, target, tb, cfg, lw, terms));
    }
  }
  return totals;
}

std::vector<pseudo::PseudoLabels> label_target(const SegNet& seg, const synth::DomainDataset& target,
                                               std::size_t round) {
  std::vector<pseudo::PseudoLabels> out;
  out.reserve(target.size());
  for (const auto& s : target.scenes) out.push_back(pseudo::generate_pseudo_labels(seg.predict(s.image), round));
  return out;
}

double churn(const std::vector<pseudo::PseudoLabels>& before, const std::vector<pseudo::PseudoLabels>& after) {
  std::size_t changed = 0, total = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    for (std::size_t p = 0; p < before[i].labels.size(); ++p) changed += before[i].labels[p] != after[i].labels[p];
    total += before[i].labels.size();
  }
  return total ? static_cast<double>(changed) / static_cast<double>(total) : 0.0;
}

}  // namespace

metrics::EvalReport evaluate(std::span<const LabelMap> predictions, const EvalSpec& eval) {
  if (predictions.size() != eval.gt.size()) throw ShapeError("evaluation: prediction and ground-truth counts differ");
  metrics::ConfusionMatrix m(eval.num_classes);
  for (std::size_t i = 0; i < predictions.size(); ++i) m.accumulate(predictions[i], eval.gt[i]);
  return metrics::iou_report(m, eval.shared, eval.private_classes);
}

std::vector<LabelMap> predict_labels(const SegNet& seg, std::span<const Tensor> images) {
  std::vector<LabelMap> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(pseudo::generate_pseudo_labels(seg.predict(img)).labels);
  return out;
}

SingleSourceModel pretrain_single_source(const synth::DomainDataset& source, const synth::DomainDataset& target,
                                         const TrainConfig& cfg, std::size_t source_index) {
  cfg.validate();
  if (source.kind != synth::DomainKind::Source) throw ValueError("pretraining needs a labeled source domain");
  const std::string tag = "source_" + std::to_string(source_index);
  SingleSourceModel m{SegNet(synth::kNumClosed, stream_seed(cfg.seed, "init/segnet/" + tag)),
                      Discriminator(synth::kNumClosed, stream_seed(cfg.seed, "init/disc/" + tag))};
  Rng rng(cfg.seed, "pretrain/" + tag);
  run_epochs(m.seg, m.disc, source, target, cfg, losses::LossWeights(1.0, 0.0, 0.0), TargetTerms{}, cfg.pretrain_epochs,
             rng);
  return m;
}

AltIncState initialize_from_report(std::vector<SingleSourceModel> pretrained, select::DissimilarityReport report,
                                   const synth::DomainDataset& target) {
  if (target.scenes.empty()) throw ValueError("target domain has no images");
  if (pretrained.size() != report.dissimilarity.size()) {
    throw StageError("dissimilarity report covers " + std::to_string(report.dissimilarity.size()) +
                     " sources but " + std::to_string(pretrained.size()) + " pretrained models were given");
  }
  const auto images = target.images();
  AltIncState state;
  state.report = std::move(report);
  state.bundle.seg = pretrained[state.report.best_source].seg;
  for (auto& m : pretrained) {
    state.bundle.discriminators.push_back(m.disc);
    state.source_models.push_back(std::move(m.seg));
  }
  state.teacher_maps.resize(images.size());
  for (std::size_t j = 0; j < images.size(); ++j) {
    for (auto i : state.report.teachers) state.teacher_maps[j].push_back(state.source_models[i].predict(images[j]));
  }
  state.pseudo = label_target(state.bundle.seg, target, 0);
  return state;
}

select::DissimilarityReport select_sources(const std::vector<SingleSourceModel>& pretrained,
                                           const synth::DomainDataset& target, const TrainConfig& cfg) {
  cfg.validate();
  if (target.scenes.empty()) throw ValueError("target domain has no images");
  const auto images = target.images();
  std::vector<double> d;
  for (const auto& m : pretrained) d.push_back(select::dissimilarity(m.seg, m.disc, images));
  return select::make_report(std::move(d), cfg.beta, images.size());
}

AltIncState initialize_best_source(std::vector<SingleSourceModel> pretrained, const synth::DomainDataset& target,
                                   const TrainConfig& cfg) {
  auto report = select_sources(pretrained, target, cfg);
  return initialize_from_report(std::move(pretrained), std::move(report), target);
}

AltIncState initialize_best_source(const std::vector<synth::DomainDataset>& sources,
                                   const synth::DomainDataset& target, const TrainConfig& cfg) {
  if (sources.size() < 2) throw ValueError("multi-source adaptation needs at least 2 sources");
  std::vector<SingleSourceModel> pretrained;
  for (std::size_t i = 0; i < sources.size(); ++i) pretrained.push_back(pretrain_single_source(sources[i], target, cfg, i));
  return initialize_best_source(std::move(pretrained), target, cfg);
}

void altinc_round(AltIncState& state, const synth::DomainDataset& best_source, const synth::DomainDataset& target,
                  const TrainConfig& cfg, const EvalSpec* eval, const PseudoTargetObserver& observer) {
  cfg.validate();
  if (state.source_models.size() != state.report.dissimilarity.size() ||
      state.teacher_maps.size() != target.size()) {
    throw StageError("frozen single-source models are missing; run initialize_best_source first");
  }
  if (state.pseudo.size() != target.size()) throw StageError("pseudo labels do not cover the target set");

  const std::size_t round = state.round + 1;
  const std::vector<pseudo::PseudoLabels> frozen = state.pseudo;
  TargetTerms terms{&frozen, &state.teacher_maps, &state.report.weights, &observer};
  Rng rng(cfg.seed, "altinc/round_" + std::to_string(round));
  Discriminator& disc = state.bundle.discriminators[state.report.best_source];
  TrainConfig rc = cfg;
  const double decay = std::pow(cfg.round_lr_decay, static_cast<double>(round - 1));
  rc.lr *= decay;
  rc.disc_lr *= decay;
  const StepTotals t =
      run_epochs(state.bundle.seg, disc, best_source, target, rc, cfg.weights, terms, cfg.epochs_per_round, rng);

  auto next = label_target(state.bundle.seg, target, round);
  RoundRecord rec;
  rec.round = round;
  rec.churn = churn(frozen, next);
  const double n = t.steps ? static_cast<double>(t.steps) : 1.0;
  rec.loss_sup = t.sup / n;
  rec.loss_unsup = t.unsup / n;
  rec.loss_distil = t.distil / n;
  rec.loss_overall = t.overall / n;
  rec.loss_adv = t.adv / n;
  rec.loss_disc = t.disc / n;
  if (eval) {
    std::vector<LabelMap> preds;
    for (const auto& p : next) preds.push_back(p.labels);
    const auto report = evaluate(preds, *eval);
    rec.miou = report.miou_shared;
    rec.accuracy = report.accuracy;
  }
  state.pseudo = std::move(next);
  state.round = round;
  state.history.push_back(rec);
}

AltIncResult run_altinc(AltIncState state, const std::vector<synth::DomainDataset>& sources,
                        const synth::DomainDataset& target, const TrainConfig& cfg, const EvalSpec* eval) {
  cfg.validate();
  if (state.report.best_source >= sources.size()) throw StageError("best source index does not match the source list");
  const auto& best = sources[state.report.best_source];
  while (state.round < cfg.max_rounds) {
    altinc_round(state, best, target, cfg, eval);
    if (state.history.back().churn < cfg.churn_epsilon) break;
  }
  AltIncResult result;
  for (const auto& s : target.scenes) {
    result.final_probs.push_back(state.bundle.seg.predict(s.image));
    result.final_labels.push_back(pseudo::generate_pseudo_labels(result.final_probs.back(), state.round));
  }
  result.state = std::move(state);
  return result;
}

SegNet retrain_on_boundless(const SegNet& seg, std::size_t open_classes, const synth::DomainDataset& target,
                            std::span<const LabelMap> relabeled, std::span<const LabelMap> alt_inc_labels,
                            const TrainConfig& cfg) {
  cfg.validate();
  if (relabeled.size() != target.size() || alt_inc_labels.size() != target.size()) {
    throw ShapeError("boundless retraining: label sets do not cover the target images");
  }
  SegNet out = seg.widened(open_classes);
  ad::Sgd opt(cfg.lr, cfg.momentum);
  Rng rng(cfg.seed, "boundless/retrain");
  for (std::size_t e = 0; e < cfg.epochs_per_round; ++e) {
    const auto order = shuffled(target.size(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      ad::Tape tape;
      const auto vars = out.bind(tape, true);
      ad::Var total = tape.constant(Tensor::scalar(0.0));
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t j = order[i];
        const ad::Var p = ad::softmax_channels(out.forward(vars, tape.constant(target.scenes[j].image)));
        total = ad::add(total, losses::loss_unsup(p, relabeled[j]));
        total = ad::add(total, ad::scale(losses::loss_unsup(p, alt_inc_labels[j]), 0.5));
      }
      tape.backward(ad::scale(total, 1.0 / static_cast<double>(end - start)));
      opt.step(out.params(), grads_of(tape, vars));
    }
  }
  return out;
}

}  // namespace altinc::train
