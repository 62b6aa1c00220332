// Training loop: Adam over the multi-task objective with per-epoch
// inverse-time learning-rate decay, teacher-forced mask filtering, optional
// lazy enumeration of the crop/rotation augmentation grid, and loss-curve
// logging. Also the dataset-level prediction helper used for evaluation.
#pragma once

#include <fstream>
#include <optional>
#include <ostream>
#include <vector>

#include "semgrasp/config.hpp"
#include "semgrasp/losses.hpp"
#include "semgrasp/network.hpp"
#include "semgrasp/synth.hpp"

namespace semgrasp {

struct TrainStats {
  std::vector<LossReport> epoch_means;
  std::vector<double> learning_rates;
};

namespace detail {

// Predicted per-category mask for one object (non-teacher-forced filtering).
inline BitMask category_mask_from_labels(const std::vector<int>& labels, int h, int w,
                                         int category_id) {
  BitMask m(h, w, 1, 0);
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == category_id + 1) m.v[i] = 1;
  return m;
}

}  // namespace detail

/// One forward/backward pass for a single sample. Gradients are accumulated
/// into the model's parameters scaled by grad_scale (1 / batch size).
inline LossReport train_step(GraspNet& net, const RunConfig& cfg, const SceneSample& sample,
                             double grad_scale) {
  const NetConfig& nc = net.config();
  if (sample.image.h != cfg.image_size || sample.image.w != cfg.image_size)
    throw std::runtime_error("train: sample " + sample.source_id + " is not image_size^2");

  Tape tape(true);
  NodeP x = leaf(tape, to_input_tensor(sample, cfg.input_mode));
  const FeaturePyramid pyr = net.backbone(tape, x);
  std::optional<FusedMaps> fused;
  if (nc.feature_fusion) fused = net.fuse(tape, pyr);
  NodeP seg = net.segment(tape, nc.feature_fusion ? fused->c[0] : pyr.f[0]);

  const std::vector<int> labels_full = label_map(sample);
  const int hh = seg->val.h, hw = seg->val.w;
  std::vector<int> labels_half(static_cast<size_t>(hh) * hw);
  for (int i = 0; i < hh; ++i)
    for (int j = 0; j < hw; ++j)
      labels_half[static_cast<size_t>(i) * hw + j] =
          labels_full[static_cast<size_t>(2 * i) * sample.image.w + 2 * j];
  const LossGrad<float> seg_r =
      seg_loss<float>(seg->val.v.data(), nc.num_categories + 1, hh * hw, labels_half.data());
  for (size_t i = 0; i < seg->grad.v.size(); ++i)
    seg->grad.v[i] += static_cast<float>(grad_scale) * seg_r.grad[i];

  NodeP base = net.grasp_input(pyr, fused ? &*fused : nullptr);
  const int stride = grasp_stride(nc.grasp_feature);
  const CellTargets targets = assign_targets(sample, stride, base->val.h, base->val.w);

  double reg_total = 0.0, cls_total = 0.0;
  const int n_objects = static_cast<int>(sample.objects.size());
  if (nc.feature_filtering && n_objects > 0) {
    std::vector<int> predicted_labels;
    if (!cfg.teacher_force_masks)
      predicted_labels = seg_label_map(seg->val, sample.image.h, sample.image.w);
    for (int k = 0; k < n_objects; ++k) {
      const BitMask mask =
          cfg.teacher_force_masks
              ? rasterize_mask(sample.objects[k].mask, sample.image.h, sample.image.w)
              : detail::category_mask_from_labels(predicted_labels, sample.image.h,
                                                  sample.image.w,
                                                  sample.objects[k].category_id);
      const GraspHeadOut head =
          net.grasp_head(tape, binarize_and_filter(tape, base, mask, stride));
      const CellTargets tk = targets.select_object(k);
      const LossGrad<float> cls_r =
          cls_loss<float>(head.cls->val.v.data(), tk, cfg.lambda_neg);
      const LossGrad<float> reg_r = reg_loss<float>(head.reg->val.v.data(), tk);
      const float scale = static_cast<float>(grad_scale * cfg.alpha / n_objects);
      for (size_t i = 0; i < head.cls->grad.v.size(); ++i)
        head.cls->grad.v[i] += scale * cls_r.grad[i];
      for (size_t i = 0; i < head.reg->grad.v.size(); ++i)
        head.reg->grad.v[i] += scale * reg_r.grad[i];
      cls_total += cls_r.value / n_objects;
      reg_total += reg_r.value / n_objects;
    }
  } else {
    const GraspHeadOut head = net.grasp_head(tape, base);
    const LossGrad<float> cls_r = cls_loss<float>(head.cls->val.v.data(), targets, cfg.lambda_neg);
    const LossGrad<float> reg_r = reg_loss<float>(head.reg->val.v.data(), targets);
    const float scale = static_cast<float>(grad_scale * cfg.alpha);
    for (size_t i = 0; i < head.cls->grad.v.size(); ++i)
      head.cls->grad.v[i] += scale * cls_r.grad[i];
    for (size_t i = 0; i < head.reg->grad.v.size(); ++i)
      head.reg->grad.v[i] += scale * reg_r.grad[i];
    cls_total = cls_r.value;
    reg_total = reg_r.value;
  }

  tape.backward();
  return total_loss(seg_r.value, reg_total, cls_total, cfg.alpha);  // throws on non-finite
}

/// Full training run. When augmentation is on, every epoch enumerates the
/// 3 crops x 18 rotations grid lazily per sample; otherwise each sample is
/// visited once per epoch. Order is shuffled deterministically from the seed.
inline TrainStats train_model(GraspNet& net, const RunConfig& cfg,
                              const std::vector<SceneSample>& scenes,
                              std::ostream* log = nullptr,
                              const std::string& loss_csv_path = {}) {
  if (scenes.empty()) throw std::runtime_error("train: empty dataset");

  struct StepSpec {
    int sample;
    int crop;      // -1 = no augmentation
    int rotation;
  };
  std::vector<StepSpec> base_steps;
  for (int s = 0; s < static_cast<int>(scenes.size()); ++s) {
    if (cfg.use_augmentation) {
      for (int c = 0; c < 3; ++c)
        for (const int r : augment_rotations()) base_steps.push_back({s, c, r});
    } else {
      base_steps.push_back({s, -1, 0});
    }
  }

  std::ofstream csv;
  if (!loss_csv_path.empty()) {
    csv.open(loss_csv_path);
    csv << "epoch,seg,reg,cls,grasp,total,lr\n";
  }

  Adam opt;
  TrainStats stats;
  std::vector<Param*> params = net.params();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate / (1.0 + cfg.lr_decay_per_epoch * epoch);
    std::vector<StepSpec> steps = base_steps;
    Rng shuffle_rng = Rng(cfg.seed).derive(0x73687566u + static_cast<std::uint64_t>(epoch));
    for (size_t i = steps.size(); i > 1; --i)
      std::swap(steps[i - 1], steps[shuffle_rng.uniform_int(0, static_cast<int>(i) - 1)]);

    LossReport mean;
    int in_batch = 0;
    for (size_t si = 0; si < steps.size(); ++si) {
      const StepSpec& sp = steps[si];
      if (in_batch == 0)
        for (Param* p : params) p->zero_grad();
      const int batch = std::min<int>(cfg.batch_size, static_cast<int>(steps.size() - si) + in_batch);
      LossReport r;
      try {
        if (sp.crop < 0) {
          r = train_step(net, cfg, scenes[sp.sample], 1.0 / batch);
        } else {
          const SceneSample aug =
              augment(scenes[sp.sample], static_cast<Crop>(sp.crop), sp.rotation);
          r = train_step(net, cfg, aug, 1.0 / batch);
        }
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train aborted at epoch " + std::to_string(epoch) +
                                 ", step " + std::to_string(si) + ": " + e.what());
      }
      mean.seg += r.seg;
      mean.reg += r.reg;
      mean.cls += r.cls;
      mean.grasp += r.grasp;
      mean.total += r.total;
      if (++in_batch == batch) {
        opt.step(params, lr);
        in_batch = 0;
      }
    }
    const double n = static_cast<double>(steps.size());
    mean.seg /= n;
    mean.reg /= n;
    mean.cls /= n;
    mean.grasp /= n;
    mean.total /= n;
    mean.alpha = cfg.alpha;
    stats.epoch_means.push_back(mean);
    stats.learning_rates.push_back(lr);
    if (csv.is_open())
      csv << epoch << "," << mean.seg << "," << mean.reg << "," << mean.cls << ","
          << mean.grasp << "," << mean.total << "," << lr << "\n";
    if (log && (epoch % 10 == 0 || epoch + 1 == cfg.epochs))
      *log << "epoch " << epoch << " total " << mean.total << " seg " << mean.seg
           << " grasp " << mean.grasp << " lr " << lr << "\n";
  }
  return stats;
}

/// Per-sample predictions for a dataset, teacher forcing masks when the
/// config asks for it.
inline std::vector<std::vector<Detection>> predict_dataset(
    const GraspNet& net, const RunConfig& cfg, const std::vector<SceneSample>& scenes) {
  std::vector<std::vector<Detection>> out;
  out.reserve(scenes.size());
  for (const SceneSample& s : scenes) {
    PredictOptions opt;
    std::vector<std::pair<int, BitMask>> gt;
    if (cfg.eval_use_gt_masks) {
      for (const ObjectAnnotation& o : s.objects)
        gt.emplace_back(o.category_id, rasterize_mask(o.mask, s.image.h, s.image.w));
      opt.gt_masks = &gt;
    }
    out.push_back(predict_scene(net, to_input_tensor(s, cfg.input_mode), opt));
  }
  return out;
}

/// Fraction of full-resolution pixels whose upsampled argmax label equals the
/// ground-truth label map.
inline double seg_pixel_accuracy(const GraspNet& net, const RunConfig& cfg,
                                 const SceneSample& sample) {
  Tape tape(false);
  NodeP x = leaf(tape, to_input_tensor(sample, cfg.input_mode));
  const FeaturePyramid pyr = net.backbone(tape, x);
  std::optional<FusedMaps> fused;
  if (net.config().feature_fusion) fused = net.fuse(tape, pyr);
  NodeP seg = net.segment(tape, net.config().feature_fusion ? fused->c[0] : pyr.f[0]);
  const std::vector<int> pred = seg_label_map(seg->val, sample.image.h, sample.image.w);
  const std::vector<int> truth = label_map(sample);
  size_t hits = 0;
  for (size_t i = 0; i < truth.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / truth.size();
}

}  // namespace semgrasp
