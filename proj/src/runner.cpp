#include "iaunet/runner.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "iaunet/nn.hpp"
#include "iaunet/optim.hpp"

namespace iaunet {

std::vector<data::SceneSample> obtain_dataset(const RunConfig& cfg) {
  std::vector<data::SceneSample> ds;
  if (!cfg.data.root.empty()) {
    ds = data::load_dataset(cfg.data.root);
    for (auto& s : ds) s = data::resize_to_train(s, cfg.data.train_size);
  } else {
    data::SceneSpec scene = cfg.data.scene;
    ds = data::generate_dataset(scene, cfg.seed, cfg.data.count);
    for (auto& s : ds) s = data::resize_to_train(s, cfg.data.train_size);
  }
  return ds;
}

TrainResult train_model(Model& model, const std::vector<data::SceneSample>& ds,
                        const RunConfig& cfg,
                        const std::function<void(const StepLog&)>& on_step) {
  if (ds.empty()) throw ValidationError("training requires a non-empty dataset");
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  optim::AdamW opt;
  LossWeights weights;
  TrainResult result;
  StepLog last_finite;
  const int batch = cfg.optimizer.batch_size;

  for (int step = 0; step < cfg.optimizer.steps; ++step) {
    const double lr = optim::cosine_lr(step, cfg.optimizer.steps,
                                       cfg.optimizer.lr, cfg.optimizer.lr_min);
    model.params().zero_grads();

    Tensor batch_total;
    StepLog log;
    log.step = step + 1;
    log.lr = lr;
    for (int j = 0; j < batch; ++j) {
      const std::size_t idx =
          (static_cast<std::size_t>(step) * batch + j) % ds.size();
      const data::SceneSample* sample = &ds[idx];
      data::SceneSample augmented;
      if (cfg.data.augment) {
        Rng rng(Rng::mix(cfg.seed, 0x617567ULL + step * 131 + j));
        auto params = data::sample_augment(rng, sample->record.height,
                                           sample->record.width,
                                           cfg.data.train_size);
        augmented = data::apply_augment(*sample, params, cfg.data.train_size);
        sample = &augmented;
      }
      Tensor image = ops::reshape(sample->image,
                                  {1, 3, sample->record.height,
                                   sample->record.width});
      ForwardResult fwd = model.forward(image, ops::BnMode::train);
      PreparedTargets targets = prepare_targets(sample->record,
                                                sample->validity, fwd.h4,
                                                fwd.w4);
      LossBreakdown loss =
          total_loss(model.config(), model.mask_head(), fwd, targets, weights);
      batch_total = batch_total.defined() ? ops::add(batch_total, loss.total)
                                          : loss.total;
      log.cls += loss.cls / batch;
      log.dice += loss.dice / batch;
      log.bce += loss.bce / batch;
    }
    batch_total = ops::mul_scalar(batch_total, 1.0 / batch);
    log.total = batch_total.item();

    if (!std::isfinite(log.total))
      throw NumericError(msg("training loss became non-finite at step ",
                             log.step, "; last finite breakdown: total=",
                             last_finite.total, " cls=", last_finite.cls,
                             " dice=", last_finite.dice, " bce=",
                             last_finite.bce));
    batch_total.backward();
    opt.step(model.params(), lr, cfg.optimizer.weight_decay);

    last_finite = log;
    result.log.push_back(log);
    if (on_step) on_step(log);

    if (cfg.optimizer.checkpoint_interval > 0 &&
        (step + 1) % cfg.optimizer.checkpoint_interval == 0) {
      const std::string path =
          (fs::path(cfg.out_dir) / msg("checkpoint_step", step + 1, ".ck"))
              .string();
      nn::save_checkpoint(model.params(), path);
    }
  }

  result.checkpoint_path =
      (fs::path(cfg.out_dir) / "checkpoint.ck").string();
  nn::save_checkpoint(model.params(), result.checkpoint_path);
  return result;
}

std::string format_log_csv(const std::vector<StepLog>& log) {
  std::string out = "step,lr,cls,dice,bce,total\n";
  char line[256];
  for (const auto& s : log) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  s.step, s.lr, s.cls, s.dice, s.bce, s.total);
    out += line;
  }
  return out;
}

EvalOutput run_eval(Model& model, const std::vector<data::SceneSample>& ds,
                    double score_floor) {
  EvalOutput out;
  std::vector<const data::AnnotationRecord*> truth;
  for (const auto& sample : ds) {
    Tensor image = ops::reshape(sample.image, {1, 3, sample.record.height,
                                               sample.record.width});
    InstancePrediction pred = model.predict(image);
    auto instances = postprocess(pred, sample.record.height,
                                 sample.record.width, score_floor);
    metrics::ImagePredictions ip;
    ip.image_id = sample.record.image_id;
    for (auto& inst : instances)
      ip.instances.push_back({inst.class_id, inst.score, std::move(inst.mask)});
    out.predictions.push_back(std::move(ip));
    truth.push_back(&sample.record);
  }
  out.result = metrics::evaluate(out.predictions, truth);
  return out;
}

}  // namespace iaunet
