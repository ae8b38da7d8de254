#pragma once

#include <functional>
#include <string>
#include <vector>

#include "iaunet/config.hpp"
#include "iaunet/losses.hpp"
#include "iaunet/metrics.hpp"

namespace iaunet {

struct StepLog {
  int step = 0;  // 1-based
  double lr = 0.0, cls = 0.0, dice = 0.0, bce = 0.0, total = 0.0;
};

struct TrainResult {
  std::vector<StepLog> log;
  std::string checkpoint_path;
};

// Loads the configured dataset root, or synthesizes `data.count` scenes from
// the run seed; everything is brought to train_size.
std::vector<data::SceneSample> obtain_dataset(const RunConfig& cfg);

// Fixed round-robin batch order; per-step losses averaged over the batch,
// AdamW with cosine-annealed learning rate. Throws NumericError (with the
// step index and last finite breakdown) when the loss leaves the reals.
TrainResult train_model(Model& model, const std::vector<data::SceneSample>& ds,
                        const RunConfig& cfg,
                        const std::function<void(const StepLog&)>& on_step);

std::string format_log_csv(const std::vector<StepLog>& log);

// Inference over a dataset: predictions per image plus the evaluation result.
struct EvalOutput {
  std::vector<metrics::ImagePredictions> predictions;
  metrics::EvalResult result;
};
EvalOutput run_eval(Model& model, const std::vector<data::SceneSample>& ds,
                    double score_floor);

}  // namespace iaunet
