#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iaunet/data.hpp"

namespace iaunet {

enum class UpdateOrder { sequential, cyclic };
enum class DeepSupervision { per_block, per_layer, off };

struct ModelConfig {
  int num_queries = 8;
  int dim = 64;
  int ffn_dim = 256;
  int num_classes = 1;  // real classes; "no object" is implicit
  bool se_enabled = true;
  bool coordconv_enabled = true;
  int blocks_per_layer = 3;
  UpdateOrder update_order = UpdateOrder::sequential;
  DeepSupervision deep_supervision = DeepSupervision::per_block;
  int stem_channels = 16;
  std::vector<int> encoder_channels = {32, 64, 128, 256};
  int se_reduction = 4;
  int num_heads = 1;

  void validate() const;
};

struct OptimizerConfig {
  double lr = 3e-3;
  double lr_min = 1e-6;
  double weight_decay = 0.05;
  int steps = 500;
  int batch_size = 2;
  int checkpoint_interval = 0;  // 0 = only final
};

struct DataConfig {
  std::string root;  // empty: synthesize `count` scenes in memory
  int count = 4;
  int train_size = 64;
  bool augment = false;
  data::SceneSpec scene;
};

struct RunConfig {
  ModelConfig model;
  OptimizerConfig optimizer;
  DataConfig data;
  std::uint64_t seed = 7;
  std::string out_dir = "out";
  double score_floor = 0.05;

  void validate() const;
};

// Strict JSON: unknown keys anywhere are rejected.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& config);

const char* to_string(UpdateOrder order);
const char* to_string(DeepSupervision mode);

}  // namespace iaunet
