#include "iaunet/config.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

namespace iaunet {

using nlohmann::ordered_json;

void ModelConfig::validate() const {
  if (num_queries < 1) throw ConfigError("model.num_queries must be >= 1");
  if (num_classes < 1) throw ConfigError("model.num_classes must be >= 1");
  if (dim < 4 || dim % 4 != 0)
    throw ConfigError("model.dim must be a positive multiple of 4");
  if (num_heads < 1 || dim % num_heads != 0)
    throw ConfigError("model.dim must be divisible by model.num_heads");
  if (ffn_dim < 1) throw ConfigError("model.ffn_dim must be >= 1");
  if (blocks_per_layer < 1)
    throw ConfigError("model.blocks_per_layer must be >= 1");
  if (stem_channels < 1) throw ConfigError("model.stem_channels must be >= 1");
  if (encoder_channels.size() != 4)
    throw ConfigError("model.encoder_channels must list four stage widths");
  for (int c : encoder_channels)
    if (c < 1) throw ConfigError("model.encoder_channels must be positive");
  if (se_enabled && (se_reduction < 1 || dim % se_reduction != 0))
    throw ConfigError("model.dim must be divisible by model.se_reduction");
}

void RunConfig::validate() const {
  model.validate();
  if (optimizer.lr <= 0.0) throw ConfigError("optimizer.lr must be positive");
  if (optimizer.lr_min < 0.0 || optimizer.lr_min > optimizer.lr)
    throw ConfigError("optimizer.lr_min must lie in [0, lr]");
  if (optimizer.weight_decay < 0.0)
    throw ConfigError("optimizer.weight_decay must be >= 0");
  if (optimizer.steps < 0) throw ConfigError("optimizer.steps must be >= 0");
  if (optimizer.batch_size < 1)
    throw ConfigError("optimizer.batch_size must be >= 1");
  if (optimizer.checkpoint_interval < 0)
    throw ConfigError("optimizer.checkpoint_interval must be >= 0");
  if (data.count < 0) throw ConfigError("data.count must be >= 0");
  if (data.train_size < 32 || data.train_size % 32 != 0)
    throw ConfigError("data.train_size must be a positive multiple of 32");
  if (score_floor < 0.0 || score_floor > 1.0)
    throw ConfigError("score_floor must lie in [0,1]");
  const auto& s = data.scene;
  if (s.height % 32 != 0 || s.width % 32 != 0)
    throw ConfigError("scene image sides must be divisible by 32");
  if (s.min_instances < 0 || s.max_instances < s.min_instances)
    throw ConfigError("scene instance-count range is degenerate");
  if (s.min_axis <= 0.0 || s.max_axis < s.min_axis)
    throw ConfigError("scene axis range is degenerate");
  if (s.overlap_allowance < 0.0 || s.overlap_allowance > 1.0)
    throw ConfigError("scene overlap allowance must lie in [0,1]");
  if (s.num_classes != 1 && s.num_classes != 2)
    throw ConfigError("scene num_classes must be 1 or 2");
}

namespace {

void require_keys(const ordered_json& j, const std::set<std::string>& allowed,
                  const std::string& where) {
  if (!j.is_object())
    throw ConfigError(msg("config section '", where, "' must be an object"));
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(msg("unknown key '", it.key(), "' in ", where));
}

template <class T>
void read_if(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

UpdateOrder parse_order(const std::string& s) {
  if (s == "sequential") return UpdateOrder::sequential;
  if (s == "cyclic") return UpdateOrder::cyclic;
  throw ConfigError(msg("model.update_order must be 'sequential' or 'cyclic', got '",
                        s, "'"));
}

DeepSupervision parse_supervision(const std::string& s) {
  if (s == "per_block") return DeepSupervision::per_block;
  if (s == "per_layer") return DeepSupervision::per_layer;
  if (s == "off") return DeepSupervision::off;
  throw ConfigError(
      msg("model.deep_supervision must be 'per_block', 'per_layer' or 'off', got '",
          s, "'"));
}

}  // namespace

const char* to_string(UpdateOrder order) {
  return order == UpdateOrder::sequential ? "sequential" : "cyclic";
}

const char* to_string(DeepSupervision mode) {
  switch (mode) {
    case DeepSupervision::per_block:
      return "per_block";
    case DeepSupervision::per_layer:
      return "per_layer";
    default:
      return "off";
  }
}

RunConfig parse_run_config(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(msg("config is not valid JSON: ", e.what()));
  }
  RunConfig cfg;
  require_keys(j, {"model", "optimizer", "data", "seed", "out_dir",
                   "score_floor"},
               "config");
  if (j.contains("model")) {
    const auto& m = j["model"];
    require_keys(m,
                 {"num_queries", "dim", "ffn_dim", "num_classes", "se_enabled",
                  "coordconv_enabled", "blocks_per_layer", "update_order",
                  "deep_supervision", "stem_channels", "encoder_channels",
                  "se_reduction", "num_heads"},
                 "model");
    read_if(m, "num_queries", cfg.model.num_queries);
    read_if(m, "dim", cfg.model.dim);
    read_if(m, "ffn_dim", cfg.model.ffn_dim);
    read_if(m, "num_classes", cfg.model.num_classes);
    read_if(m, "se_enabled", cfg.model.se_enabled);
    read_if(m, "coordconv_enabled", cfg.model.coordconv_enabled);
    read_if(m, "blocks_per_layer", cfg.model.blocks_per_layer);
    if (m.contains("update_order"))
      cfg.model.update_order = parse_order(m["update_order"].get<std::string>());
    if (m.contains("deep_supervision"))
      cfg.model.deep_supervision =
          parse_supervision(m["deep_supervision"].get<std::string>());
    read_if(m, "stem_channels", cfg.model.stem_channels);
    read_if(m, "encoder_channels", cfg.model.encoder_channels);
    read_if(m, "se_reduction", cfg.model.se_reduction);
    read_if(m, "num_heads", cfg.model.num_heads);
  }
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    require_keys(o,
                 {"lr", "lr_min", "weight_decay", "steps", "batch_size",
                  "checkpoint_interval"},
                 "optimizer");
    read_if(o, "lr", cfg.optimizer.lr);
    read_if(o, "lr_min", cfg.optimizer.lr_min);
    read_if(o, "weight_decay", cfg.optimizer.weight_decay);
    read_if(o, "steps", cfg.optimizer.steps);
    read_if(o, "batch_size", cfg.optimizer.batch_size);
    read_if(o, "checkpoint_interval", cfg.optimizer.checkpoint_interval);
  }
  if (j.contains("data")) {
    const auto& d = j["data"];
    require_keys(d, {"root", "count", "train_size", "augment", "scene"},
                 "data");
    read_if(d, "root", cfg.data.root);
    read_if(d, "count", cfg.data.count);
    read_if(d, "train_size", cfg.data.train_size);
    read_if(d, "augment", cfg.data.augment);
    if (d.contains("scene")) {
      const auto& s = d["scene"];
      require_keys(s,
                   {"height", "width", "min_instances", "max_instances",
                    "min_axis", "max_axis", "overlap_allowance", "noise_level",
                    "background", "num_classes"},
                   "data.scene");
      read_if(s, "height", cfg.data.scene.height);
      read_if(s, "width", cfg.data.scene.width);
      read_if(s, "min_instances", cfg.data.scene.min_instances);
      read_if(s, "max_instances", cfg.data.scene.max_instances);
      read_if(s, "min_axis", cfg.data.scene.min_axis);
      read_if(s, "max_axis", cfg.data.scene.max_axis);
      read_if(s, "overlap_allowance", cfg.data.scene.overlap_allowance);
      read_if(s, "noise_level", cfg.data.scene.noise_level);
      read_if(s, "background", cfg.data.scene.background);
      read_if(s, "num_classes", cfg.data.scene.num_classes);
    }
  }
  read_if(j, "seed", cfg.seed);
  read_if(j, "out_dir", cfg.out_dir);
  read_if(j, "score_floor", cfg.score_floor);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError(msg("cannot open config '", path, "'"));
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string serialize_run_config(const RunConfig& cfg) {
  ordered_json j;
  j["model"] = {{"num_queries", cfg.model.num_queries},
                {"dim", cfg.model.dim},
                {"ffn_dim", cfg.model.ffn_dim},
                {"num_classes", cfg.model.num_classes},
                {"se_enabled", cfg.model.se_enabled},
                {"coordconv_enabled", cfg.model.coordconv_enabled},
                {"blocks_per_layer", cfg.model.blocks_per_layer},
                {"update_order", to_string(cfg.model.update_order)},
                {"deep_supervision", to_string(cfg.model.deep_supervision)},
                {"stem_channels", cfg.model.stem_channels},
                {"encoder_channels", cfg.model.encoder_channels},
                {"se_reduction", cfg.model.se_reduction},
                {"num_heads", cfg.model.num_heads}};
  j["optimizer"] = {{"lr", cfg.optimizer.lr},
                    {"lr_min", cfg.optimizer.lr_min},
                    {"weight_decay", cfg.optimizer.weight_decay},
                    {"steps", cfg.optimizer.steps},
                    {"batch_size", cfg.optimizer.batch_size},
                    {"checkpoint_interval", cfg.optimizer.checkpoint_interval}};
  j["data"] = {{"root", cfg.data.root},
               {"count", cfg.data.count},
               {"train_size", cfg.data.train_size},
               {"augment", cfg.data.augment},
               {"scene",
                {{"height", cfg.data.scene.height},
                 {"width", cfg.data.scene.width},
                 {"min_instances", cfg.data.scene.min_instances},
                 {"max_instances", cfg.data.scene.max_instances},
                 {"min_axis", cfg.data.scene.min_axis},
                 {"max_axis", cfg.data.scene.max_axis},
                 {"overlap_allowance", cfg.data.scene.overlap_allowance},
                 {"noise_level", cfg.data.scene.noise_level},
                 {"background", cfg.data.scene.background},
                 {"num_classes", cfg.data.scene.num_classes}}}};
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["score_floor"] = cfg.score_floor;
  return j.dump(2) + "\n";
}

}  // namespace iaunet
