#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "iaunet/gradcheck.hpp"
#include "iaunet/image_io.hpp"
#include "iaunet/nn.hpp"
#include "iaunet/runner.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace iaunet;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    seed_opt = cmd->add_option("--seed", seed, "override the run seed");
    out_opt = cmd->add_option("--out", out_dir, "output directory");
  }

  RunConfig load() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path);
    if (seed_opt && seed_opt->count()) cfg.seed = seed;
    if (out_opt && out_opt->count()) cfg.out_dir = out_dir;
    cfg.validate();
    return cfg;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(msg("cannot write '", path.string(), "'"));
  os << text;
}

int cmd_generate(const RunConfig& cfg, int count) {
  data::SceneSpec scene = cfg.data.scene;
  auto samples = data::generate_dataset(scene, cfg.seed, count);
  data::save_dataset(cfg.out_dir, samples);
  for (const auto& s : samples)
    std::cout << s.record.image_id << ": " << s.record.instances.size()
              << " instance(s)\n";
  std::cout << "wrote " << samples.size() << " image(s) under " << cfg.out_dir
            << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  auto dataset = obtain_dataset(cfg);
  Model model(cfg.model, cfg.seed);
  const int report_every = std::max(1, cfg.optimizer.steps / 10);
  TrainResult result = train_model(
      model, dataset, cfg, [&](const StepLog& log) {
        if (log.step == 1 || log.step % report_every == 0)
          std::cout << "step " << log.step << "  lr " << log.lr << "  total "
                    << log.total << "\n";
      });
  write_text(fs::path(cfg.out_dir) / "loss_log.csv",
             format_log_csv(result.log));
  write_text(fs::path(cfg.out_dir) / "config.json",
             serialize_run_config(cfg));
  std::cout << "checkpoint: " << result.checkpoint_path << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint) {
  auto dataset = obtain_dataset(cfg);
  Model model(cfg.model, cfg.seed);
  nn::load_checkpoint(model.params(), checkpoint);
  EvalOutput out = run_eval(model, dataset, cfg.score_floor);
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / "results.json",
             metrics::to_json(out.result));
  std::cout << "ap " << out.result.ap << "  ap50 " << out.result.ap50
            << "  ap75 " << out.result.ap75 << "\n";
  return 0;
}

Tensor pad_to_multiple(const Tensor& image, int multiple, int& orig_h,
                       int& orig_w) {
  orig_h = image.dim(1);
  orig_w = image.dim(2);
  const int ph = (orig_h + multiple - 1) / multiple * multiple;
  const int pw = (orig_w + multiple - 1) / multiple * multiple;
  if (ph == orig_h && pw == orig_w) return image;
  std::vector<double> padded(static_cast<std::size_t>(3) * ph * pw, 0.0);
  const double* src = image.data();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < orig_h; ++y)
      for (int x = 0; x < orig_w; ++x)
        padded[(static_cast<std::size_t>(c) * ph + y) * pw + x] =
            src[(static_cast<std::size_t>(c) * orig_h + y) * orig_w + x];
  return Tensor::from_data({3, ph, pw}, std::move(padded));
}

int cmd_predict(const RunConfig& cfg, const std::string& checkpoint,
                const std::string& image_path) {
  Model model(cfg.model, cfg.seed);
  nn::load_checkpoint(model.params(), checkpoint);
  Tensor raw = imageio::read_ppm(image_path);
  int orig_h = 0, orig_w = 0;
  Tensor padded = pad_to_multiple(raw, 32, orig_h, orig_w);
  const int ph = padded.dim(1), pw = padded.dim(2);

  InstancePrediction pred =
      model.predict(ops::reshape(padded, {1, 3, ph, pw}));
  auto instances = postprocess(pred, ph, pw, cfg.score_floor);

  fs::create_directories(cfg.out_dir);
  nlohmann::ordered_json j;
  j["image"] = image_path;
  j["original_height"] = orig_h;
  j["original_width"] = orig_w;
  j["padded_height"] = ph;
  j["padded_width"] = pw;
  j["instances"] = nlohmann::ordered_json::array();

  // overlay on the original footprint
  std::vector<double> overlay(raw.data(), raw.data() + raw.size());
  const double palette[6][3] = {{0.9, 0.2, 0.2}, {0.2, 0.8, 0.3},
                                {0.25, 0.4, 0.95}, {0.95, 0.8, 0.2},
                                {0.8, 0.3, 0.85}, {0.2, 0.85, 0.85}};
  int written = 0;
  for (const auto& inst : instances) {
    data::MaskGrid cropped(orig_h, orig_w);
    for (int y = 0; y < orig_h; ++y)
      for (int x = 0; x < orig_w; ++x)
        cropped.set(y, x, inst.mask.at(y, x));
    const std::string mask_name = msg("mask_", written, ".pgm");
    imageio::write_pgm((fs::path(cfg.out_dir) / mask_name).string(), cropped);
    nlohmann::ordered_json ji;
    ji["class_id"] = inst.class_id;
    ji["score"] = inst.score;
    ji["mask_pgm"] = mask_name;
    ji["rle"] = metrics::rle_encode(cropped);
    j["instances"].push_back(std::move(ji));

    const double* color = palette[written % 6];
    for (int y = 0; y < orig_h; ++y)
      for (int x = 0; x < orig_w; ++x)
        if (cropped.at(y, x))
          for (int c = 0; c < 3; ++c) {
            double& px = overlay[(static_cast<std::size_t>(c) * orig_h + y) *
                                     orig_w +
                                 x];
            px = 0.55 * px + 0.45 * color[c];
          }
    ++written;
  }
  imageio::write_ppm((fs::path(cfg.out_dir) / "overlay.ppm").string(),
                     Tensor::from_data({3, orig_h, orig_w},
                                       std::move(overlay)));
  write_text(fs::path(cfg.out_dir) / "instances.json", j.dump(2) + "\n");
  std::cout << written << " instance(s) written to " << cfg.out_dir << "\n";
  return 0;
}

RunConfig tiny_gradcheck_config() {
  RunConfig cfg;
  cfg.model.num_queries = 4;
  cfg.model.dim = 16;
  cfg.model.ffn_dim = 64;
  cfg.model.stem_channels = 4;
  cfg.model.encoder_channels = {8, 16, 32, 64};
  cfg.model.se_reduction = 4;
  cfg.data.train_size = 32;
  cfg.data.scene.height = 32;
  cfg.data.scene.width = 32;
  cfg.data.scene.min_axis = 5.0;
  cfg.data.scene.max_axis = 9.0;
  cfg.data.scene.min_instances = 2;
  cfg.data.scene.max_instances = 3;
  return cfg;
}

int cmd_gradcheck(const RunConfig& cfg, int samples,
                  const std::string& corrupt_op) {
  if (!corrupt_op.empty()) {
    ops::testing::corrupted_backward_op() = corrupt_op;
    std::cout << "corrupted backward op: " << corrupt_op << "\n";
  }
  data::SceneSpec scene = cfg.data.scene;
  scene.seed = Rng::mix(cfg.seed, 0x67636bULL);
  data::SceneSample sample = data::generate_scene(scene);
  sample.record.image_id = "gradcheck";

  Model model(cfg.model, cfg.seed);
  GradCheckOptions options;
  options.samples_per_group = samples;
  const auto start = std::chrono::steady_clock::now();
  GradCheckReport report =
      run_gradcheck(model, sample, LossWeights{}, options);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  std::cout << format_report(report, options.tolerance);
  std::cout << "elapsed: " << elapsed << " s\n";
  return report.pass ? 0 : kExitNumeric;
}

int classify_error(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"query-refined U-Net instance segmentation, desk scale"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  CommonFlags gen_flags;
  gen_flags.attach(gen);
  int gen_count = 8;
  gen->add_option("--count", gen_count, "number of images")
      ->check(CLI::NonNegativeNumber);

  auto* train = app.add_subcommand("train", "train and write a checkpoint");
  CommonFlags train_flags;
  train_flags.attach(train);
  int train_steps = -1;
  auto* steps_opt = train->add_option("--steps", train_steps,
                                      "override optimizer.steps");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  CommonFlags eval_flags;
  eval_flags.attach(eval);
  std::string eval_checkpoint, eval_data;
  eval->add_option("--checkpoint", eval_checkpoint, "parameter checkpoint")
      ->required();
  auto* eval_data_opt =
      eval->add_option("--data", eval_data, "dataset root to evaluate");

  auto* predict = app.add_subcommand("predict", "segment one PPM image");
  CommonFlags predict_flags;
  predict_flags.attach(predict);
  std::string predict_checkpoint, predict_image;
  predict->add_option("--checkpoint", predict_checkpoint, "parameter checkpoint")
      ->required();
  predict->add_option("--image", predict_image, "input PPM image")->required();

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "compare analytic gradients with central differences");
  CommonFlags gradcheck_flags;
  gradcheck_flags.attach(gradcheck);
  int gc_samples = 6;
  gradcheck->add_option("--samples", gc_samples,
                        "coordinates checked per parameter group");
  std::string corrupt_op;
  gradcheck->add_option("--corrupt-backward", corrupt_op,
                        "test hook: corrupt one op's backward pass");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_flags.load(), gen_count);
    if (train->parsed()) {
      RunConfig cfg = train_flags.load();
      if (steps_opt->count()) cfg.optimizer.steps = train_steps;
      cfg.validate();
      return cmd_train(cfg);
    }
    if (eval->parsed()) {
      RunConfig cfg = eval_flags.load();
      if (eval_data_opt->count()) cfg.data.root = eval_data;
      return cmd_eval(cfg, eval_checkpoint);
    }
    if (predict->parsed())
      return cmd_predict(predict_flags.load(), predict_checkpoint,
                         predict_image);
    if (gradcheck->parsed()) {
      RunConfig cfg = gradcheck_flags.config_path.empty()
                          ? tiny_gradcheck_config()
                          : load_run_config(gradcheck_flags.config_path);
      if (gradcheck_flags.seed_opt->count()) cfg.seed = gradcheck_flags.seed;
      return cmd_gradcheck(cfg, gc_samples, corrupt_op);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return classify_error(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
