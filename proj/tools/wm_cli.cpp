#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wm/image_io.hpp"
#include "wm/metrics.hpp"
#include "wm/networks.hpp"
#include "wm/pipeline.hpp"
#include "wm/training.hpp"
#include "wm/types.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitMessageMismatch = 2;
constexpr int kExitBadCheckpoint = 3;

wm::Checkpoint load_checkpoint_or_die(const std::string& path) {
  try {
    return wm::load_checkpoint(path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::exit(kExitBadCheckpoint);
  }
}

// Rejects hex that does not encode exactly ceil(L/4) digits.
wm::WatermarkMessage parse_message_or_die(const std::string& hex, std::size_t l) {
  const std::size_t want = (l + 3) / 4;
  if (hex.size() != want) {
    std::cerr << "error: message is " << hex.size() << " hex digits, checkpoint needs "
              << want << " (L=" << l << ")\n";
    std::exit(kExitMessageMismatch);
  }
  try {
    return wm::message_from_hex(hex, l);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::exit(kExitMessageMismatch);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"De-END image watermarking"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, out_path, image_path, images_dir;
  std::string message_hex, variants_csv = "deend,de_a_end_b,e_w_nd";
  std::optional<double> alpha;
  std::optional<uint64_t> seed;
  std::size_t trials = 3;

  auto* cmd_train = app.add_subcommand("train", "train a model from a JSON config");
  cmd_train->add_option("--config", config_path)->required();
  cmd_train->add_option("--images", images_dir)->required();
  cmd_train->add_option("--out", out_path)->required();
  cmd_train->add_option("--seed", seed);

  auto* cmd_embed = app.add_subcommand("embed", "embed a message into an image");
  cmd_embed->add_option("--checkpoint", checkpoint_path)->required();
  cmd_embed->add_option("image", image_path)->required();
  cmd_embed->add_option("--message", message_hex)->required();
  cmd_embed->add_option("--alpha", alpha);
  cmd_embed->add_option("--out", out_path)->required();

  auto* cmd_extract = app.add_subcommand("extract", "extract a message from an image");
  cmd_extract->add_option("--checkpoint", checkpoint_path)->required();
  cmd_extract->add_option("image", image_path)->required();

  auto* cmd_benchmark = app.add_subcommand("benchmark", "robustness sweep");
  cmd_benchmark->add_option("--checkpoint", checkpoint_path)->required();
  cmd_benchmark->add_option("--images", images_dir)->required();
  cmd_benchmark->add_option("--out", out_path)->required();
  cmd_benchmark->add_option("--seed", seed);
  cmd_benchmark->add_option("--trials", trials);

  auto* cmd_ablate = app.add_subcommand("ablate", "train and compare variants");
  cmd_ablate->add_option("--config", config_path)->required();
  cmd_ablate->add_option("--images", images_dir)->required();
  cmd_ablate->add_option("--out", out_path)->required();
  cmd_ablate->add_option("--seed", seed);
  cmd_ablate->add_option("--variants", variants_csv, "comma-separated variant names");
  cmd_ablate->add_option("--trials", trials);

  auto* cmd_analyze = app.add_subcommand("analyze", "coupling grids and scores");
  cmd_analyze->add_option("--checkpoint", checkpoint_path)->required();
  cmd_analyze->add_option("--images", images_dir)->required();
  cmd_analyze->add_option("--out", out_path)->required();
  cmd_analyze->add_option("--seed", seed);
  cmd_analyze->add_option("--alpha", alpha);

  auto* cmd_describe = app.add_subcommand("describe", "checkpoint manifest");
  cmd_describe->add_option("--checkpoint", checkpoint_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_train->parsed()) {
      wm::TrainConfig config = wm::config_from_file(config_path);
      if (seed) config.seed = *seed;
      auto images = wm::load_dataset(images_dir, config.h, config.w);
      wm::ModelBundle bundle = wm::make_variant(config);
      wm::TrainResult result = wm::train(bundle, images, out_path);
      const auto& last = result.history.back();
      std::cout << "trained " << result.epochs_run << " epochs; final l_d="
                << last.losses.l_d << " psnr=" << last.psnr_train
                << " bitacc=" << last.bitacc_train << "\n"
                << "checkpoint: " << out_path << "/checkpoint.wmck\n";
      return 0;
    }

    if (cmd_embed->parsed()) {
      wm::Checkpoint ckpt = load_checkpoint_or_die(checkpoint_path);
      wm::WatermarkMessage msg = parse_message_or_die(message_hex, ckpt.config.l);
      wm::ModelBundle bundle = wm::bundle_from_checkpoint(ckpt);
      wm::ImageArray host = wm::load_image(image_path);
      if (host.height() != ckpt.config.h || host.width() != ckpt.config.w) {
        const std::size_t side = std::min(host.height(), host.width());
        host = wm::resize_bilinear(wm::center_crop(host, side, side), ckpt.config.h,
                                   ckpt.config.w);
      }
      const double a = alpha.value_or(ckpt.config.alpha);
      wm::ImageArray em = wm::embed(bundle, host, msg, a);
      wm::save_image(em, out_path);
      std::cout << "psnr: " << wm::psnr(host.data, em.data) << "\n";
      return 0;
    }

    if (cmd_extract->parsed()) {
      wm::Checkpoint ckpt = load_checkpoint_or_die(checkpoint_path);
      wm::ModelBundle bundle = wm::bundle_from_checkpoint(ckpt);
      wm::ImageArray img = wm::load_image(image_path);
      img.role = wm::ImageRole::watermarked;
      if (img.height() != ckpt.config.h || img.width() != ckpt.config.w) {
        std::cerr << "error: image is " << img.height() << "x" << img.width()
                  << ", checkpoint expects " << ckpt.config.h << "x" << ckpt.config.w
                  << "\n";
        return kExitMessageMismatch;
      }
      auto conf = wm::extract_confidences(bundle.extraction_decoder(), img);
      wm::WatermarkMessage msg;
      for (double v : conf) msg.bits.push_back(v > 0.5 ? 1 : 0);
      std::cout << "message: " << wm::message_to_hex(msg) << "\nconfidences:";
      for (double v : conf) std::cout << ' ' << v;
      std::cout << "\n";
      return 0;
    }

    if (cmd_benchmark->parsed()) {
      wm::Checkpoint ckpt = load_checkpoint_or_die(checkpoint_path);
      wm::ModelBundle bundle = wm::bundle_from_checkpoint(ckpt);
      auto images = wm::load_dataset(images_dir, ckpt.config.h, ckpt.config.w);
      wm::BenchmarkPlan plan;
      plan.checkpoint_path = checkpoint_path;
      plan.image_dir = images_dir;
      plan.trials = trials;
      plan.seed = seed.value_or(0);
      wm::BenchmarkReport report = wm::run_benchmark(bundle, images, plan);
      wm::write_report(report, out_path);
      std::cout << report.rows.size() << " rows written to " << out_path << "\n";
      return 0;
    }

    if (cmd_ablate->parsed()) {
      wm::TrainConfig config = wm::config_from_file(config_path);
      if (seed) config.seed = *seed;
      std::vector<wm::Variant> variants;
      std::stringstream ss(variants_csv);
      std::string name;
      while (std::getline(ss, name, ','))
        if (!name.empty()) variants.push_back(wm::variant_from_string(name));
      if (variants.empty()) throw std::invalid_argument("no variants given");
      auto images = wm::load_dataset(images_dir, config.h, config.w);
      wm::BenchmarkPlan plan;
      plan.trials = trials;
      plan.seed = config.seed;
      wm::AblationReport report =
          wm::run_ablation(config, variants, images, plan, out_path);
      std::ofstream json(out_path + "/ablation.json", std::ios::binary);
      json << wm::ablation_to_json(report);
      std::cout << wm::ablation_to_table(report);
      return 0;
    }

    if (cmd_analyze->parsed()) {
      wm::Checkpoint ckpt = load_checkpoint_or_die(checkpoint_path);
      wm::ModelBundle bundle = wm::bundle_from_checkpoint(ckpt);
      if (alpha) bundle.config.alpha = *alpha;
      auto images = wm::load_dataset(images_dir, ckpt.config.h, ckpt.config.w);
      auto records = wm::run_analysis(bundle, images, seed.value_or(0), out_path);
      for (const auto& r : records)
        std::cout << "image " << r.image_id << ": consistency=" << r.consistency
                  << " psnr=" << r.psnr << " bitacc=" << r.bitacc << "\n";
      return 0;
    }

    if (cmd_describe->parsed()) {
      wm::Checkpoint ckpt = load_checkpoint_or_die(checkpoint_path);
      std::cout << wm::describe_checkpoint(ckpt);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
