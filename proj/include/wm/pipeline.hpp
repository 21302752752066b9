#pragma once

#include <string>
#include <vector>

#include "wm/networks.hpp"
#include "wm/types.hpp"

namespace wm {

struct Sweep {
  NoiseKind kind = NoiseKind::identity;
  std::string param_key;          // empty for identity
  std::vector<double> values;     // one row batch per value; {0} for identity
};

struct BenchmarkPlan {
  std::string checkpoint_path;
  std::string image_dir;
  std::vector<Sweep> sweeps;
  std::size_t trials = 3;
  uint64_t seed = 0;
};

// The sweep grid used when a plan lists none.
std::vector<Sweep> default_sweeps();

struct BenchmarkRow {
  std::size_t image_id = 0;
  NoiseKind kind = NoiseKind::identity;
  double param = 0.0;
  std::size_t trial = 0;
  double bit_accuracy = 0.0;
  double psnr_embed = 0.0;
};

struct BenchmarkAggregate {
  NoiseKind kind = NoiseKind::identity;
  double param = 0.0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_psnr = 0.0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;        // canonical order: image, trial, sweep
  std::vector<BenchmarkAggregate> aggregates;
  std::string config_echo;               // JSON of the checkpoint config
};

// Embeds a fresh random message per (image, trial), applies every sweep
// point, extracts and records accuracy. Parallel across images up to
// WM_NUM_THREADS; output is deterministic for a fixed plan + seed.
BenchmarkReport run_benchmark(ModelBundle& bundle, const std::vector<Tensor>& images,
                              const BenchmarkPlan& plan);

std::string report_to_csv(const BenchmarkReport& report);
std::string report_to_json(const BenchmarkReport& report);
// Writes report.csv and report.json under out_dir.
void write_report(const BenchmarkReport& report, const std::string& out_dir);

struct AblationRow {
  Variant variant = Variant::deend;
  std::size_t parameter_count = 0;
  std::size_t decoder_parameter_count = 0;
  double mean_psnr = 0.0;
  // One accuracy per (kind, param) aggregate, aligned with `aggregates`.
  std::vector<BenchmarkAggregate> aggregates;
};

struct AblationReport {
  std::vector<AblationRow> rows;
};

// Trains every variant from the same seed and images, then benchmarks each
// with the same plan.
AblationReport run_ablation(const TrainConfig& base_config,
                            const std::vector<Variant>& variants,
                            const std::vector<Tensor>& images,
                            const BenchmarkPlan& plan, const std::string& out_dir);

std::string ablation_to_json(const AblationReport& report);
std::string ablation_to_table(const AblationReport& report);

struct CouplingRecord {
  std::size_t image_id = 0;
  double consistency = 0.0;
  double psnr = 0.0;
  double bitacc = 0.0;
};

// Per image: embeds a seeded random message, writes a 4-panel grid PNG
// (host, watermarked, normalized residual, normalized decoder gradient)
// and returns the consistency record.
std::vector<CouplingRecord> run_analysis(ModelBundle& bundle,
                                         const std::vector<Tensor>& images,
                                         uint64_t seed, const std::string& out_dir);

// Human-readable parameter manifest of a checkpoint.
std::string describe_checkpoint(const Checkpoint& ckpt);

// Evaluation thread count: WM_NUM_THREADS when set, else 1.
std::size_t eval_threads();

}  // namespace wm
