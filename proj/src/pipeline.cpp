#include "wm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "wm/image_io.hpp"
#include "wm/metrics.hpp"
#include "wm/noise.hpp"
#include "wm/training.hpp"

namespace wm {

namespace {

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ull + b * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

WatermarkMessage seeded_message(std::size_t l, uint64_t seed) {
  Rng rng(seed);
  WatermarkMessage msg;
  msg.bits.resize(l);
  for (auto& b : msg.bits) b = uint8_t(rng() & 1);
  return msg;
}

std::string format_value(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

Tensor to_rgb(const Tensor& map, std::size_t c) {
  if (map.dim(0) == c) return map;
  Tensor out({c, map.dim(1), map.dim(2)});
  const std::size_t plane = map.dim(1) * map.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch)
    std::copy_n(map.data(), plane, out.data() + ch * plane);
  return out;
}

Tensor channel_mean(const Tensor& map) {
  const std::size_t c = map.dim(0), plane = map.dim(1) * map.dim(2);
  Tensor out({std::size_t(1), map.dim(1), map.dim(2)});
  for (std::size_t i = 0; i < plane; ++i) {
    double s = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) s += map[ch * plane + i];
    out[i] = s / double(c);
  }
  return out;
}

}  // namespace

std::size_t eval_threads() {
  const char* env = std::getenv("WM_NUM_THREADS");
  if (!env) return 1;
  const long v = std::strtol(env, nullptr, 10);
  return v > 0 ? std::size_t(v) : 1;
}

std::vector<Sweep> default_sweeps() {
  return {
      {NoiseKind::cropout, "ratio", {0.1, 0.2, 0.3, 0.4, 0.5}},
      {NoiseKind::dropout, "ratio", {0.2, 0.3, 0.4, 0.5, 0.6}},
      {NoiseKind::gaussian_noise, "variance", {0.01, 0.02, 0.03, 0.04, 0.05}},
      {NoiseKind::salt_pepper, "ratio", {0.01, 0.02, 0.03, 0.04, 0.05}},
      {NoiseKind::gaussian_blur, "variance", {0.0001, 0.5, 1.0, 2.0}},
      {NoiseKind::median_blur, "window", {3, 5, 7}},
      {NoiseKind::jpeg_real, "quality_factor", {40, 50, 60, 70, 80, 90}},
  };
}

BenchmarkReport run_benchmark(ModelBundle& bundle, const std::vector<Tensor>& images,
                              const BenchmarkPlan& plan) {
  if (plan.trials < 1) throw std::invalid_argument("benchmark: trials >= 1");
  const std::vector<Sweep> sweeps = plan.sweeps.empty() ? default_sweeps() : plan.sweeps;
  for (const Sweep& s : sweeps)
    for (double v : s.values) {
      NoiseSpec spec{s.kind, {}};
      if (!s.param_key.empty()) spec.params[s.param_key] = {v};
      validate_noise_spec(spec);
    }

  std::size_t points = 0;
  for (const Sweep& s : sweeps) points += s.values.size();
  const std::size_t per_image = plan.trials * points;

  BenchmarkReport report;
  report.rows.resize(images.size() * per_image);
  report.config_echo = config_to_json(bundle.config);

  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const ImageArray host{images[i], ImageRole::host};
      for (std::size_t t = 0; t < plan.trials; ++t) {
        const WatermarkMessage msg =
            seeded_message(bundle.config.l, mix(plan.seed, mix(i, t)));
        const ImageArray em = embed(bundle, host, msg, bundle.config.alpha);
        const double p = psnr(host.data, em.data);
        std::size_t row = (i * plan.trials + t) * points;
        std::size_t point = 0;
        for (const Sweep& s : sweeps)
          for (double v : s.values) {
            NoiseSpec spec{s.kind, {}};
            if (!s.param_key.empty()) spec.params[s.param_key] = {v};
            DistortionContext ctx{&images[i],
                                  mix(plan.seed, mix(mix(i, t), point + 1)), false};
            ImageArray noised{apply_noise(spec, em.data, ctx), ImageRole::distorted};
            const WatermarkMessage got = extract(bundle.extraction_decoder(), noised);
            report.rows[row] = {i, s.kind, v, t, bit_accuracy(msg, got), p};
            ++row;
            ++point;
          }
      }
    }
  };

  const std::size_t threads =
      std::min({eval_threads(), images.size(), std::size_t(64)});
  if (threads <= 1) {
    worker(0, images.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (images.size() + threads - 1) / threads;
    for (std::size_t k = 0; k < threads; ++k) {
      const std::size_t begin = k * chunk;
      const std::size_t end = std::min(images.size(), begin + chunk);
      if (begin < end) pool.emplace_back(worker, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  // Aggregate in sweep order.
  for (const Sweep& s : sweeps)
    for (double v : s.values) {
      double acc = 0.0, acc2 = 0.0, ps = 0.0;
      std::size_t n = 0;
      for (const BenchmarkRow& row : report.rows)
        if (row.kind == s.kind && row.param == v) {
          acc += row.bit_accuracy;
          acc2 += row.bit_accuracy * row.bit_accuracy;
          ps += row.psnr_embed;
          ++n;
        }
      const double mean = acc / double(n);
      const double var = std::max(0.0, acc2 / double(n) - mean * mean);
      report.aggregates.push_back({s.kind, v, mean, std::sqrt(var), ps / double(n)});
    }
  return report;
}

std::string report_to_csv(const BenchmarkReport& report) {
  std::ostringstream os;
  os << "image_id,kind,param,trial,bit_accuracy,psnr_embed\n";
  for (const BenchmarkRow& r : report.rows)
    os << r.image_id << ',' << to_string(r.kind) << ',' << format_value(r.param)
       << ',' << r.trial << ',' << format_value(r.bit_accuracy) << ','
       << format_value(r.psnr_embed) << '\n';
  return os.str();
}

std::string report_to_json(const BenchmarkReport& report) {
  nlohmann::json agg = nlohmann::json::array();
  for (const BenchmarkAggregate& a : report.aggregates)
    agg.push_back({{"kind", to_string(a.kind)},
                   {"param", a.param},
                   {"mean_accuracy", a.mean_accuracy},
                   {"std_accuracy", a.std_accuracy},
                   {"mean_psnr", a.mean_psnr}});
  nlohmann::json out{{"config", nlohmann::json::parse(report.config_echo)},
                     {"aggregates", agg},
                     {"rows", report.rows.size()}};
  return out.dump(2);
}

void write_report(const BenchmarkReport& report, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir + "/report.csv", std::ios::binary);
  csv << report_to_csv(report);
  std::ofstream json(out_dir + "/report.json", std::ios::binary);
  json << report_to_json(report);
  if (!csv || !json) throw std::runtime_error("cannot write report in " + out_dir);
}

AblationReport run_ablation(const TrainConfig& base_config,
                            const std::vector<Variant>& variants,
                            const std::vector<Tensor>& images,
                            const BenchmarkPlan& plan, const std::string& out_dir) {
  AblationReport report;
  for (Variant variant : variants) {
    TrainConfig cfg = base_config;
    cfg.variant = variant;
    ModelBundle bundle = make_variant(cfg);
    std::string variant_dir =
        out_dir.empty() ? "" : out_dir + "/" + to_string(variant);
    train(bundle, images, variant_dir);

    AblationRow row;
    row.variant = variant;
    for (const Param* p : bundle.all_params()) {
      row.parameter_count += p->value.numel();
      if (p->name.rfind("decoder", 0) == 0)
        row.decoder_parameter_count += p->value.numel();
    }
    BenchmarkReport bench = run_benchmark(bundle, images, plan);
    double ps = 0.0;
    for (const BenchmarkRow& r : bench.rows) ps += r.psnr_embed;
    row.mean_psnr = bench.rows.empty() ? 0.0 : ps / double(bench.rows.size());
    row.aggregates = bench.aggregates;
    if (!variant_dir.empty()) write_report(bench, variant_dir);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string ablation_to_json(const AblationReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const AblationRow& r : report.rows) {
    nlohmann::json agg = nlohmann::json::array();
    for (const BenchmarkAggregate& a : r.aggregates)
      agg.push_back({{"kind", to_string(a.kind)},
                     {"param", a.param},
                     {"mean_accuracy", a.mean_accuracy}});
    rows.push_back({{"variant", to_string(r.variant)},
                    {"parameter_count", r.parameter_count},
                    {"decoder_parameter_count", r.decoder_parameter_count},
                    {"mean_psnr", r.mean_psnr},
                    {"accuracy", agg}});
  }
  return nlohmann::json{{"variants", rows}}.dump(2);
}

std::string ablation_to_table(const AblationReport& report) {
  std::ostringstream os;
  os << "variant      params      dec-params  psnr";
  if (!report.rows.empty())
    for (const BenchmarkAggregate& a : report.rows.front().aggregates)
      os << "  " << to_string(a.kind) << '=' << format_value(a.param);
  os << '\n';
  for (const AblationRow& r : report.rows) {
    os << to_string(r.variant);
    os << std::string(std::max<std::size_t>(1, 13 - to_string(r.variant).size()), ' ');
    std::ostringstream head;
    head << r.parameter_count << "  " << r.decoder_parameter_count;
    os << head.str() << "  " << format_value(r.mean_psnr);
    for (const BenchmarkAggregate& a : r.aggregates)
      os << "  " << format_value(a.mean_accuracy);
    os << '\n';
  }
  return os.str();
}

std::vector<CouplingRecord> run_analysis(ModelBundle& bundle,
                                         const std::vector<Tensor>& images,
                                         uint64_t seed, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<CouplingRecord> records;
  nlohmann::json json_records = nlohmann::json::array();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageArray host{images[i], ImageRole::host};
    const WatermarkMessage msg = seeded_message(bundle.config.l, mix(seed, i));
    const ImageArray em = embed(bundle, host, msg, bundle.config.alpha);

    const Tensor needed = decoder_needed_map(bundle.guidance_decoder(), host, msg);
    const Tensor residual = encoded_residual_map(host, em);

    CouplingRecord rec;
    rec.image_id = i;
    rec.consistency = coupling_consistency(needed, residual);
    rec.psnr = psnr(host.data, em.data);
    rec.bitacc = bit_accuracy(msg, extract(bundle.extraction_decoder(), em));
    records.push_back(rec);
    json_records.push_back({{"image_id", rec.image_id},
                            {"consistency", rec.consistency},
                            {"psnr", rec.psnr},
                            {"bitacc", rec.bitacc}});

    // 4-panel grid: host, watermarked, residual magnitude, gradient magnitude.
    const std::size_t c = host.channels(), h = host.height(), w = host.width();
    std::vector<Tensor> panels{
        host.data, em.data,
        to_rgb(channel_mean(normalize_map(residual)), c),
        to_rgb(channel_mean(normalize_map(needed)), c)};
    Tensor grid({c, h, 4 * w});
    for (std::size_t pnl = 0; pnl < 4; ++pnl)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
          std::copy_n(panels[pnl].data() + (ch * h + y) * w, w,
                      grid.data() + (ch * h + y) * 4 * w + pnl * w);
    save_image({grid, ImageRole::watermarked},
               out_dir + "/coupling_" + std::to_string(i) + ".png");
  }
  std::ofstream json(out_dir + "/coupling.json", std::ios::binary);
  json << json_records.dump(2);
  if (!json) throw std::runtime_error("cannot write coupling.json in " + out_dir);
  return records;
}

std::string describe_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream os;
  os << "variant: " << to_string(ckpt.config.variant) << '\n'
     << "image: " << ckpt.config.c << 'x' << ckpt.config.h << 'x' << ckpt.config.w
     << "  message length: " << ckpt.config.l << '\n'
     << "decoder_unions: " << ckpt.config.decoder_unions
     << "  upsample: " << to_string(ckpt.config.upsample_mode) << '\n'
     << "epoch: " << ckpt.epoch << '\n';
  std::size_t total = 0;
  for (const NamedArray& p : ckpt.parameters) {
    os << p.name << "  (";
    for (std::size_t i = 0; i < p.value.rank(); ++i)
      os << (i ? "," : "") << p.value.dim(i);
    os << ")\n";
    total += p.value.numel();
  }
  os << "total parameters: " << total << '\n';
  return os.str();
}

}  // namespace wm
