#include "wm/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "wm/kernels.hpp"
#include "wm/metrics.hpp"

namespace wm {

namespace {

constexpr double kProbEps = 1e-7;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamped_log(double p) { return std::log(std::clamp(p, kProbEps, 1.0 - kProbEps)); }

Tensor stack_images(const std::vector<const Tensor*>& hosts) {
  const Tensor& first = *hosts.front();
  Tensor out({hosts.size(), first.dim(0), first.dim(1), first.dim(2)});
  const std::size_t sz = first.numel();
  for (std::size_t i = 0; i < hosts.size(); ++i)
    std::copy_n(hosts[i]->data(), sz, out.data() + i * sz);
  return out;
}

Tensor stack_messages(const std::vector<WatermarkMessage>& messages) {
  const std::size_t l = messages.front().length();
  Tensor out({messages.size(), l});
  for (std::size_t i = 0; i < messages.size(); ++i)
    for (std::size_t j = 0; j < l; ++j) out[i * l + j] = double(messages[i].bits[j]);
  return out;
}

Tensor image_slice(const Tensor& batch, std::size_t i) {
  Tensor out({batch.dim(1), batch.dim(2), batch.dim(3)});
  std::copy_n(batch.data() + i * out.numel(), out.numel(), out.data());
  return out;
}

std::vector<double> sigmoid_probs(const Tensor& logits) {
  std::vector<double> p(logits.numel());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(logits[i]);
  return p;
}

}  // namespace

double loss_decoder(const std::vector<WatermarkMessage>& messages,
                    const std::vector<std::vector<double>>& decoded) {
  if (messages.size() != decoded.size() || messages.empty())
    throw std::invalid_argument("loss_decoder: size mismatch");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (messages[i].length() != decoded[i].size())
      throw std::invalid_argument("loss_decoder: message length mismatch");
    for (std::size_t j = 0; j < decoded[i].size(); ++j) {
      const double d = decoded[i][j] - double(messages[i].bits[j]);
      acc += d * d;
      ++n;
    }
  }
  return acc / double(n);
}

double loss_encoder(const std::vector<Tensor>& hosts, const std::vector<Tensor>& embedded) {
  if (hosts.size() != embedded.size() || hosts.empty())
    throw std::invalid_argument("loss_encoder: size mismatch");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < hosts.size(); ++i) {
    acc += mse(hosts[i], embedded[i]) * double(hosts[i].numel());
    n += hosts[i].numel();
  }
  return acc / double(n);
}

double loss_adversarial(const std::vector<double>& p_embedded, bool paper_literal) {
  if (p_embedded.empty()) throw std::invalid_argument("loss_adversarial: empty batch");
  double acc = 0.0;
  for (double p : p_embedded)
    acc += paper_literal ? clamped_log(p) : -clamped_log(1.0 - p);
  return acc / double(p_embedded.size());
}

double loss_discriminator(const std::vector<double>& p_host,
                          const std::vector<double>& p_embedded, bool paper_literal) {
  if (p_embedded.empty()) throw std::invalid_argument("loss_discriminator: empty batch");
  double acc = 0.0;
  if (paper_literal) {
    for (double p : p_embedded) acc += clamped_log(1.0 - p);
    return acc / double(p_embedded.size());
  }
  if (p_host.size() != p_embedded.size())
    throw std::invalid_argument("loss_discriminator: size mismatch");
  for (double p : p_host) acc += -clamped_log(1.0 - p);
  for (double p : p_embedded) acc += -clamped_log(p);
  return acc / double(p_embedded.size());
}

LambdaTriple lambda_schedule(const TrainConfig& config, int epoch) {
  return std::size_t(epoch) < config.phase_switch_epoch ? config.lambda_phase1
                                                        : config.lambda_phase2;
}

Adam::Adam(std::vector<Param*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Param* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param* p = params_[i];
    if (!p->trainable) continue;
    kernels::ops().adam_step(p->value.data(), m_[i].data(), v_[i].data(),
                             p->grad.data(), p->value.numel(), lr_, beta1_, beta2_,
                             eps_, c1, c2);
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

LossReport train_step(ModelBundle& bundle, Adam& gen_opt, Adam& disc_opt,
                      const Batch& batch, const LambdaTriple& lambdas) {
  const TrainConfig& cfg = bundle.config;
  const std::size_t n = batch.hosts.size();
  if (n == 0 || batch.messages.size() != n)
    throw std::invalid_argument("train_step: empty batch or message count mismatch");

  const Tensor hosts = stack_images(batch.hosts);
  const Tensor msgs = stack_messages(batch.messages);

  // Generator forward, traced.
  Trace guide_trace, enc_trace;
  Tensor residual;
  const bool uses_guidance =
      cfg.variant == Variant::deend || cfg.variant == Variant::de_a_end_b;
  if (uses_guidance) {
    Tensor feature = bundle.guidance_decoder().forward(hosts, &guide_trace, true);
    residual = bundle.encoder->forward(concat_cols(feature, msgs), &enc_trace, true);
  } else if (cfg.variant == Variant::e_w_nd) {
    residual = bundle.encoder->forward(msgs, &enc_trace, true);
  } else {
    residual = bundle.encoder->forward(baseline_encoder_input(hosts, msgs),
                                       &enc_trace, true);
  }

  Tensor pre = hosts;
  kernels::ops().axpy(cfg.alpha, residual.data(), pre.data(), pre.numel());
  Tensor embedded = pre;
  clamp01(embedded);
  Tensor clamp_mask(pre.shape());
  for (std::size_t i = 0; i < pre.numel(); ++i)
    clamp_mask[i] = (pre[i] > 0.0 && pre[i] < 1.0) ? 1.0 : 0.0;

  LossReport report;
  report.l_e = mse(hosts, embedded);

  // Discriminator step on the fresh embeddings (treated as constants).
  // λ3 == 0 removes the adversarial game entirely, so skip both players.
  const bool adversarial = lambdas.l3 != 0.0;
  disc_opt.zero_grad();
  if (adversarial) {
    Trace d_trace;
    Tensor logits_em = bundle.discriminator->forward_logits(embedded, &d_trace, true);
    const auto p_em = sigmoid_probs(logits_em);
    Tensor g_em({n, std::size_t(1)});
    std::vector<double> p_host;
    if (cfg.paper_literal_gan) {
      // d/dz log(1 - sigmoid(z)) = -sigmoid(z)
      for (std::size_t i = 0; i < n; ++i) g_em[i] = -p_em[i] / double(n);
      bundle.discriminator->backward(g_em, d_trace);
    } else {
      // d/dz(-log sigmoid(z)) = sigmoid(z) - 1
      for (std::size_t i = 0; i < n; ++i) g_em[i] = (p_em[i] - 1.0) / double(n);
      bundle.discriminator->backward(g_em, d_trace);
      Trace d_real;
      Tensor logits_host = bundle.discriminator->forward_logits(hosts, &d_real, true);
      p_host = sigmoid_probs(logits_host);
      Tensor g_host({n, std::size_t(1)});
      // d/dz(-log(1 - sigmoid(z))) = sigmoid(z)
      for (std::size_t i = 0; i < n; ++i) g_host[i] = p_host[i] / double(n);
      bundle.discriminator->backward(g_host, d_real);
    }
    report.l_dis = loss_discriminator(p_host, p_em, cfg.paper_literal_gan);
    disc_opt.step();
    disc_opt.zero_grad();
  }

  // Generator step: message loss through noise + extraction decoder,
  // image fidelity loss, adversarial loss against the updated critic.
  gen_opt.zero_grad();

  NoiseSpec step_spec = cfg.noise;
  if (step_spec.kind == NoiseKind::jpeg_mbrs) {
    Rng coin(batch.noise_seed);
    step_spec.kind = (coin() & 1) ? NoiseKind::jpeg_real : NoiseKind::jpeg_simulated;
  }
  Rng param_rng(batch.noise_seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<Tensor> host_slices(n), em_slices(n);
  std::vector<NoiseBackward> noise_back(n);
  Tensor noised(hosts.shape());
  const std::size_t img_sz = hosts.numel() / n;
  for (std::size_t i = 0; i < n; ++i) {
    host_slices[i] = image_slice(hosts, i);
    em_slices[i] = image_slice(embedded, i);
    NoiseSpec spec_i = sample_training_spec(step_spec, param_rng);
    DistortionContext ctx{&host_slices[i], batch.noise_seed * 1000003ull + i, true};
    NoiseResult res = apply_noise_with_grad(spec_i, em_slices[i], ctx);
    std::copy_n(res.output.data(), img_sz, noised.data() + i * img_sz);
    noise_back[i] = std::move(res.backward);
  }

  Trace ext_trace;
  Tensor decoded = bundle.extraction_decoder().forward(noised, &ext_trace, true);
  report.l_d = mse(decoded, msgs);

  Tensor g_decoded = decoded - msgs;
  kernels::ops().scale(lambdas.l2 * 2.0 / double(decoded.numel()), g_decoded.data(),
                       g_decoded.numel());
  Tensor g_noised = bundle.extraction_decoder().backward(g_decoded, ext_trace);

  Tensor g_embedded(embedded.shape());
  for (std::size_t i = 0; i < n; ++i) {
    Tensor g_slice({embedded.dim(1), embedded.dim(2), embedded.dim(3)});
    std::copy_n(g_noised.data() + i * img_sz, img_sz, g_slice.data());
    Tensor g_em_i = noise_back[i](g_slice);
    std::copy_n(g_em_i.data(), img_sz, g_embedded.data() + i * img_sz);
  }

  // Fidelity term.
  {
    Tensor g_e = embedded - hosts;
    kernels::ops().axpy(lambdas.l1 * 2.0 / double(embedded.numel()), g_e.data(),
                        g_embedded.data(), g_embedded.numel());
  }

  // Adversarial term against the just-updated discriminator.
  if (adversarial) {
    Trace d_trace;
    Tensor logits = bundle.discriminator->forward_logits(embedded, &d_trace, true);
    const auto p = sigmoid_probs(logits);
    report.l_ad = loss_adversarial(p, cfg.paper_literal_gan);
    Tensor g_logit({n, std::size_t(1)});
    for (std::size_t i = 0; i < n; ++i) {
      // standard: d/dz(-log(1 - sigmoid(z))) = sigmoid(z)
      // literal:  d/dz( log sigmoid(z)) = 1 - sigmoid(z)
      const double d = cfg.paper_literal_gan ? (1.0 - p[i]) : p[i];
      g_logit[i] = lambdas.l3 * d / double(n);
    }
    Tensor g_img = bundle.discriminator->backward(g_logit, d_trace);
    kernels::ops().add(g_img.data(), g_embedded.data(), g_embedded.numel());
  }

  kernels::ops().mul(clamp_mask.data(), g_embedded.data(), g_embedded.numel());
  Tensor g_residual = cfg.alpha * g_embedded;
  Tensor g_enc_in = bundle.encoder->backward(g_residual, enc_trace);
  if (uses_guidance) {
    Tensor g_feature, g_msgs;
    split_cols(g_enc_in, cfg.l, g_feature, g_msgs);
    bundle.guidance_decoder().backward(g_feature, guide_trace);
  }

  // Discriminator gradients picked up during the adversarial pass are
  // discarded; only generator parameters step here.
  gen_opt.step();
  disc_opt.zero_grad();

  if (!std::isfinite(report.l_e) || !std::isfinite(report.l_d) ||
      !std::isfinite(report.l_ad) || !std::isfinite(report.l_dis)) {
    std::ostringstream msg;
    msg << "non-finite loss: l_e=" << report.l_e << " l_d=" << report.l_d
        << " l_ad=" << report.l_ad << " l_dis=" << report.l_dis;
    throw std::runtime_error(msg.str());
  }
  return report;
}

namespace {

WatermarkMessage random_message(std::size_t l, Rng& rng) {
  WatermarkMessage msg;
  msg.bits.resize(l);
  for (auto& b : msg.bits) b = uint8_t(rng() & 1);
  return msg;
}

}  // namespace

TrainResult train(ModelBundle& bundle, const std::vector<Tensor>& images,
                  const std::string& out_dir, EpochCallback should_stop) {
  const TrainConfig& cfg = validate_config(bundle.config);
  if (images.empty()) throw std::invalid_argument("train: no images");
  for (const Tensor& img : images)
    validate_image({img, ImageRole::host});

  Adam gen_opt(bundle.generator_params(), cfg.learning_rate);
  Adam disc_opt(bundle.discriminator_params(), cfg.learning_rate);

  Rng train_rng(cfg.seed + 1);
  Rng eval_msg_rng(cfg.seed + 2);
  std::vector<WatermarkMessage> eval_msgs;
  for (std::size_t i = 0; i < images.size(); ++i)
    eval_msgs.push_back(random_message(cfg.l, eval_msg_rng));

  std::ofstream metrics_out;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    metrics_out.open(out_dir + "/metrics.jsonl");
    if (!metrics_out) throw std::runtime_error("cannot write metrics in " + out_dir);
  }

  TrainResult result;
  result.eval_messages = eval_msgs;
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const LambdaTriple lambdas = lambda_schedule(cfg, int(epoch));
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, double(epoch));
    gen_opt.set_lr(lr);
    disc_opt.set_lr(lr);
    std::shuffle(order.begin(), order.end(), train_rng);

    LossReport avg;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      Batch batch;
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t i = start; i < stop; ++i) {
        batch.hosts.push_back(&images[order[i]]);
        batch.messages.push_back(cfg.resample_messages
                                     ? random_message(cfg.l, train_rng)
                                     : eval_msgs[order[i]]);
      }
      batch.noise_seed = train_rng();
      const LossReport r = train_step(bundle, gen_opt, disc_opt, batch, lambdas);
      avg.l_e += r.l_e;
      avg.l_d += r.l_d;
      avg.l_ad += r.l_ad;
      avg.l_dis += r.l_dis;
      ++steps;
    }
    avg.l_e /= double(steps);
    avg.l_d /= double(steps);
    avg.l_ad /= double(steps);
    avg.l_dis /= double(steps);

    // Dataset pass with fixed messages: embedding fidelity and recovery
    // under one sampled distortion per image.
    Rng eval_rng(cfg.seed + 3 + epoch * 7919);
    double psnr_sum = 0.0, acc_sum = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      ImageArray host{images[i], ImageRole::host};
      ImageArray em = embed(bundle, host, eval_msgs[i], cfg.alpha);
      psnr_sum += psnr(host.data, em.data);
      NoiseSpec spec = sample_training_spec(cfg.noise, eval_rng);
      DistortionContext ctx{&images[i], eval_rng(), false};
      ImageArray noised{apply_noise(spec, em.data, ctx), ImageRole::distorted};
      acc_sum += bit_accuracy(eval_msgs[i],
                              extract(bundle.extraction_decoder(), noised));
    }

    EpochStats stats;
    stats.epoch = int(epoch);
    stats.losses = avg;
    stats.psnr_train = psnr_sum / double(images.size());
    stats.bitacc_train = acc_sum / double(images.size());
    stats.lambdas = lambdas;
    result.history.push_back(stats);
    result.epochs_run = int(epoch) + 1;

    if (!out_dir.empty()) {
      nlohmann::json line{{"epoch", stats.epoch},
                          {"l_e", avg.l_e},
                          {"l_d", avg.l_d},
                          {"l_ad", avg.l_ad},
                          {"l_dis", avg.l_dis},
                          {"psnr_train", stats.psnr_train},
                          {"bitacc_train", stats.bitacc_train},
                          {"lambdas", {lambdas.l1, lambdas.l2, lambdas.l3}}};
      metrics_out << line.dump() << "\n";
      metrics_out.flush();
      std::ostringstream rng_state;
      rng_state << train_rng;
      save_checkpoint(make_checkpoint(bundle, epoch, rng_state.str()),
                      out_dir + "/checkpoint.wmck");
    }

    if (should_stop && should_stop(stats)) break;
  }
  return result;
}

}  // namespace wm
