#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wm/networks.hpp"
#include "wm/noise.hpp"
#include "wm/types.hpp"

namespace wm {

// Losses on single examples or batches. Messages live in {0,1}^L,
// decoder outputs are raw reals compared with MSE.
double loss_decoder(const std::vector<WatermarkMessage>& messages,
                    const std::vector<std::vector<double>>& decoded);
double loss_encoder(const std::vector<Tensor>& hosts, const std::vector<Tensor>& embedded);
// Probabilities are the discriminator's "judged watermarked" outputs.
// Standard convention: generator minimizes -log(1 - p_em); discriminator
// minimizes -log(p_em) - log(1 - p_host), both terms per sample. The
// literal convention keeps the printed forms: generator log(p_em),
// discriminator log(1 - p_em) with no host term.
double loss_adversarial(const std::vector<double>& p_embedded, bool paper_literal);
double loss_discriminator(const std::vector<double>& p_host,
                          const std::vector<double>& p_embedded, bool paper_literal);

LambdaTriple lambda_schedule(const TrainConfig& config, int epoch);

class Adam {
 public:
  Adam(std::vector<Param*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step();
  void zero_grad();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

struct LossReport {
  double l_e = 0.0;
  double l_d = 0.0;
  double l_ad = 0.0;
  double l_dis = 0.0;
  double total(const LambdaTriple& lambdas) const {
    return lambdas.l1 * l_e + lambdas.l2 * l_d + lambdas.l3 * l_ad;
  }
};

struct Batch {
  std::vector<const Tensor*> hosts;
  std::vector<WatermarkMessage> messages;
  std::uint64_t noise_seed = 0;
};

// One optimizer step for both players: discriminator update on the fresh
// embeddings, then a generator update through noise and both decoder passes.
LossReport train_step(ModelBundle& bundle, Adam& gen_opt, Adam& disc_opt,
                      const Batch& batch, const LambdaTriple& lambdas);

struct EpochStats {
  int epoch = 0;
  LossReport losses;
  double psnr_train = 0.0;
  double bitacc_train = 0.0;
  LambdaTriple lambdas;
};

struct TrainResult {
  std::vector<EpochStats> history;
  // Per-image messages used for the epoch evaluation (and, when
  // resample_messages is off, for training itself).
  std::vector<WatermarkMessage> eval_messages;
  int epochs_run = 0;
};

using EpochCallback = std::function<bool(const EpochStats&)>;

// Full loop over the dataset. When `out_dir` is set, metrics.jsonl and
// checkpoint.wmck are updated after each epoch. `should_stop` returning
// true ends training early after the epoch it inspected.
TrainResult train(ModelBundle& bundle, const std::vector<Tensor>& images,
                  const std::string& out_dir = "", EpochCallback should_stop = nullptr);

}  // namespace wm
