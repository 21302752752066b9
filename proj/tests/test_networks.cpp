#include <algorithm>
#include <set>

#include <doctest.h>

#include "wm/networks.hpp"

using namespace wm;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.h = cfg.w = 16;
  cfg.c = 3;
  cfg.l = 8;
  cfg.seed = 5;
  return cfg;
}

Tensor random_image_batch(std::size_t n, const TrainConfig& cfg, Rng& rng) {
  Tensor t({n, cfg.c, cfg.h, cfg.w});
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = d(rng);
  return t;
}

std::size_t count_named(const std::vector<Param*>& params, const std::string& prefix) {
  std::size_t n = 0;
  for (const Param* p : params)
    if (p->name.rfind(prefix, 0) == 0) n += p->value.numel();
  return n;
}

}  // namespace

TEST_CASE("decoder and encoder shape contracts across variants and modes") {
  for (Variant variant : {Variant::deend, Variant::end_baseline, Variant::de_a_end_b,
                          Variant::e_w_nd}) {
    for (UpsampleMode mode : {UpsampleMode::unpool, UpsampleMode::transpose_conv,
                              UpsampleMode::nearest_interp}) {
      TrainConfig cfg = tiny_config();
      cfg.variant = variant;
      cfg.upsample_mode = mode;
      ModelBundle bundle = make_variant(cfg);
      Rng rng(3);
      Tensor imgs = random_image_batch(2, cfg, rng);

      Tensor latent = bundle.guidance_decoder().forward(imgs, nullptr, false);
      CHECK(latent.shape() == std::vector<std::size_t>{2, cfg.l});

      Tensor msgs({2, cfg.l});
      msgs.fill(1.0);
      Tensor residual;
      if (variant == Variant::end_baseline)
        residual = bundle.encoder->forward(baseline_encoder_input(imgs, msgs),
                                           nullptr, false);
      else if (variant == Variant::e_w_nd)
        residual = bundle.encoder->forward(msgs, nullptr, false);
      else
        residual = bundle.encoder->forward(concat_cols(latent, msgs), nullptr, false);
      CHECK(residual.shape() == std::vector<std::size_t>{2, cfg.c, cfg.h, cfg.w});

      Tensor logits = bundle.discriminator->forward_logits(imgs, nullptr, false);
      CHECK(logits.shape() == std::vector<std::size_t>{2, std::size_t(1)});
    }
  }
}

TEST_CASE("variant manifests: sharing, duplication, stem width") {
  TrainConfig cfg = tiny_config();
  ModelBundle shared = make_variant(cfg);
  CHECK(shared.decoder_b == nullptr);
  CHECK(&shared.guidance_decoder() == &shared.extraction_decoder());

  auto shared_params = shared.all_params();
  std::set<std::string> names;
  for (const Param* p : shared_params) CHECK(names.insert(p->name).second);
  CHECK(count_named(shared_params, "decoder.") > 0);
  CHECK(count_named(shared_params, "decoder_b.") == 0);

  cfg.variant = Variant::de_a_end_b;
  ModelBundle split = make_variant(cfg);
  REQUIRE(split.decoder_b != nullptr);
  auto split_params = split.all_params();
  CHECK(count_named(split_params, "decoder.") == count_named(split_params, "decoder_b."));
  // Independently initialized: at least one value differs.
  std::vector<Param*> a, b;
  split.decoder->collect_params(a);
  split.decoder_b->collect_params(b);
  REQUIRE(a.size() == b.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i]->value.shape() == b[i]->value.shape());
    for (std::size_t j = 0; j < a[i]->value.numel(); ++j)
      if (a[i]->value[j] != b[i]->value[j]) any_diff = true;
  }
  CHECK(any_diff);

  cfg.variant = Variant::e_w_nd;
  ModelBundle msg_only = make_variant(cfg);
  CHECK(msg_only.encoder->stem_width() == cfg.l);
  cfg.variant = Variant::deend;
  CHECK(make_variant(cfg).encoder->stem_width() == 2 * cfg.l);
}

TEST_CASE("decoder depth is monotone in parameter count and bounded") {
  std::vector<std::size_t> counts;
  for (std::size_t unions : {3u, 5u, 7u}) {
    TrainConfig cfg = tiny_config();
    cfg.decoder_unions = unions;
    Rng rng(cfg.seed);
    auto dec = make_decoder(cfg, rng);
    std::vector<Param*> params;
    dec->collect_params(params);
    std::size_t total = 0;
    for (const Param* p : params) total += p->value.numel();
    counts.push_back(total);

    Tensor img({1, cfg.c, cfg.h, cfg.w});
    CHECK(dec->forward(img, nullptr, false).shape() ==
          std::vector<std::size_t>{1, cfg.l});
  }
  CHECK(counts[0] < counts[1]);
  CHECK(counts[1] < counts[2]);

  TrainConfig bad = tiny_config();
  bad.decoder_unions = 2;
  CHECK_THROWS(make_variant(bad));
}

TEST_CASE("embed and extract round trip plumbing") {
  TrainConfig cfg = tiny_config();
  ModelBundle bundle = make_variant(cfg);
  Rng rng(17);
  Tensor img_data = random_image_batch(1, cfg, rng)
                        .reshaped({cfg.c, cfg.h, cfg.w});
  ImageArray host{img_data, ImageRole::host};
  WatermarkMessage msg = message_from_hex("A5", cfg.l);

  ImageArray em0 = embed(bundle, host, msg, 0.0);
  for (std::size_t i = 0; i < em0.data.numel(); ++i)
    CHECK(em0.data[i] == host.data[i]);

  ImageArray em = embed(bundle, host, msg, 1.0);
  CHECK(em.role == ImageRole::watermarked);
  CHECK(em.data.min() >= 0.0);
  CHECK(em.data.max() <= 1.0);

  // Inference is deterministic.
  ImageArray em2 = embed(bundle, host, msg, 1.0);
  for (std::size_t i = 0; i < em.data.numel(); ++i) CHECK(em.data[i] == em2.data[i]);

  auto conf = extract_confidences(bundle.extraction_decoder(), em);
  WatermarkMessage got = extract(bundle.extraction_decoder(), em);
  REQUIRE(conf.size() == got.length());
  for (std::size_t i = 0; i < conf.size(); ++i)
    CHECK(got.bits[i] == (conf[i] > 0.5 ? 1 : 0));

  const double p = discriminator_forward(*bundle.discriminator, em);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
}

TEST_CASE("zeroed discriminator head outputs exactly one half") {
  TrainConfig cfg = tiny_config();
  ModelBundle bundle = make_variant(cfg);
  std::vector<Param*> params;
  bundle.discriminator->collect_params(params);
  for (Param* p : params)
    if (p->name.rfind("discriminator.head", 0) == 0) p->value.zero();
  Rng rng(23);
  ImageArray img{random_image_batch(1, cfg, rng).reshaped({cfg.c, cfg.h, cfg.w}),
                 ImageRole::host};
  CHECK(discriminator_forward(*bundle.discriminator, img) == 0.5);
}

TEST_CASE("checkpoint restores a bundle to float32 precision") {
  TrainConfig cfg = tiny_config();
  cfg.upsample_mode = UpsampleMode::unpool;
  ModelBundle bundle = make_variant(cfg);
  Rng rng(31);
  ImageArray host{random_image_batch(1, cfg, rng).reshaped({cfg.c, cfg.h, cfg.w}),
                  ImageRole::host};
  WatermarkMessage msg = message_from_hex("3C", cfg.l);
  ImageArray em = embed(bundle, host, msg, 1.0);

  Checkpoint ckpt = make_checkpoint(bundle, 12, "state");
  ModelBundle restored = bundle_from_checkpoint(ckpt);
  ImageArray em2 = embed(restored, host, msg, 1.0);
  for (std::size_t i = 0; i < em.data.numel(); ++i)
    CHECK(em.data[i] == doctest::Approx(em2.data[i]).epsilon(1e-5));

  // Extraction agrees bit for bit after the round trip.
  WatermarkMessage a = extract(bundle.extraction_decoder(), em);
  WatermarkMessage b = extract(restored.extraction_decoder(), em);
  CHECK(a.bits == b.bits);

  Checkpoint broken = ckpt;
  broken.parameters.pop_back();
  CHECK_THROWS(bundle_from_checkpoint(broken));
}
