#include "life/nn/model.hpp"

#include "life/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace life::nn {

namespace {

void check_widths(const std::vector<int>& widths, const char* name) {
  if (widths.empty()) throw std::invalid_argument(std::string(name) + " must not be empty");
  for (int w : widths) {
    if (w < 1) throw std::invalid_argument(std::string(name) + " entries must be >= 1");
  }
}

}  // namespace

void LifeConfig::validate() const {
  check_widths(dn_widths, "dn_widths");
  check_widths(enc_widths, "enc_widths");
  check_widths(dec_widths, "dec_widths");
  if (recurrent_steps < 1) throw std::invalid_argument("recurrent_steps must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr_joint > 0) || !(lr_enc > 0) || !(lr_dec > 0)) {
    throw std::invalid_argument("learning rates must be > 0");
  }
  if (joint_epochs < 0) throw std::invalid_argument("joint_epochs must be >= 0");
  if (decay_every < 1) throw std::invalid_argument("decay_every must be >= 1");
  if (!(decay_rate > 0 && decay_rate <= 1)) throw std::invalid_argument("decay_rate must be in (0, 1]");
  if (dn_a < 0 || dn_b < 0 || vae_a < 0 || vae_b < 0) {
    throw std::invalid_argument("loss weights must be >= 0");
  }
  if (patch < 0 || (patch > 0 && patch % size_multiple() != 0)) {
    throw std::invalid_argument("patch must be 0 or a multiple of " + std::to_string(size_multiple()));
  }
  if (patches_per_slice < 1) throw std::invalid_argument("patches_per_slice must be >= 1");
}

Index LifeConfig::size_multiple() const {
  const std::size_t levels = std::max({dn_widths.size(), enc_widths.size(), dec_widths.size() + 1});
  return Index{1} << (levels - 1);
}

void to_json(nlohmann::json& j, const LifeConfig& c) {
  j = nlohmann::json{{"dn_channels", c.dn_widths},
                     {"enc_channels", c.enc_widths},
                     {"recurrent_steps", c.recurrent_steps},
                     {"dec_channels", c.dec_widths},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lr_joint", c.lr_joint},
                     {"lr_enc", c.lr_enc},
                     {"lr_dec", c.lr_dec},
                     {"joint_epochs", c.joint_epochs},
                     {"decay_every", c.decay_every},
                     {"decay_rate", c.decay_rate},
                     {"dn_loss", {{"a", c.dn_a}, {"b", c.dn_b}}},
                     {"vae_loss", {{"a", c.vae_a}, {"b", c.vae_b}}},
                     {"patch", c.patch},
                     {"patches_per_slice", c.patches_per_slice},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, LifeConfig& c) {
  static const std::vector<std::string> known{
      "dn_channels", "enc_channels", "recurrent_steps", "dec_channels", "epochs", "batch_size",
      "lr_joint", "lr_enc", "lr_dec", "joint_epochs", "decay_every", "decay_rate", "dn_loss",
      "vae_loss", "patch", "patches_per_slice", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown network config key: " + key);
    }
  }
  c.dn_widths = j.value("dn_channels", c.dn_widths);
  c.enc_widths = j.value("enc_channels", c.enc_widths);
  c.recurrent_steps = j.value("recurrent_steps", c.recurrent_steps);
  c.dec_widths = j.value("dec_channels", c.dec_widths);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr_joint = j.value("lr_joint", c.lr_joint);
  c.lr_enc = j.value("lr_enc", c.lr_enc);
  c.lr_dec = j.value("lr_dec", c.lr_dec);
  c.joint_epochs = j.value("joint_epochs", c.joint_epochs);
  c.decay_every = j.value("decay_every", c.decay_every);
  c.decay_rate = j.value("decay_rate", c.decay_rate);
  if (j.contains("dn_loss")) {
    c.dn_a = j["dn_loss"].value("a", c.dn_a);
    c.dn_b = j["dn_loss"].value("b", c.dn_b);
  }
  if (j.contains("vae_loss")) {
    c.vae_a = j["vae_loss"].value("a", c.vae_a);
    c.vae_b = j["vae_loss"].value("b", c.vae_b);
  }
  c.patch = j.value("patch", c.patch);
  c.patches_per_slice = j.value("patches_per_slice", c.patches_per_slice);
  c.seed = j.value("seed", c.seed);
  c.validate();
}

std::pair<double, double> learning_rates(const LifeConfig& cfg, int epoch) {
  if (epoch < cfg.joint_epochs) return {cfg.lr_joint, cfg.lr_joint};
  const int halvings = (epoch - cfg.joint_epochs) / cfg.decay_every;
  const double factor = std::pow(cfg.decay_rate, halvings);
  return {cfg.lr_enc * factor, cfg.lr_dec * factor};
}

Image latent_mean(const Model& model, const Image& slice) {
  const Index m = model.config().size_multiple();
  const Index h = slice.rows(), w = slice.cols();
  const Index ph = (h + m - 1) / m * m, pw = (w + m - 1) / m * m;
  Buffer<float> padded(ph * pw);
  for (Index y = 0; y < ph; ++y) {
    for (Index x = 0; x < pw; ++x) {
      padded[y * pw + x] = slice(std::min(y, h - 1), std::min(x, w - 1));
    }
  }
  NoGradGuard no_grad;
  const auto input = Tensor::from(Shape{1, 1, ph, pw}, std::move(padded));
  const auto out = model.forward(input);
  Image mu(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) mu(y, x) = out.mu.value()[y * pw + x];
  }
  return mu;
}

Volume3D infer_latent(const Model& model, const Volume3D& volume) {
  Volume3D mu(volume.depth(), volume.height(), volume.width());
  mu.spacing = volume.spacing;
  parallel_for(static_cast<std::size_t>(volume.depth()), [&](std::size_t z) {
    const auto zi = static_cast<Index>(z);
    mu.slice(zi) = latent_mean(model, Image(volume.slice(zi)));
  });
  const Eigen::ArrayXd a = mu.data().cast<double>();
  const Eigen::ArrayXd b = volume.data().cast<double>();
  const double cov = ((a - a.mean()) * (b - b.mean())).sum();
  if (cov < 0) mu.data() = -mu.data();
  return normalize(mu);
}

}  // namespace life::nn
