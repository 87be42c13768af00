#pragma once

#include "life/nn/layers.hpp"
#include "life/volume.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

namespace life::nn {

struct LifeConfig {
  std::vector<int> dn_widths{16, 32};
  std::vector<int> enc_widths{16, 32, 64};
  int recurrent_steps = 2;
  std::vector<int> dec_widths{16};

  int epochs = 50;
  int batch_size = 2;
  double lr_joint = 1e-3;
  double lr_enc = 2e-3;
  double lr_dec = 1e-4;
  int joint_epochs = 3;
  int decay_every = 3;
  double decay_rate = 0.5;

  double dn_a = 1.0, dn_b = 0.01;
  double vae_a = 1.0, vae_b = 0.05;

  /// Training patch side and patches drawn per slice; 0 uses whole slices.
  Index patch = 64;
  int patches_per_slice = 10;

  std::uint64_t seed = 1;

  void validate() const;
  /// Spatial sizes fed to the model must be multiples of this.
  Index size_multiple() const;
};

void to_json(nlohmann::json& j, const LifeConfig& cfg);
void from_json(const nlohmann::json& j, LifeConfig& cfg);

/// Learning rates (encoder side, decoder side) in effect at `epoch`.
std::pair<double, double> learning_rates(const LifeConfig& cfg, int epoch);

template <typename S>
struct PipelineOutputs {
  BasicTensor<S> x_dn;    // denoised input, [0, 255] scale
  BasicTensor<S> mu;      // latent mean
  BasicTensor<S> sigma;   // latent scale, > 0
  BasicTensor<S> latent;  // mu, or mu + sigma * noise when noise is given
  BasicTensor<S> y_syn;   // synthesized contrast-enhanced image, [0, 255] scale
};

/// Denoiser, variational encoder and decoder. The decoder adds one pooling
/// level below its listed widths. Parameter names carry the
/// prefixes "dn.", "enc." and "dec.".
template <typename S>
class LifeModel {
 public:
  explicit LifeModel(const LifeConfig& cfg) : cfg_(cfg), store_(cfg.seed) {
    cfg.validate();
    dn_ = ResidualUNet<S>(store_, "dn", cfg.dn_widths);
    enc_ = R2UEncoder<S>(store_, "enc", cfg.enc_widths, cfg.recurrent_steps);
    std::vector<int> dec_levels = cfg.dec_widths;
    dec_levels.push_back(cfg.dec_widths.back());
    dec_ = ResidualUNet<S>(store_, "dec", dec_levels);
  }

  const LifeConfig& config() const { return cfg_; }
  ParamStore<S>& params() { return store_; }
  const ParamStore<S>& params() const { return store_; }

  /// x is [N, 1, H, W] in [0, 255]; H and W must be multiples of
  /// config().size_multiple().
  PipelineOutputs<S> forward(const BasicTensor<S>& x, const BasicTensor<S>* noise = nullptr) const {
    const Shape s = x.shape();
    const Index m = cfg_.size_multiple();
    if (s.c != 1 || s.h % m != 0 || s.w % m != 0) {
      throw std::invalid_argument("LifeModel::forward: expected Nx1xHxW with H, W multiples of " +
                                  std::to_string(m) + ", got " + s.str());
    }
    PipelineOutputs<S> out;
    const BasicTensor<S> dn_unit = dn_(affine(x, S(1) / S(255), S(0)));
    out.x_dn = affine(dn_unit, S(255), S(0));
    auto [mu, sigma] = enc_(dn_unit);
    out.mu = mu;
    out.sigma = sigma;
    out.latent = noise ? reparameterize(mu, sigma, *noise) : mu;
    out.y_syn = affine(dec_(out.latent), S(255), S(0));
    return out;
  }

 private:
  LifeConfig cfg_;
  ParamStore<S> store_;
  ResidualUNet<S> dn_;
  R2UEncoder<S> enc_;
  ResidualUNet<S> dec_;
};

using Model = LifeModel<float>;

template <typename S>
PipelineOutputs<S> forward_pipeline(const LifeModel<S>& model, const BasicTensor<S>& x,
                                    const BasicTensor<S>* noise = nullptr) {
  return model.forward(x, noise);
}

/// Latent mean for one slice, edge-padded to the model's size multiple and
/// cropped back. Raw (unnormalized) values.
Image latent_mean(const Model& model, const Image& slice);

/// Latent volume: per-slice latent mean, sign-aligned so it correlates
/// positively with the input, then normalized to [0, 255].
Volume3D infer_latent(const Model& model, const Volume3D& volume);

struct TrainingSample {
  Image raw, lif, ce_lif;
};

struct EpochRecord {
  int epoch = 0;
  double dn_loss = 0, vae_loss = 0;
  double lr_enc = 0, lr_dec = 0;
};

/// Aligned random windows (with the configured flips) from each slice of the
/// three volumes. patch == 0 takes each whole slice once.
std::vector<TrainingSample> make_training_set(const Volume3D& raw, const Volume3D& lif,
                                              const Volume3D& ce_lif, const LifeConfig& cfg);

struct TrainOptions {
  /// Called after every epoch; returning false stops training.
  std::function<bool(const EpochRecord&)> on_epoch;
};

/// Joint training of the denoiser and the variational translator. Throws
/// std::runtime_error if a loss becomes non-finite.
std::vector<EpochRecord> train(Model& model, const std::vector<TrainingSample>& data,
                               const TrainOptions& options = {});

void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace life::nn
