#include "life/nn/model.hpp"

#include "life/log.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace life::nn {

std::vector<TrainingSample> make_training_set(const Volume3D& raw, const Volume3D& lif,
                                              const Volume3D& ce_lif, const LifeConfig& cfg) {
  if (!raw.same_shape(lif) || !raw.same_shape(ce_lif)) {
    throw std::invalid_argument("make_training_set: volumes differ in shape");
  }
  cfg.validate();
  std::vector<TrainingSample> out;
  for (Index z = 0; z < raw.depth(); ++z) {
    const Image r = raw.slice(z), l = lif.slice(z), c = ce_lif.slice(z);
    if (cfg.patch == 0) {
      out.push_back({r, l, c});
      continue;
    }
    AugmentationSpec spec;
    spec.window_h = cfg.patch;
    spec.window_w = cfg.patch;
    spec.windows_per_slice = cfg.patches_per_slice;
    spec.seed = cfg.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(z) + 1;
    for (auto& group : augment_aligned({&r, &l, &c}, spec)) {
      out.push_back({std::move(group[0]), std::move(group[1]), std::move(group[2])});
    }
  }
  return out;
}

namespace {

Tensor stack_batch(const std::vector<TrainingSample>& data, const std::vector<std::size_t>& idx,
                   Image TrainingSample::*field) {
  const Index h = (data[idx[0]].*field).rows(), w = (data[idx[0]].*field).cols();
  Buffer<float> values(static_cast<Index>(idx.size()) * h * w);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Image& img = data[idx[i]].*field;
    values.segment(static_cast<Index>(i) * h * w, h * w) = Eigen::Map<const Buffer<float>>(img.data(), h * w);
  }
  return Tensor::from(Shape{static_cast<Index>(idx.size()), 1, h, w}, std::move(values));
}

}  // namespace

std::vector<EpochRecord> train(Model& model, const std::vector<TrainingSample>& data,
                               const TrainOptions& options) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const LifeConfig& cfg = model.config();
  const Index h = data[0].raw.rows(), w = data[0].raw.cols();
  for (const auto& s : data) {
    if (s.raw.rows() != h || s.raw.cols() != w || s.lif.rows() != h || s.lif.cols() != w ||
        s.ce_lif.rows() != h || s.ce_lif.cols() != w) {
      throw std::invalid_argument("train: samples must all share one size");
    }
  }
  if (h % cfg.size_multiple() != 0 || w % cfg.size_multiple() != 0) {
    throw std::invalid_argument("train: sample size must be a multiple of " +
                                std::to_string(cfg.size_multiple()));
  }

  auto& store = model.params();
  std::vector<Tensor> all;
  for (const auto& [name, t] : store.params()) all.push_back(t);
  std::vector<Tensor> encoder_side = store.with_prefix("dn.");
  for (auto& t : store.with_prefix("enc.")) encoder_side.push_back(t);

  Adam<float> joint(all, cfg.lr_joint);
  std::unique_ptr<Adam<float>> enc_opt, dec_opt;

  std::mt19937_64 rng(cfg.seed ^ 0xA5A5A5A5DEADBEEFULL);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochRecord> history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto [lr_e, lr_d] = learning_rates(cfg, epoch);
    const bool separate = epoch >= cfg.joint_epochs;
    if (separate && !enc_opt) {
      enc_opt = std::make_unique<Adam<float>>(encoder_side, lr_e);
      dec_opt = std::make_unique<Adam<float>>(store.with_prefix("dec."), lr_d);
    }
    if (separate) {
      enc_opt->set_lr(lr_e);
      dec_opt->set_lr(lr_d);
    } else {
      joint.set_lr(lr_e);
    }

    std::shuffle(order.begin(), order.end(), rng);
    double dn_sum = 0, vae_sum = 0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Tensor x = stack_batch(data, idx, &TrainingSample::raw);
      const Tensor y_lif = stack_batch(data, idx, &TrainingSample::lif);
      const Tensor y_ce = stack_batch(data, idx, &TrainingSample::ce_lif);
      Buffer<float> eps(x.shape().numel());
      for (auto& e : eps) e = gauss(rng);
      const Tensor noise = Tensor::from(x.shape(), std::move(eps));

      const auto out = model.forward(x, &noise);
      const Tensor dn_loss = loss_l1l2(y_lif, out.x_dn, static_cast<float>(cfg.dn_a), static_cast<float>(cfg.dn_b));
      const Tensor vae_loss = loss_l1l2(y_ce, out.y_syn, static_cast<float>(cfg.vae_a), static_cast<float>(cfg.vae_b));
      if (!std::isfinite(dn_loss.item()) || !std::isfinite(vae_loss.item())) {
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(steps) + ": dn_loss=" + std::to_string(dn_loss.item()) +
                                 " vae_loss=" + std::to_string(vae_loss.item()));
      }
      joint.zero_grad();
      add(dn_loss, vae_loss).backward();
      if (separate) {
        enc_opt->step();
        dec_opt->step();
      } else {
        joint.step();
      }
      dn_sum += dn_loss.item();
      vae_sum += vae_loss.item();
      ++steps;
    }

    EpochRecord rec{epoch, dn_sum / steps, vae_sum / steps, lr_e, lr_d};
    history.push_back(rec);
    log::info("epoch done", "train epoch=" + std::to_string(epoch) + " dn_loss=" + std::to_string(rec.dn_loss) +
                                " vae_loss=" + std::to_string(rec.vae_loss));
    if (options.on_epoch && !options.on_epoch(rec)) break;
  }
  return history;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,dn_loss,vae_loss,lr_enc,lr_dec\n";
  out.precision(9);
  for (const auto& r : history) {
    out << r.epoch << ',' << r.dn_loss << ',' << r.vae_loss << ',' << r.lr_enc << ',' << r.lr_dec << '\n';
  }
}

}  // namespace life::nn
