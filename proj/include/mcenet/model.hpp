#pragma once

#include "mcenet/dataio.hpp"
#include "mcenet/nn/adam.hpp"
#include "mcenet/nn/layers.hpp"
#include "mcenet/occupancy.hpp"
#include "mcenet/ranking.hpp"
#include "mcenet/raster.hpp"
#include "mcenet/scene_tensor.hpp"
#include "mcenet/types.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace mcenet {

struct ModelConfig {
  int T = 8;
  int T_prime = 8;
  int conv1d_kernel = 8;
  int conv1d_channels = 64;
  std::array<int, 3> cnn_kernels{8, 4, 4};
  std::array<int, 3> cnn_channels{32, 64, 128};
  int cnn_stride = 2;
  int scene_input_size = 32;
  int lstm_hidden = 128;
  int latent_dim = 16;
  int fusion_dim = 128;
  double kl_weight = 1.0;
  double kl_warmup_frac = 0.1;  // fraction of iterations ramping the KL term in
  double learning_rate = 0.001;
  int batch_size = 64;
  int epochs = 20;
  int num_samples = 10;  // N
  std::uint64_t seed = 7;

  void validate() const {
    if (T < 2 || T_prime < 1) throw ConfigError("ModelConfig: need T >= 2 and T' >= 1");
    if (conv1d_kernel < 1 || conv1d_channels < 1 || lstm_hidden < 1 || latent_dim < 1 ||
        fusion_dim < 1)
      throw ConfigError("ModelConfig: dimensions must be positive");
    if (kl_weight < 0.0) throw ConfigError("ModelConfig: kl_weight must be >= 0");
    if (batch_size < 1 || epochs < 0) throw ConfigError("ModelConfig: bad training sizes");
    if (num_samples < 1) throw ConfigError("ModelConfig: N must be >= 1");
  }
};

/// Which context branches a model variant uses.
struct BranchConfig {
  bool use_occupancy = false;
  bool use_scene = false;
  RasterKind scene_kind = RasterKind::kHeatMap;
};

/// Fixed ablation set: baseline, gp, hm, hm+gp, ap+gp, sm+gp
/// (an optional 'mce+' prefix is accepted).
inline BranchConfig parse_variant(std::string tag) {
  std::transform(tag.begin(), tag.end(), tag.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (tag.rfind("mce+", 0) == 0) tag = tag.substr(4);
  if (tag == "baseline") return {false, false, RasterKind::kHeatMap};
  if (tag == "gp") return {true, false, RasterKind::kHeatMap};
  if (tag == "hm") return {false, true, RasterKind::kHeatMap};
  if (tag == "hm+gp") return {true, true, RasterKind::kHeatMap};
  if (tag == "ap+gp") return {true, true, RasterKind::kAerial};
  if (tag == "sm+gp") return {true, true, RasterKind::kSegmented};
  throw ConfigError("unknown variant tag: '" + tag + "'");
}

inline std::string variant_tag(const BranchConfig& b) {
  if (!b.use_occupancy && !b.use_scene) return "baseline";
  if (b.use_occupancy && !b.use_scene) return "gp";
  std::string scene = b.scene_kind == RasterKind::kHeatMap
                          ? "hm"
                          : b.scene_kind == RasterKind::kAerial ? "ap" : "sm";
  return b.use_occupancy ? scene + "+gp" : scene;
}

struct LatentParams {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_var;
};

struct EncodedContext {
  Eigen::VectorXd phi;
};

/// Per-component offset standardization constants, fitted on training offsets.
struct Standardizer {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d stdev = Eigen::Vector2d::Ones();

  static Standardizer fit(const std::vector<TrainingSample>& samples) {
    Standardizer s;
    double n = 0.0;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sum2 = Eigen::Vector2d::Zero();
    for (const auto& sample : samples) {
      for (const PointSeq* seq : {&sample.obs_offsets, &sample.fut_offsets}) {
        for (Eigen::Index i = 0; i < seq->rows(); ++i) {
          const Eigen::Vector2d o = seq->row(i).transpose();
          sum += o;
          sum2 += o.cwiseProduct(o);
          n += 1.0;
        }
      }
    }
    if (n > 0) {
      s.mean = sum / n;
      const Eigen::Vector2d var = (sum2 / n - s.mean.cwiseProduct(s.mean)).cwiseMax(0.0);
      s.stdev = var.cwiseSqrt().cwiseMax(1e-6);
    }
    return s;
  }
};

/// Flattens an occupancy grid to the network's input layout: one column of
/// R*D cell counts per step.
inline nn::Mat occupancy_features(const OccupancyGrid& grid) {
  const int cells = grid.orientation_bins * grid.distance_bins;
  nn::Mat m(cells, grid.steps);
  for (int t = 0; t < grid.steps; ++t)
    for (int i = 0; i < cells; ++i)
      m(i, t) = static_cast<double>(
          grid.counts[static_cast<std::size_t>(t) * cells + i]);
  return m;
}

/// Everything the network consumes for one window. Occupancy is stored as the
/// real-valued network input (one column per step); scene tensors are shared
/// between samples whenever the scene context is static.
struct ModelSample {
  TrainingSample sample;
  nn::Mat occ_obs;  // (R*D) x T, empty when the occupancy branch is off
  nn::Mat occ_fut;  // (R*D) x T'
  std::shared_ptr<const SceneTensor> scene;  // null when the scene branch is off
};

struct EpochStats {
  double mse = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// The dual-encoder conditional variational trajectory model. The X-encoder
/// fuses motion, interaction occupancy and scene branches into Phi_X; during
/// training the Y-encoder does the same for the future and a latent head
/// learns (mu, log_var). The decoder reconstructs future offsets from
/// (Phi_X, z). At inference z is drawn from the standard-normal prior.
class Mcenet {
 public:
  /// occ_cells must match the grid spec (R*D) of the prepared occupancy
  /// features when the occupancy branch is enabled.
  Mcenet(ModelConfig cfg, BranchConfig branches, int scene_channels, int occ_cells = 64)
      : cfg_(cfg), branches_(branches), scene_channels_(scene_channels), occ_cells_(occ_cells) {
    cfg_.validate();
    if (branches_.use_scene && scene_channels_ < 1)
      throw ConfigError("Mcenet: scene branch enabled but scene_channels < 1");
    if (branches_.use_occupancy && occ_cells_ < 1)
      throw ConfigError("Mcenet: occupancy branch enabled but occ_cells < 1");
    std::mt19937_64 rng(cfg_.seed);
    x_ = make_encoder("x", rng);
    y_ = make_encoder("y", rng);
    lat_.fc1 = nn::Dense::create(params_, "lat.fc1", 2 * cfg_.fusion_dim, cfg_.fusion_dim, rng);
    lat_.fc2 = nn::Dense::create(params_, "lat.fc2", cfg_.fusion_dim, cfg_.fusion_dim, rng);
    lat_.mu = nn::Dense::create(params_, "lat.mu", cfg_.fusion_dim, cfg_.latent_dim, rng);
    lat_.log_var =
        nn::Dense::create(params_, "lat.log_var", cfg_.fusion_dim, cfg_.latent_dim, rng);
    dec_.fuse = nn::Dense::create(params_, "dec.fuse", cfg_.fusion_dim + cfg_.latent_dim,
                                  cfg_.lstm_hidden, rng);
    dec_.lstm = nn::Lstm::create(params_, "dec.lstm", cfg_.lstm_hidden, cfg_.lstm_hidden, rng);
    dec_.head = nn::Dense::create(params_, "dec.head", cfg_.lstm_hidden, 2, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  const BranchConfig& branches() const { return branches_; }
  int scene_channels() const { return scene_channels_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  void set_standardizer(const Standardizer& s) { std_ = s; }
  const Standardizer& standardizer() const { return std_; }

  // ---- core operations ------------------------------------------------------

  EncodedContext encode_past(const ModelSample& ms) const {
    nn::Tape tape;
    const auto bind = nn::TapeBinding::bind(tape, params_, false);
    const auto enc = build_encoder(tape, bind, {&ms}, /*future=*/false, false);
    return EncodedContext{tape.val(enc.phi).col(0)};
  }

  EncodedContext encode_future(const ModelSample& ms) const {
    nn::Tape tape;
    const auto bind = nn::TapeBinding::bind(tape, params_, false);
    const auto enc = build_encoder(tape, bind, {&ms}, /*future=*/true, false);
    return EncodedContext{tape.val(enc.phi).col(0)};
  }

  LatentParams latent_params(const EncodedContext& phi_x, const EncodedContext& phi_y) const {
    nn::Tape tape;
    const auto bind = nn::TapeBinding::bind(tape, params_, false);
    const nn::Tape::Id px = tape.leaf(phi_x.phi);
    const nn::Tape::Id py = tape.leaf(phi_y.phi);
    const auto [mu, log_var] = build_latent(tape, bind, px, py);
    return LatentParams{tape.val(mu).col(0), tape.val(log_var).col(0)};
  }

  static Eigen::VectorXd reparameterize(const LatentParams& lp, const Eigen::VectorXd& eps) {
    return lp.mu + (lp.log_var.array() / 2.0).exp().matrix().cwiseProduct(eps);
  }

  /// Closed-form KL(N(mu, sigma^2) || N(0, I)).
  static double kl_divergence(const LatentParams& lp) {
    return 0.5 * (lp.mu.array().square() + lp.log_var.array().exp() - 1.0 -
                  lp.log_var.array())
                     .sum();
  }

  /// Decodes one latent draw into T' future offsets (meters).
  PointSeq decode(const EncodedContext& phi_x, const Eigen::VectorXd& z) const {
    nn::Tape tape;
    const auto bind = nn::TapeBinding::bind(tape, params_, false);
    const nn::Tape::Id phi = tape.leaf(phi_x.phi);
    const nn::Tape::Id zid = tape.leaf(z);
    const nn::Tape::Id pred = build_decoder(tape, bind, phi, zid);
    return column_to_offsets(tape.val(pred).col(0));
  }

  /// MSE over all T'x2 offset components plus kl_weight times the KL term.
  static double elbo_loss(const PointSeq& pred_offsets, const PointSeq& true_offsets,
                          const LatentParams& lp, double kl_weight) {
    if (pred_offsets.rows() != true_offsets.rows())
      throw std::invalid_argument("elbo_loss: offset shape mismatch");
    const double mse = (pred_offsets - true_offsets).squaredNorm() /
                       static_cast<double>(pred_offsets.size());
    return mse + kl_weight * kl_divergence(lp);
  }

  // ---- loss graph evaluation -----------------------------------------------

  struct LossEval {
    double total = 0.0, mse = 0.0, kl = 0.0;
    std::vector<nn::Mat> param_grads;
    // input-side gradients (only filled when requested)
    std::vector<nn::Mat> x_motion, y_motion;  // per step, rows (dx, dy, onehot), meters
    std::vector<nn::Mat> x_occ, y_occ;        // per step, cell counts
    nn::Mat x_scene, y_scene;                 // (C*H*W) x unique-images, pixel values
    nn::Mat gt;                               // reconstruction-target gradient
  };

  double loss_value(const std::vector<const ModelSample*>& batch, const nn::Mat& eps,
                    double kl_weight) const {
    nn::Tape tape;
    const auto bind = nn::TapeBinding::bind(tape, params_, false);
    const auto ids = build_loss(tape, bind, batch, eps, kl_weight, false);
    return tape.val(ids.total)(0, 0);
  }

  LossEval loss_with_gradients(const std::vector<const ModelSample*>& batch, const nn::Mat& eps,
                               double kl_weight, bool input_grads = false) const {
    nn::Tape tape;
    const auto bind = nn::TapeBinding::bind(tape, params_, true);
    const auto ids = build_loss(tape, bind, batch, eps, kl_weight, input_grads);
    tape.backward(ids.total);

    LossEval ev;
    ev.total = tape.val(ids.total)(0, 0);
    ev.mse = tape.val(ids.mse)(0, 0);
    ev.kl = tape.val(ids.kl)(0, 0);
    ev.param_grads = bind.gradients(tape);
    if (input_grads) {
      for (auto id : ids.x.motion_in) ev.x_motion.push_back(tape.grad(id));
      for (auto id : ids.y.motion_in) ev.y_motion.push_back(tape.grad(id));
      for (auto id : ids.x.occ_in) ev.x_occ.push_back(tape.grad(id));
      for (auto id : ids.y.occ_in) ev.y_occ.push_back(tape.grad(id));
      if (ids.x.scene_in >= 0) ev.x_scene = tape.grad(ids.x.scene_in);
      if (ids.y.scene_in >= 0) ev.y_scene = tape.grad(ids.y.scene_in);
      ev.gt = tape.grad(ids.gt);
    }
    return ev;
  }

  // ---- training ---------------------------------------------------------------

  std::vector<EpochStats> train(const std::vector<ModelSample>& data,
                                int epochs_override = -1) {
    if (data.empty()) throw std::invalid_argument("train: empty training set");
    const int epochs = epochs_override >= 0 ? epochs_override : cfg_.epochs;
    const int n = static_cast<int>(data.size());
    const int batch_size = std::min(cfg_.batch_size, n);
    const int batches_per_epoch = (n + batch_size - 1) / batch_size;
    const long total_iters = static_cast<long>(batches_per_epoch) * epochs;
    const long warmup_iters =
        cfg_.kl_warmup_frac > 0.0
            ? std::max<long>(1, static_cast<long>(std::ceil(cfg_.kl_warmup_frac *
                                                            static_cast<double>(total_iters))))
            : 0;

    std::mt19937_64 rng(detail::splitmix64(cfg_.seed ^ 0x7261696e5f726e67ULL));
    std::normal_distribution<double> normal(0.0, 1.0);
    nn::Adam adam(cfg_.learning_rate);

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochStats> history;
    long iter = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      EpochStats stats;
      double weight = 0.0;
      for (int b = 0; b < batches_per_epoch; ++b) {
        std::vector<const ModelSample*> batch;
        for (int i = b * batch_size; i < std::min(n, (b + 1) * batch_size); ++i)
          batch.push_back(&data[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);

        nn::Mat eps(cfg_.latent_dim, static_cast<Eigen::Index>(batch.size()));
        for (Eigen::Index j = 0; j < eps.cols(); ++j)
          for (Eigen::Index i = 0; i < eps.rows(); ++i) eps(i, j) = normal(rng);

        const double ramp =
            warmup_iters > 0
                ? std::min(1.0, static_cast<double>(iter + 1) / static_cast<double>(warmup_iters))
                : 1.0;
        const double klw = cfg_.kl_weight * ramp;

        auto ev = loss_with_gradients(batch, eps, klw);
        if (!std::isfinite(ev.total))
          throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(b));
        adam.step(params_, ev.param_grads);

        const double w = static_cast<double>(batch.size());
        stats.mse += ev.mse * w;
        stats.kl += ev.kl * w;
        stats.total += ev.total * w;
        weight += w;
        ++iter;
      }
      stats.mse /= weight;
      stats.kl /= weight;
      stats.total /= weight;
      history.push_back(stats);
    }
    return history;
  }

  // ---- prediction ---------------------------------------------------------------

  /// Encodes the past once, draws n latent vectors from the standard-normal
  /// prior, decodes each and anchors the offsets at the last observed
  /// position. The returned set is ranked.
  PredictionSet predict(const ModelSample& ms, int n, std::uint64_t seed) const {
    if (n < 1) throw std::invalid_argument("predict: n must be >= 1");
    const EncodedContext phi_x = encode_past(ms);

    std::mt19937_64 rng(detail::splitmix64(seed));
    std::normal_distribution<double> normal(0.0, 1.0);
    nn::Mat z(cfg_.latent_dim, n);
    for (Eigen::Index j = 0; j < z.cols(); ++j)
      for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = normal(rng);

    nn::Tape tape;
    const auto bind = nn::TapeBinding::bind(tape, params_, false);
    const nn::Tape::Id phi = tape.leaf(phi_x.phi.replicate(1, n));
    const nn::Tape::Id zid = tape.leaf(z);
    const nn::Tape::Id pred = build_decoder(tape, bind, phi, zid);

    PredictionSet out;
    const Eigen::Vector2d anchor = ms.sample.last_obs_position();
    for (int j = 0; j < n; ++j) {
      const PointSeq offsets = column_to_offsets(tape.val(pred).col(j));
      out.trajectories.push_back(offsets_to_positions(anchor, offsets));
    }
    apply_ranking(out);
    return out;
  }

  // ---- checkpointing ---------------------------------------------------------------

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
    out.write("MCNT", 4);
    write_u32(out, 1);  // format version
    write_string(out, variant_tag(branches_));
    write_i64(out, scene_channels_);
    write_i64(out, occ_cells_);
    // config
    write_i64(out, cfg_.T);
    write_i64(out, cfg_.T_prime);
    write_i64(out, cfg_.conv1d_kernel);
    write_i64(out, cfg_.conv1d_channels);
    for (int k : cfg_.cnn_kernels) write_i64(out, k);
    for (int c : cfg_.cnn_channels) write_i64(out, c);
    write_i64(out, cfg_.cnn_stride);
    write_i64(out, cfg_.scene_input_size);
    write_i64(out, cfg_.lstm_hidden);
    write_i64(out, cfg_.latent_dim);
    write_i64(out, cfg_.fusion_dim);
    write_f64(out, cfg_.kl_weight);
    write_f64(out, cfg_.kl_warmup_frac);
    write_f64(out, cfg_.learning_rate);
    write_i64(out, cfg_.batch_size);
    write_i64(out, cfg_.epochs);
    write_i64(out, cfg_.num_samples);
    write_i64(out, static_cast<std::int64_t>(cfg_.seed));
    // standardizer
    write_f64(out, std_.mean.x());
    write_f64(out, std_.mean.y());
    write_f64(out, std_.stdev.x());
    write_f64(out, std_.stdev.y());
    // parameters
    write_i64(out, static_cast<std::int64_t>(params_.size()));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& e = params_.entry(static_cast<int>(i));
      write_string(out, e.name);
      write_i64(out, e.value.rows());
      write_i64(out, e.value.cols());
      out.write(reinterpret_cast<const char*>(e.value.data()),
                static_cast<std::streamsize>(sizeof(double) * e.value.size()));
    }
  }

  static Mcenet load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "MCNT")
      throw ConfigError(path + ": not a checkpoint file");
    if (read_u32(in) != 1) throw ConfigError(path + ": unsupported checkpoint version");
    const std::string tag = read_string(in);
    const int scene_channels = static_cast<int>(read_i64(in));
    const int occ_cells = static_cast<int>(read_i64(in));
    ModelConfig cfg;
    cfg.T = static_cast<int>(read_i64(in));
    cfg.T_prime = static_cast<int>(read_i64(in));
    cfg.conv1d_kernel = static_cast<int>(read_i64(in));
    cfg.conv1d_channels = static_cast<int>(read_i64(in));
    for (auto& k : cfg.cnn_kernels) k = static_cast<int>(read_i64(in));
    for (auto& c : cfg.cnn_channels) c = static_cast<int>(read_i64(in));
    cfg.cnn_stride = static_cast<int>(read_i64(in));
    cfg.scene_input_size = static_cast<int>(read_i64(in));
    cfg.lstm_hidden = static_cast<int>(read_i64(in));
    cfg.latent_dim = static_cast<int>(read_i64(in));
    cfg.fusion_dim = static_cast<int>(read_i64(in));
    cfg.kl_weight = read_f64(in);
    cfg.kl_warmup_frac = read_f64(in);
    cfg.learning_rate = read_f64(in);
    cfg.batch_size = static_cast<int>(read_i64(in));
    cfg.epochs = static_cast<int>(read_i64(in));
    cfg.num_samples = static_cast<int>(read_i64(in));
    cfg.seed = static_cast<std::uint64_t>(read_i64(in));

    Mcenet model(cfg, parse_variant(tag), scene_channels, occ_cells);
    model.std_.mean.x() = read_f64(in);
    model.std_.mean.y() = read_f64(in);
    model.std_.stdev.x() = read_f64(in);
    model.std_.stdev.y() = read_f64(in);

    const auto count = read_i64(in);
    for (std::int64_t i = 0; i < count; ++i) {
      const std::string name = read_string(in);
      const auto rows = read_i64(in);
      const auto cols = read_i64(in);
      auto* entry = model.params_.find(name);
      if (!entry || entry->value.rows() != rows || entry->value.cols() != cols)
        throw ConfigError(path + ": parameter mismatch for '" + name + "'");
      in.read(reinterpret_cast<char*>(entry->value.data()),
              static_cast<std::streamsize>(sizeof(double) * rows * cols));
    }
    if (!in) throw ConfigError(path + ": truncated checkpoint");
    return model;
  }

 private:
  struct EncoderParams {
    nn::Conv1d motion_conv;
    nn::Lstm motion_lstm;
    nn::Lstm occ_lstm;
    nn::ConvStack scene_cnn;
    nn::Lstm scene_lstm;
    nn::Dense fuse;
  };

  struct LatentHead {
    nn::Dense fc1, fc2, mu, log_var;
  };

  struct DecoderParams {
    nn::Dense fuse;
    nn::Lstm lstm;
    nn::Dense head;
  };

  struct EncoderIds {
    nn::Tape::Id phi = -1;
    std::vector<nn::Tape::Id> motion_in;
    std::vector<nn::Tape::Id> occ_in;
    nn::Tape::Id scene_in = -1;
  };

  struct LossIds {
    nn::Tape::Id total = -1, mse = -1, kl = -1, gt = -1;
    EncoderIds x, y;
  };

  EncoderParams make_encoder(const std::string& prefix, std::mt19937_64& rng) {
    EncoderParams e;
    e.motion_conv = nn::Conv1d::create(params_, prefix + ".motion.conv", 5,
                                       cfg_.conv1d_channels, cfg_.conv1d_kernel, rng);
    e.motion_lstm = nn::Lstm::create(params_, prefix + ".motion.lstm", cfg_.conv1d_channels,
                                     cfg_.lstm_hidden, rng);
    int branch_count = 1;
    if (branches_.use_occupancy) {
      // grid cells per step; the spec is read back from occupancy features
      e.occ_lstm = nn::Lstm::create(params_, prefix + ".occ.lstm", occ_cells_,
                                    cfg_.lstm_hidden, rng);
      ++branch_count;
    }
    if (branches_.use_scene) {
      e.scene_cnn = nn::ConvStack::create(
          params_, prefix + ".scene.cnn", scene_channels_, cfg_.scene_input_size,
          {cfg_.cnn_kernels.begin(), cfg_.cnn_kernels.end()},
          {cfg_.cnn_channels.begin(), cfg_.cnn_channels.end()}, cfg_.cnn_stride, rng);
      e.scene_lstm = nn::Lstm::create(params_, prefix + ".scene.lstm",
                                      e.scene_cnn.out_features, cfg_.lstm_hidden, rng);
      ++branch_count;
    }
    e.fuse = nn::Dense::create(params_, prefix + ".fuse", branch_count * cfg_.lstm_hidden,
                               cfg_.fusion_dim, rng);
    return e;
  }

  /// Assembles one encoder over a batch: motion (conv1d + LSTM), occupancy
  /// (LSTM) and scene (shared CNN features + LSTM) branches, concatenated and
  /// fused to Phi.
  EncoderIds build_encoder(nn::Tape& t, const nn::TapeBinding& bind,
                           const std::vector<const ModelSample*>& batch, bool future,
                           bool inputs_need_grad) const {
    const EncoderParams& enc = future ? y_ : x_;
    const int b = static_cast<int>(batch.size());
    const int motion_steps = future ? cfg_.T_prime : cfg_.T - 1;
    EncoderIds ids;

    // motion branch: standardized offsets + type one-hot per step
    const Eigen::VectorXd scale =
        (Eigen::VectorXd(5) << 1.0 / std_.stdev.x(), 1.0 / std_.stdev.y(), 1, 1, 1).finished();
    const Eigen::VectorXd shift = (Eigen::VectorXd(5) << -std_.mean.x() / std_.stdev.x(),
                                   -std_.mean.y() / std_.stdev.y(), 0, 0, 0)
                                      .finished();
    std::vector<nn::Tape::Id> motion_steps_ids;
    for (int s = 0; s < motion_steps; ++s) {
      nn::Mat in(5, b);
      for (int j = 0; j < b; ++j) {
        const PointSeq& offsets = future ? batch[static_cast<std::size_t>(j)]->sample.fut_offsets
                                         : batch[static_cast<std::size_t>(j)]->sample.obs_offsets;
        in(0, j) = offsets(s, 0);
        in(1, j) = offsets(s, 1);
        in.block<3, 1>(2, j) = batch[static_cast<std::size_t>(j)]->sample.type_onehot;
      }
      const nn::Tape::Id leaf = t.leaf(std::move(in), inputs_need_grad);
      ids.motion_in.push_back(leaf);
      motion_steps_ids.push_back(t.row_affine(leaf, scale, shift));
    }
    const auto conv_out = enc.motion_conv.apply(t, bind, motion_steps_ids);
    std::vector<nn::Tape::Id> finals;
    finals.push_back(enc.motion_lstm.apply(t, bind, conv_out));

    // occupancy branch
    if (branches_.use_occupancy) {
      const int steps = future ? cfg_.T_prime : cfg_.T;
      std::vector<nn::Tape::Id> occ_steps;
      for (int s = 0; s < steps; ++s) {
        nn::Mat in(occ_cells_, b);
        for (int j = 0; j < b; ++j) {
          const nn::Mat& occ = future ? batch[static_cast<std::size_t>(j)]->occ_fut
                                      : batch[static_cast<std::size_t>(j)]->occ_obs;
          if (occ.rows() != occ_cells_ || occ.cols() < steps)
            throw std::invalid_argument("build_encoder: occupancy feature shape mismatch");
          in.col(j) = occ.col(s);
        }
        const nn::Tape::Id leaf = t.leaf(std::move(in), inputs_need_grad);
        ids.occ_in.push_back(leaf);
        occ_steps.push_back(leaf);
      }
      finals.push_back(enc.occ_lstm.apply(t, bind, occ_steps));
    }

    // scene branch: CNN over the unique images in the batch, then per-step
    // gathers so shared static rasters are convolved once
    if (branches_.use_scene) {
      const int steps = future ? cfg_.T_prime : cfg_.T;
      const int hw = cfg_.scene_input_size * cfg_.scene_input_size;
      const int pixels = scene_channels_ * hw;
      std::map<const double*, int> unique;
      std::vector<std::vector<int>> gather(static_cast<std::size_t>(steps),
                                           std::vector<int>(static_cast<std::size_t>(b)));
      std::vector<const double*> images;
      for (int j = 0; j < b; ++j) {
        const auto& tensor = batch[static_cast<std::size_t>(j)]->scene;
        if (!tensor) throw std::invalid_argument("build_encoder: missing scene tensor");
        if (tensor->channels != scene_channels_ || tensor->height != cfg_.scene_input_size ||
            tensor->width != cfg_.scene_input_size)
          throw std::invalid_argument("build_encoder: scene tensor shape mismatch");
        for (int s = 0; s < steps; ++s) {
          const int tensor_step =
              tensor->is_static() ? 0 : (future ? cfg_.T + s : s);
          const double* key = tensor->step_data(tensor_step);
          auto [it, inserted] = unique.emplace(key, static_cast<int>(images.size()));
          if (inserted) images.push_back(key);
          gather[static_cast<std::size_t>(s)][static_cast<std::size_t>(j)] = it->second;
        }
      }
      nn::Mat img(pixels, static_cast<Eigen::Index>(images.size()));
      for (std::size_t u = 0; u < images.size(); ++u)
        img.col(static_cast<Eigen::Index>(u)) =
            Eigen::Map<const Eigen::VectorXd>(images[u], pixels);
      ids.scene_in = t.leaf(std::move(img), inputs_need_grad);
      const nn::Tape::Id features = enc.scene_cnn.apply(t, bind, ids.scene_in);
      std::vector<nn::Tape::Id> scene_steps;
      nn::Tape::Id shared = -1;
      for (int s = 0; s < steps; ++s) {
        const auto& idx = gather[static_cast<std::size_t>(s)];
        const bool same_as_first = s > 0 && idx == gather[0];
        if (same_as_first && shared >= 0) {
          scene_steps.push_back(shared);
        } else {
          const nn::Tape::Id g = t.gather_cols(features, idx);
          if (s == 0) shared = g;
          scene_steps.push_back(g);
        }
      }
      finals.push_back(enc.scene_lstm.apply(t, bind, scene_steps));
    }

    const nn::Tape::Id cat = finals.size() == 1 ? finals[0] : t.concat_rows(finals);
    ids.phi = t.relu(enc.fuse.apply(t, bind, cat));
    return ids;
  }

  std::pair<nn::Tape::Id, nn::Tape::Id> build_latent(nn::Tape& t, const nn::TapeBinding& bind,
                                                     nn::Tape::Id phi_x,
                                                     nn::Tape::Id phi_y) const {
    const nn::Tape::Id cat = t.concat_rows({phi_x, phi_y});
    const nn::Tape::Id h1 = t.relu(lat_.fc1.apply(t, bind, cat));
    const nn::Tape::Id h2 = t.relu(lat_.fc2.apply(t, bind, h1));
    return {lat_.mu.apply(t, bind, h2), lat_.log_var.apply(t, bind, h2)};
  }

  /// Fused (Phi_X, z) is reduced by one FC layer and fed, repeated, to the
  /// decoder LSTM; a linear head emits one offset per step, de-standardized
  /// back to meters. Output rows are step-major (x0, y0, x1, y1, ...).
  nn::Tape::Id build_decoder(nn::Tape& t, const nn::TapeBinding& bind, nn::Tape::Id phi_x,
                             nn::Tape::Id z) const {
    const nn::Tape::Id fused = t.relu(dec_.fuse.apply(t, bind, t.concat_rows({phi_x, z})));
    std::vector<nn::Tape::Id> steps(static_cast<std::size_t>(cfg_.T_prime), fused);
    const auto hiddens = dec_.lstm.apply_all(t, bind, steps);
    std::vector<nn::Tape::Id> outs;
    outs.reserve(hiddens.size());
    for (const auto h : hiddens)
      outs.push_back(t.row_affine(dec_.head.apply(t, bind, h), std_.stdev, std_.mean));
    return t.concat_rows(outs);
  }

  LossIds build_loss(nn::Tape& t, const nn::TapeBinding& bind,
                     const std::vector<const ModelSample*>& batch, const nn::Mat& eps,
                     double kl_weight, bool inputs_need_grad) const {
    if (batch.empty()) throw std::invalid_argument("build_loss: empty batch");
    const int b = static_cast<int>(batch.size());
    if (eps.rows() != cfg_.latent_dim || eps.cols() != b)
      throw std::invalid_argument("build_loss: epsilon shape mismatch");

    LossIds ids;
    ids.x = build_encoder(t, bind, batch, false, inputs_need_grad);
    ids.y = build_encoder(t, bind, batch, true, inputs_need_grad);
    const auto [mu, log_var] = build_latent(t, bind, ids.x.phi, ids.y.phi);

    // z = mu + exp(log_var / 2) .* eps
    const nn::Tape::Id eps_leaf = t.leaf(eps, false);
    const nn::Tape::Id sigma = t.exp_(t.affine(log_var, 0.5, 0.0));
    const nn::Tape::Id z = t.add(mu, t.emul(sigma, eps_leaf));

    const nn::Tape::Id pred = build_decoder(t, bind, ids.x.phi, z);

    nn::Mat gt(2 * cfg_.T_prime, b);
    for (int j = 0; j < b; ++j)
      for (int s = 0; s < cfg_.T_prime; ++s) {
        gt(2 * s, j) = batch[static_cast<std::size_t>(j)]->sample.fut_offsets(s, 0);
        gt(2 * s + 1, j) = batch[static_cast<std::size_t>(j)]->sample.fut_offsets(s, 1);
      }
    ids.gt = t.leaf(std::move(gt), inputs_need_grad);
    ids.mse = t.mean_all(t.square(t.sub(pred, ids.gt)));

    // KL to the standard-normal prior, averaged over the batch
    const nn::Tape::Id kl_terms =
        t.sub(t.add(t.square(mu), t.exp_(log_var)), t.affine(log_var, 1.0, 1.0));
    ids.kl = t.affine(t.sum_all(kl_terms), 0.5 / static_cast<double>(b), 0.0);

    ids.total = t.add(ids.mse, t.affine(ids.kl, kl_weight, 0.0));
    return ids;
  }

  PointSeq column_to_offsets(const Eigen::VectorXd& column) const {
    PointSeq offsets(cfg_.T_prime, 2);
    for (int s = 0; s < cfg_.T_prime; ++s) {
      offsets(s, 0) = column(2 * s);
      offsets(s, 1) = column(2 * s + 1);
    }
    return offsets;
  }

  // ---- checkpoint primitives ----
  static void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_i64(std::ostream& out, std::int64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_f64(std::ostream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_string(std::ostream& out, const std::string& s) {
    write_i64(out, static_cast<std::int64_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  static std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }
  static std::int64_t read_i64(std::istream& in) {
    std::int64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }
  static double read_f64(std::istream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }
  static std::string read_string(std::istream& in) {
    const auto len = read_i64(in);
    std::string s(static_cast<std::size_t>(len), '\0');
    in.read(s.data(), len);
    return s;
  }

  ModelConfig cfg_;
  BranchConfig branches_;
  int scene_channels_ = 0;
  int occ_cells_ = 64;  // R*D; fixed by the grid spec used during preparation
  Standardizer std_;
  nn::ParamStore params_;
  EncoderParams x_, y_;
  LatentHead lat_;
  DecoderParams dec_;
};

}  // namespace mcenet
