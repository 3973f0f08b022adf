#include "dsibh/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>

#include "dsibh/config.hpp"
#include "dsibh/hamming.hpp"
#include "dsibh/renyi.hpp"

namespace dsibh::trainer {

namespace {

enum SeedSalt : std::uint64_t {
  kSaltLabnet = 0,
  kSaltImgnet = 1,
  kSaltTxtnet = 2,
  kSaltLabelCodes = 3,
  kSaltBatchLab = 4,
  kSaltBatchImg = 5,
  kSaltBatchTxt = 6,
};

/// Endless stream of minibatches: a shuffled epoch split into chunks of
/// batch_size, with a trailing singleton merged into the previous chunk.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : n_(n), batch_(std::min(batch_size, n)), rng_(seed), perm_(n) {
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    reshuffle();
  }

  std::size_t batches_per_epoch() const noexcept { return bounds_.size() - 1; }

  std::vector<std::size_t> next() {
    if (cursor_ + 1 >= bounds_.size()) reshuffle();
    const auto b = perm_.begin() + static_cast<std::ptrdiff_t>(bounds_[cursor_]);
    const auto e = perm_.begin() + static_cast<std::ptrdiff_t>(bounds_[cursor_ + 1]);
    ++cursor_;
    return {b, e};
  }

 private:
  void reshuffle() {
    rng_.shuffle(std::span<std::size_t>(perm_));
    bounds_.clear();
    for (std::size_t p = 0; p < n_; p += batch_) bounds_.push_back(p);
    if (n_ - bounds_.back() < 2 && bounds_.size() > 1) bounds_.pop_back();
    bounds_.push_back(n_);
    cursor_ = 0;
  }

  std::size_t n_;
  std::size_t batch_;
  numkit::Rng rng_;
  std::vector<std::size_t> perm_;
  std::vector<std::size_t> bounds_;
  std::size_t cursor_ = 0;
};

/// One optimizer per net, as in "three Adam solvers with different learning rates".
class Solver {
 public:
  Solver(OptimizerKind kind, double lr, const nets::MlpParams& params)
      : kind_(kind), lr_(lr), adam_(nets::flatten(params).size()) {}

  void step(nets::MlpParams& params, const nets::ParamGrads& grads) {
    if (kind_ == OptimizerKind::adam) {
      adam_step(params, grads, lr_, adam_);
    } else {
      sgd_step(params, grads, lr_);
    }
  }

 private:
  OptimizerKind kind_;
  double lr_;
  AdamState adam_;
};

void require_finite(double loss, const TrainingDiverged::Snapshot& snap) {
  if (!std::isfinite(loss)) throw TrainingDiverged(snap);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string describe(const TrainingDiverged::Snapshot& s) {
  return "training diverged: non-finite loss in " + std::string(phase_name(s.phase)) + " phase, round " +
         std::to_string(s.round) + ", iteration " + std::to_string(s.iteration) + " (loss " + fmt(s.loss) +
         ", ce " + fmt(s.cross_entropy) + ", mi " + fmt(s.mutual_information) + ", consistency " +
         fmt(s.consistency) + ")";
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

const char* phase_name(Phase p) noexcept {
  switch (p) {
    case Phase::labnet:
      return "labnet";
    case Phase::imgnet:
      return "imgnet";
    case Phase::txtnet:
      return "txtnet";
  }
  return "?";
}

TrainingDiverged::TrainingDiverged(const Snapshot& s) : NumericError(describe(s)), snapshot_(s) {}

void TrainConfig::validate() const {
  if (code_bits < 8) throw InvalidArgument("train.code_bits must be >= 8");
  if (alpha != 2.0) {
    throw UnsupportedOrder("train.alpha: only alpha = 2 has an analytic MI gradient");
  }
  if (!(beta >= 0.0) || !(gamma >= 0.0) || !(eta >= 0.0)) {
    throw InvalidArgument("train: beta, gamma and eta must be >= 0");
  }
  if (batch_size < 2) throw InvalidArgument("train.batch_size must be >= 2");
  if (!(lr_lab > 0.0) || !(lr_img > 0.0) || !(lr_txt > 0.0)) {
    throw InvalidArgument("train: learning rates must be > 0");
  }
  if (!(convergence_tol >= 0.0)) throw InvalidArgument("train.convergence_tol must be >= 0");
  if (checkpoint_every == 0) throw InvalidArgument("train.checkpoint_every must be >= 1");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  numkit::Rng rng(base ^ (0x9e3779b97f4a7c15ULL * (salt + 1)));
  return rng.next_u64();
}

NetSpecs default_net_specs(const TrainingData& data, const TrainConfig& config,
                           std::vector<std::size_t> hidden_dims, double init_scale) {
  auto make = [&](std::size_t input_dim, std::uint64_t salt) {
    return nets::NetSpec{input_dim, hidden_dims, config.code_bits, derive_seed(config.seed, salt), init_scale};
  };
  return {make(data.y.cols(), kSaltLabnet), make(data.x1.cols(), kSaltImgnet),
          make(data.x2.cols(), kSaltTxtnet)};
}

TrainingData training_data(const dataio::DatasetBundle& bundle) {
  const auto rows = bundle.train_rows();
  return {bundle.x1.select_rows(rows), bundle.x2.select_rows(rows), bundle.y.select_rows(rows)};
}

Matrix refresh_label_codes(const nets::MlpParams& labnet, const LabelMatrix& y) {
  return nets::sign(nets::forward(labnet, y.as_matrix()));
}

void adam_step(std::span<double> params, std::span<const double> grads, double lr, AdamState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw InvalidArgument("adam_step: parameter, gradient and moment sizes differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * g;
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
  }
}

void adam_step(nets::MlpParams& params, const nets::ParamGrads& grads, double lr, AdamState& state) {
  auto flat = nets::flatten(params);
  const auto g = nets::flatten(grads);
  adam_step(flat, g, lr, state);
  nets::unflatten(flat, params);
}

void sgd_step(nets::MlpParams& params, const nets::ParamGrads& grads, double lr) {
  if (grads.weight.size() != params.layers.size()) throw InvalidArgument("sgd_step: layer count mismatch");
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto& layer = params.layers[k];
    if (grads.weight[k].size() != layer.weight.size() || grads.bias[k].size() != layer.bias.size()) {
      throw InvalidArgument("sgd_step: gradient shape mismatch");
    }
    for (std::size_t i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] -= lr * grads.weight[k].data()[i];
    for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] -= lr * grads.bias[k][i];
  }
}

double code_information(const nets::MlpParams& params, const Matrix& features) {
  const Matrix codes = nets::forward(params, features);
  const double sx = renyi::select_sigma(features).sigma;
  const double st = renyi::select_sigma(codes).sigma;
  return renyi::reported_mi(renyi::mutual_information(features, codes, sx, st));
}

TrainState initialize(const TrainingData& data, const TrainConfig& config, const NetSpecs& specs) {
  config.validate();
  const std::size_t n = data.size();
  if (n < 2) throw InvalidArgument("train: need at least 2 training samples");
  if (data.x1.rows() != n || data.x2.rows() != n) {
    throw InvalidArgument("train: modality and label row counts differ");
  }
  for (const nets::NetSpec* s : {&specs.labnet, &specs.imgnet, &specs.txtnet}) {
    if (s->code_bits != config.code_bits) throw InvalidArgument("train: net code_bits differs from config");
  }
  if (specs.labnet.input_dim != data.y.cols() || specs.imgnet.input_dim != data.x1.cols() ||
      specs.txtnet.input_dim != data.x2.cols()) {
    throw InvalidArgument("train: net input dims do not match the data");
  }

  TrainState state;
  state.labnet = nets::init(specs.labnet);
  state.imgnet = nets::init(specs.imgnet);
  state.txtnet = nets::init(specs.txtnet);
  state.label_codes = Matrix(n, config.code_bits);
  numkit::Rng rng(derive_seed(config.seed, kSaltLabelCodes));
  for (double& v : state.label_codes.data()) v = rng.bernoulli(0.5) ? 1.0 : -1.0;
  state.class_table = losses::class_table_build(data.y, state.labnet);
  state.sample_class = losses::class_indices(data.y, state.class_table);
  return state;
}

TrainState train(const TrainingData& data, const TrainConfig& config, const NetSpecs& specs,
                 const TrainHooks& hooks) {
  TrainState state = initialize(data, config, specs);
  const std::size_t n = data.size();
  const Matrix labels = data.y.as_matrix();
  const losses::LossWeights weights = config.weights();

  BatchStream lab_batches(n, config.batch_size, derive_seed(config.seed, kSaltBatchLab));
  BatchStream img_batches(n, config.batch_size, derive_seed(config.seed, kSaltBatchImg));
  BatchStream txt_batches(n, config.batch_size, derive_seed(config.seed, kSaltBatchTxt));
  const std::size_t epoch = lab_batches.batches_per_epoch();
  const std::size_t t_lab = config.iters_lab ? config.iters_lab : epoch;
  const std::size_t t_img = config.iters_img ? config.iters_img : epoch;
  const std::size_t t_txt = config.iters_txt ? config.iters_txt : epoch;

  Solver lab_solver(config.optimizer, config.lr_lab, state.labnet);
  Solver img_solver(config.optimizer, config.lr_img, state.imgnet);
  Solver txt_solver(config.optimizer, config.lr_txt, state.txtnet);

  auto modality_phase = [&](Phase phase, nets::MlpParams& net, const Matrix& x, BatchStream& stream,
                            Solver& solver, std::size_t iters) {
    std::vector<double> losses_seen;
    for (std::size_t it = 0; it < iters; ++it) {
      const auto idx = stream.next();
      losses::ModalityBatch batch{x.select_rows(idx), {}, state.label_codes.select_rows(idx)};
      batch.class_index.reserve(idx.size());
      for (std::size_t i : idx) batch.class_index.push_back(state.sample_class[i]);
      const losses::ModalityLoss loss = losses::modality_loss(batch, net, state.class_table, weights);
      require_finite(loss.total, {state.rounds + 1, phase, it, loss.total, loss.cross_entropy,
                                  loss.mutual_information, loss.consistency});
      solver.step(net, loss.grads);
      losses_seen.push_back(loss.total);
    }
    return mean(losses_seen);
  };

  double previous_total = 0.0;
  while (state.rounds < config.outer_rounds) {
    const std::size_t round = state.rounds + 1;

    std::vector<double> lab_losses;
    for (std::size_t it = 0; it < t_lab; ++it) {
      const auto idx = lab_batches.next();
      const nets::ForwardCache cache = nets::forward_cached(state.labnet, labels.select_rows(idx));
      const auto sim = losses::similarity_from_labels(data.y.select_rows(idx));
      const numkit::ValueGrad loss =
          losses::labnet_loss(cache.codes(), state.label_codes.select_rows(idx), sim, config.eta);
      require_finite(loss.value, {round, Phase::labnet, it, loss.value, 0.0, 0.0, 0.0});
      lab_solver.step(state.labnet, nets::backward(state.labnet, cache, loss.grad));
      state.label_codes = refresh_label_codes(state.labnet, data.y);
      lab_losses.push_back(loss.value);
    }
    state.class_table = losses::class_table_build(data.y, state.labnet);
    state.history.labnet.push_back(mean(lab_losses));
    if (hooks.on_phase_end) hooks.on_phase_end(state, Phase::labnet);

    state.history.imgnet.push_back(
        modality_phase(Phase::imgnet, state.imgnet, data.x1, img_batches, img_solver, t_img));
    if (hooks.on_phase_end) hooks.on_phase_end(state, Phase::imgnet);
    state.history.txtnet.push_back(
        modality_phase(Phase::txtnet, state.txtnet, data.x2, txt_batches, txt_solver, t_txt));
    if (hooks.on_phase_end) hooks.on_phase_end(state, Phase::txtnet);

    const double total = state.history.labnet.back() + state.history.imgnet.back() + state.history.txtnet.back();
    state.history.total.push_back(total);
    state.rounds = round;

    if (!config.checkpoint_dir.empty() && round % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "round_%04zu", round);
      write_checkpoint(state, data, config, config.checkpoint_dir / name);
    }
    if (hooks.on_round_end) hooks.on_round_end(state);

    if (round > 1 && config.convergence_tol > 0.0) {
      const double improvement = (previous_total - total) / std::max(std::abs(previous_total), 1e-12);
      if (improvement < config.convergence_tol) {
        state.converged = true;
        break;
      }
    }
    previous_total = total;
  }
  return state;
}

void write_checkpoint(const TrainState& state, const TrainingData& data, const TrainConfig& config,
                      const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FormatError("checkpoint: cannot create " + dir.string() + ": " + ec.message());
  nets::save_model(state.labnet, dir / "labnet.dsibm");
  nets::save_model(state.imgnet, dir / "imgnet.dsibm");
  nets::save_model(state.txtnet, dir / "txtnet.dsibm");
  hamming::save_db(hamming::PackedCodeDB::from_codes(state.label_codes, data.y), dir / "label_codes.dsibc");
  std::ofstream out(dir / "config.json");
  if (!out) throw FormatError("checkpoint: cannot write config.json in " + dir.string());
  config::json j = config::to_json(config);
  j["round"] = state.rounds;
  out << j.dump(2) << '\n';
}

}  // namespace dsibh::trainer
