#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsibh/dataio.hpp"
#include "dsibh/error.hpp"
#include "dsibh/labels.hpp"
#include "dsibh/losses.hpp"
#include "dsibh/nets.hpp"

namespace dsibh::trainer {

using numkit::Matrix;

enum class OptimizerKind { adam, sgd };

struct TrainConfig {
  std::size_t code_bits = 16;
  double alpha = 2.0;
  double beta = 0.1;
  double gamma = 1.0;
  double eta = 1.0;
  std::size_t batch_size = 128;
  double lr_lab = 1e-3;
  double lr_img = 3.1622776601683795e-5;  // 10^-4.5
  double lr_txt = 3.1622776601683794e-4;  // 10^-3.5
  // Iterations per phase per round; 0 means one epoch over the training set.
  std::size_t iters_lab = 0;
  std::size_t iters_img = 0;
  std::size_t iters_txt = 0;
  std::size_t outer_rounds = 50;
  double convergence_tol = 1e-4;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  // Checkpoints are written every `checkpoint_every` rounds when a directory is set.
  std::filesystem::path checkpoint_dir;
  std::size_t checkpoint_every = 5;

  losses::LossWeights weights() const { return {beta, gamma, eta}; }
  void validate() const;
};

/// Specs for labNet, imgNet and txtNet.
struct NetSpecs {
  nets::NetSpec labnet;
  nets::NetSpec imgnet;
  nets::NetSpec txtnet;
};

struct TrainingData {
  Matrix x1;
  Matrix x2;
  LabelMatrix y;

  std::size_t size() const noexcept { return y.rows(); }
};

/// Rows tagged `train` of a split bundle.
TrainingData training_data(const dataio::DatasetBundle& bundle);

/// Deterministic per-purpose seed derived from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

/// Same hidden widths for all three nets; input dims taken from `data`,
/// init seeds derived from config.seed.
NetSpecs default_net_specs(const TrainingData& data, const TrainConfig& config,
                           std::vector<std::size_t> hidden_dims = {256}, double init_scale = 1.0);

struct LossHistory {
  std::vector<double> labnet;  // mean minibatch loss per round
  std::vector<double> imgnet;
  std::vector<double> txtnet;
  std::vector<double> total;
};

struct TrainState {
  nets::MlpParams labnet;
  nets::MlpParams imgnet;
  nets::MlpParams txtnet;
  Matrix label_codes;  // G^y, N x c, entries +-1
  losses::ClassCodeTable class_table;
  std::vector<std::size_t> sample_class;
  std::size_t rounds = 0;
  bool converged = false;
  LossHistory history;
};

enum class Phase { labnet, imgnet, txtnet };
const char* phase_name(Phase p) noexcept;

/// Training produced a NaN or infinite loss.
class TrainingDiverged : public NumericError {
 public:
  struct Snapshot {
    std::size_t round = 0;
    Phase phase = Phase::labnet;
    std::size_t iteration = 0;
    double loss = 0.0;
    double cross_entropy = 0.0;
    double mutual_information = 0.0;
    double consistency = 0.0;
  };

  explicit TrainingDiverged(const Snapshot& s);
  const Snapshot& snapshot() const noexcept { return snapshot_; }

 private:
  Snapshot snapshot_;
};

struct TrainHooks {
  std::function<void(const TrainState&, Phase)> on_phase_end;
  std::function<void(const TrainState&)> on_round_end;
};

/// Initial state: random nets, random +-1 label codes, class table from the initial labNet.
TrainState initialize(const TrainingData& data, const TrainConfig& config, const NetSpecs& specs);

/// Alternates labNet, imgNet and txtNet phases until `outer_rounds` or until a
/// round improves the total loss by less than `convergence_tol` (relative).
/// A tolerance of zero disables the early stop.
TrainState train(const TrainingData& data, const TrainConfig& config, const NetSpecs& specs,
                 const TrainHooks& hooks = {});

/// G^y = sign(labNet(y)) for every row, sign(0) = +1.
Matrix refresh_label_codes(const nets::MlpParams& labnet, const LabelMatrix& y);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One bias-corrected Adam update of `params` in place.
void adam_step(std::span<double> params, std::span<const double> grads, double lr, AdamState& state);
void adam_step(nets::MlpParams& params, const nets::ParamGrads& grads, double lr, AdamState& state);
void sgd_step(nets::MlpParams& params, const nets::ParamGrads& grads, double lr);

/// Clamped matrix-based MI between held-out features and the net's relaxed codes,
/// with median-heuristic bandwidths.
double code_information(const nets::MlpParams& params, const Matrix& features);

/// Writes labnet/imgnet/txtnet models, G^y as a code DB and the config echo into `dir`.
void write_checkpoint(const TrainState& state, const TrainingData& data, const TrainConfig& config,
                      const std::filesystem::path& dir);

}  // namespace dsibh::trainer
