#include "doctest.h"

#include <cmath>
#include <fstream>

#include "dsibh/dataio.hpp"
#include "dsibh/error.hpp"
#include "dsibh/hamming.hpp"
#include "dsibh/trainer.hpp"
#include "support.hpp"

using namespace dsibh;
using namespace dsibh::trainer;
using numkit::Rng;

namespace {

TrainingData small_data(std::uint64_t seed = 1) {
  dataio::SynthSpec s;
  s.class_count = 3;
  s.samples_per_class = 20;
  s.d1 = 6;
  s.d2 = 5;
  s.label_dim = 3;
  s.seed = seed;
  const auto b = dataio::generate_synthetic(s);
  return {b.x1, b.x2, b.y};
}

TrainConfig small_config() {
  TrainConfig c;
  c.code_bits = 8;
  c.batch_size = 16;
  c.outer_rounds = 3;
  c.convergence_tol = 0.0;
  c.seed = 5;
  return c;
}

NetSpecs small_specs(const TrainingData& d, const TrainConfig& c) { return default_net_specs(d, c, {8}); }

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.code_bits = 4;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = small_config();
  c.alpha = 3.0;
  CHECK_THROWS_AS(c.validate(), UnsupportedOrder);
  c = small_config();
  c.beta = -0.1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = small_config();
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = small_config();
  c.lr_img = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("defaults follow the reference setting") {
  const TrainConfig c;
  CHECK(c.beta == 0.1);
  CHECK(c.gamma == 1.0);
  CHECK(c.eta == 1.0);
  CHECK(c.batch_size == 128);
  CHECK(c.lr_lab == doctest::Approx(1e-3));
  CHECK(c.lr_img == doctest::Approx(std::pow(10.0, -4.5)));
  CHECK(c.lr_txt == doctest::Approx(std::pow(10.0, -3.5)));
  CHECK(c.optimizer == OptimizerKind::adam);
}

TEST_CASE("zero outer rounds returns the initial state") {
  const TrainingData d = small_data();
  TrainConfig c = small_config();
  c.outer_rounds = 0;
  const NetSpecs specs = small_specs(d, c);
  const TrainState init = initialize(d, c, specs);
  const TrainState out = train(d, c, specs);
  CHECK(out.rounds == 0);
  CHECK(out.labnet == init.labnet);
  CHECK(out.imgnet == init.imgnet);
  CHECK(out.txtnet == init.txtnet);
  CHECK(out.label_codes == init.label_codes);
  CHECK(out.history.total.empty());
}

TEST_CASE("initial label codes are random signs") {
  const TrainingData d = small_data();
  const TrainConfig c = small_config();
  const TrainState s = initialize(d, c, small_specs(d, c));
  CHECK(s.label_codes.rows() == d.size());
  CHECK(s.label_codes.cols() == 8);
  for (double v : s.label_codes.data()) CHECK(std::abs(v) == 1.0);
}

TEST_CASE("training is reproducible") {
  const TrainingData d = small_data();
  const TrainConfig c = small_config();
  const TrainState a = train(d, c, small_specs(d, c));
  const TrainState b = train(d, c, small_specs(d, c));
  CHECK(a.label_codes == b.label_codes);
  CHECK(a.imgnet == b.imgnet);
  CHECK(a.txtnet == b.txtnet);
  CHECK(a.history.total == b.history.total);
  TrainConfig other = c;
  other.seed = 6;
  CHECK_FALSE(train(d, other, small_specs(d, other)).imgnet == a.imgnet);
}

TEST_CASE("phases run in order and leave other nets untouched") {
  const TrainingData d = small_data();
  const TrainConfig c = small_config();
  std::vector<Phase> order;
  TrainState last = initialize(d, c, small_specs(d, c));
  TrainHooks hooks;
  hooks.on_phase_end = [&](const TrainState& s, Phase p) {
    order.push_back(p);
    switch (p) {
      case Phase::labnet:
        CHECK(s.imgnet == last.imgnet);
        CHECK(s.txtnet == last.txtnet);
        break;
      case Phase::imgnet:
        CHECK(s.labnet == last.labnet);
        CHECK(s.txtnet == last.txtnet);
        CHECK(s.label_codes == last.label_codes);
        break;
      case Phase::txtnet:
        CHECK(s.labnet == last.labnet);
        CHECK(s.imgnet == last.imgnet);
        CHECK(s.label_codes == last.label_codes);
        break;
    }
    last = s;
  };
  std::size_t rounds_seen = 0;
  hooks.on_round_end = [&](const TrainState& s) { CHECK(s.rounds == ++rounds_seen); };
  train(d, c, small_specs(d, c), hooks);
  const std::vector<Phase> want{Phase::labnet, Phase::imgnet, Phase::txtnet, Phase::labnet, Phase::imgnet,
                                Phase::txtnet, Phase::labnet, Phase::imgnet, Phase::txtnet};
  CHECK(order == want);
  CHECK(rounds_seen == 3);
}

TEST_CASE("label codes track the label network") {
  const TrainingData d = small_data();
  const TrainConfig c = small_config();
  TrainHooks hooks;
  hooks.on_phase_end = [&](const TrainState& s, Phase p) {
    if (p == Phase::labnet) CHECK(s.label_codes == refresh_label_codes(s.labnet, d.y));
  };
  train(d, c, small_specs(d, c), hooks);
}

TEST_CASE("phase losses fall on the synthetic set") {
  const TrainingData d = small_data(2);
  TrainConfig c = small_config();
  c.outer_rounds = 10;
  c.lr_img = c.lr_txt = 1e-3;
  c.iters_lab = c.iters_img = c.iters_txt = 10;
  const TrainState s = train(d, c, small_specs(d, c));
  REQUIRE(s.history.labnet.size() == 10);
  CHECK(s.history.labnet.back() < s.history.labnet.front());
  CHECK(s.history.imgnet.back() < s.history.imgnet.front());
  CHECK(s.history.txtnet.back() < s.history.txtnet.front());
}

TEST_CASE("zero tolerance runs every round") {
  const TrainingData d = small_data();
  TrainConfig c = small_config();
  c.outer_rounds = 6;
  const TrainState s = train(d, c, small_specs(d, c));
  CHECK(s.rounds == 6);
  CHECK_FALSE(s.converged);
}

TEST_CASE("convergence stops early") {
  const TrainingData d = small_data();
  TrainConfig c = small_config();
  c.outer_rounds = 50;
  c.convergence_tol = 1e9;
  const TrainState s = train(d, c, small_specs(d, c));
  CHECK(s.converged);
  CHECK(s.rounds == 2);
}

TEST_CASE("sgd also trains") {
  const TrainingData d = small_data();
  TrainConfig c = small_config();
  c.optimizer = OptimizerKind::sgd;
  c.lr_lab = c.lr_img = c.lr_txt = 1e-3;
  CHECK(train(d, c, small_specs(d, c)).rounds == 3);
}

TEST_CASE("divergence raises a numeric error") {
  const TrainingData d = small_data();
  TrainConfig c = small_config();
  c.optimizer = OptimizerKind::sgd;
  c.lr_lab = 1e300;
  CHECK_THROWS_AS(train(d, c, small_specs(d, c)), NumericError);
}

TEST_CASE("refresh with a zero network gives all plus one") {
  nets::NetSpec s;
  s.input_dim = 3;
  s.hidden_dims = {4};
  s.code_bits = 8;
  s.init_scale = 0.0;
  const auto net = nets::init(s);
  Rng rng(1);
  const LabelMatrix y = testing::random_labels(5, 3, rng);
  const Matrix codes = refresh_label_codes(net, y);
  for (double v : codes.data()) CHECK(v == 1.0);
}

TEST_CASE("refresh is idempotent and matches a per-row sign oracle") {
  nets::NetSpec s;
  s.input_dim = 4;
  s.hidden_dims = {6};
  s.code_bits = 8;
  s.init_seed = 7;
  const auto net = nets::init(s);
  Rng rng(2);
  const LabelMatrix y = testing::random_labels(10, 4, rng);
  const Matrix a = refresh_label_codes(net, y);
  CHECK(a == refresh_label_codes(net, y));
  for (std::size_t i = 0; i < 10; ++i) {
    const std::vector<std::size_t> one{i};
    const Matrix out = nets::forward(net, y.select_rows(one).as_matrix());
    for (std::size_t k = 0; k < 8; ++k) CHECK(a(i, k) == (out(0, k) >= 0.0 ? 1.0 : -1.0));
  }
}

TEST_CASE("adam with zero gradient leaves params unchanged") {
  std::vector<double> p{1.0, -2.0, 3.0};
  const std::vector<double> g(3, 0.0);
  AdamState st(3);
  for (int i = 0; i < 5; ++i) adam_step(p, g, 0.1, st);
  CHECK(p == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("adam first step closed form") {
  std::vector<double> p{0.5, -1.0, 2.0};
  const std::vector<double> g{0.3, -4.0, 1e-3};
  AdamState st(3);
  adam_step(p, g, 0.01, st);
  const std::vector<double> start{0.5, -1.0, 2.0};
  for (std::size_t i = 0; i < 3; ++i) {
    const double want = start[i] - 0.01 * g[i] / (std::sqrt(g[i] * g[i]) + kAdamEps);
    CHECK(p[i] == doctest::Approx(want).epsilon(1e-14));
  }
  CHECK(st.step == 1);
}

TEST_CASE("adam step size tends to the learning rate under a constant gradient") {
  std::vector<double> p{0.0};
  const std::vector<double> g{2.5};
  AdamState st(1);
  double prev = 0.0;
  for (int i = 0; i < 2000; ++i) {
    prev = p[0];
    adam_step(p, g, 0.01, st);
  }
  CHECK(prev - p[0] == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("adam shape mismatch") {
  std::vector<double> p(3, 0.0);
  const std::vector<double> g(2, 0.0);
  AdamState st(3);
  CHECK_THROWS_AS(adam_step(p, g, 0.1, st), InvalidArgument);
}

TEST_CASE("checkpoints are written every few rounds") {
  testing::TempDir dir("ckpt");
  const TrainingData d = small_data();
  TrainConfig c = small_config();
  c.outer_rounds = 4;
  c.checkpoint_every = 2;
  c.checkpoint_dir = dir.path();
  const TrainState s = train(d, c, small_specs(d, c));
  CHECK(std::filesystem::exists(dir / "round_0002/imgnet.dsibm"));
  CHECK(std::filesystem::exists(dir / "round_0004/label_codes.dsibc"));
  CHECK(std::filesystem::exists(dir / "round_0004/config.json"));
  CHECK_FALSE(std::filesystem::exists(dir / "round_0003"));
  CHECK(nets::load_model(dir.path() / "round_0004/imgnet.dsibm") == s.imgnet);
  const auto codes = hamming::load_db(dir.path() / "round_0004/label_codes.dsibc");
  CHECK(codes == hamming::PackedCodeDB::from_codes(s.label_codes, d.y));
}

TEST_CASE("code information is non-negative") {
  const TrainingData d = small_data();
  const TrainConfig c = small_config();
  const TrainState s = initialize(d, c, small_specs(d, c));
  CHECK(code_information(s.imgnet, d.x1) >= 0.0);
}

TEST_CASE("seed derivation separates streams") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
}
