#include <gtest/gtest.h>

#include <limits>

#include "test_util.hpp"

namespace dpvm {
namespace {

TrainConfig small_train(std::size_t epochs, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.seed = seed;
  cfg.dims = test::small_arch();
  return cfg;
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamTensor<double> p("w", Tensor2<double>(1, 3, std::vector<double>{0.0, 1.0, -2.0}));
  p.grad.fill(1.0);
  AdamState<double> st;
  adam_step<double>({&p}, st, AdamConfig{});
  EXPECT_NEAR(p.value(0, 0), -1e-4, 1e-9);
  EXPECT_NEAR(p.value(0, 1), 1.0 - 1e-4, 1e-9);
  EXPECT_NEAR(p.value(0, 2), -2.0 - 1e-4, 1e-9);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ZeroGradientLeavesValuesUnchanged) {
  ParamTensor<double> p("w", Tensor2<double>(2, 2, std::vector<double>{1, 2, 3, 4}));
  AdamState<double> st;
  for (int i = 0; i < 5; ++i) adam_step<double>({&p}, st, AdamConfig{});
  EXPECT_EQ(p.value, Tensor2<double>(2, 2, std::vector<double>{1, 2, 3, 4}));
}

TEST(Adam, DeterministicSequence) {
  auto run = [] {
    ParamTensor<float> p("w", 2, 3);
    AdamState<float> st;
    for (int i = 0; i < 10; ++i) {
      for (std::size_t j = 0; j < 6; ++j) p.grad.values()[j] = static_cast<float>(std::sin(i + j));
      adam_step<float>({&p}, st, AdamConfig{});
    }
    return p.value;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, NonFiniteGradientNamesTensorAndStepAndTouchesNothing) {
  ParamTensor<double> a("layer.a", 1, 2), b("layer.b", 1, 2);
  a.grad.fill(1.0);
  b.grad(0, 1) = std::numeric_limits<double>::infinity();
  AdamState<double> st;
  try {
    adam_step<double>({&a, &b}, st, AdamConfig{});
    FAIL();
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("layer.b"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step 1"), std::string::npos) << msg;
  }
  EXPECT_EQ(a.value(0, 0), 0.0);
  EXPECT_EQ(st.step, 0u);
}

TEST(Trainer, StepCountFollowsBatchSize) {
  const auto set = generate_synthetic(test::small_spec(32, 1)).set;
  const auto m = train(small_train(1, 1), set);
  ASSERT_EQ(m.history.size(), 2u);
  EXPECT_EQ(m.history[0].step, 1u);
  EXPECT_EQ(m.history[1].step, 2u);
  EXPECT_EQ(m.final_epoch, 1u);
}

TEST(Trainer, SameSeedGivesIdenticalLogsAndWeights) {
  const auto set = generate_synthetic(test::small_spec(40, 2)).set;
  const auto a = train(small_train(3, 5), set), b = train(small_train(3, 5), set);
  EXPECT_EQ(a.history, b.history);
  EXPECT_TRUE(a.params.same_values(b.params));
  const auto c = train(small_train(3, 6), set);
  EXPECT_NE(a.history, c.history);
}

TEST(Trainer, CallbackSeesEveryStep) {
  const auto set = generate_synthetic(test::small_spec(40, 2)).set;
  std::vector<LossLogEntry> seen;
  const auto m = train(small_train(2, 1), set, [&](const LossLogEntry& e) { seen.push_back(e); });
  EXPECT_EQ(seen, m.history);
}

TEST(Trainer, LossDecreasesOverTraining) {
  const auto set = split_dataset(generate_synthetic(test::small_spec(200, 3)).set, 3).train;
  const auto m = train(small_train(100, 3), set);
  const auto means = epoch_mean_totals(m.history);
  ASSERT_EQ(means.size(), 100u);
  EXPECT_LT(means.back(), means.front());
}

TEST(Trainer, ZeroLossWeightsLeaveParametersAtInit) {
  const auto set = generate_synthetic(test::small_spec(32, 4)).set;
  auto cfg = small_train(2, 4);
  cfg.loss.lambda1 = cfg.loss.lambda2 = cfg.loss.mu1 = cfg.loss.mu2 = cfg.loss.k3 = 0.0;
  const auto m = train(cfg, set);
  const auto init = init_model<float>(dims_for_table(cfg.dims, set.dims), seeds::model_init(cfg.seed));
  EXPECT_TRUE(m.params.same_values(init));
}

TEST(Trainer, EpochMeansAverageSteps) {
  std::vector<LossLogEntry> log(3);
  log[0].epoch = log[1].epoch = 1;
  log[2].epoch = 2;
  log[0].total = 1.0;
  log[1].total = 3.0;
  log[2].total = 5.0;
  EXPECT_EQ(epoch_mean_totals(log), (std::vector<double>{2.0, 5.0}));
}

TEST(Trainer, LogLineFormat) {
  const LossLogEntry e{2, 7, 0.5, 0.25, 1.5, -0.75, 0.125, 1.625};
  EXPECT_EQ(format_log_line(e), "2,7,0.5,0.25,1.5,-0.75,0.125,1.625");
  EXPECT_STREQ(log_header(), "epoch,step,L_R,L_Mcontent,L_D,L_Minter,L_Fusion,L_total");
}

TEST(Trainer, EmptyTrainingSetIsDataError) {
  EXPECT_THROW(train(small_train(1, 0), PairSet{}), DataError);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    set = generate_synthetic(test::small_spec(40, 9)).set;
    cfg.train = small_train(2, 9);
    ckpt = make_checkpoint(cfg, train(cfg.train, set));
  }
  PairSet set;
  RunConfig cfg;
  Checkpoint ckpt;
  test::TempDir dir{"ckpt"};
};

TEST_F(CheckpointTest, RoundTripIsBitIdentical) {
  const auto path = dir / "m.ckpt";
  save_checkpoint(ckpt, path);
  const auto loaded = load_checkpoint(path);
  EXPECT_TRUE(loaded.params.same_values(ckpt.params));
  EXPECT_EQ(loaded.history, ckpt.history);
  EXPECT_EQ(loaded.final_epoch, 2u);
  EXPECT_EQ(to_config_text(loaded.config), to_config_text(ckpt.config));
  EXPECT_EQ(serialize_checkpoint(loaded), read_bytes(path));
}

TEST_F(CheckpointTest, EvaluationIsIdenticalAfterReload) {
  const auto path = dir / "m.ckpt";
  save_checkpoint(ckpt, path);
  const auto loaded = load_checkpoint(path);
  const auto kind = embedding_kind_for(cfg.train.ablation);
  EXPECT_EQ(evaluate(ckpt.params, set, kind), evaluate(loaded.params, set, kind));
}

TEST_F(CheckpointTest, TruncatedFileIsCorruption) {
  const auto bytes = serialize_checkpoint(ckpt);
  for (std::size_t keep : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(deserialize_checkpoint(std::string_view(bytes).substr(0, keep)), CorruptionError) << keep;
}

TEST_F(CheckpointTest, FlippedByteIsCorruption) {
  auto bytes = serialize_checkpoint(ckpt);
  bytes[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(deserialize_checkpoint(bytes), CorruptionError);
}

TEST_F(CheckpointTest, BadMagicAndVersionAreNamed) {
  auto bytes = serialize_checkpoint(ckpt);
  auto bad = bytes;
  bad[0] = 'X';
  try {
    deserialize_checkpoint(bad);
    FAIL();
  } catch (const CorruptionError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
  bad = bytes;
  bad[8] = 9;
  try {
    deserialize_checkpoint(bad);
    FAIL();
  } catch (const CorruptionError& e) {
    EXPECT_NE(std::string(e.what()).find("version 9"), std::string::npos) << e.what();
  }
}

TEST_F(CheckpointTest, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), IoError);
}

}  // namespace
}  // namespace dpvm
