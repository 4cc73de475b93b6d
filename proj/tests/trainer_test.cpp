#include <cmath>
#include <cstdlib>
#include <fstream>

#include "json.hpp"
#include "support.hpp"
#include "tada/toy.hpp"

namespace tada {
namespace {

SourcePool small_pool(std::uint64_t seed, std::size_t n = 8, int size = 32) {
  SensorPoolSpec s;
  s.count = n;
  s.width = size;
  s.height = size;
  s.envelope_radius = 8;
  s.seed = seed;
  return make_sensor_pool(s);
}

PatchSet small_target(const SymmetricKernel& k, std::size_t n = 8, int size = 32) {
  const TargetSet t = synth_target(small_pool(99, n, size), k, quant_table_from_qf(100),
                                   Balance::kAllStego, EmbeddingConfig{});
  return prepare_target(t, EmbeddingConfig{}, 1.0, 0.5);
}

TrainConfig quick_config(int epochs) {
  TrainConfig c;
  c.lr = 0.01;
  c.max_epochs = epochs;
  c.patience = epochs - 1;
  c.weights.gamma_real = 1e-3;
  return c;
}

TEST(Train, ConstraintsHoldAfterEveryEpoch) {
  const SourcePool pool = small_pool(1);
  int calls = 0;
  const TrainResult r =
      train(pool, small_target(kernel_preset("denoise")), quant_table_from_qf(100),
            quick_config(6), [&](const EpochLog& e, const EmulatorPipeline& p) {
              ++calls;
              EXPECT_EQ(e.epoch, calls);
              EXPECT_NEAR(p.kernel.sum(), 1.0, 1e-12);
              EXPECT_TRUE(std::isfinite(e.total));
              EXPECT_DOUBLE_EQ(e.total, e.cov_term + e.w1_term + e.realism_term);
            });
  EXPECT_EQ(calls, 6);
  EXPECT_EQ(r.log.size(), 6u);
  EXPECT_NEAR(r.pipeline.kernel.sum(), 1.0, 1e-12);
}

TEST(Train, BestLossMatchesRecomputedPoolLoss) {
  const SourcePool pool = small_pool(2);
  const PatchSet target = small_target(kernel_preset("denoise"));
  const TrainConfig cfg = quick_config(5);
  const TrainResult r = train(pool, target, quant_table_from_qf(100), cfg);
  LossWeights w = cfg.weights;
  w.normalizers = r.normalizers;
  const auto items = augmented_items(pool, true);
  const LossBreakdown again =
      pool_loss(items, r.pipeline, make_target_stats(target), w, cfg.std_min);
  EXPECT_NEAR(again.total, r.best_loss, 1e-9 * r.best_loss);
  EXPECT_DOUBLE_EQ(r.log[static_cast<std::size_t>(r.best_epoch - 1)].total, r.best_loss);
}

TEST(Train, PatienceMatchesLogReplay) {
  const SourcePool pool = small_pool(3);
  TrainConfig cfg = quick_config(25);
  cfg.lr = 2.0;
  cfg.patience = 2;
  const TrainResult r =
      train(pool, small_target(kernel_preset("sharpen")), quant_table_from_qf(100), cfg);
  double best = INFINITY;
  int best_epoch = 0;
  int stale = 0;
  int stop = cfg.max_epochs;
  for (const auto& e : r.log) {
    if (e.total < best) {
      best = e.total;
      best_epoch = e.epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      stop = e.epoch;
      break;
    }
  }
  EXPECT_EQ(r.best_epoch, best_epoch);
  EXPECT_EQ(r.epochs_run, stop);
  EXPECT_EQ(r.stopped_early, stop < cfg.max_epochs || stale >= cfg.patience);
  if (r.stopped_early) {
    EXPECT_EQ(r.epochs_run - r.best_epoch, cfg.patience);
  }
}

TEST(Train, PatchBatchesStopExactly) {
  const SourcePool pool = small_pool(4, 4);
  TrainConfig cfg = quick_config(12);
  cfg.batch_unit = BatchUnit::kPatches;
  cfg.batch_size = 64;
  cfg.lr = 1.0;
  cfg.patience = 1;
  const TrainResult r =
      train(pool, small_target(kernel_preset("denoise")), quant_table_from_qf(100), cfg);
  if (r.stopped_early) {
    EXPECT_EQ(r.epochs_run, r.best_epoch + 1);
    EXPECT_GE(r.log.back().total, r.best_loss);
  } else {
    EXPECT_EQ(r.epochs_run, cfg.max_epochs);
  }
}

TEST(Train, DeterministicAcrossRunsAndThreads) {
  const SourcePool pool = small_pool(5);
  const PatchSet target = small_target(kernel_preset("denoise"));
  const TrainConfig cfg = quick_config(3);
  const char* old = std::getenv("TADA_THREADS");
  const std::string saved = old ? old : "";
  setenv("TADA_THREADS", "1", 1);
  const TrainResult a = train(pool, target, quant_table_from_qf(100), cfg);
  const TrainResult b = train(pool, target, quant_table_from_qf(100), cfg);
  setenv("TADA_THREADS", "3", 1);
  const TrainResult c = train(pool, target, quant_table_from_qf(100), cfg);
  if (old) {
    setenv("TADA_THREADS", saved.c_str(), 1);
  } else {
    unsetenv("TADA_THREADS");
  }
  EXPECT_EQ(log_to_csv(a.log), log_to_csv(b.log));
  EXPECT_EQ(log_to_csv(a.log), log_to_csv(c.log));
  EXPECT_EQ(a.pipeline, b.pipeline);
  EXPECT_EQ(a.pipeline, c.pipeline);
}

TEST(Train, RejectsBadConfig) {
  const SourcePool pool = small_pool(6, 2);
  const PatchSet target = small_target(kernel_preset("denoise"), 2);
  TrainConfig cfg = quick_config(5);
  cfg.patience = 5;
  EXPECT_TADA_ERROR(train(pool, target, quant_table_from_qf(100), cfg), ErrorKind::kConfig);
  cfg = quick_config(5);
  cfg.kernel_size = 4;
  EXPECT_TADA_ERROR(train(pool, target, quant_table_from_qf(100), cfg), ErrorKind::kConfig);
  cfg = quick_config(5);
  cfg.lr = 0.0;
  EXPECT_TADA_ERROR(train(pool, target, quant_table_from_qf(100), cfg), ErrorKind::kConfig);
  EXPECT_TADA_ERROR(train(SourcePool{}, target, quant_table_from_qf(100), quick_config(5)),
                    ErrorKind::kTooFewSamples);
}

TEST(Train, IdentityTargetStaysNearIdentity) {
  SensorPoolSpec s;
  s.count = 16;
  s.width = 64;
  s.height = 64;
  s.envelope_radius = 8;
  s.sigma_b = 400.0;
  s.seed = 7;
  SensorPoolSpec t = s;
  t.seed = 99;
  const TargetSet target = synth_target(make_sensor_pool(t), SymmetricKernel::identity(3),
                                        quant_table_from_qf(100), Balance::kAllStego,
                                        EmbeddingConfig{});
  TrainConfig cfg = quick_config(30);
  cfg.lr = 1e-4;
  const TrainResult r = train(make_sensor_pool(s), prepare_target(target, EmbeddingConfig{}, 1.0, 0.5),
                              quant_table_from_qf(100), cfg);
  const auto& k = r.pipeline.kernel.classes();
  EXPECT_NEAR(k[0], 1.0, 0.05);
  EXPECT_NEAR(k[1], 0.0, 0.05);
  EXPECT_NEAR(k[2], 0.0, 0.05);
}

// Smooth test objective over the normalized parameters.
double smooth_objective(const std::vector<double>& p, std::vector<double>* grad) {
  double v = 0.0;
  if (grad) grad->assign(p.size(), 0.0);
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double c = 0.3 * static_cast<double>(j) - 0.4;
    v += c * p[j] + p[j] * p[j] * p[j];
    if (grad) (*grad)[j] = c + 3 * p[j] * p[j];
  }
  return v;
}

TEST(Normalization, ChainRuleMatchesDifferences) {
  EmulatorPipeline p;
  p.kernel = SymmetricKernel(5, {0.7, 0.1, -0.02, 0.05, 0.03, 0.01});
  p.mixer = ChannelMixer{{0.5, 0.9, 0.2}};
  const std::vector<double> raw = pack_params(p);
  std::vector<double> g;
  smooth_objective(pack_params(detail::normalized(p)), &g);
  const std::vector<double> chained = detail::chain_normalization(g, p);
  const double h = 1e-6;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto up = raw;
    auto dn = raw;
    up[i] += h;
    dn[i] -= h;
    const double fu = smooth_objective(pack_params(detail::normalized(unpack_params(up, p))), nullptr);
    const double fd = smooth_objective(pack_params(detail::normalized(unpack_params(dn, p))), nullptr);
    EXPECT_NEAR(chained[i], (fu - fd) / (2 * h), 1e-7) << "coordinate " << i;
  }
}

TEST(Normalization, DegenerateMixerRejected) {
  EmulatorPipeline p;
  p.mixer = ChannelMixer{{0.0, 0.0, 0.0}};
  EXPECT_TADA_ERROR(detail::normalized(p), ErrorKind::kDegenerateKernel);
}

TEST(PrepareTarget, FlatTargetSelectsNothing) {
  TargetSet t;
  for (int i = 0; i < 2; ++i) {
    t.planes.push_back(compress(GrayImage(32, 32, BitDepth::kReal, 128.0), quant_table_from_qf(100),
                                RoundingScheme::kExact));
  }
  try {
    prepare_target(t, EmbeddingConfig{});
    FAIL() << "expected empty selection";
  } catch (const EmptySelectionError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptySelection);
    EXPECT_EQ(e.considered(), 2u * 4u * 8u);
    EXPECT_EQ(e.rejected_std(), e.considered());
    EXPECT_EQ(e.rejected_prob(), 0u);
  }
}

TEST(PrepareTarget, RotationsQuadruplePatches) {
  const TargetSet t = synth_target(small_pool(8, 3), kernel_preset("denoise"),
                                   quant_table_from_qf(95), Balance::kMix, EmbeddingConfig{});
  SelectionCounts one;
  SelectionCounts four;
  const PatchSet a = prepare_target(t, EmbeddingConfig{}, -1.0, 2.0, &one, false);
  const PatchSet b = prepare_target(t, EmbeddingConfig{}, -1.0, 2.0, &four, true);
  EXPECT_EQ(b.size(), 4 * a.size());
  EXPECT_EQ(four.considered, 4 * one.considered);
}

TEST(PrepareTarget, MixedTablesRejected) {
  TargetSet t;
  t.planes.push_back(compress(GrayImage(16, 16, BitDepth::kReal, 100.0), quant_table_from_qf(90),
                              RoundingScheme::kExact));
  t.planes.push_back(compress(GrayImage(16, 16, BitDepth::kReal, 100.0), quant_table_from_qf(80),
                              RoundingScheme::kExact));
  EXPECT_TADA_ERROR(prepare_target(t, EmbeddingConfig{}), ErrorKind::kShapeMismatch);
}

TEST(EmitSource, PairsDifferByUnitSteps) {
  const SourcePool pool = small_pool(9, 4);
  EmulatorPipeline p;
  p.kernel = kernel_preset("denoise");
  p.table = quant_table_from_qf(90);
  const PairedSet pairs = emit_source(p, pool, EmbeddingConfig{}, 3, 2026);
  ASSERT_EQ(pairs.size(), 3u);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(pairs.covers[i].mode, PlaneMode::kExact);
    EXPECT_EQ(pairs.covers[i], develop(pool.images[i], [&] {
                auto q = p;
                q.scheme = RoundingScheme::kExact;
                return q;
              }()));
    for (std::size_t k = 0; k < pairs.covers[i].coeffs.size(); ++k) {
      const double d = pairs.stegos[i].coeffs[k] - pairs.covers[i].coeffs[k];
      ASSERT_TRUE(d == 0.0 || d == 1.0 || d == -1.0);
      changed += d != 0.0;
    }
  }
  EXPECT_GT(changed, 0u);
  EXPECT_EQ(emit_source(p, pool, EmbeddingConfig{}, 0, 1).size(), 0u);
  EXPECT_TADA_ERROR(emit_source(p, pool, EmbeddingConfig{}, 5, 1), ErrorKind::kTooFewSamples);
}

TEST(Checkpoint, WritesKernelSidecarAndLog) {
  const SourcePool pool = small_pool(10, 4);
  const TrainConfig cfg = quick_config(2);
  const TrainResult r =
      train(pool, small_target(kernel_preset("denoise"), 4), quant_table_from_qf(100), cfg);
  testing::TempDir dir("ckpt");
  write_checkpoint(dir.path(), r, cfg, "qf100");
  const auto side = nlohmann::json::parse(read_file_text(dir.path() / "checkpoint.json"));
  EXPECT_EQ(side["epoch"], r.best_epoch);
  EXPECT_EQ(side["seed"], 2026);
  EXPECT_EQ(side["config"]["batch_unit"], "images");
  const std::string log = read_file_text(dir.path() / "train_log.csv");
  EXPECT_EQ(log.substr(0, log.find('\n')), "epoch,total,cov_term,w1_term,realism_term,lr");
  EXPECT_EQ(read_kernel_file(dir.path() / "kernel.txt").kernel, r.pipeline.kernel);
}

}  // namespace
}  // namespace tada
