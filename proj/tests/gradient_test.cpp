#include <cmath>
#include <vector>

#include "support.hpp"
#include "tada/closure.hpp"
#include "tada/toy.hpp"

namespace tada {
namespace {

// The cubic surrogate jumps at half-integers, so differences use a step small
// enough to stay inside one rounding cell.
constexpr double kStep = 1e-9;

struct Fixture {
  std::vector<SourceImage> batch;
  TargetStats target;
};

Fixture make_fixture(std::size_t n, bool rgb) {
  SensorPoolSpec s;
  s.count = rgb ? 3 * n : n;
  s.width = 32;
  s.height = 32;
  s.seed = 5;
  const SourcePool pool = make_sensor_pool(s);
  Fixture f;
  if (rgb) {
    for (std::size_t i = 0; i < n; ++i) {
      RgbImage img;
      for (int c = 0; c < 3; ++c) {
        img.planes[static_cast<std::size_t>(c)] = std::get<GrayImage>(pool.images[3 * i + c]);
      }
      f.batch.emplace_back(img);
    }
  } else {
    f.batch = pool.images;
  }
  SensorPoolSpec t = s;
  t.count = n;
  t.seed = 6;
  EmbeddingConfig e;
  const TargetSet target = synth_target(make_sensor_pool(t), kernel_preset("denoise"),
                                        quant_table_from_qf(100), Balance::kAllStego, e);
  f.target = make_target_stats(prepare_target(target, e, -1.0, 1.0));
  return f;
}

void expect_matches_differences(TadaClosure& c, const std::vector<double>& x) {
  const std::vector<double> g = loss_gradient(x, c);
  ASSERT_EQ(g.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto up = x;
    auto dn = x;
    up[i] += kStep;
    dn[i] -= kStep;
    const double fd = (c.value(up) - c.value(dn)) / (2 * kStep);
    if (std::abs(g[i]) > 1e-8) {
      EXPECT_LE(std::abs(fd - g[i]) / std::abs(g[i]), 1e-4) << "coordinate " << i;
    }
  }
}

TEST(LossGradient, QuadraticClosure) {
  const std::vector<double> c = {1.0, -2.0, 0.5};
  auto quad = [&](std::span<const double> p) {
    Evaluation e;
    e.gradient.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      e.value += (p[i] - c[i]) * (p[i] - c[i]);
      e.gradient[i] = 2 * (p[i] - c[i]);
    }
    e.terms = {{"quad", e.value}};
    return e;
  };
  const std::vector<double> x = {0.3, 0.1, -4.0};
  const auto g = loss_gradient(x, quad);
  for (std::size_t i = 0; i < 3; ++i) {
    auto up = x;
    auto dn = x;
    up[i] += 1e-4;
    dn[i] -= 1e-4;
    const double fd = (quad(up).value - quad(dn).value) / 2e-4;
    EXPECT_NEAR(g[i], fd, 1e-9);
  }
}

TEST(Params, PackUnpackRoundTrip) {
  EmulatorPipeline p;
  p.kernel = SymmetricKernel::from_abc(0.5, 0.1, 0.025);
  p.mixer = ChannelMixer{{0.2, 0.3, 0.5}};
  const auto v = pack_params(p);
  ASSERT_EQ(v.size(), 6u);
  EXPECT_EQ(unpack_params(v, p), p);
  EXPECT_TADA_ERROR(unpack_params(std::vector<double>(3, 0.0), p), ErrorKind::kShapeMismatch);
}

TEST(Closure, GrayKernelMatchesDifferences) {
  const Fixture f = make_fixture(8, false);
  Rng rng(3);
  for (int point = 0; point < 4; ++point) {
    EmulatorPipeline p;
    p.kernel = SymmetricKernel::from_abc(0.2 + 0.8 * rng.uniform(), 0.2 * rng.uniform() - 0.05,
                                         0.2 * rng.uniform() - 0.05);
    TadaClosure c(f.batch, p, f.target, LossWeights{}, 1.0);
    expect_matches_differences(c, pack_params(p));
  }
}

TEST(Closure, FiveByFiveKernelMatchesDifferences) {
  const Fixture f = make_fixture(4, false);
  EmulatorPipeline p;
  p.kernel = SymmetricKernel(5, {0.3, 0.08, 0.02, 0.04, 0.01, 0.005});
  TadaClosure c(f.batch, p, f.target, LossWeights{}, 1.0);
  expect_matches_differences(c, pack_params(p));
}

TEST(Closure, MixerWeightsMatchDifferences) {
  const Fixture f = make_fixture(4, true);
  EmulatorPipeline p;
  p.kernel = SymmetricKernel::from_abc(0.4, 0.05, 0.1);
  p.mixer = ChannelMixer{{0.25, 0.35, 0.4}};
  TadaClosure c(f.batch, p, f.target, LossWeights{}, 1.0);
  expect_matches_differences(c, pack_params(p));
}

TEST(Closure, RealismOnlyGradient) {
  const Fixture f = make_fixture(4, false);
  EmulatorPipeline p;
  p.kernel = SymmetricKernel::from_abc(0.6, 0.02, 0.08);
  LossWeights w;
  w.lambda_cov = 0.0;
  w.mu_dist = 0.0;
  TadaClosure c(f.batch, p, f.target, w, 1.0);
  expect_matches_differences(c, pack_params(p));
}

}  // namespace
}  // namespace tada
