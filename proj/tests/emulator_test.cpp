#include <cmath>
#include <random>

#include "support.hpp"
#include "tada/emulator.hpp"

namespace tada {
namespace {

std::vector<double> grid3(double b, double c, double a) {
  return {b, c, b, c, a, c, b, c, b};
}

TEST(Kernel, ClassCounts) {
  EXPECT_EQ(SymmetricKernel::class_count(3), 3u);
  EXPECT_EQ(SymmetricKernel::class_count(5), 6u);
  EXPECT_EQ(SymmetricKernel::class_count(7), 10u);
  EXPECT_TADA_ERROR(SymmetricKernel(4, {1, 0, 0}), ErrorKind::kOutOfRange);
  EXPECT_TADA_ERROR(SymmetricKernel(3, {1, 0}), ErrorKind::kShapeMismatch);
}

TEST(Kernel, MaterializePresets) {
  EXPECT_EQ(SymmetricKernel::identity(3).materialize(), grid3(0, 0, 1));
  EXPECT_EQ(SymmetricKernel::from_abc(0.25, 0.0625, 0.125).materialize(),
            grid3(0.0625, 0.125, 0.25));
  EXPECT_EQ(SymmetricKernel::from_abc(2.26, 0.054, -0.37).materialize(),
            grid3(0.054, -0.37, 2.26));
}

TEST(Kernel, DihedralInvariance) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> d;
  for (int size : {3, 5, 7}) {
    std::vector<double> c(SymmetricKernel::class_count(size));
    for (double& v : c) v = d(gen);
    const auto g = SymmetricKernel(size, c).materialize();
    auto at = [&](int y, int x) { return g[static_cast<std::size_t>(y * size + x)]; };
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        EXPECT_EQ(at(y, x), at(y, size - 1 - x));
        EXPECT_EQ(at(y, x), at(size - 1 - y, x));
        EXPECT_EQ(at(y, x), at(x, y));
      }
    }
  }
}

TEST(Kernel, GridRoundTripAndMultiplicities) {
  for (int size : {3, 5, 7}) {
    std::vector<double> c(SymmetricKernel::class_count(size));
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = 0.1 * static_cast<double>(k + 1);
    const SymmetricKernel kern(size, c);
    EXPECT_EQ(SymmetricKernel::from_grid(size, kern.materialize()), kern);
    double total = 0.0;
    for (double m : kern.multiplicities()) total += m;
    EXPECT_EQ(total, size * size);
    double direct = 0.0;
    for (double v : kern.materialize()) direct += v;
    EXPECT_NEAR(kern.sum(), direct, 1e-12);
  }
  EXPECT_EQ(SymmetricKernel::identity(3).multiplicities(), (std::vector<double>{1, 4, 4}));
}

TEST(Projection, RescalesToUnitSum) {
  EXPECT_EQ(project_constraints(SymmetricKernel::from_abc(2, 0, 0)), SymmetricKernel::identity(3));
  const SymmetricKernel dn = SymmetricKernel::from_abc(0.25, 0.0625, 0.125);
  const SymmetricKernel p = project_constraints(dn);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p.classes()[k], dn.classes()[k], 1e-15);
  EXPECT_TADA_ERROR(project_constraints(SymmetricKernel::from_abc(-4, 0, 1)),
                    ErrorKind::kDegenerateKernel);
}

TEST(Projection, IdempotentAndRatioPreserving) {
  const SymmetricKernel k(5, {3, -1, 0.5, 2, 0.25, 0.1});
  const SymmetricKernel p = project_constraints(k);
  EXPECT_NEAR(p.sum(), 1.0, 1e-14);
  const SymmetricKernel pp = project_constraints(p);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(pp.classes()[i], p.classes()[i], 1e-15);
    EXPECT_NEAR(p.classes()[i] / p.classes()[0], k.classes()[i] / k.classes()[0], 1e-12);
  }
}

TEST(Mixer, ProjectionAndMixing) {
  const ChannelMixer m = project_constraints(ChannelMixer{{2, 1, 1}});
  EXPECT_DOUBLE_EQ(m.w[0], 0.5);
  EXPECT_DOUBLE_EQ(m.w[1], 0.25);
  EXPECT_DOUBLE_EQ(m.w[2], 0.25);
  const ChannelMixer clamped = project_constraints(ChannelMixer{{-1, 1, 3}});
  EXPECT_DOUBLE_EQ(clamped.w[0], 0.0);
  EXPECT_DOUBLE_EQ(clamped.w[2], 0.75);
  EXPECT_TADA_ERROR(project_constraints(ChannelMixer{{-1, 0, 0}}), ErrorKind::kDegenerateKernel);

  RgbImage rgb;
  rgb.planes = {GrayImage(2, 1, BitDepth::kReal, std::vector<double>{1, 2}),
                GrayImage(2, 1, BitDepth::kReal, std::vector<double>{3, 4}),
                GrayImage(2, 1, BitDepth::kReal, std::vector<double>{5, 6})};
  EXPECT_EQ(mix_channels(rgb, {{1, 0, 0}}), rgb.planes[0]);
  RgbImage same;
  same.planes = {rgb.planes[1], rgb.planes[1], rgb.planes[1]};
  const GrayImage avg = mix_channels(same, {});
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(avg.data[i], rgb.planes[1].data[i], 1e-15);
}

GrayImage random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> d(0.0, 255.0);
  GrayImage img(w, h);
  for (double& v : img.data) v = d(gen);
  return img;
}

TEST(Convolve, IdentityConstantAndImpulse) {
  const GrayImage img = random_image(9, 7, 1);
  EXPECT_EQ(convolve(img, SymmetricKernel::identity(3)), img);

  const SymmetricKernel dn = SymmetricKernel::from_abc(0.25, 0.0625, 0.125);
  for (double v : convolve(GrayImage(8, 8, BitDepth::kReal, 42.0), dn).data) {
    EXPECT_NEAR(v, 42.0, 1e-12);
  }

  const SymmetricKernel k5(5, {0.3, 0.1, -0.05, 0.02, 0.04, 0.01});
  GrayImage impulse(11, 11);
  impulse.at(5, 5) = 3.0;
  const GrayImage out = convolve(impulse, k5);
  const auto g = k5.materialize();
  for (int y = 0; y < 11; ++y) {
    for (int x = 0; x < 11; ++x) {
      const int dy = y - 5;
      const int dx = x - 5;
      const double expect = std::abs(dy) <= 2 && std::abs(dx) <= 2
                                ? 3.0 * g[static_cast<std::size_t>((dy + 2) * 5 + dx + 2)]
                                : 0.0;
      EXPECT_NEAR(out.at(x, y), expect, 1e-15);
    }
  }
}

TEST(Convolve, MirrorBoundaryMatchesOracle) {
  const GrayImage img = random_image(6, 5, 2);
  const SymmetricKernel k = SymmetricKernel::from_abc(0.5, 0.1, 0.025);
  const GrayImage out = convolve(img, k);
  auto reflect = [](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); };
  const auto g = k.materialize();
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 6; ++x) {
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          s += g[static_cast<std::size_t>((dy + 1) * 3 + dx + 1)] *
               img.at(reflect(x + dx, 6), reflect(y + dy, 5));
        }
      }
      EXPECT_NEAR(out.at(x, y), s, 1e-12);
    }
  }
}

TEST(Convolve, LinearInImageAndKernel) {
  const GrayImage a = random_image(8, 8, 3);
  const GrayImage b = random_image(8, 8, 4);
  const SymmetricKernel k1 = SymmetricKernel::from_abc(0.4, 0.1, 0.05);
  const SymmetricKernel k2 = SymmetricKernel::from_abc(-0.2, 0.3, 0.0);
  GrayImage ab(8, 8);
  for (std::size_t i = 0; i < ab.size(); ++i) ab.data[i] = 2 * a.data[i] - b.data[i];
  const GrayImage lhs = convolve(ab, k1);
  const GrayImage ca = convolve(a, k1);
  const GrayImage cb = convolve(b, k1);
  for (std::size_t i = 0; i < ab.size(); ++i) EXPECT_NEAR(lhs.data[i], 2 * ca.data[i] - cb.data[i], 1e-10);

  SymmetricKernel k12 = k1;
  for (std::size_t j = 0; j < 3; ++j) k12.classes()[j] += k2.classes()[j];
  const GrayImage sum = convolve(a, k12);
  const GrayImage c2 = convolve(a, k2);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(sum.data[i], ca.data[i] + c2.data[i], 1e-10);
}

TEST(Convolve, PreservesMeanOfNoisyConstant) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> d(100.0, 10.0);
  GrayImage img(128, 128);
  for (double& v : img.data) v = d(gen);
  const GrayImage out = convolve(img, SymmetricKernel::from_abc(2.0, 0.0, -0.25));
  double mean = 0.0;
  for (double v : out.data) mean += v;
  mean /= static_cast<double>(out.size());
  EXPECT_NEAR(mean, 100.0, 0.3);
}

TEST(Develop, IdentityIsPlainCompression) {
  GrayImage tif(16, 16, BitDepth::k16);
  std::mt19937_64 gen(6);
  std::uniform_int_distribution<int> d(0, 65535);
  for (double& v : tif.data) v = d(gen);
  EmulatorPipeline p;
  p.scheme = RoundingScheme::kExact;
  GrayImage scaled = tif.as_real();
  for (double& v : scaled.data) v /= 257.0;
  EXPECT_EQ(develop(tif, p), compress(scaled, p.table, RoundingScheme::kExact));
  EXPECT_EQ(develop(tif, p), develop(tif, p));
}

TEST(Develop, ConstantBatchGivesZeroPlanes) {
  EmulatorPipeline p;
  p.kernel = SymmetricKernel::from_abc(0.25, 0.0625, 0.125);
  p.scheme = RoundingScheme::kExact;
  std::vector<SourceImage> batch(3, GrayImage(16, 8, BitDepth::k16, 128.0 * 257.0));
  for (const auto& plane : develop(batch, p)) {
    for (double c : plane.coeffs) EXPECT_EQ(c, 0.0);
  }
}

TEST(Develop, MixerMustMatchInputType) {
  EmulatorPipeline p;
  RgbImage rgb;
  rgb.planes = {GrayImage(8, 8, BitDepth::k16, 100.0), GrayImage(8, 8, BitDepth::k16, 200.0),
                GrayImage(8, 8, BitDepth::k16, 300.0)};
  EXPECT_TADA_ERROR(develop(rgb, p), ErrorKind::kShapeMismatch);
  p.mixer = ChannelMixer{};
  EXPECT_TADA_ERROR(develop(GrayImage(8, 8, BitDepth::k16), p), ErrorKind::kShapeMismatch);
  EXPECT_NO_THROW(develop(rgb, p));
}

TEST(KernelFile, RoundTrip) {
  EmulatorPipeline p;
  p.kernel = SymmetricKernel(5, {0.3, 0.1, -0.05, 0.02, 0.04, 1.0 / 3.0});
  p.mixer = ChannelMixer{{0.2, 0.5, 0.3}};
  p.table = quant_table_from_qf(93);
  p.scheme = RoundingScheme::kExact;
  const std::string text = format_kernel_file(p, "qf93");
  EXPECT_NE(text.find("table_source = qf93"), std::string::npos);
  EXPECT_EQ(parse_kernel_file(text), p);

  testing::TempDir dir("kernel");
  write_kernel_file(p, dir.path() / "k.txt");
  EXPECT_EQ(read_kernel_file(dir.path() / "k.txt"), p);
}

TEST(KernelFile, RejectsBadInput) {
  EmulatorPipeline p;
  const std::string good = format_kernel_file(p);
  EXPECT_TADA_ERROR(parse_kernel_file(good + "colour = red\n"), ErrorKind::kConfig);
  EXPECT_TADA_ERROR(parse_kernel_file("size = 3\nscheme = exact\n"), ErrorKind::kConfig);
  std::string bad_scheme = good;
  bad_scheme.replace(bad_scheme.find("cubic"), 5, "sine");
  EXPECT_TADA_ERROR(parse_kernel_file(bad_scheme), ErrorKind::kConfig);
}

}  // namespace
}  // namespace tada
