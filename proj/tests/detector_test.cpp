#include <algorithm>
#include <cmath>
#include <random>

#include "support.hpp"
#include "tada/detector.hpp"
#include "tada/toy.hpp"

namespace tada {
namespace {

JpegPlane noisy_plane(int size, std::uint64_t seed, int qf = 100) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(128.0, 20.0);
  GrayImage img(size, size);
  for (double& v : img.data) v = std::clamp(d(gen), 0.0, 255.0);
  return compress(img, quant_table_from_qf(qf), RoundingScheme::kExact);
}

LabeledFeatures toy_features(std::vector<std::vector<double>> rows, std::vector<int> y) {
  LabeledFeatures f;
  for (auto& r : rows) f.x.push_back(FeatureVector{std::move(r), "toy"});
  f.y = std::move(y);
  return f;
}

LabeledFeatures gaussian_classes(std::size_t n, double gap, std::uint64_t seed, int dim = 4) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d;
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    std::vector<double> r(static_cast<std::size_t>(dim));
    for (double& v : r) v = d(gen);
    r[0] += label * gap;
    rows.push_back(r);
    y.push_back(label);
  }
  return toy_features(std::move(rows), std::move(y));
}

TEST(Dctr, DimensionsAndFolding) {
  EXPECT_EQ(dctr_dimension(DctrConfig{}), 2000u);
  DctrConfig full;
  full.reduced = false;
  EXPECT_EQ(dctr_dimension(full), 8000u);
  const int folded[8] = {0, 1, 2, 3, 4, 3, 2, 1};
  for (int a = 0; a < 8; ++a) EXPECT_EQ(fold_phase(a), folded[a]);
}

TEST(Dctr, ConstantImageFillsZeroBin) {
  const JpegPlane p = compress(GrayImage(32, 32, BitDepth::kReal, 128.0), quant_table_from_qf(90),
                               RoundingScheme::kExact);
  const DctrConfig cfg;
  const FeatureVector f = dctr_features(p, cfg);
  ASSERT_EQ(f.values.size(), dctr_dimension(cfg));
  const int bins = cfg.t_trunc + 1;
  // Basis 0 is the DC window; every other basis sees an exactly zero response.
  for (std::size_t cell = kFoldedPhases; cell < f.values.size() / bins; ++cell) {
    EXPECT_DOUBLE_EQ(f.values[cell * bins], 1.0);
  }
  for (std::size_t cell = 0; cell < f.values.size() / bins; ++cell) {
    double mass = 0.0;
    for (int b = 0; b < bins; ++b) mass += f.values[cell * bins + b];
    EXPECT_NEAR(mass, 1.0, 1e-12);
  }
}

TEST(Dctr, InvariantToBrightnessShiftExceptDc) {
  const JpegPlane p = noisy_plane(40, 1);
  JpegPlane shifted = p;
  for (std::size_t b = 0; b < shifted.block_count(); ++b) shifted.coeff(b, 0) += 8.0;
  const FeatureVector a = dctr_features(p);
  const FeatureVector b = dctr_features(shifted);
  const int bins = DctrConfig{}.t_trunc + 1;
  for (std::size_t i = static_cast<std::size_t>(kFoldedPhases * bins); i < a.values.size(); ++i) {
    EXPECT_DOUBLE_EQ(a.values[i], b.values[i]) << "feature " << i;
  }
}

TEST(Dctr, DeterministicWithStableSpec) {
  const JpegPlane p = noisy_plane(32, 2);
  const FeatureVector a = dctr_features(p);
  const FeatureVector b = dctr_features(JpegPlane(p));
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.spec_id, b.spec_id);
  EXPECT_EQ(a.spec_id, dctr_spec_id(DctrConfig{}, std::max(1.0, p.table.mean_step() / 4.0)));
  DctrConfig other;
  other.q_quant = 3.0;
  EXPECT_NE(dctr_features(p, other).spec_id, a.spec_id);
  DctrConfig full;
  full.reduced = false;
  EXPECT_NE(dctr_spec_id(full, 1.0), dctr_spec_id(DctrConfig{}, 1.0));
}

TEST(Dctr, DefaultBinWidth) {
  // qf100 steps are all 1, so the floor applies.
  EXPECT_EQ(dctr_features(noisy_plane(16, 3)).spec_id, dctr_spec_id(DctrConfig{}, 1.0));
  const JpegPlane p = noisy_plane(16, 3, 50);
  ASSERT_GT(p.table.mean_step() / 4.0, 1.0);
  EXPECT_EQ(dctr_features(p).spec_id, dctr_spec_id(DctrConfig{}, p.table.mean_step() / 4.0));
}

TEST(Dctr, RejectsDifferentiablePlanes) {
  JpegPlane p = noisy_plane(16, 3);
  p.mode = PlaneMode::kDifferentiable;
  EXPECT_TADA_ERROR(dctr_features(p), ErrorKind::kNotExact);
}

TEST(Featurize, InterleavesCoverAndStego) {
  PairedSet set;
  for (std::uint64_t i = 0; i < 3; ++i) {
    set.covers.push_back(noisy_plane(16, 10 + i));
    set.stegos.push_back(noisy_plane(16, 20 + i));
  }
  const LabeledFeatures f = featurize(set, 1, 3, DctrConfig{});
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f.y, (std::vector<int>{0, 1, 0, 1}));
  EXPECT_EQ(f.x[2].values, dctr_features(set.covers[2]).values);
  EXPECT_EQ(f.x[1].values, dctr_features(set.stegos[1]).values);
  EXPECT_TADA_ERROR(featurize(set, 2, 4, DctrConfig{}), ErrorKind::kOutOfRange);
  const std::string csv = features_to_csv(f);
  EXPECT_EQ(csv.substr(0, 14), "label,f0,f1,f2");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Detector, SeparatesSeparableData) {
  const LabeledFeatures f =
      toy_features({{0.0, 1.0}, {2.0, 1.1}, {0.1, 0.9}, {2.2, 1.0}, {-0.3, 1.2}, {1.9, 0.8}},
                   {0, 1, 0, 1, 0, 1});
  const Detector det = train_detector(f);
  EXPECT_DOUBLE_EQ(probability_of_error(det, f), 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_EQ(det.score(f.x[i]) > 0.0, f.y[i] == 1);
  }
}

TEST(Detector, LabelFlipNegatesScores) {
  const LabeledFeatures f = gaussian_classes(60, 1.0, 4);
  LabeledFeatures flipped = f;
  for (int& y : flipped.y) y = 1 - y;
  const Detector a = train_detector(f);
  const Detector b = train_detector(flipped);
  const LabeledFeatures probe = gaussian_classes(20, 0.0, 5);
  for (const auto& x : probe.x) EXPECT_NEAR(a.score(x), -b.score(x), 1e-9);
}

TEST(Detector, HeavyRegularizationGivesCoinFlip) {
  const LabeledFeatures f = gaussian_classes(60, 2.0, 6);
  DetectorConfig cfg;
  cfg.reg = 1e9;
  const Detector det = train_detector(f, cfg);
  EXPECT_LT(det.weights.norm(), 1e-8);
  for (const auto& x : f.x) EXPECT_NEAR(sigmoid(det.score(x)), 0.5, 1e-8);
}

TEST(Detector, RejectsSingleClassAndMixedSpecs) {
  LabeledFeatures f = toy_features({{0.0}, {1.0}}, {1, 1});
  EXPECT_TADA_ERROR(train_detector(f), ErrorKind::kSingleClass);
  f.y = {0, 1};
  f.x[1].spec_id = "other";
  EXPECT_TADA_ERROR(train_detector(f), ErrorKind::kSpecMismatch);
  f.x[1].spec_id = "toy";
  const Detector det = train_detector(f);
  EXPECT_TADA_ERROR(det.score(FeatureVector{{0.0}, "other"}), ErrorKind::kSpecMismatch);
}

TEST(ProbabilityOfError, Examples) {
  const std::vector<int> y = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(probability_of_error(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y), 0.0);
  EXPECT_DOUBLE_EQ(probability_of_error(std::vector<double>{0.1, 0.4, 0.35, 0.8}, y), 0.25);
  EXPECT_DOUBLE_EQ(probability_of_error(std::vector<double>{1.0, 1.0, 1.0, 1.0}, y), 0.5);
  EXPECT_DOUBLE_EQ(probability_of_error(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y), 0.5);
  EXPECT_TADA_ERROR(probability_of_error(std::vector<double>{1.0, 2.0}, std::vector<int>{1, 1}),
                    ErrorKind::kSingleClass);
  EXPECT_TADA_ERROR(probability_of_error(std::vector<double>{1.0}, y), ErrorKind::kShapeMismatch);
}

TEST(ProbabilityOfError, LabelIndependentScoresNearHalf) {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> d;
  std::vector<double> s(1000);
  std::vector<int> y(1000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = d(gen);
    y[i] = static_cast<int>(i % 2);
  }
  const double pe = probability_of_error(s, y);
  EXPECT_NEAR(pe, 0.5, 0.05);
  EXPECT_LE(pe, 0.5);
  std::vector<double> warped(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) warped[i] = std::exp(3.0 * s[i]) - 7.0;
  EXPECT_DOUBLE_EQ(probability_of_error(warped, y), pe);
}

TEST(Regret, SameSplitIsZero) {
  SplitFeatures s{gaussian_classes(40, 1.0, 8), gaussian_classes(40, 1.0, 9)};
  const RegretReport r = regret(s, s);
  EXPECT_EQ(r.regret, 0.0);
  EXPECT_EQ(r.pe_source_on_target, r.pe_target_on_target);
  const auto j = to_json(r);
  EXPECT_TRUE(j.contains("pe_source_on_target"));
  EXPECT_TRUE(j.contains("regret"));
}

TEST(Regret, MismatchedSourceCostsAccuracy) {
  const SplitFeatures target{gaussian_classes(200, 3.0, 10), gaussian_classes(200, 3.0, 11)};
  // The source separates on a coordinate that carries no signal in the target.
  SplitFeatures source{gaussian_classes(200, 0.0, 12), gaussian_classes(200, 0.0, 13)};
  for (auto* set : {&source.train, &source.eval}) {
    for (std::size_t i = 0; i < set->size(); ++i) set->x[i].values[1] += 3.0 * set->y[i];
  }
  const RegretReport r = regret(source, target);
  EXPECT_LT(r.pe_target_on_target, 0.1);
  EXPECT_GT(r.regret, 0.2);
}

TEST(Chordal, Examples) {
  const LabeledFeatures a = gaussian_classes(30, 1.0, 14, 6);
  EXPECT_NEAR(chordal_diagnostic(a, a, 3), 0.0, 1e-6);
  LabeledFeatures pos = toy_features({{1, 1}, {2, 2}, {3, 3.1}, {4, 4}}, {0, 1, 0, 1});
  LabeledFeatures neg = toy_features({{1, -1}, {2, -2}, {3, -3.1}, {4, -4}}, {0, 1, 0, 1});
  EXPECT_NEAR(chordal_diagnostic(pos, neg, 1), 1.0, 1e-3);
}

TEST(Chordal, BoundedAndOrderInvariant) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const LabeledFeatures a = gaussian_classes(25, 0.5, 100 + seed, 8);
    const LabeledFeatures b = gaussian_classes(25, 0.5, 200 + seed, 8);
    const double c = chordal_diagnostic(a, b, 4);
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 2.0 + 1e-12);
    LabeledFeatures shuffled = a;
    std::reverse(shuffled.x.begin(), shuffled.x.end());
    EXPECT_NEAR(chordal_diagnostic(shuffled, b, 4), c, 1e-9);
  }
}

TEST(Chordal, Errors) {
  const LabeledFeatures a = gaussian_classes(6, 1.0, 15);
  EXPECT_TADA_ERROR(chordal_diagnostic(a, a, 6), ErrorKind::kTooFewSamples);
  EXPECT_TADA_ERROR(chordal_diagnostic(a, a, 0), ErrorKind::kOutOfRange);
  LabeledFeatures other = a;
  for (auto& x : other.x) x.spec_id = "else";
  EXPECT_TADA_ERROR(chordal_diagnostic(a, other, 2), ErrorKind::kSpecMismatch);
  const LabeledFeatures flat = toy_features({{1, 2}, {1, 2}, {1, 2}, {1, 2}}, {0, 1, 0, 1});
  EXPECT_TADA_ERROR(chordal_diagnostic(flat, flat, 1), ErrorKind::kRankDeficient);
}

}  // namespace
}  // namespace tada
