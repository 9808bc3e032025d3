#include "alrite/data.hpp"

#include "../support/fixtures.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

namespace alrite {
namespace {

TEST(Data, IhdpShapeAndKinds) {
  const Synthetic s = generate_ihdp_like(1, 747, 25, 139.0 / 747.0);
  EXPECT_EQ(s.data.size(), 747);
  EXPECT_EQ(s.data.dim(), 25);
  EXPECT_EQ(s.data.kinds[0], FeatureKind::continuous);
  EXPECT_EQ(s.data.kinds[24], FeatureKind::binary);
  for (Index i = 0; i < s.data.size(); ++i)
    for (Index c = 6; c < 25; ++c) EXPECT_TRUE(s.data.x(i, c) == 0.0 || s.data.x(i, c) == 1.0);
  EXPECT_GT(s.data.n_treated(), 0);
  EXPECT_GT(s.data.n_control(), 0);
}

TEST(Data, IhdpSurfacesFollowTheirForms) {
  const Synthetic s = generate_ihdp_like(2, 300, 8, 0.3);
  // mu1 - log(mu0) is the constant omega.
  const Vector omega = s.truth.mu1 - s.truth.mu0.array().log().matrix();
  EXPECT_LT(omega.maxCoeff() - omega.minCoeff(), 1e-9 * std::max(1.0, std::abs(omega(0))));
  EXPECT_EQ(s.truth.tau, s.truth.mu1 - s.truth.mu0);
  double att = 0.0;
  for (Index i = 0; i < s.data.size(); ++i)
    if (s.data.t[static_cast<std::size_t>(i)] == 1) att += s.truth.tau(i);
  EXPECT_NEAR(att / static_cast<double>(s.data.n_treated()), 4.0, 1e-9);
}

TEST(Data, IhdpNoiselessOutcomesAreFactual) {
  IhdpConfig config;
  config.n = 100;
  config.d = 5;
  config.n_continuous = 2;
  config.noise_sd = 0.0;
  const Synthetic s = generate_ihdp_like(3, config);
  for (Index i = 0; i < s.data.size(); ++i)
    EXPECT_EQ(s.data.y(i), s.data.t[static_cast<std::size_t>(i)] ? s.truth.mu1(i) : s.truth.mu0(i));
}

TEST(Data, IhdpConfoundedPropensityVaries) {
  IhdpConfig config;
  config.n = 200;
  config.d = 6;
  config.confounded = true;
  config.confounding_strength = 2.0;
  const Synthetic s = generate_ihdp_like(4, config);
  EXPECT_GT(s.propensity.maxCoeff() - s.propensity.minCoeff(), 0.1);
}

TEST(Data, IhdpRejectsBadConfig) {
  EXPECT_THROW(generate_ihdp_like(1, 10, 5, 0.3), PreconditionError);
  EXPECT_THROW(generate_ihdp_like(1, 100, 5, 1.0), PreconditionError);
}

TEST(Data, GeneratorsAreDeterministic) {
  EXPECT_EQ(to_csv(generate_ihdp_like(9, 120, 6, 0.3).data), to_csv(generate_ihdp_like(9, 120, 6, 0.3).data));
  EXPECT_NE(to_csv(generate_ihdp_like(9, 120, 6, 0.3).data), to_csv(generate_ihdp_like(10, 120, 6, 0.3).data));
  const AcicProtocol p = random_acic_protocol(5, 3, 1, 1);
  EXPECT_EQ(to_csv(generate_acic_like(6, 100, p).data), to_csv(generate_acic_like(6, 100, p).data));
}

TEST(Data, AcicPropensityIsClipped) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const AcicProtocol p = random_acic_protocol(seed, 4, 2, 2);
    const Synthetic s = generate_acic_like(seed, 400, p);
    EXPECT_GE(s.propensity.minCoeff(), 0.05);
    EXPECT_LE(s.propensity.maxCoeff(), 0.95);
    EXPECT_EQ(s.data.dim(), 8);
    for (Index i = 0; i < s.data.size(); ++i) {
      EXPECT_EQ(s.data.x(i, 4), std::floor(s.data.x(i, 4)));
      EXPECT_TRUE(s.data.x(i, 7) == 0.0 || s.data.x(i, 7) == 1.0);
    }
  }
}

TEST(Data, AcicZeroTermsGiveUniformAssignment) {
  AcicProtocol p;
  p.n_continuous = 2;
  p.propensity.link = Link::sigmoid;
  p.noise_sd = 1.0;
  const Synthetic s = generate_acic_like(3, 50, p);
  for (Index i = 0; i < 50; ++i) EXPECT_EQ(s.propensity(i), 0.5);
  EXPECT_EQ(s.truth.tau.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Data, AcicTermsEvaluate) {
  TermSpec poly{TermKind::polynomial, {1.0, 2.0, 3.0}};
  EXPECT_DOUBLE_EQ(poly(2.0), 2.0 + 8.0 + 24.0);
  TermSpec step{TermKind::step, {5.0}, 1.0};
  EXPECT_EQ(step(1.0), 0.0);
  EXPECT_EQ(step(1.5), 5.0);
  TermSpec ind{TermKind::indicator, {2.0}, -1.0, 1.0};
  EXPECT_EQ(ind(1.0), 2.0);
  EXPECT_EQ(ind(1.1), 0.0);
  AcicProtocol bad;
  bad.noise_sd = 0.0;
  EXPECT_THROW(bad.validate(), PreconditionError);
}

TEST(Data, ToyStructure) {
  const Synthetic s = generate_two_cluster_toy(1, 400);
  for (Index i = 0; i < 400; ++i) {
    EXPECT_EQ(s.data.x(i, 1) > 0.0, i >= 200);
    EXPECT_EQ(s.truth.mu0(i), s.data.x(i, 0));
    EXPECT_NEAR(s.truth.tau(i), 1.0, 1e-12);
  }
}

TEST(Data, CsvRoundTripIsLossless) {
  const Synthetic s = generate_ihdp_like(11, 60, 5, 0.4);
  const std::string text = to_csv(s.data, &s.truth);
  const CsvContents back = parse_csv(text);
  EXPECT_EQ(back.data.x, s.data.x);
  EXPECT_EQ(back.data.y, s.data.y);
  EXPECT_EQ(back.data.t, s.data.t);
  ASSERT_TRUE(back.truth);
  EXPECT_EQ(back.truth->mu1, s.truth.mu1);
  EXPECT_EQ(back.data.kinds, s.data.kinds);
  EXPECT_EQ(to_csv(back.data, &*back.truth), text);
}

TEST(Data, CsvHeaderAndColumnCount) {
  const Synthetic s = generate_ihdp_like(12, 747, 25, 139.0 / 747.0);
  const std::string text = to_csv(s.data, &s.truth);
  EXPECT_EQ(text.substr(0, text.find('\n')).find("x24,t,y,mu0,mu1"), text.find("x24"));
  const std::string first = text.substr(text.find('\n') + 1, text.find('\n', text.find('\n') + 1) - text.find('\n') - 1);
  EXPECT_EQ(std::count(first.begin(), first.end(), ','), 28);
}

TEST(Data, CsvErrors) {
  EXPECT_THROW(parse_csv("x0,y\n1,2\n"), SchemaError);
  EXPECT_THROW(parse_csv("x0,t\n1,0\n"), SchemaError);
  try {
    parse_csv("x0,t,y\n1,0,2\n1,1,abc\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse_csv("x0,t,y\n1,2,2\n"), ParseError);
  EXPECT_THROW(parse_csv("x0,t,y\n1,0\n"), ParseError);
  EXPECT_THROW(parse_csv("x0,t,y,mu0\n1,0,1,1\n"), SchemaError);
}

TEST(Data, CsvInfersKinds) {
  const CsvContents c = parse_csv("x0,x1,x2,t,y\n0,3,0.5,0,1\n1,0,-2,1,2\n");
  EXPECT_EQ(c.data.kinds, (std::vector<FeatureKind>{FeatureKind::binary, FeatureKind::count, FeatureKind::continuous}));
  EXPECT_FALSE(c.truth);
}

TEST(Data, CsvFileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "alrite_data_test.csv";
  const Dataset data = testing::random_dataset(20, 3, 1);
  save_csv(path, data);
  EXPECT_EQ(load_csv(path).data.x, data.x);
  std::filesystem::remove(path);
}

TEST(Data, SplitSizesAndDisjointness) {
  const Dataset data = testing::random_dataset(747, 2, 3, 0.2);
  const SplitIndices s = split(data, 0.1, 0.3, 4);
  EXPECT_EQ(s.test.size(), 75u);
  EXPECT_EQ(s.validation.size(), 202u);
  EXPECT_EQ(s.train.size(), 470u);
  std::set<Index> all;
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    EXPECT_TRUE(std::is_sorted(part->begin(), part->end()));
    all.insert(part->begin(), part->end());
  }
  EXPECT_EQ(all.size(), 747u);
  EXPECT_EQ(to_json(split(data, 0.1, 0.3, 4)), to_json(s));
  const SplitIndices back = split_from_json(to_json(s));
  EXPECT_EQ(back.validation, s.validation);
}

TEST(Data, SplitRejectsDegenerateData) {
  Dataset data = testing::random_dataset(30, 2, 3);
  EXPECT_THROW(split(data, 0.0, 0.3, 1), PreconditionError);
  std::fill(data.t.begin(), data.t.end(), 0);
  data.t[0] = 1;
  EXPECT_THROW(split(data, 0.2, 0.3, 1), StructuralError);
}

TEST(Data, ScalerStandardizesTrainRows) {
  Dataset data = testing::random_dataset(50, 3, 5);
  data.x.col(1) = (data.x.col(1).array() > 0).cast<double>().matrix();
  data.kinds[1] = FeatureKind::binary;
  data.x.col(2).setConstant(7.0);
  const IndexList rows = testing::iota(40);
  const auto [s, out] = standardize(data, rows);
  const Dataset fitted = out.subset(rows);
  EXPECT_NEAR(fitted.x.col(0).mean(), 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(fitted.x.col(0).array().square().mean()), 1.0, 1e-12);
  EXPECT_EQ(out.x.col(1), data.x.col(1));
  EXPECT_EQ(out.x.col(2), data.x.col(2));
  EXPECT_TRUE(s.clamped[2]);
  EXPECT_TRUE(s.any_clamped());
  EXPECT_NEAR(fitted.y.mean(), 0.0, 1e-12);
  EXPECT_LT((s.inverse_y(out.y) - data.y).cwiseAbs().maxCoeff(), 1e-12);
  const Scaler back = scaler_from_json(nlohmann::json::parse(to_json(s).dump()));
  EXPECT_EQ(back.transform_x(data.x), out.x);
}

TEST(Data, DatasetValidation) {
  Dataset data = testing::random_dataset(10, 2, 1);
  data.t[3] = 2;
  EXPECT_THROW(data.validate(), PreconditionError);
  data = testing::random_dataset(10, 2, 1);
  data.y(0) = std::nan("");
  EXPECT_THROW(data.validate(), NumericError);
  data = testing::random_dataset(10, 2, 1);
  data.y.resize(9);
  EXPECT_THROW(data.validate(), ShapeError);
  data = testing::random_dataset(10, 2, 1);
  std::fill(data.t.begin(), data.t.end(), 1);
  EXPECT_THROW(data.require_both_arms(), StructuralError);
}

}  // namespace
}  // namespace alrite
