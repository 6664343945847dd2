#include <gtest/gtest.h>

#include <random>

#include "datamix/mixcore.hpp"
#include "test_support.hpp"

using namespace datamix;

TEST(DatasetTable, RejectsInvalidEntries) {
  EXPECT_THROW(DatasetTable({}), DataError);
  EXPECT_THROW(DatasetTable({{"a", 1}, {"a", 2}}), DataError);
  EXPECT_THROW(DatasetTable({{"", 1}}), DataError);
  EXPECT_THROW(DatasetTable({{"a", 0}}), DataError);
}

TEST(DatasetTable, KeepsOrderAndLooksUpNames) {
  DatasetTable t({{"b", 5}, {"a", 7}});
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t.name(0), "b");
  EXPECT_EQ(t.tokens(1), 7u);
  EXPECT_EQ(t.index_of("a"), std::optional<std::size_t>(1));
  EXPECT_FALSE(t.index_of("c"));
  EXPECT_EQ(t.total_tokens(), 12u);
}

TEST(DatasetTable, HoldsTrillionScaleCounts) {
  const auto t = test::dolma_table();
  EXPECT_EQ(t.size(), 19u);
  EXPECT_EQ(t.tokens(0), 440'000'000'000ull);
  // The listed counts sum to 2174.9B; the quoted total is rounded to 2.1T.
  EXPECT_EQ(t.total_tokens(), 2'174'900'000'000ull);
  EXPECT_NEAR(static_cast<double>(t.total_tokens()), 2.1e12, 0.1e12);
}

TEST(DataMix, EnforcesSimplex) {
  DatasetTable t({{"a", 1}, {"b", 1}});
  EXPECT_NO_THROW(DataMix(t, {0.25, 0.75}));
  EXPECT_THROW(DataMix(t, {0.5}), DataError);
  EXPECT_THROW(DataMix(t, {-0.1, 1.1}), DataError);
  EXPECT_THROW(DataMix(t, {0.5, 0.6}), DataError);
  EXPECT_NO_THROW(DataMix(t, {0.5, 0.5 + 5e-10}));
}

TEST(UniformMix, Examples) {
  EXPECT_EQ(uniform_mix(test::table({1, 1})).weights(), (std::vector<double>{0.5, 0.5}));
  const auto m17 = uniform_mix(test::table(std::vector<std::uint64_t>(17, 3)));
  for (double w : m17.weights()) EXPECT_DOUBLE_EQ(w, 1.0 / 17.0);
  EXPECT_EQ(uniform_mix(test::table({9})).weights(), (std::vector<double>{1.0}));
}

TEST(UniformMix, HasMinimumSquaredNorm) {
  std::mt19937_64 gen(7);
  for (std::size_t d = 1; d <= 8; ++d) {
    const auto u = uniform_mix(test::table(std::vector<std::uint64_t>(d, 1)));
    double uu = 0.0;
    for (double x : u.weights()) uu += x * x;
    EXPECT_NEAR(uu, 1.0 / static_cast<double>(d), 1e-15);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> w(d);
      double s = 0.0;
      for (double& x : w) s += (x = std::exponential_distribution<double>(1.0)(gen));
      double ww = 0.0;
      for (double& x : w) ww += (x / s) * (x / s);
      EXPECT_GE(ww, uu - 1e-15);
    }
  }
}

TEST(ProportionalMix, Examples) {
  const auto m = proportional_mix(test::table({10, 30, 60}));
  EXPECT_NEAR(m[0], 0.1, 1e-15);
  EXPECT_NEAR(m[1], 0.3, 1e-15);
  EXPECT_NEAR(m[2], 0.6, 1e-15);
  EXPECT_EQ(proportional_mix(test::table({5, 5})).weights(), (std::vector<double>{0.5, 0.5}));

  const auto dolma = test::dolma_table();
  const auto p = proportional_mix(dolma);
  EXPECT_NEAR(p.weight_of("Refined Web"), 440.0 / (dolma.total_tokens() / 1e9), 1e-12);
  EXPECT_NEAR(p.weight_of("Refined Web"), 440.0 / 2100.0, 1e-2);
}

TEST(ProportionalMix, EqualizesEpochsForAnyBudget) {
  const auto dolma = test::dolma_table();
  const auto p = proportional_mix(dolma);
  for (std::uint64_t b : {1ull, 1'000'000ull, 1'600'000'000'000ull, 10'000'000'000'000ull}) {
    const auto e = sampling_proportions(p, BudgetSpec{b, 1.0, std::nullopt});
    const double expect = static_cast<double>(b) / static_cast<double>(dolma.total_tokens());
    for (double x : e) EXPECT_NEAR(x, expect, 1e-12 * std::max(1.0, expect));
  }
}

TEST(ManualMix, Examples) {
  const auto t = test::table({10, 10});
  const auto m = manual_mix(t, ManualAdjustments{{{"d0", 2.0}}});
  EXPECT_NEAR(m[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(m[1], 1.0 / 3.0, 1e-15);

  const auto dolma = test::dolma_table();
  const auto ones = manual_mix(dolma, ManualAdjustments{});
  const auto prop = proportional_mix(dolma);
  for (std::size_t i = 0; i < dolma.size(); ++i) EXPECT_NEAR(ones[i], prop[i], 1e-12);
}

TEST(ManualMix, OlmoStyleAdjustmentRenormalizesGlobally) {
  const auto dolma = test::dolma_table();
  ManualAdjustments adj;
  adj.multipliers["Wiki"] = 2.0;
  for (const char* cc : {"CC Head", "CC Middle", "CC Tail"}) adj.multipliers[cc] = 0.5;
  const auto m = manual_mix(dolma, adj);
  const auto p = proportional_mix(dolma);
  // Wiki relative to an untouched dataset doubles; CC halves.
  EXPECT_NEAR(m.weight_of("Wiki") / m.weight_of("Arxiv"),
              2.0 * p.weight_of("Wiki") / p.weight_of("Arxiv"), 1e-12);
  EXPECT_NEAR(m.weight_of("CC Head") / m.weight_of("Arxiv"),
              0.5 * p.weight_of("CC Head") / p.weight_of("Arxiv"), 1e-12);
  // Untouched datasets move too, since the whole vector is rescaled.
  EXPECT_GT(m.weight_of("Arxiv"), p.weight_of("Arxiv"));
}

TEST(ManualMix, RejectsUnknownNamesAndBadFactors) {
  const auto t = test::table({10, 10});
  EXPECT_THROW(manual_mix(t, ManualAdjustments{{{"nope", 2.0}}}), ConfigError);
  EXPECT_THROW(manual_mix(t, ManualAdjustments{{{"d0", 0.0}}}), ConfigError);
  EXPECT_THROW(manual_mix(t, ManualAdjustments{{{"d0", -1.0}}}), ConfigError);
}

TEST(SamplingProportions, Examples) {
  const auto t1 = test::table({100});
  EXPECT_EQ(sampling_proportions(DataMix(t1, {1.0}), BudgetSpec{50, 1.0, {}}),
            (std::vector<double>{0.5}));
  const auto t2 = test::table({100, 25});
  EXPECT_EQ(sampling_proportions(DataMix(t2, {0.5, 0.5}), t2, BudgetSpec{100, 1.0, {}}),
            (std::vector<double>{0.5, 2.0}));
}

TEST(SamplingProportions, RejectsForeignTable) {
  const auto t2 = test::table({100, 25});
  const auto other = test::table({100, 26});
  EXPECT_THROW(sampling_proportions(DataMix(t2, {0.5, 0.5}), other, BudgetSpec{100, 1.0, {}}),
               ConfigError);
}

TEST(BudgetSpec, Validates) {
  EXPECT_THROW((BudgetSpec{0, 1.0, {}}).validate(), ConfigError);
  EXPECT_THROW((BudgetSpec{1, 0.0, {}}).validate(), ConfigError);
  EXPECT_THROW((BudgetSpec{1, 1.0, -1.0}).validate(), ConfigError);
  const auto t = test::table({1, 1, 1});
  EXPECT_EQ((BudgetSpec{1, 1.0, {}}).risk_scale_for(t), 3.0);
  EXPECT_EQ((BudgetSpec{1, 1.0, 0.5}).risk_scale_for(t), 0.5);
}
