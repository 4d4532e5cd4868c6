#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "parityd/core_metrics.hpp"
#include "support/oracle.hpp"
#include "support/random_dataset.hpp"

using namespace parityd;

namespace {

Dataset scored(const std::vector<double>& scores, const std::vector<std::string>& ids) {
  Dataset ds;
  ds.schema.score_column = "score";
  ds.schema.label_column = "label";
  ds.schema.entity_id_column = "id";
  ds.schema.attribute_columns = {"g"};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    EntityRecord r;
    r.entity_id = ids[i];
    r.score = scores[i];
    r.attributes["g"] = "x";
    ds.records.push_back(r);
  }
  ds.row_count = ds.records.size();
  return ds;
}

ThresholdPolicy topk(std::size_t k, TieMode t = TieMode::ExactK) {
  ThresholdPolicy p;
  p.kind = TopK{k};
  p.tie_mode = t;
  return p;
}

std::vector<std::uint8_t> bits(std::initializer_list<int> v) { return {v.begin(), v.end()}; }

}  // namespace

// Sort order (0.9,a) (0.8,b) (0.8,c) (0.1,d): the first two are b's tie-break winners.
TEST(Binarize, TopKExactBreaksTiesByEntityId) {
  auto r = binarize(scored({0.9, 0.8, 0.8, 0.1}, {"a", "b", "c", "d"}), topk(2));
  EXPECT_EQ(r.decisions, bits({1, 1, 0, 0}));
  EXPECT_EQ(r.cutoff_score, 0.8);
  EXPECT_EQ(r.num_positive, 2u);
}

TEST(Binarize, TopKIncludeAllTies) {
  auto r = binarize(scored({0.9, 0.8, 0.8, 0.1}, {"a", "b", "c", "d"}), topk(2, TieMode::IncludeAllTies));
  EXPECT_EQ(r.decisions, bits({1, 1, 1, 0}));
  EXPECT_EQ(r.num_positive, 3u);
  EXPECT_EQ(r.cutoff_score, 0.8);
}

TEST(Binarize, CutoffIsInclusive) {
  ThresholdPolicy p;
  p.kind = ScoreCutoff{0.5};
  auto r = binarize(scored({0.5, 0.49}, {"a", "b"}), p);
  EXPECT_EQ(r.decisions, bits({1, 0}));
  EXPECT_EQ(r.cutoff_score, 0.5);
}

TEST(Binarize, KLargerThanRowsClampsWithWarning) {
  auto r = binarize(scored({0.3, 0.2}, {"a", "b"}), topk(5));
  EXPECT_EQ(r.num_positive, 2u);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(r.warnings[0].code, "KExceedsRows");
}

TEST(Binarize, TopPercentUsesCeiling) {
  EXPECT_EQ(top_percent_count(0.1, 5), 1u);
  EXPECT_EQ(top_percent_count(0.1, 10), 1u);
  EXPECT_EQ(top_percent_count(0.1, 11), 2u);
  EXPECT_EQ(top_percent_count(0.07, 100), 7u);
  EXPECT_EQ(top_percent_count(0.7, 10), 7u);
  EXPECT_EQ(top_percent_count(1.0, 7), 7u);
  EXPECT_EQ(top_percent_count(0.01, 1), 1u);

  ThresholdPolicy p;
  p.kind = TopPercent{0.5};
  auto r = binarize(scored({0.1, 0.4, 0.3}, {"a", "b", "c"}), p);
  EXPECT_EQ(r.decisions, bits({0, 1, 1}));
}

TEST(Binarize, PolicyValidation) {
  auto ds = scored({0.1}, {"a"});
  ThresholdPolicy pre;
  EXPECT_THROW(binarize(ds, pre), Error);  // no decision column
  EXPECT_THROW(binarize(ds, topk(0)), Error);
  ThresholdPolicy pct;
  pct.kind = TopPercent{0.0};
  EXPECT_THROW(binarize(ds, pct), Error);
  pct.kind = TopPercent{1.5};
  EXPECT_THROW(binarize(ds, pct), Error);

  ds.schema.score_column.reset();
  ds.schema.decision_column = "d";
  ds.records[0].decision = 1;
  EXPECT_THROW(binarize(ds, topk(1)), Error);
  auto r = binarize(ds, pre);
  EXPECT_EQ(r.decisions, bits({1}));
  EXPECT_FALSE(r.cutoff_score.has_value());
}

TEST(Crosstab, HandEnumeratedFourRows) {
  Dataset ds;
  ds.schema.decision_column = "d";
  ds.schema.label_column = "y";
  ds.schema.attribute_columns = {"gender"};
  const char* gender[] = {"f", "f", "m", "m"};
  const int labels[] = {1, 0, 1, 0};
  for (int i = 0; i < 4; ++i) {
    EntityRecord r;
    r.entity_id = std::to_string(i);
    r.label = labels[i];
    r.decision = i < 2 ? 1 : 0;
    r.attributes["gender"] = gender[i];
    ds.records.push_back(r);
  }
  ds.row_count = 4;
  ThresholdPolicy pre;
  auto tab = crosstab(ds, binarize(ds, pre), "gender");
  ASSERT_EQ(tab.groups.size(), 2u);
  EXPECT_EQ(tab.total_predicted_positive, 2u);
  const auto& f = tab.groups[0];
  EXPECT_EQ(f.group_value, "f");
  EXPECT_EQ((std::vector<std::size_t>{f.size, f.pp, f.tp, f.fp, f.fn, f.tn, f.lp, f.ln}),
            (std::vector<std::size_t>{2, 2, 1, 1, 0, 0, 1, 1}));
  const auto& m = tab.groups[1];
  EXPECT_EQ(m.group_value, "m");
  EXPECT_EQ((std::vector<std::size_t>{m.size, m.pp, m.tp, m.fp, m.fn, m.tn, m.lp, m.ln}),
            (std::vector<std::size_t>{2, 0, 0, 0, 1, 1, 1, 1}));
  EXPECT_EQ(m.pn, m.size);

  EXPECT_THROW(crosstab(ds, binarize(ds, pre), "race"), Error);
}

TEST(Crosstab, SingleGroupAndOrdering) {
  auto ds = scored({0.1, 0.2, 0.3}, {"a", "b", "c"});
  auto tab = crosstab(ds, binarize(ds, topk(1)), "g");
  ASSERT_EQ(tab.groups.size(), 1u);
  EXPECT_EQ(tab.groups[0].size, 3u);

  ds.records[0].attributes["g"] = "z";
  ds.records[1].attributes["g"] = "y";
  ds.records[2].attributes["g"] = "w";
  tab = crosstab(ds, binarize(ds, topk(1)), "g");
  EXPECT_EQ(tab.groups[0].group_value, "w");  // equal sizes: ascending value
  EXPECT_EQ(tab.groups[2].group_value, "z");
}

TEST(GroupMetrics, HandComputedFromCounts) {
  GroupCounts c{"gender", "f", 2, 2, 0, 1, 0, 1, 0, 1, 1};
  auto m = compute_group_metrics(c, 2);
  EXPECT_EQ(m.prev, 0.5);
  EXPECT_EQ(m.pprev, 1.0);
  EXPECT_EQ(m.ppr, 1.0);
  EXPECT_EQ(m.fdr, 0.5);
  EXPECT_FALSE(m.for_.has_value());
  EXPECT_EQ(m.fpr, 1.0);
  EXPECT_EQ(m.fnr, 0.0);
}

TEST(GroupMetrics, PerfectClassifierAndZeroDenominators) {
  GroupCounts perfect{"a", "x", 10, 4, 6, 0, 0, 4, 6, 4, 6};
  ASSERT_TRUE(perfect.consistent());
  auto m = compute_group_metrics(perfect, 4);
  EXPECT_EQ(m.fdr, 0.0);
  EXPECT_EQ(m.for_, 0.0);
  EXPECT_EQ(m.fpr, 0.0);
  EXPECT_EQ(m.fnr, 0.0);

  GroupCounts no_positives{"a", "y", 3, 1, 2, 1, 0, 0, 2, 0, 3};
  ASSERT_TRUE(no_positives.consistent());
  auto n = compute_group_metrics(no_positives, 0);
  EXPECT_FALSE(n.fnr.has_value());
  EXPECT_EQ(n.prev, 0.0);
  EXPECT_FALSE(n.ppr.has_value());
}

class CoreProperties : public ::testing::Test {
 protected:
  std::mt19937_64 rng{7};
};

TEST_F(CoreProperties, IdentitiesAndPprSum) {
  for (int iter = 0; iter < 400; ++iter) {
    auto ds = parityd::testing::random_dataset(rng);
    auto policy = parityd::testing::random_policy(rng, ds.row_count, iter);
    auto dec = binarize(ds, policy);
    for (const auto& a : ds.schema.attribute_columns) {
      auto tab = crosstab(ds, dec, a);
      std::size_t size = 0, pp = 0;
      double ppr = 0;
      for (const auto& g : tab.groups) {
        ASSERT_TRUE(g.consistent());
        size += g.size;
        pp += g.pp;
        auto m = compute_group_metrics(g, tab.total_predicted_positive);
        for (auto v : {m.prev, m.pprev, m.ppr, m.fdr, m.for_, m.fpr, m.fnr}) {
          if (v) {
            ASSERT_TRUE(*v >= 0.0 && *v <= 1.0);
          }
        }
        if (m.ppr) ppr += *m.ppr;
      }
      ASSERT_EQ(size, ds.row_count);
      ASSERT_EQ(pp, dec.num_positive);
      ASSERT_EQ(tab.total_predicted_positive, dec.num_positive);
      if (dec.num_positive > 0) {
        ASSERT_NEAR(ppr, 1.0, 1e-9);
      }
    }
  }
}

TEST_F(CoreProperties, MonotoneTransformLeavesRankDecisionsUnchanged) {
  for (int iter = 0; iter < 200; ++iter) {
    auto ds = parityd::testing::random_dataset(rng);
    for (auto& r : ds.records) *r.score = std::round(*r.score * 1000.0) / 1000.0;
    auto transformed = ds;
    for (auto& r : transformed.records) *r.score = 10.0 * *r.score * *r.score * *r.score + 5.0 * *r.score - 2.0;
    for (int kind : {1, 2}) {
      auto policy = parityd::testing::random_policy(rng, ds.row_count, kind);
      ASSERT_EQ(binarize(ds, policy).decisions, binarize(transformed, policy).decisions);
    }
  }
}

TEST_F(CoreProperties, ExactKSelectionIgnoresRowOrder) {
  for (int iter = 0; iter < 200; ++iter) {
    auto ds = parityd::testing::random_dataset(rng);
    auto policy = parityd::testing::random_policy(rng, ds.row_count, 1 + (iter % 2));
    policy.tie_mode = TieMode::ExactK;
    auto selected = [&](const Dataset& d) {
      auto dec = binarize(d, policy);
      std::set<std::string> ids;
      for (std::size_t i = 0; i < d.records.size(); ++i) {
        if (dec.decisions[i]) ids.insert(d.records[i].entity_id);
      }
      return ids;
    };
    auto shuffled = ds;
    std::shuffle(shuffled.records.begin(), shuffled.records.end(), rng);
    ASSERT_EQ(selected(ds), selected(shuffled));
  }
}

TEST_F(CoreProperties, BinarizationMatchesOracle) {
  for (int iter = 0; iter < 400; ++iter) {
    auto ds = parityd::testing::random_dataset(rng);
    auto policy = parityd::testing::random_policy(rng, ds.row_count, iter);
    auto engine = binarize(ds, policy);
    auto naive = oracle::decisions(ds, policy);
    ASSERT_EQ(engine.decisions.size(), naive.size());
    for (std::size_t i = 0; i < naive.size(); ++i) ASSERT_EQ(engine.decisions[i], naive[i]) << "iteration " << iter;
    if (policy.tie_mode == TieMode::ExactK && (std::holds_alternative<TopK>(policy.kind))) {
      ASSERT_EQ(engine.num_positive, std::min(std::get<TopK>(policy.kind).k, ds.row_count));
    }
  }
}
