#include <gtest/gtest.h>

#include <algorithm>

#include "medlit/metrics.hpp"
#include "metric_oracles.hpp"

using namespace medlit;
using Strings = std::vector<std::string>;

namespace {

const Strings kBinary = {"high", "low"};

// Token-level labels of a sentence painted from spans.
Strings paint(std::size_t length, const std::vector<TokenSpan>& spans) {
  Strings out(length, "NA");
  for (const auto& s : spans) {
    for (std::size_t t = s.start; t <= s.end; ++t) out[t] = "MT";
  }
  return out;
}

std::vector<TokenSpan> random_spans(Rng& rng, std::size_t length) {
  std::vector<TokenSpan> out;
  std::size_t t = 0;
  while (t < length) {
    t += rng.below(3);
    if (t >= length) break;
    const std::size_t end = std::min(length - 1, t + rng.below(3));
    out.push_back({t, end});
    t = end + 2;
  }
  return out;
}

}  // namespace

TEST(Confusion, DiagonalAndEmpty) {
  const Strings gold = {"high", "low", "low", "high"};
  const auto m = confusion(gold, gold, kBinary);
  EXPECT_EQ(m.counts, (std::vector<std::vector<std::size_t>>{{2, 0}, {0, 2}}));
  EXPECT_EQ(m.total(), 4u);
  const auto empty = confusion({}, {}, kBinary);
  EXPECT_EQ(empty.total(), 0u);
  EXPECT_TRUE(class_metrics(empty).accuracy_undefined);
}

TEST(Confusion, TenItemsMatchTally) {
  const Strings gold = {"high", "high", "low", "high", "low", "low", "high", "low", "high", "high"};
  const Strings pred = {"high", "low", "low", "high", "high", "low", "high", "low", "low", "high"};
  const auto m = confusion(gold, pred, kBinary);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(static_cast<long>(m.counts[i][j]), oracle::tally(gold, pred, kBinary[i], kBinary[j]));
    }
  }
  EXPECT_DOUBLE_EQ(class_metrics(m).accuracy, 0.7);
}

TEST(Confusion, Errors) {
  EXPECT_THROW(confusion({"high"}, {}, kBinary), ValidationError);
  EXPECT_THROW(confusion({"high"}, {"medium"}, kBinary), ValidationError);
  EXPECT_THROW(confusion({}, {}, {"a", "a"}), ValidationError);
  EXPECT_THROW(confusion({"a"}, {"a"}, {"a"}).index_of("b"), ValidationError);
}

TEST(ClassMetrics, TableOneFMeasures) {
  EXPECT_NEAR(f_measure(0.865, 0.805), 0.834, 0.0005);
  EXPECT_NEAR(f_measure(0.838, 0.843), 0.840, 0.0005);
  EXPECT_EQ(format_percent(f_measure(0.865, 0.805)), "83.4%");
  EXPECT_EQ(format_percent(f_measure(0.838, 0.843)), "84.0%");
}

TEST(ClassMetrics, CountExamples) {
  const auto m = metrics_from_counts("MT", 5, 1, 0);
  EXPECT_DOUBLE_EQ(m.precision, 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
  EXPECT_NEAR(m.f_measure, 10.0 / 11.0, 1e-15);
  EXPECT_EQ(m.support, 5u);
  const auto none = metrics_from_counts("MT", 0, 0, 0);
  EXPECT_TRUE(none.precision_undefined);
  EXPECT_TRUE(none.recall_undefined);
  EXPECT_EQ(none.f_measure, 0.0);
  EXPECT_EQ(f_measure(0.0, 0.0), 0.0);
}

TEST(ClassMetrics, BoundedAndHarmonicOnRandomMatrices) {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    ConfusionMatrix m{{"a", "b", "c"}, std::vector<std::vector<std::size_t>>(3, std::vector<std::size_t>(3))};
    for (auto& row : m.counts) {
      for (auto& c : row) c = rng.below(3) == 0 ? 0 : rng.below(20);
    }
    const auto cm = class_metrics(m);
    for (const auto& pc : cm.per_class) {
      for (const double v : {pc.precision, pc.recall, pc.f_measure}) {
        EXPECT_FALSE(std::isnan(v));
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
      if (pc.precision > 0 && pc.recall > 0) {
        EXPECT_LE(pc.f_measure, std::max(pc.precision, pc.recall) + 1e-15);
        EXPECT_GE(pc.f_measure, std::min(pc.precision, pc.recall) - 1e-15);
      }
    }
    EXPECT_GE(cm.accuracy, 0.0);
    EXPECT_LE(cm.accuracy, 1.0);
  }
}

TEST(ClassMetrics, MatchOracleOnRandomFixtures) {
  Rng rng(2);
  const Strings classes = {"x", "y", "z"};
  for (int trial = 0; trial < 1000; ++trial) {
    const auto gold = oracle::random_labels(rng, rng.below(60), classes);
    const auto pred = oracle::noisy_copy(rng, gold, classes, rng.uniform01());
    const auto m = confusion(gold, pred, classes);
    const auto cm = class_metrics(m);
    for (const auto& c : classes) {
      const auto want = oracle::prf(gold, pred, c);
      const auto& got = cm.of(c);
      ASSERT_EQ(static_cast<long>(got.tp), want.tp);
      ASSERT_EQ(static_cast<long>(got.fp), want.fp);
      ASSERT_EQ(static_cast<long>(got.fn), want.fn);
      ASSERT_NEAR(got.precision, want.p, 1e-12);
      ASSERT_NEAR(got.recall, want.r, 1e-12);
      ASSERT_NEAR(got.f_measure, want.f, 1e-12);
    }
    if (!gold.empty()) ASSERT_NEAR(cm.accuracy, oracle::accuracy(gold, pred), 1e-12);
  }
}

TEST(Spans, Examples) {
  const std::vector<SentenceSpans> same = {{6, {{0, 1}, {3, 3}}, {{0, 1}, {3, 3}}}};
  for (const auto mode : {SpanMode::Token, SpanMode::ExactSpan}) {
    const auto m = span_f_measure(same, mode);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.f_measure, 1.0);
  }
  const std::vector<SentenceSpans> shifted = {{6, {{1, 2}}, {{2, 3}}}};
  EXPECT_EQ(span_f_measure(shifted, SpanMode::ExactSpan).tp, 0u);
  EXPECT_EQ(span_f_measure(shifted, SpanMode::Token).tp, 1u);
  // 3 gold spans, 2 predicted, one exact match.
  const std::vector<SentenceSpans> mixed = {{10, {{0, 1}, {4, 4}}, {{0, 1}, {5, 6}}}, {4, {{2, 3}}, {}}};
  const auto m = span_f_measure(mixed, SpanMode::ExactSpan);
  EXPECT_DOUBLE_EQ(m.precision, 0.5);
  EXPECT_DOUBLE_EQ(m.recall, 1.0 / 3.0);
  EXPECT_NEAR(m.f_measure, 0.4, 1e-15);
  EXPECT_EQ(m.label, "MT");
}

TEST(Spans, MalformedSpansRejected) {
  EXPECT_THROW(span_f_measure({{5, {{0, 2}, {2, 3}}, {}}}, SpanMode::Token), ValidationError);
  EXPECT_THROW(span_f_measure({{5, {}, {{3, 1}}}}, SpanMode::Token), ValidationError);
  EXPECT_THROW(span_f_measure({{5, {{4, 5}}, {}}}, SpanMode::ExactSpan), ValidationError);
}

TEST(Spans, TokenModeEqualsTokenConfusion) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<SentenceSpans> sentences;
    Strings gold, pred;
    for (std::size_t k = rng.below(5); k > 0; --k) {
      const std::size_t n = 1 + rng.below(12);
      SentenceSpans s{n, random_spans(rng, n), random_spans(rng, n)};
      const auto g = paint(n, s.gold), p = paint(n, s.predicted);
      gold.insert(gold.end(), g.begin(), g.end());
      pred.insert(pred.end(), p.begin(), p.end());
      sentences.push_back(s);
    }
    const auto via_spans = span_f_measure(sentences, SpanMode::Token);
    const auto via_matrix = class_metrics(confusion(gold, pred, {"NA", "MT"})).of("MT");
    EXPECT_EQ(via_spans.tp, via_matrix.tp);
    EXPECT_EQ(via_spans.fp, via_matrix.fp);
    EXPECT_EQ(via_spans.fn, via_matrix.fn);
    EXPECT_EQ(via_spans.f_measure, via_matrix.f_measure);
  }
}

TEST(Kappa, Examples) {
  const Strings perfect = {"a", "b", "b", "a", "c"};
  EXPECT_EQ(cohen_kappa(perfect, perfect).kappa, 1.0);
  Strings a, b;
  for (int i = 0; i < 40; ++i) a.push_back("x"), b.push_back("x");
  for (int i = 0; i < 10; ++i) a.push_back("x"), b.push_back("y");
  for (int i = 0; i < 10; ++i) a.push_back("y"), b.push_back("x");
  for (int i = 0; i < 40; ++i) a.push_back("y"), b.push_back("y");
  const auto k = cohen_kappa(a, b);
  EXPECT_NEAR(k.observed, 0.8, 1e-15);
  EXPECT_NEAR(k.expected, 0.5, 1e-15);
  EXPECT_NEAR(k.kappa, 0.6, 1e-12);
  EXPECT_EQ(k.items, 100u);
}

TEST(Kappa, DegenerateAndErrors) {
  EXPECT_EQ(cohen_kappa({"a", "a"}, {"a", "a"}).kappa, 1.0);
  EXPECT_THROW(cohen_kappa({}, {}), ValidationError);
  EXPECT_THROW(cohen_kappa({"a"}, {"a", "b"}), ValidationError);
}

TEST(Kappa, MatchesOracleAndIdentityProperty) {
  Rng rng(4);
  const Strings classes = {"NA", "MT", "X"};
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = oracle::random_labels(rng, 1 + rng.below(100), classes);
    const auto b = oracle::noisy_copy(rng, a, classes, rng.uniform01());
    const auto k = cohen_kappa(a, b);
    ASSERT_NEAR(k.kappa, oracle::kappa(a, b), 1e-12);
    ASSERT_GE(k.kappa, -1.0);
    ASSERT_LE(k.kappa, 1.0);
    if (a == b) ASSERT_EQ(k.kappa, 1.0);
    if (k.kappa == 1.0) ASSERT_EQ(a, b);
  }
}

TEST(Kappa, ShuffledRatingsNearZero) {
  Rng rng(5);
  const auto a = oracle::random_labels(rng, 1000, {"NA", "MT"});
  auto b = a;
  rng.shuffle(b);
  EXPECT_LT(std::abs(cohen_kappa(a, b).kappa), 0.1);
}

TEST(Format, Percent) {
  EXPECT_EQ(format_percent(0.865), "86.5%");
  EXPECT_EQ(format_percent(1.0), "100.0%");
  EXPECT_EQ(format_percent(0.0), "0.0%");
}
