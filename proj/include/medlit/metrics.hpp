#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "medlit/util.hpp"

namespace medlit {

struct ConfusionMatrix {
  std::vector<std::string> classes;
  /// counts[i][j]: items with gold class i predicted as class j.
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const;
  std::size_t index_of(const std::string& label) const;  // throws ValidationError
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Throws ValidationError on length mismatch, unknown labels or duplicate classes.
ConfusionMatrix confusion(const std::vector<std::string>& gold, const std::vector<std::string>& predicted,
                          const std::vector<std::string>& classes);

struct PerClassMetrics {
  std::string label;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::size_t support = 0;  // tp + fn
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  bool precision_undefined = false;  // tp + fp == 0
  bool recall_undefined = false;     // tp + fn == 0
};

struct ClassMetrics {
  std::vector<PerClassMetrics> per_class;  // matrix class order
  double accuracy = 0.0;
  bool accuracy_undefined = false;  // empty matrix
  std::size_t total = 0;

  const PerClassMetrics& of(const std::string& label) const;  // throws ValidationError
};

/// 2pr/(p+r), 0 when p + r == 0.
double f_measure(double precision, double recall);

/// Metrics for one class from raw counts; zero denominators give 0 and set flags.
PerClassMetrics metrics_from_counts(std::string label, std::size_t tp, std::size_t fp, std::size_t fn);

ClassMetrics class_metrics(const ConfusionMatrix& matrix);

/// Inclusive token range [start, end].
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  auto operator<=>(const TokenSpan&) const = default;
};

struct SentenceSpans {
  std::size_t length = 0;
  std::vector<TokenSpan> gold;
  std::vector<TokenSpan> predicted;
};

enum class SpanMode { Token, ExactSpan };

/// MT scores over all sentences. Token mode compares per-token membership;
/// exact-span mode needs identical (start, end). Throws ValidationError when
/// spans overlap within one side, are inverted or run past the sentence.
PerClassMetrics span_f_measure(const std::vector<SentenceSpans>& sentences, SpanMode mode);

struct KappaResult {
  double kappa = 0.0;
  double observed = 0.0;  // raw agreement p_o
  double expected = 0.0;  // chance agreement p_e
  std::size_t items = 0;
};

/// Cohen's kappa. Throws ValidationError on empty input or length mismatch;
/// throws ValidationError when p_e == 1 but the raters disagree.
KappaResult cohen_kappa(const std::vector<std::string>& ratings_a, const std::vector<std::string>& ratings_b);

/// "86.5%" style, one decimal.
std::string format_percent(double value);

}  // namespace medlit
