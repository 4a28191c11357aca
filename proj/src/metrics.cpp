#include "medlit/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

namespace medlit {
namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void validate_spans(const std::vector<TokenSpan>& spans, std::size_t length, const char* side, std::size_t sentence) {
  std::vector<TokenSpan> sorted = spans;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const auto& s = sorted[k];
    if (s.start > s.end || s.end >= length) {
      throw ValidationError(std::string(side) + " span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                            "] invalid for sentence " + std::to_string(sentence) + " of length " +
                            std::to_string(length));
    }
    if (k > 0 && s.start <= sorted[k - 1].end) {
      throw ValidationError(std::string(side) + " spans overlap in sentence " + std::to_string(sentence));
    }
  }
}

}  // namespace

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (const auto& row : counts) {
    for (const auto c : row) t += c;
  }
  return t;
}

std::size_t ConfusionMatrix::index_of(const std::string& label) const {
  const auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) throw ValidationError("unknown class label '" + label + "'");
  return static_cast<std::size_t>(it - classes.begin());
}

ConfusionMatrix confusion(const std::vector<std::string>& gold, const std::vector<std::string>& predicted,
                          const std::vector<std::string>& classes) {
  if (gold.size() != predicted.size()) {
    throw ValidationError("confusion: " + std::to_string(gold.size()) + " gold vs " +
                          std::to_string(predicted.size()) + " predicted labels");
  }
  if (std::set<std::string>(classes.begin(), classes.end()).size() != classes.size()) {
    throw ValidationError("confusion: duplicate class in class list");
  }
  ConfusionMatrix m{classes, std::vector<std::vector<std::size_t>>(classes.size(),
                                                                   std::vector<std::size_t>(classes.size(), 0))};
  for (std::size_t i = 0; i < gold.size(); ++i) ++m.counts[m.index_of(gold[i])][m.index_of(predicted[i])];
  return m;
}

const PerClassMetrics& ClassMetrics::of(const std::string& label) const {
  for (const auto& c : per_class) {
    if (c.label == label) return c;
  }
  throw ValidationError("no metrics for class '" + label + "'");
}

double f_measure(double precision, double recall) {
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

PerClassMetrics metrics_from_counts(std::string label, std::size_t tp, std::size_t fp, std::size_t fn) {
  PerClassMetrics m;
  m.label = std::move(label);
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.support = tp + fn;
  m.precision_undefined = tp + fp == 0;
  m.recall_undefined = tp + fn == 0;
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f_measure = f_measure(m.precision, m.recall);
  return m;
}

ClassMetrics class_metrics(const ConfusionMatrix& matrix) {
  ClassMetrics out;
  const std::size_t k = matrix.classes.size();
  std::size_t trace = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t fp = 0, fn = 0;
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += matrix.counts[o][c];
      fn += matrix.counts[c][o];
    }
    trace += matrix.counts[c][c];
    out.per_class.push_back(metrics_from_counts(matrix.classes[c], matrix.counts[c][c], fp, fn));
  }
  out.total = matrix.total();
  out.accuracy_undefined = out.total == 0;
  out.accuracy = ratio(trace, out.total);
  return out;
}

PerClassMetrics span_f_measure(const std::vector<SentenceSpans>& sentences, SpanMode mode) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto& sent = sentences[s];
    validate_spans(sent.gold, sent.length, "gold", s);
    validate_spans(sent.predicted, sent.length, "predicted", s);
    if (mode == SpanMode::ExactSpan) {
      const std::set<TokenSpan> gold(sent.gold.begin(), sent.gold.end());
      std::size_t hits = 0;
      for (const auto& p : sent.predicted) hits += gold.count(p);
      tp += hits;
      fp += sent.predicted.size() - hits;
      fn += sent.gold.size() - hits;
    } else {
      std::vector<char> g(sent.length, 0), p(sent.length, 0);
      for (const auto& span : sent.gold) std::fill(g.begin() + span.start, g.begin() + span.end + 1, 1);
      for (const auto& span : sent.predicted) std::fill(p.begin() + span.start, p.begin() + span.end + 1, 1);
      for (std::size_t t = 0; t < sent.length; ++t) {
        tp += g[t] && p[t];
        fp += !g[t] && p[t];
        fn += g[t] && !p[t];
      }
    }
  }
  return metrics_from_counts("MT", tp, fp, fn);
}

KappaResult cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty()) throw ValidationError("cohen_kappa: no ratings");
  if (a.size() != b.size()) throw ValidationError("cohen_kappa: rating lists differ in length");
  std::map<std::string, std::size_t> marg_a, marg_b;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++marg_a[a[i]];
    ++marg_b[b[i]];
    agree += a[i] == b[i];
  }
  const double n = static_cast<double>(a.size());
  KappaResult r;
  r.items = a.size();
  r.observed = static_cast<double>(agree) / n;
  for (const auto& [label, count] : marg_a) {
    const auto it = marg_b.find(label);
    if (it != marg_b.end()) r.expected += (static_cast<double>(count) / n) * (static_cast<double>(it->second) / n);
  }
  if (r.expected >= 1.0) {
    if (agree != a.size()) throw ValidationError("cohen_kappa undefined: chance agreement is 1 but raters disagree");
    r.kappa = 1.0;
    return r;
  }
  r.kappa = std::clamp((r.observed - r.expected) / (1.0 - r.expected), -1.0, 1.0);
  return r;
}

std::string format_percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", value * 100.0);
  return buf;
}

}  // namespace medlit
