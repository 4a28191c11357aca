#include "medlit/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace medlit {
namespace {

double target(KnowledgeLabel label) { return label == KnowledgeLabel::HighMK ? 1.0 : 0.0; }

// -log(logistic(z)) and -log(1 - logistic(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double score(const std::vector<double>& w, double b, const std::vector<double>& x) {
  double z = b;
  for (std::size_t k = 0; k < w.size(); ++k) z += w[k] * x[k];
  return z;
}

std::string join_values(const std::vector<double>& values) {
  std::string out;
  for (const double v : values) out += " " + format_double(v);
  return out;
}

}  // namespace

FeatureVector build_features(const VideoRecord& video, const std::vector<LabelledTokens>& caption_sentences,
                             const std::vector<LabelledTokens>& description_sentences,
                             const VideoObjectSummary& objects) {
  if (objects.video_id != video.video_id) {
    throw ValidationError("build_features: object summary of '" + objects.video_id + "' for video '" + video.video_id + "'");
  }
  FeatureVector f;
  f.video_id = video.video_id;
  f.has_captions = video.has_captions;
  f.medical_object_count = objects.medical_object_count;
  const auto tally = [&](const std::vector<LabelledTokens>& sentences, std::size_t& mt, std::size_t& total) {
    for (const auto& s : sentences) {
      if (s.video_id != video.video_id) {
        throw ValidationError("build_features: sentence of '" + s.video_id + "' for video '" + video.video_id + "'");
      }
      total += s.labels.size();
      mt += static_cast<std::size_t>(std::count(s.labels.begin(), s.labels.end(), TokenLabel::MT));
    }
  };
  tally(description_sentences, f.description_mt_count, f.description_token_total);
  if (video.has_captions) tally(caption_sentences, f.caption_mt_count, f.caption_token_total);
  return f;
}

std::optional<FeatureMode> parse_feature_mode(std::string_view text) {
  if (text == "counts") return FeatureMode::Counts;
  if (text == "rates") return FeatureMode::Rates;
  if (text == "combined") return FeatureMode::Combined;
  return std::nullopt;
}

std::string_view to_string(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::Counts: return "counts";
    case FeatureMode::Rates: return "rates";
    case FeatureMode::Combined: return "combined";
  }
  return "counts";
}

std::vector<std::string> feature_names(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::Counts: return {"cap_mt", "desc_mt", "med_obj"};
    case FeatureMode::Rates: return {"cap_mt_rate", "desc_mt_rate", "med_obj"};
    case FeatureMode::Combined: return {"text_mt", "med_obj"};
  }
  return {};
}

std::vector<double> feature_values(const FeatureVector& f, FeatureMode mode) {
  const auto rate = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  const auto objects = static_cast<double>(f.medical_object_count);
  switch (mode) {
    case FeatureMode::Counts:
      return {static_cast<double>(f.caption_mt_count), static_cast<double>(f.description_mt_count), objects};
    case FeatureMode::Rates:
      return {rate(f.caption_mt_count, f.caption_token_total), rate(f.description_mt_count, f.description_token_total),
              objects};
    case FeatureMode::Combined:
      return {static_cast<double>(f.caption_mt_count + f.description_mt_count), objects};
  }
  return {};
}

std::vector<double> LogisticModel::standardize(const std::vector<double>& raw) const {
  if (raw.size() != weights.size()) {
    throw ValidationError("feature vector has " + std::to_string(raw.size()) + " values, model expects " +
                          std::to_string(weights.size()));
  }
  std::vector<double> z(raw.size(), 0.0);
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (active[k]) z[k] = (raw[k] - means[k]) / stddevs[k];
  }
  return z;
}

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logistic_loss(const std::vector<double>& weights, double bias, const std::vector<std::vector<double>>& scaled,
                     const std::vector<KnowledgeLabel>& labels, double l2_lambda) {
  double loss = 0.0;
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    const double z = score(weights, bias, scaled[i]);
    loss += target(labels[i]) > 0.5 ? softplus(-z) : softplus(z);
  }
  loss /= static_cast<double>(scaled.size());
  double sq = 0.0;
  for (const double w : weights) sq += w * w;
  return loss + 0.5 * l2_lambda * sq;
}

LogisticGradient logistic_gradient(const std::vector<double>& weights, double bias,
                                   const std::vector<std::vector<double>>& scaled,
                                   const std::vector<KnowledgeLabel>& labels, double l2_lambda) {
  LogisticGradient g{std::vector<double>(weights.size(), 0.0), 0.0};
  const double n = static_cast<double>(scaled.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    const double r = logistic(score(weights, bias, scaled[i])) - target(labels[i]);
    for (std::size_t k = 0; k < weights.size(); ++k) g.weights[k] += r * scaled[i][k] / n;
    g.bias += r / n;
  }
  for (std::size_t k = 0; k < weights.size(); ++k) g.weights[k] += l2_lambda * weights[k];
  return g;
}

LogisticModel train_logistic(const std::vector<std::vector<double>>& features, const std::vector<KnowledgeLabel>& labels,
                             const std::vector<std::string>& names, const LogisticConfig& config,
                             LogisticTrainingLog* log) {
  if (features.size() != labels.size()) throw ValidationError("train_logistic: features and labels differ in length");
  const auto highs = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), KnowledgeLabel::HighMK));
  if (highs == 0 || highs == labels.size()) throw ValidationError("train_logistic needs examples of both classes");
  const std::size_t dims = names.size();
  for (const auto& row : features) {
    if (row.size() != dims) throw ValidationError("train_logistic: feature row arity does not match names");
  }
  if (config.l2_lambda < 0 || config.learning_rate <= 0) throw ValidationError("train_logistic: invalid config");

  const double n = static_cast<double>(features.size());
  LogisticModel model;
  model.feature_names = names;
  model.threshold = config.threshold;
  model.means.assign(dims, 0.0);
  model.stddevs.assign(dims, 1.0);
  model.active.assign(dims, true);
  model.weights.assign(dims, 0.0);
  for (std::size_t k = 0; k < dims; ++k) {
    double mean = 0.0;
    for (const auto& row : features) mean += row[k];
    mean /= n;
    double var = 0.0;
    for (const auto& row : features) var += (row[k] - mean) * (row[k] - mean);
    const double sd = std::sqrt(var / n);
    model.means[k] = mean;
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      model.stddevs[k] = sd;
    } else {
      model.active[k] = false;
      if (log) log->warnings.push_back("feature '" + names[k] + "' is constant on the training set; dropped");
    }
  }

  std::vector<std::vector<double>> scaled;
  scaled.reserve(features.size());
  for (const auto& row : features) scaled.push_back(model.standardize(row));

  const double prior = static_cast<double>(highs) / n;
  model.bias = std::log(prior / (1.0 - prior));

  const double lr = config.learning_rate;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (log) log->losses.push_back(logistic_loss(model.weights, model.bias, scaled, labels, config.l2_lambda));
    // Gradient of the data term, then the exact proximal step for the L2 term.
    const LogisticGradient g = logistic_gradient(model.weights, model.bias, scaled, labels, 0.0);
    for (std::size_t k = 0; k < dims; ++k) {
      if (model.active[k]) model.weights[k] = (model.weights[k] - lr * g.weights[k]) / (1.0 + lr * config.l2_lambda);
    }
    model.bias -= lr * g.bias;
    const bool finite = std::isfinite(model.bias) &&
                        std::all_of(model.weights.begin(), model.weights.end(), [](double w) { return std::isfinite(w); });
    if (!finite) {
      throw NumericError("logistic regression diverged at epoch " + std::to_string(epoch) +
                         " (learning_rate=" + format_double(lr) + ")");
    }
  }
  if (log) log->losses.push_back(logistic_loss(model.weights, model.bias, scaled, labels, config.l2_lambda));
  return model;
}

Prediction predict_video(const LogisticModel& model, const std::vector<double>& features, std::string video_id) {
  const auto z = model.standardize(features);
  Prediction p;
  p.video_id = std::move(video_id);
  p.probability_high = logistic(score(model.weights, model.bias, z));
  p.label = p.probability_high >= model.threshold ? KnowledgeLabel::HighMK : KnowledgeLabel::LowMK;
  return p;
}

LogisticGradientReport gradient_check_logistic(const LogisticModel& model, const std::vector<std::vector<double>>& features,
                                               const std::vector<KnowledgeLabel>& labels, double eps,
                                               double l2_lambda) {
  if (!(eps > 0.0)) throw ValidationError("gradient_check_logistic: eps must be positive");
  if (features.empty() || features.size() != labels.size()) {
    throw ValidationError("gradient_check_logistic: need a non-empty labelled batch");
  }
  std::vector<std::vector<double>> scaled;
  for (const auto& row : features) scaled.push_back(model.standardize(row));
  const LogisticGradient analytic = logistic_gradient(model.weights, model.bias, scaled, labels, l2_lambda);

  LogisticGradientReport report;
  const auto check = [&](double a, double numeric, const std::string& name) {
    const double err = gradient_relative_error(a, numeric);
    if (report.worst_parameter.empty() || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_parameter = name;
    }
  };
  std::vector<double> w = model.weights;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double saved = w[k];
    w[k] = saved + eps;
    const double plus = logistic_loss(w, model.bias, scaled, labels, l2_lambda);
    w[k] = saved - eps;
    const double minus = logistic_loss(w, model.bias, scaled, labels, l2_lambda);
    w[k] = saved;
    check(analytic.weights[k], (plus - minus) / (2 * eps), "w[" + model.feature_names[k] + "]");
  }
  const double plus = logistic_loss(w, model.bias + eps, scaled, labels, l2_lambda);
  const double minus = logistic_loss(w, model.bias - eps, scaled, labels, l2_lambda);
  check(analytic.bias, (plus - minus) / (2 * eps), "bias");
  report.passed = report.max_rel_error < 1e-6;
  return report;
}

std::string write_feature_table(const std::vector<FeatureVector>& features, const Corpus& corpus) {
  std::string out = "video_id,cap_mt,desc_mt,med_obj,label\n";
  for (const auto& f : features) {
    const VideoRecord* v = corpus.find_video(f.video_id);
    const std::string label = v && v->knowledge_label ? std::string(to_string(*v->knowledge_label)) : "";
    out += f.video_id + "," + std::to_string(f.caption_mt_count) + "," + std::to_string(f.description_mt_count) + "," +
           std::to_string(f.medical_object_count) + "," + label + "\n";
  }
  return out;
}

std::string write_logistic_model(const LogisticModel& m) {
  std::string out = "medlit-logit v1\n";
  out += "features";
  for (const auto& name : m.feature_names) out += " " + name;
  out += "\nmean" + join_values(m.means) + "\n";
  out += "stddev" + join_values(m.stddevs) + "\n";
  out += "active";
  for (const bool a : m.active) out += a ? " 1" : " 0";
  out += "\nweights" + join_values(m.weights) + "\n";
  out += "bias " + format_double(m.bias) + "\n";
  out += "threshold " + format_double(m.threshold) + "\n";
  return out;
}

LogisticModel parse_logistic_model(std::string_view raw, std::string_view source) {
  const auto lines = split_lines(checked_utf8(raw, source));
  const auto field = [&](std::size_t index, const std::string& key) {
    if (index >= lines.size()) throw ParseError(std::string(source), index + 1, "missing '" + key + "' line");
    auto parts = split(lines[index], ' ');
    if (parts.empty() || parts[0] != key) throw ParseError(std::string(source), index + 1, "expected '" + key + "'");
    parts.erase(parts.begin());
    return parts;
  };
  const auto numbers = [&](std::size_t index, const std::string& key) {
    std::vector<double> out;
    for (const auto& p : field(index, key)) {
      try {
        out.push_back(parse_double(p, key));
      } catch (const ValidationError& e) {
        throw ParseError(std::string(source), index + 1, e.what());
      }
    }
    return out;
  };
  if (lines.empty() || lines[0] != "medlit-logit v1") throw ParseError(std::string(source), 1, "expected 'medlit-logit v1'");
  LogisticModel m;
  m.feature_names = field(1, "features");
  m.means = numbers(2, "mean");
  m.stddevs = numbers(3, "stddev");
  for (const auto& a : field(4, "active")) {
    if (a != "0" && a != "1") throw ParseError(std::string(source), 5, "active flags must be 0 or 1");
    m.active.push_back(a == "1");
  }
  m.weights = numbers(5, "weights");
  const auto bias = numbers(6, "bias");
  const auto threshold = numbers(7, "threshold");
  const std::size_t d = m.feature_names.size();
  if (m.means.size() != d || m.stddevs.size() != d || m.active.size() != d || m.weights.size() != d ||
      bias.size() != 1 || threshold.size() != 1) {
    throw ParseError(std::string(source), 1, "inconsistent feature count");
  }
  for (const double sd : m.stddevs) {
    if (!(sd > 0)) throw ParseError(std::string(source), 4, "stddev must be positive");
  }
  m.bias = bias[0];
  m.threshold = threshold[0];
  return m;
}

}  // namespace medlit
