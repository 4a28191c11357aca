#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medlit/corpus.hpp"
#include "medlit/frames.hpp"
#include "medlit/util.hpp"

namespace medlit {

struct FeatureVector {
  std::string video_id;
  std::size_t caption_mt_count = 0;
  std::size_t description_mt_count = 0;
  std::size_t medical_object_count = 0;
  std::size_t caption_token_total = 0;
  std::size_t description_token_total = 0;
  /// False when the video has no caption track; caption counts are then 0.
  bool has_captions = true;

  bool operator==(const FeatureVector&) const = default;
};

/// Tokens of one sentence with the labels a tagger assigned to them.
struct LabelledTokens {
  std::string video_id;
  std::vector<TokenLabel> labels;
};

/// Counts MT-labelled tokens per source. Throws ValidationError when any
/// input belongs to another video.
FeatureVector build_features(const VideoRecord& video, const std::vector<LabelledTokens>& caption_sentences,
                             const std::vector<LabelledTokens>& description_sentences,
                             const VideoObjectSummary& objects);

/// How a FeatureVector becomes the classifier's numeric input.
enum class FeatureMode {
  Counts,    // cap_mt, desc_mt, med_obj
  Rates,     // cap_mt / cap_tokens, desc_mt / desc_tokens, med_obj
  Combined,  // cap_mt + desc_mt, med_obj
};

std::optional<FeatureMode> parse_feature_mode(std::string_view text);
std::string_view to_string(FeatureMode mode);
std::vector<std::string> feature_names(FeatureMode mode);
std::vector<double> feature_values(const FeatureVector& features, FeatureMode mode);

struct LogisticModel {
  std::vector<std::string> feature_names;
  /// z-score statistics from the training set. Features with zero spread are
  /// inactive: their weight stays 0 and they do not reach the decision.
  std::vector<double> means;
  std::vector<double> stddevs;
  std::vector<bool> active;
  std::vector<double> weights;  // in standardized space
  double bias = 0.0;
  double threshold = 0.5;
  // Positive class is HighMK.

  bool operator==(const LogisticModel&) const = default;

  std::vector<double> standardize(const std::vector<double>& raw) const;
};

struct LogisticConfig {
  std::size_t epochs = 500;
  double learning_rate = 0.1;
  double l2_lambda = 1e-3;
  std::uint64_t seed = 1;
  double threshold = 0.5;
};

struct LogisticTrainingLog {
  std::vector<double> losses;  // regularized loss before each step, then final
  Warnings warnings;
};

double logistic(double z);

/// Regularized mean log loss on standardized inputs:
///   mean(-y log p - (1-y) log(1-p)) + (lambda/2)|w|^2, y = 1 for HighMK.
double logistic_loss(const std::vector<double>& weights, double bias, const std::vector<std::vector<double>>& scaled,
                     const std::vector<KnowledgeLabel>& labels, double l2_lambda);

struct LogisticGradient {
  std::vector<double> weights;
  double bias = 0.0;
};

/// Analytic gradient of logistic_loss (weights get + lambda * w).
LogisticGradient logistic_gradient(const std::vector<double>& weights, double bias,
                                   const std::vector<std::vector<double>>& scaled,
                                   const std::vector<KnowledgeLabel>& labels, double l2_lambda);

/// Full-batch proximal gradient descent on logistic_loss. The bias starts at
/// the log-odds of the training prior and weights at zero. Throws
/// ValidationError for single-class data and NumericError on divergence.
LogisticModel train_logistic(const std::vector<std::vector<double>>& features, const std::vector<KnowledgeLabel>& labels,
                             const std::vector<std::string>& names, const LogisticConfig& config,
                             LogisticTrainingLog* log = nullptr);

struct Prediction {
  std::string video_id;
  double probability_high = 0.5;
  KnowledgeLabel label = KnowledgeLabel::HighMK;
};

/// probability_high = logistic(w . standardized(x) + b); HighMK iff
/// probability_high >= threshold. Throws ValidationError on arity mismatch.
Prediction predict_video(const LogisticModel& model, const std::vector<double>& features, std::string video_id = "");

struct LogisticGradientReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  bool passed = false;
};

/// Analytic vs central-difference gradient of the regularized loss at the
/// model's current weights and bias, on raw `features` standardized by the
/// model. Passes when the max relative error is below 1e-6.
LogisticGradientReport gradient_check_logistic(const LogisticModel& model, const std::vector<std::vector<double>>& features,
                                               const std::vector<KnowledgeLabel>& labels, double eps,
                                               double l2_lambda = 0.0);

/// CSV: video_id,cap_mt,desc_mt,med_obj,label.
std::string write_feature_table(const std::vector<FeatureVector>& features, const Corpus& corpus);

/// Text: "medlit-logit v1", then features/mean/stddev/active/weights lines,
/// bias and threshold, all values exact.
std::string write_logistic_model(const LogisticModel& model);
LogisticModel parse_logistic_model(std::string_view raw, std::string_view source = "<classifier>");

}  // namespace medlit
