#pragma once

// Bidirectional LSTM token tagger with a softmax output layer over the labels
// {NA, MT}: forward pass, cross-entropy loss, backpropagation through time,
// finite-difference gradient checking, SGD training, tagging, span extraction
// and a gazetteer baseline.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "medlit/corpus.hpp"
#include "medlit/embeddings.hpp"

namespace medlit {

inline constexpr int kNumLabels = 2;  // NA = 0, MT = 1

enum Gate : int { kInputGate = 0, kForgetGate = 1, kOutputGate = 2, kCandidate = 3 };
inline constexpr int kNumGates = 4;

/// Weights of one LSTM direction. Biases are H x 1 matrices so every tensor
/// shares one type.
struct LstmWeights {
  std::array<Eigen::MatrixXd, kNumGates> W;  // H x D
  std::array<Eigen::MatrixXd, kNumGates> U;  // H x H
  std::array<Eigen::MatrixXd, kNumGates> b;  // H x 1
};

struct TensorRef {
  std::string name;
  Eigen::MatrixXd* tensor;
};

struct ConstTensorRef {
  std::string name;
  const Eigen::MatrixXd* tensor;
};

struct TaggerParams {
  int input_dim = 0;   // D
  int hidden_dim = 0;  // H, per direction
  LstmWeights forward;
  LstmWeights backward;
  Eigen::MatrixXd W_out;  // 2 x 2H over [h_forward; h_backward]
  Eigen::MatrixXd b_out;  // 2 x 1

  /// All tensors in declared (serialization) order.
  std::vector<TensorRef> tensors();
  std::vector<ConstTensorRef> tensors() const;
  std::size_t parameter_count() const;
  /// Same shapes, all zeros.
  static TaggerParams zeros(int input_dim, int hidden_dim);

  bool operator==(const TaggerParams& other) const;
};

/// Uniform Glorot init per matrix, forget-gate bias 1, other biases 0.
TaggerParams init_params(std::uint64_t seed, int input_dim = 50, int hidden_dim = 150);

/// n x 2 matrix of per-token label probabilities (columns NA, MT).
using TagDistribution = Eigen::MatrixXd;

struct DirectionCache {
  // n x H each, indexed by sentence position.
  Eigen::MatrixXd i, f, o, g, c, h;
};

struct ForwardCache {
  Eigen::MatrixXd inputs;  // n x D
  DirectionCache forward;
  DirectionCache backward;
  Eigen::MatrixXd logits;  // n x 2
};

struct ForwardResult {
  TagDistribution distribution;
  ForwardCache cache;
};

/// Runs both directions from zero initial state (the backward direction over
/// the reversed sentence) and a per-token softmax over the concatenated
/// states. Throws ValidationError naming the tensor on a dimension mismatch.
ForwardResult blstm_forward(const TaggerParams& params, const Eigen::MatrixXd& inputs);

/// Numerically stable row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

/// Probability floor for the gold label in the loss.
inline constexpr double kProbabilityFloor = 1e-12;

struct LossResult {
  double loss = 0.0;
  /// Tokens whose gold probability was below the floor and got clamped.
  std::size_t clamped_tokens = 0;
};

/// Mean per-token negative log-probability of the gold labels.
LossResult sentence_loss(const TagDistribution& distribution, const std::vector<TokenLabel>& gold);

struct TaggerGradients {
  TaggerParams params;     // same shapes as the model
  Eigen::MatrixXd inputs;  // n x D, gradient w.r.t. token embeddings
  double loss = 0.0;
  TagDistribution distribution;  // from the forward pass
};

/// Full BPTT gradient of sentence_loss through both directions, the output
/// layer and the input embeddings. Throws NumericError naming the tensor and
/// token index on NaN.
TaggerGradients param_gradients(const TaggerParams& params, const Eigen::MatrixXd& inputs,
                                const std::vector<TokenLabel>& gold);

struct GradientCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;
  std::size_t coordinates_checked = 0;
  bool passed = false;
};


/// Compares analytic gradients (parameters and inputs) with central
/// differences (L(x+eps) - L(x-eps)) / 2eps. When the model has more than
/// 10,000 coordinates a seeded sample of 10,000 is checked. Throws
/// ValidationError when eps <= 0; a failed comparison is reported, not thrown.
GradientCheckReport gradient_check(const TaggerParams& params, const Eigen::MatrixXd& inputs,
                                   const std::vector<TokenLabel>& gold, double eps, double tolerance,
                                   std::uint64_t sample_seed = 0);

struct TaggerConfig {
  int hidden_dim = 150;
  std::size_t epochs = 10;
  double learning_rate = 0.05;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  bool freeze_embeddings = false;
};

struct EpochStats {
  std::size_t epoch = 0;  // 0 = before training
  double mean_loss = 0.0;
  double token_accuracy = 0.0;
};

/// A trained tagger: network weights plus the (possibly fine-tuned)
/// embedding table it reads, tied to a vocabulary by hash.
struct TaggerModel {
  TaggerParams params;
  Eigen::MatrixXd embeddings;  // |V| x D
  std::uint64_t vocab_hash = 0;

  bool operator==(const TaggerModel& other) const;
};

struct TrainingLog {
  std::vector<EpochStats> epochs;
};

struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<TokenLabel> labels;
};

/// Per-sentence SGD with global gradient-norm clipping, sentence order
/// shuffled each epoch from the seed. Embedding rows are fine-tuned unless
/// freeze_embeddings is set. Throws ValidationError on an empty training set
/// and NumericError (with the epoch) if the loss becomes NaN.
TaggerModel train_tagger(const std::vector<TaggedSentence>& sentences, const EmbeddingModel& embeddings,
                         const TaggerConfig& config, TrainingLog* log = nullptr);

/// Gold-labelled sentences of the annotated subset, optionally restricted to
/// a set of video ids.
std::vector<TaggedSentence> annotated_sentences(const Corpus& corpus, const std::set<std::string>* videos = nullptr);

/// Per-token label distribution for raw tokens.
TagDistribution tag_distribution(const TaggerModel& model, const Vocabulary& vocab,
                                 const std::vector<std::string>& tokens);
/// Argmax per token; ties go to NA.
std::vector<TokenLabel> labels_from_distribution(const TagDistribution& distribution);
std::vector<TokenLabel> tag_sentence(const TaggerModel& model, const Vocabulary& vocab,
                                     const std::vector<std::string>& tokens);

struct MedicalSpan {
  std::size_t start_token = 0;
  std::size_t end_token = 0;  // inclusive
  std::string text;

  bool operator==(const MedicalSpan&) const = default;
};

/// Maximal runs of MT.
std::vector<MedicalSpan> extract_spans(const std::vector<std::string>& tokens, const std::vector<TokenLabel>& labels);

/// Gazetteer of pre-tokenized terms.
struct TermLexicon {
  std::set<std::vector<std::string>> terms;
  std::size_t longest = 0;

  void add(std::vector<std::string> term);
};

/// One term per line, tokenized with the corpus tokenizer; '#' starts a
/// comment line.
TermLexicon parse_term_lexicon(std::string_view raw, std::string_view source = "<lexicon>");

/// Greedy left-to-right longest match; matched tokens are MT.
std::vector<TokenLabel> lexicon_baseline_tag(const TermLexicon& lexicon, const std::vector<std::string>& tokens);

/// Text container: header, dims, vocab hash, then every tensor (params in
/// declared order, then "embeddings") with exact decimal values.
std::string write_tagger_model(const TaggerModel& model);
TaggerModel parse_tagger_model(std::string_view raw, std::string_view source = "<tagger>");

}  // namespace medlit
