#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "medlit/corpus.hpp"

namespace medlit {

inline constexpr std::string_view kUnkToken = "UNK";

/// Frequency-pruned vocabulary. Kept tokens occupy ids 0..k-1 in rank order
/// (frequency descending, ties lexicographic); UNK takes id k.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// Counts tokens over `sentences` and keeps the `max_kept` most frequent.
  static Vocabulary build(const std::vector<std::vector<std::string>>& sentences, std::size_t max_kept = 5000);
  /// Rebuilds a vocabulary from an id-ordered token list (one of which must
  /// be UNK). Frequencies are unknown and set to zero.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::size_t unk_id() const { return unk_id_; }
  std::size_t max_kept() const { return max_kept_; }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::uint64_t frequency(std::size_t id) const { return frequencies_.at(id); }
  const std::vector<std::uint64_t>& frequencies() const { return frequencies_; }

  /// id for a token, or unk_id() when the token is not kept.
  std::size_t id(std::string_view token) const;
  bool contains(std::string_view token) const;
  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;

  /// Identity hash over the id-ordered token list.
  std::uint64_t hash() const;

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && frequencies_ == other.frequencies_ && unk_id_ == other.unk_id_;
  }

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> frequencies_;
  std::unordered_map<std::string, std::size_t, StringHash, std::equal_to<>> index_;
  std::size_t unk_id_ = 0;
  std::size_t max_kept_ = 0;
};

/// Convenience overload over corpus sentences.
Vocabulary build_vocabulary(const std::vector<Sentence>& sentences, std::size_t max_kept = 5000);

struct EmbeddingModel {
  Vocabulary vocab;
  Eigen::MatrixXd input_vectors;   // |V| x D, row per token
  Eigen::MatrixXd output_vectors;  // |V| x D, negative-sampling context weights

  Eigen::Index dim() const { return input_vectors.cols(); }
  Eigen::VectorXd vector(std::string_view token) const { return input_vectors.row(vocab.id(token)).transpose(); }
  /// Rows of `input_vectors` for each token (UNK for unknown ones): n x D.
  Eigen::MatrixXd embed(const std::vector<std::string>& tokens) const;
  Eigen::MatrixXd embed_ids(const std::vector<std::size_t>& ids) const;
};

struct TrainPair {
  std::size_t center_id;
  std::size_t context_id;

  bool operator==(const TrainPair&) const = default;
};

/// Skip-gram pairs: for each i ascending, each j != i with |i-j| <= window
/// ascending.
std::vector<TrainPair> generate_training_pairs(const std::vector<std::size_t>& ids, std::size_t window);

struct EmbeddingConfig {
  std::size_t dim = 50;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;
};

struct EmbeddingTrainingResult {
  EmbeddingModel model;
  /// Mean per-pair loss over all pairs, each with the same fixed stream of
  /// negative samples, before and after training.
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;
};

/// Unigram^(3/4) noise distribution, sampled by inverse CDF.
class NoiseSampler {
 public:
  explicit NoiseSampler(const std::vector<std::uint64_t>& frequencies, double power = 0.75);
  std::size_t sample(Rng& rng) const;
  double probability(std::size_t id) const;

 private:
  std::vector<double> cdf_;
};

/// Initial model: input rows uniform in [-0.5/D, 0.5/D], output rows zero.
EmbeddingModel init_embedding_model(Vocabulary vocab, std::size_t dim, std::uint64_t seed);

/// Negative-sampling loss of one (center, context) pair:
///   -log s(u_o . v_c) - sum_k log s(-u_k . v_c)
double skipgram_pair_loss(const Eigen::MatrixXd& input, const Eigen::MatrixXd& output, std::size_t center,
                          std::size_t context, const std::vector<std::size_t>& negatives);

struct SkipGramGradient {
  Eigen::MatrixXd input;   // same shape as the input matrix
  Eigen::MatrixXd output;  // same shape as the output matrix
  double loss = 0.0;
};

/// Dense analytic gradient of skipgram_pair_loss.
SkipGramGradient skipgram_pair_gradient(const Eigen::MatrixXd& input, const Eigen::MatrixXd& output,
                                        std::size_t center, std::size_t context,
                                        const std::vector<std::size_t>& negatives);

/// One SGD step on one pair, applied in place to the touched rows. Returns
/// the loss before the step.
double skipgram_sgd_step(Eigen::MatrixXd& input, Eigen::MatrixXd& output, std::size_t center, std::size_t context,
                         const std::vector<std::size_t>& negatives, double learning_rate);

/// Trains skip-gram embeddings over every sentence. Negatives equal to the
/// positive context are skipped. Single-threaded and deterministic in the
/// seed. Throws NumericError naming epoch and pair on NaN/Inf.
EmbeddingTrainingResult train_embeddings(const std::vector<std::vector<std::string>>& sentences,
                                         const Vocabulary& vocab, const EmbeddingConfig& config);

struct Neighbor {
  std::string token;
  double similarity;
};

struct NeighborResult {
  /// The query was not in the vocabulary and was answered as UNK.
  bool query_unknown = false;
  std::vector<Neighbor> neighbors;
};

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// The k most cosine-similar tokens to `token`, query excluded, sorted by
/// similarity descending then token ascending.
NeighborResult nearest_neighbors(const EmbeddingModel& model, std::string_view token, std::size_t k);

/// Text form: "medlit-emb v1 <|V|> <D>" then "token v1 ... vD" per id.
/// Output vectors are not persisted; loading sets them to zero.
std::string write_embedding_model(const EmbeddingModel& model);
EmbeddingModel parse_embedding_model(std::string_view raw, std::string_view source = "<embeddings>");

}  // namespace medlit
