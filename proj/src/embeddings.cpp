#include "medlit/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

namespace medlit {
namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -log(sigmoid(x)), stable for large |x|.
double neg_log_sigmoid(double x) { return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

}  // namespace

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& sentences, std::size_t max_kept) {
  if (max_kept < 1) throw ValidationError("max_kept must be at least 1");
  std::map<std::string, std::uint64_t, std::less<>> counts;
  std::uint64_t total = 0;
  for (const auto& s : sentences) {
    for (const auto& t : s) {
      ++counts[t];
      ++total;
    }
  }
  if (total == 0) throw ValidationError("cannot build a vocabulary from an empty corpus");

  std::vector<std::pair<std::string, std::uint64_t>> ranked;
  std::uint64_t unk_count = 0;
  for (auto& [token, count] : counts) {
    if (token == kUnkToken) {
      unk_count += count;
    } else {
      ranked.emplace_back(token, count);
    }
  }
  // std::map iteration is already lexicographic, so a stable sort on count
  // leaves ties in lexicographic order.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary v;
  v.max_kept_ = max_kept;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (i < max_kept) {
      v.index_.emplace(ranked[i].first, v.tokens_.size());
      v.tokens_.push_back(ranked[i].first);
      v.frequencies_.push_back(ranked[i].second);
    } else {
      unk_count += ranked[i].second;
    }
  }
  v.unk_id_ = v.tokens_.size();
  v.tokens_.emplace_back(kUnkToken);
  v.frequencies_.push_back(unk_count);
  v.index_.emplace(std::string(kUnkToken), v.unk_id_);
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  bool found_unk = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!v.index_.emplace(tokens[i], i).second) throw ValidationError("duplicate vocabulary token '" + tokens[i] + "'");
    if (tokens[i] == kUnkToken) {
      v.unk_id_ = i;
      found_unk = true;
    }
  }
  if (!found_unk) throw ValidationError("vocabulary has no UNK token");
  v.tokens_ = std::move(tokens);
  v.frequencies_.assign(v.tokens_.size(), 0);
  v.max_kept_ = v.tokens_.size() - 1;
  return v;
}

std::size_t Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? unk_id_ : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return token != kUnkToken && index_.count(token) > 0; }

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::uint64_t Vocabulary::hash() const {
  std::string joined;
  for (const auto& t : tokens_) {
    joined += t;
    joined.push_back('\n');
  }
  return fnv1a64(joined);
}

Vocabulary build_vocabulary(const std::vector<Sentence>& sentences, std::size_t max_kept) {
  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(sentences.size());
  for (const auto& s : sentences) tokens.push_back(s.tokens);
  return Vocabulary::build(tokens, max_kept);
}

Eigen::MatrixXd EmbeddingModel::embed(const std::vector<std::string>& tokens) const {
  return embed_ids(vocab.encode(tokens));
}

Eigen::MatrixXd EmbeddingModel::embed_ids(const std::vector<std::size_t>& ids) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), input_vectors.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = input_vectors.row(static_cast<Eigen::Index>(ids[i]));
  return out;
}

std::vector<TrainPair> generate_training_pairs(const std::vector<std::size_t>& ids, std::size_t window) {
  if (window < 1) throw ValidationError("window must be at least 1");
  std::vector<TrainPair> pairs;
  const std::size_t n = ids.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= window ? i - window : 0;
    const std::size_t hi = std::min(n - 1, i + window);
    for (std::size_t j = lo; j <= hi; ++j) {
      if (j != i) pairs.push_back({ids[i], ids[j]});
    }
  }
  return pairs;
}

NoiseSampler::NoiseSampler(const std::vector<std::uint64_t>& frequencies, double power) {
  cdf_.reserve(frequencies.size());
  double total = 0.0;
  for (const auto f : frequencies) {
    total += std::pow(static_cast<double>(f), power);
    cdf_.push_back(total);
  }
  if (total <= 0.0) {
    // No counts (a loaded vocabulary): fall back to uniform noise.
    for (std::size_t i = 0; i < cdf_.size(); ++i) cdf_[i] = static_cast<double>(i + 1);
    total = static_cast<double>(cdf_.size());
  }
  for (auto& c : cdf_) c /= total;
  if (!cdf_.empty()) cdf_.back() = 1.0;
}

std::size_t NoiseSampler::sample(Rng& rng) const {
  const double u = rng.uniform01();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
}

double NoiseSampler::probability(std::size_t id) const { return id == 0 ? cdf_[0] : cdf_[id] - cdf_[id - 1]; }

EmbeddingModel init_embedding_model(Vocabulary vocab, std::size_t dim, std::uint64_t seed) {
  if (dim < 1) throw ValidationError("embedding dimension must be at least 1");
  EmbeddingModel model;
  const auto rows = static_cast<Eigen::Index>(vocab.size());
  const auto cols = static_cast<Eigen::Index>(dim);
  model.vocab = std::move(vocab);
  model.input_vectors.resize(rows, cols);
  model.output_vectors = Eigen::MatrixXd::Zero(rows, cols);
  Rng rng(seed);
  const double half = 0.5 / static_cast<double>(dim);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) model.input_vectors(r, c) = rng.uniform(-half, half);
  }
  return model;
}

double skipgram_pair_loss(const Eigen::MatrixXd& input, const Eigen::MatrixXd& output, std::size_t center,
                          std::size_t context, const std::vector<std::size_t>& negatives) {
  const auto v = input.row(static_cast<Eigen::Index>(center));
  double loss = neg_log_sigmoid(output.row(static_cast<Eigen::Index>(context)).dot(v));
  for (const auto k : negatives) loss += neg_log_sigmoid(-output.row(static_cast<Eigen::Index>(k)).dot(v));
  return loss;
}

SkipGramGradient skipgram_pair_gradient(const Eigen::MatrixXd& input, const Eigen::MatrixXd& output,
                                        std::size_t center, std::size_t context,
                                        const std::vector<std::size_t>& negatives) {
  SkipGramGradient g;
  g.input = Eigen::MatrixXd::Zero(input.rows(), input.cols());
  g.output = Eigen::MatrixXd::Zero(output.rows(), output.cols());
  g.loss = skipgram_pair_loss(input, output, center, context, negatives);
  const auto c = static_cast<Eigen::Index>(center);
  const Eigen::RowVectorXd v = input.row(c);

  const auto o = static_cast<Eigen::Index>(context);
  const double pos = sigmoid(output.row(o).dot(v)) - 1.0;
  g.input.row(c) += pos * output.row(o);
  g.output.row(o) += pos * v;
  for (const auto k : negatives) {
    const auto n = static_cast<Eigen::Index>(k);
    const double neg = sigmoid(output.row(n).dot(v));
    g.input.row(c) += neg * output.row(n);
    g.output.row(n) += neg * v;
  }
  return g;
}

double skipgram_sgd_step(Eigen::MatrixXd& input, Eigen::MatrixXd& output, std::size_t center, std::size_t context,
                         const std::vector<std::size_t>& negatives, double learning_rate) {
  const auto c = static_cast<Eigen::Index>(center);
  const Eigen::RowVectorXd v = input.row(c);
  Eigen::RowVectorXd grad_center = Eigen::RowVectorXd::Zero(v.size());

  const auto o = static_cast<Eigen::Index>(context);
  const double pos_score = output.row(o).dot(v);
  double loss = neg_log_sigmoid(pos_score);
  // Coefficients use the pre-step output rows; apply output updates after.
  std::vector<std::pair<Eigen::Index, double>> coeffs;
  coeffs.reserve(negatives.size() + 1);
  coeffs.emplace_back(o, sigmoid(pos_score) - 1.0);
  for (const auto k : negatives) {
    const auto n = static_cast<Eigen::Index>(k);
    const double score = output.row(n).dot(v);
    loss += neg_log_sigmoid(-score);
    coeffs.emplace_back(n, sigmoid(score));
  }
  for (const auto& [row, coef] : coeffs) grad_center += coef * output.row(row);
  for (const auto& [row, coef] : coeffs) output.row(row) -= learning_rate * coef * v;
  input.row(c) -= learning_rate * grad_center;
  return loss;
}

EmbeddingTrainingResult train_embeddings(const std::vector<std::vector<std::string>>& sentences,
                                         const Vocabulary& vocab, const EmbeddingConfig& config) {
  if (config.dim < 1 || config.window < 1) throw ValidationError("embedding dim and window must be at least 1");
  if (vocab.size() == 0) throw ValidationError("vocabulary not built");

  std::vector<TrainPair> pairs;
  for (const auto& s : sentences) {
    const auto more = generate_training_pairs(vocab.encode(s), config.window);
    pairs.insert(pairs.end(), more.begin(), more.end());
  }
  if (pairs.empty()) throw ValidationError("corpus yields no skip-gram training pairs");

  EmbeddingTrainingResult result;
  result.model = init_embedding_model(vocab, config.dim, config.seed);
  const NoiseSampler noise(vocab.frequencies());

  std::vector<std::size_t> negatives;
  const auto draw_negatives = [&](Rng& rng, std::size_t context) {
    negatives.clear();
    for (std::size_t k = 0; k < config.negatives; ++k) {
      const std::size_t id = noise.sample(rng);
      if (id != context) negatives.push_back(id);
    }
  };
  const auto evaluate = [&](const EmbeddingModel& m) {
    Rng eval_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    double total = 0.0;
    for (const auto& p : pairs) {
      draw_negatives(eval_rng, p.context_id);
      total += skipgram_pair_loss(m.input_vectors, m.output_vectors, p.center_id, p.context_id, negatives);
    }
    return total / static_cast<double>(pairs.size());
  };

  result.initial_loss = evaluate(result.model);
  Rng rng(config.seed + 1);
  const double total_steps = static_cast<double>(config.epochs) * static_cast<double>(pairs.size());
  double step = 0.0;
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const TrainPair& p = pairs[order[k]];
      draw_negatives(rng, p.context_id);
      // Linear decay to 1e-4 of the initial rate.
      const double lr = config.learning_rate * std::max(1e-4, 1.0 - step / total_steps);
      step += 1.0;
      const double loss = skipgram_sgd_step(result.model.input_vectors, result.model.output_vectors, p.center_id,
                                            p.context_id, negatives, lr);
      if (!std::isfinite(loss) || !result.model.input_vectors.row(static_cast<Eigen::Index>(p.center_id)).allFinite()) {
        throw NumericError("skip-gram training diverged at epoch " + std::to_string(epoch) + ", pair " +
                           std::to_string(order[k]));
      }
      epoch_loss += loss;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(pairs.size()));
  }
  result.final_loss = evaluate(result.model);
  return result;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

NeighborResult nearest_neighbors(const EmbeddingModel& model, std::string_view token, std::size_t k) {
  if (k < 1) throw ValidationError("k must be at least 1");
  NeighborResult result;
  result.query_unknown = !model.vocab.contains(token) && token != kUnkToken;
  const std::size_t query = model.vocab.id(token);
  const Eigen::VectorXd q = model.input_vectors.row(static_cast<Eigen::Index>(query)).transpose();
  for (std::size_t id = 0; id < model.vocab.size(); ++id) {
    if (id == query) continue;
    result.neighbors.push_back(
        {model.vocab.token(id), cosine_similarity(q, model.input_vectors.row(static_cast<Eigen::Index>(id)).transpose())});
  }
  const auto cmp = [](const Neighbor& a, const Neighbor& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.token < b.token;
  };
  const std::size_t keep = std::min(k, result.neighbors.size());
  std::partial_sort(result.neighbors.begin(), result.neighbors.begin() + static_cast<std::ptrdiff_t>(keep),
                    result.neighbors.end(), cmp);
  result.neighbors.resize(keep);
  return result;
}

std::string write_embedding_model(const EmbeddingModel& model) {
  std::string out = "medlit-emb v1 " + std::to_string(model.vocab.size()) + " " + std::to_string(model.dim()) + "\n";
  for (std::size_t id = 0; id < model.vocab.size(); ++id) {
    const std::string& token = model.vocab.token(id);
    if (token.empty() || token.find_first_of(" \t\r\n") != std::string::npos) {
      throw ValidationError("token cannot be written to an embedding file: '" + token + "'");
    }
    out += token;
    for (Eigen::Index c = 0; c < model.dim(); ++c) {
      out.push_back(' ');
      out += format_double(model.input_vectors(static_cast<Eigen::Index>(id), c));
    }
    out.push_back('\n');
  }
  return out;
}

EmbeddingModel parse_embedding_model(std::string_view raw, std::string_view source) {
  const std::string_view text = checked_utf8(raw, source);
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError(std::string(source), 1, "empty embedding file");
  const auto header = split(lines[0], ' ');
  if (header.size() != 4 || header[0] != "medlit-emb" || header[1] != "v1") {
    throw ParseError(std::string(source), 1, "expected header 'medlit-emb v1 <|V|> <D>'");
  }
  long long rows = 0;
  long long dim = 0;
  try {
    rows = parse_int(header[2], "|V|");
    dim = parse_int(header[3], "D");
  } catch (const ValidationError& e) {
    throw ParseError(std::string(source), 1, e.what());
  }
  if (rows < 1 || dim < 1) throw ParseError(std::string(source), 1, "|V| and D must be positive");

  std::vector<std::string> tokens;
  Eigen::MatrixXd input(rows, dim);
  std::size_t line_no = 1;
  for (long long r = 0; r < rows; ++r) {
    ++line_no;
    if (line_no > lines.size()) throw ParseError(std::string(source), line_no, "file ends before all vectors were read");
    const auto cols = split(lines[line_no - 1], ' ');
    if (static_cast<long long>(cols.size()) != dim + 1) {
      throw ParseError(std::string(source), line_no, "expected a token and " + std::to_string(dim) + " values");
    }
    tokens.push_back(cols[0]);
    for (long long c = 0; c < dim; ++c) {
      try {
        input(r, c) = parse_double(cols[static_cast<std::size_t>(c + 1)], "embedding value");
      } catch (const ValidationError& e) {
        throw ParseError(std::string(source), line_no, e.what());
      }
    }
  }
  for (std::size_t extra = line_no; extra < lines.size(); ++extra) {
    if (!trim(lines[extra]).empty()) throw ParseError(std::string(source), extra + 1, "trailing content");
  }
  EmbeddingModel model;
  model.vocab = Vocabulary::from_tokens(std::move(tokens));
  model.input_vectors = std::move(input);
  model.output_vectors = Eigen::MatrixXd::Zero(rows, dim);
  return model;
}

}  // namespace medlit
