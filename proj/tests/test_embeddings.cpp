#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "medlit/embeddings.hpp"
#include "test_support.hpp"

using namespace medlit;
using Sentences = std::vector<std::vector<std::string>>;

namespace {

Sentences repeat_tokens(const std::map<std::string, int>& counts) {
  Sentences out(1);
  for (const auto& [tok, n] : counts) {
    for (int i = 0; i < n; ++i) out[0].push_back(tok);
  }
  return out;
}

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-0.8, 0.8);
  }
  return m;
}

EmbeddingModel hand_model(const std::vector<std::string>& tokens, const std::vector<std::vector<double>>& rows) {
  EmbeddingModel m;
  m.vocab = Vocabulary::from_tokens(tokens);
  m.input_vectors.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m.input_vectors(r, c) = rows[r][c];
  }
  m.output_vectors = Eigen::MatrixXd::Zero(m.input_vectors.rows(), m.input_vectors.cols());
  return m;
}

}  // namespace

TEST(Vocabulary, PrunesToMaxKeptPlusUnk) {
  Sentences s(1);
  for (int i = 0; i < 7000; ++i) {
    // Distinct frequencies so the rank order is unambiguous: token i appears 1 + i/1000 times.
    for (int k = 0; k <= i / 1000; ++k) s[0].push_back("t" + std::to_string(i));
  }
  const Vocabulary v = Vocabulary::build(s, 5000);
  EXPECT_EQ(v.size(), 5001u);
  EXPECT_EQ(v.token(v.unk_id()), "UNK");
  // The 2,000 least frequent tokens (i < 2000) are pruned.
  EXPECT_EQ(v.id("t1999"), v.unk_id());
  EXPECT_NE(v.id("t6999"), v.unk_id());
  EXPECT_EQ(v.id("t6000"), 0u);  // highest count, lexicographically first among ties
}

TEST(Vocabulary, SmallCorpusKeepsEverything) {
  const Vocabulary v = Vocabulary::build({{"a", "b", "c", "a"}}, 5000);
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.frequency(v.unk_id()), 0u);
}

TEST(Vocabulary, FrequencyThenLexicographicTieBreak) {
  const Vocabulary v = Vocabulary::build(repeat_tokens({{"c", 1}, {"b", 5}, {"a", 5}}), 2);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"a", "b", "UNK"}));
  EXPECT_EQ(v.id("c"), v.unk_id());
  EXPECT_EQ(v.frequency(v.unk_id()), 1u);
}

TEST(Vocabulary, RejectsZeroMaxKept) { EXPECT_THROW(Vocabulary::build({{"a"}}, 0), ValidationError); }

TEST(Vocabulary, EncodeMapsUnknownToUnk) {
  const Vocabulary v = Vocabulary::build({{"insulin", "insulin", "statin"}}, 5000);
  EXPECT_EQ(v.encode({"insulin", "zzz-rare"}), (std::vector<std::size_t>{v.id("insulin"), v.unk_id()}));
  EXPECT_EQ(v.id("insulin"), 0u);
}

TEST(Vocabulary, PruningPropertyOnRandomCorpora) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    Sentences s(3);
    for (int i = 0; i < 300; ++i) s[rng.below(3)].push_back("w" + std::to_string(rng.below(60)));
    const std::size_t keep = 1 + rng.below(50);
    const Vocabulary v = Vocabulary::build(s, keep);
    std::map<std::string, std::uint64_t> counts;
    for (const auto& sent : s) {
      for (const auto& t : sent) ++counts[t];
    }
    std::uint64_t min_kept = UINT64_MAX, max_pruned = 0;
    for (const auto& [tok, n] : counts) {
      if (v.contains(tok)) {
        min_kept = std::min(min_kept, n);
      } else {
        EXPECT_EQ(v.id(tok), v.unk_id());
        max_pruned = std::max(max_pruned, n);
      }
    }
    EXPECT_LE(v.size(), keep + 1);
    EXPECT_GE(min_kept, max_pruned);
  }
}

TEST(Pairs, WindowOneClipsAtBoundaries) {
  const auto pairs = generate_training_pairs({0, 1, 2}, 1);
  EXPECT_EQ(pairs, (std::vector<TrainPair>{{0, 1}, {1, 0}, {1, 2}, {2, 1}}));
  EXPECT_TRUE(generate_training_pairs({4}, 3).empty());
  // 2 + 3 + 4 + 3 + 2 context positions.
  EXPECT_EQ(generate_training_pairs({0, 1, 2, 3, 4}, 2).size(), 14u);
}

TEST(Pairs, CountMatchesBruteForce) {
  for (std::size_t n = 0; n <= 8; ++n) {
    for (std::size_t w = 1; w <= 3; ++w) {
      std::vector<std::size_t> ids(n);
      for (std::size_t i = 0; i < n; ++i) ids[i] = i;
      std::vector<TrainPair> brute;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i != j && (i > j ? i - j : j - i) <= w) brute.push_back({i, j});
        }
      }
      EXPECT_EQ(generate_training_pairs(ids, w), brute) << "n=" << n << " w=" << w;
    }
  }
}

TEST(SkipGram, PairGradientMatchesFiniteDifferences) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd in = random_matrix(rng, 3, 2), out = random_matrix(rng, 3, 2);
    const std::size_t center = rng.below(3);
    const std::size_t context = (center + 1 + rng.below(2)) % 3;
    std::vector<std::size_t> negatives;
    for (int k = 0; k < 3; ++k) negatives.push_back(rng.below(3));
    const auto g = skipgram_pair_gradient(in, out, center, context, negatives);
    EXPECT_NEAR(g.loss, skipgram_pair_loss(in, out, center, context, negatives), 1e-12);
    const double eps = 1e-5;
    for (auto* m : {&in, &out}) {
      const Eigen::MatrixXd& analytic = m == &in ? g.input : g.output;
      for (Eigen::Index r = 0; r < m->rows(); ++r) {
        for (Eigen::Index c = 0; c < m->cols(); ++c) {
          const double saved = (*m)(r, c);
          (*m)(r, c) = saved + eps;
          const double plus = skipgram_pair_loss(in, out, center, context, negatives);
          (*m)(r, c) = saved - eps;
          const double minus = skipgram_pair_loss(in, out, center, context, negatives);
          (*m)(r, c) = saved;
          EXPECT_LT(gradient_relative_error(analytic(r, c), (plus - minus) / (2 * eps)), 1e-4);
        }
      }
    }
  }
}

TEST(SkipGram, SgdStepMatchesDenseGradient) {
  Rng rng(8);
  Eigen::MatrixXd in = random_matrix(rng, 5, 3), out = random_matrix(rng, 5, 3);
  const std::vector<std::size_t> negatives = {2, 4};
  const auto g = skipgram_pair_gradient(in, out, 0, 1, negatives);
  Eigen::MatrixXd in2 = in, out2 = out;
  const double loss = skipgram_sgd_step(in2, out2, 0, 1, negatives, 0.1);
  EXPECT_NEAR(loss, g.loss, 1e-12);
  EXPECT_LT((in2 - (in - 0.1 * g.input)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((out2 - (out - 0.1 * g.output)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SkipGram, NoiseDistributionIsUnigramToThreeQuarters) {
  const NoiseSampler noise({16, 1, 0});
  const double z = std::pow(16.0, 0.75) + 1.0;
  EXPECT_NEAR(noise.probability(0), 8.0 / z, 1e-12);
  EXPECT_NEAR(noise.probability(1), 1.0 / z, 1e-12);
  EXPECT_EQ(noise.probability(2), 0.0);
  Rng rng(2);
  int hits = 0;
  for (int i = 0; i < 20000; ++i) hits += noise.sample(rng) == 0;
  EXPECT_NEAR(hits / 20000.0, 8.0 / 9.0, 0.01);
}

TEST(SkipGram, TrainingIsDeterministicAndLowersLoss) {
  const auto corpus = testutil::synthetic_ner_corpus(60, 3);
  Sentences s;
  for (const auto& t : corpus.sentences) s.push_back(t.tokens);
  const Vocabulary vocab = Vocabulary::build(s, 5000);
  EmbeddingConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 12;
  const auto a = train_embeddings(s, vocab, cfg);
  const auto b = train_embeddings(s, vocab, cfg);
  EXPECT_EQ(a.model.input_vectors, b.model.input_vectors);
  EXPECT_EQ(a.model.output_vectors, b.model.output_vectors);
  EXPECT_EQ(a.model.dim(), 50);
  EXPECT_EQ(a.model.input_vectors.rows(), static_cast<Eigen::Index>(vocab.size()));
  EXPECT_TRUE(a.model.input_vectors.allFinite());
  EXPECT_LT(a.final_loss, a.initial_loss);
  EXPECT_EQ(a.epoch_losses.size(), 3u);
}

TEST(SkipGram, ZeroEpochsEqualsInitialization) {
  const Sentences s = {{"a", "b", "c"}, {"b", "c", "d"}};
  const Vocabulary vocab = Vocabulary::build(s, 5000);
  EmbeddingConfig cfg;
  cfg.epochs = 0;
  cfg.dim = 7;
  const auto trained = train_embeddings(s, vocab, cfg);
  const auto init = init_embedding_model(vocab, 7, cfg.seed);
  EXPECT_EQ(trained.model.input_vectors, init.input_vectors);
  EXPECT_EQ(trained.model.output_vectors, init.output_vectors);
  EXPECT_LE(init.input_vectors.cwiseAbs().maxCoeff(), 0.5 / 7);
  EXPECT_EQ(init.output_vectors.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SkipGram, TwoClustersSeparate) {
  Rng rng(5);
  const std::vector<std::string> a = {"a0", "a1", "a2", "a3", "a4"}, b = {"b0", "b1", "b2", "b3", "b4"};
  Sentences s;
  for (int i = 0; i < 200; ++i) {
    const auto& cluster = i % 2 ? a : b;
    std::vector<std::string> sent;
    for (int k = 0; k < 6; ++k) sent.push_back(cluster[rng.below(cluster.size())]);
    s.push_back(sent);
  }
  const Vocabulary vocab = Vocabulary::build(s, 5000);
  EmbeddingConfig cfg;
  cfg.dim = 10;
  cfg.epochs = 30;
  const auto model = train_embeddings(s, vocab, cfg).model;
  double intra = 0, inter = 0;
  int n_intra = 0, n_inter = 0;
  for (const auto& x : a) {
    for (const auto& y : a) {
      if (x < y) intra += cosine_similarity(model.vector(x), model.vector(y)), ++n_intra;
    }
    for (const auto& y : b) inter += cosine_similarity(model.vector(x), model.vector(y)), ++n_inter;
  }
  for (const auto& x : b) {
    for (const auto& y : b) {
      if (x < y) intra += cosine_similarity(model.vector(x), model.vector(y)), ++n_intra;
    }
  }
  EXPECT_GT(intra / n_intra, inter / n_inter);
}

TEST(Neighbors, TwinVectorAndOrthogonality) {
  const auto m = hand_model({"u", "v", "w", "UNK"}, {{1, 2}, {1, 2}, {-2, 1}, {0, 0}});
  const auto r = nearest_neighbors(m, "u", 1);
  ASSERT_EQ(r.neighbors.size(), 1u);
  EXPECT_EQ(r.neighbors[0].token, "v");
  EXPECT_NEAR(r.neighbors[0].similarity, 1.0, 1e-9);
  EXPECT_FALSE(r.query_unknown);
  EXPECT_NEAR(cosine_similarity(m.vector("u"), m.vector("w")), 0.0, 1e-9);
  EXPECT_EQ(cosine_similarity(m.vector("u"), m.vector("UNK")), 0.0);
}

TEST(Neighbors, HandComputedRanking) {
  // Cosines to q=(1,0): a=(1,1) -> 0.7071, b=(0,1) -> 0, c=(-1,0.1) -> -0.995, d=(3,1) -> 0.9487.
  const auto m = hand_model({"q", "a", "b", "c", "d", "UNK"}, {{1, 0}, {1, 1}, {0, 1}, {-1, 0.1}, {3, 1}, {0, 0}});
  const auto r = nearest_neighbors(m, "q", 4);
  ASSERT_EQ(r.neighbors.size(), 4u);
  EXPECT_EQ(r.neighbors[0].token, "d");
  EXPECT_EQ(r.neighbors[1].token, "a");
  EXPECT_EQ(r.neighbors[2].token, "UNK");  // cosine 0 with b, UNK before b lexicographically
  EXPECT_EQ(r.neighbors[3].token, "b");
  EXPECT_NEAR(r.neighbors[0].similarity, 3 / std::sqrt(10.0), 1e-12);
  EXPECT_NEAR(r.neighbors[1].similarity, 1 / std::sqrt(2.0), 1e-12);
}

TEST(Neighbors, UnknownQueryIsFlagged) {
  const auto m = hand_model({"u", "v", "UNK"}, {{1, 0}, {0, 1}, {1, 1}});
  const auto r = nearest_neighbors(m, "never-seen", 1);
  EXPECT_TRUE(r.query_unknown);
  ASSERT_EQ(r.neighbors.size(), 1u);
  EXPECT_NE(r.neighbors[0].token, "UNK");
}

TEST(EmbeddingFile, RoundTripIsExact) {
  Rng rng(13);
  auto m = hand_model({"x", "y-z", "UNK"}, {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}});
  m.input_vectors = random_matrix(rng, 3, 3) * 1e-3;
  m.input_vectors(0, 0) = 1.0 / 3.0;
  const auto text = write_embedding_model(m);
  EXPECT_EQ(text.substr(0, text.find('\n')), "medlit-emb v1 3 3");
  const auto back = parse_embedding_model(text);
  EXPECT_EQ(back.input_vectors, m.input_vectors);
  EXPECT_EQ(back.vocab.tokens(), m.vocab.tokens());
  EXPECT_EQ(write_embedding_model(back), text);
}

TEST(EmbeddingFile, MalformedInputs) {
  EXPECT_THROW(parse_embedding_model("medlit-emb v1 2 2\na 1 2\n"), ParseError);
  EXPECT_THROW(parse_embedding_model("medlit-emb v2 1 1\nUNK 0\n"), ParseError);
  EXPECT_THROW(parse_embedding_model("medlit-emb v1 1 2\nUNK 0 nope\n"), ParseError);
}
