#include "medlit/tagger.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "medlit/text.hpp"

namespace medlit {
namespace {

constexpr const char* kGateNames[kNumGates] = {"input", "forget", "output", "candidate"};

Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

void append_direction(std::vector<TensorRef>& out, const std::string& prefix, LstmWeights& w) {
  for (int g = 0; g < kNumGates; ++g) out.push_back({prefix + ".W_" + kGateNames[g], &w.W[g]});
  for (int g = 0; g < kNumGates; ++g) out.push_back({prefix + ".U_" + kGateNames[g], &w.U[g]});
  for (int g = 0; g < kNumGates; ++g) out.push_back({prefix + ".b_" + kGateNames[g], &w.b[g]});
}

void fill_uniform(Eigen::MatrixXd& m, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-s, s);
  }
}

void check_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ValidationError("dimension mismatch in tensor " + name + ": expected " + std::to_string(rows) + "x" +
                          std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

void check_params(const TaggerParams& p) {
  const Eigen::Index D = p.input_dim;
  const Eigen::Index H = p.hidden_dim;
  for (const auto& t : p.tensors()) {
    const std::string& name = t.name;
    if (name == "W_out") {
      check_shape(*t.tensor, kNumLabels, 2 * H, name);
    } else if (name == "b_out") {
      check_shape(*t.tensor, kNumLabels, 1, name);
    } else if (name.find(".W_") != std::string::npos) {
      check_shape(*t.tensor, H, D, name);
    } else if (name.find(".U_") != std::string::npos) {
      check_shape(*t.tensor, H, H, name);
    } else {
      check_shape(*t.tensor, H, 1, name);
    }
  }
}

// Position of the step-th token processed by a direction.
Eigen::Index position(Eigen::Index step, Eigen::Index n, bool reverse) { return reverse ? n - 1 - step : step; }

void run_direction(const LstmWeights& w, const Eigen::MatrixXd& X, bool reverse, DirectionCache& cache) {
  const Eigen::Index n = X.rows();
  const Eigen::Index H = w.U[0].rows();
  for (auto* m : {&cache.i, &cache.f, &cache.o, &cache.g, &cache.c, &cache.h}) m->resize(n, H);
  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(H);
  for (Eigen::Index step = 0; step < n; ++step) {
    const Eigen::Index t = position(step, n, reverse);
    const Eigen::VectorXd x = X.row(t).transpose();
    const auto pre = [&](int g) -> Eigen::ArrayXd { return (w.W[g] * x + w.U[g] * h_prev + w.b[g].col(0)).array(); };
    const Eigen::ArrayXd i = sigmoid(pre(kInputGate));
    const Eigen::ArrayXd f = sigmoid(pre(kForgetGate));
    const Eigen::ArrayXd o = sigmoid(pre(kOutputGate));
    const Eigen::ArrayXd g = pre(kCandidate).tanh();
    const Eigen::ArrayXd c = f * c_prev.array() + i * g;
    const Eigen::ArrayXd h = o * c.tanh();
    cache.i.row(t) = i.matrix().transpose();
    cache.f.row(t) = f.matrix().transpose();
    cache.o.row(t) = o.matrix().transpose();
    cache.g.row(t) = g.matrix().transpose();
    cache.c.row(t) = c.matrix().transpose();
    cache.h.row(t) = h.matrix().transpose();
    h_prev = h.matrix();
    c_prev = c.matrix();
  }
}

void backprop_direction(const LstmWeights& w, const Eigen::MatrixXd& X, const DirectionCache& cache, bool reverse,
                        const Eigen::MatrixXd& dH, LstmWeights& grad, Eigen::MatrixXd& dX) {
  const Eigen::Index n = X.rows();
  const Eigen::Index H = w.U[0].rows();
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H);
  Eigen::ArrayXd dc_next = Eigen::ArrayXd::Zero(H);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(H);
  for (Eigen::Index step = n - 1; step >= 0; --step) {
    const Eigen::Index t = position(step, n, reverse);
    const Eigen::VectorXd h_prev = step > 0 ? Eigen::VectorXd(cache.h.row(position(step - 1, n, reverse)).transpose()) : zero;
    const Eigen::ArrayXd c_prev =
        step > 0 ? Eigen::ArrayXd(cache.c.row(position(step - 1, n, reverse)).transpose().array()) : zero.array();
    const Eigen::ArrayXd i = cache.i.row(t).transpose().array();
    const Eigen::ArrayXd f = cache.f.row(t).transpose().array();
    const Eigen::ArrayXd o = cache.o.row(t).transpose().array();
    const Eigen::ArrayXd g = cache.g.row(t).transpose().array();
    const Eigen::ArrayXd tanh_c = cache.c.row(t).transpose().array().tanh();

    const Eigen::ArrayXd dh = dH.row(t).transpose().array() + dh_next.array();
    const Eigen::ArrayXd dc = dh * o * (1.0 - tanh_c.square()) + dc_next;
    std::array<Eigen::VectorXd, kNumGates> da;
    da[kInputGate] = (dc * g * i * (1.0 - i)).matrix();
    da[kForgetGate] = (dc * c_prev * f * (1.0 - f)).matrix();
    da[kOutputGate] = (dh * tanh_c * o * (1.0 - o)).matrix();
    da[kCandidate] = (dc * i * (1.0 - g.square())).matrix();

    const Eigen::RowVectorXd x = X.row(t);
    dh_next.setZero();
    for (int k = 0; k < kNumGates; ++k) {
      grad.W[k].noalias() += da[k] * x;
      grad.U[k].noalias() += da[k] * h_prev.transpose();
      grad.b[k] += da[k];
      dX.row(t).noalias() += (w.W[k].transpose() * da[k]).transpose();
      dh_next.noalias() += w.U[k].transpose() * da[k];
    }
    dc_next = dc * f;
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::vector<TensorRef> TaggerParams::tensors() {
  std::vector<TensorRef> out;
  append_direction(out, "forward", forward);
  append_direction(out, "backward", backward);
  out.push_back({"W_out", &W_out});
  out.push_back({"b_out", &b_out});
  return out;
}

std::vector<ConstTensorRef> TaggerParams::tensors() const {
  std::vector<ConstTensorRef> out;
  for (const auto& t : const_cast<TaggerParams*>(this)->tensors()) out.push_back({t.name, t.tensor});
  return out;
}

std::size_t TaggerParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += static_cast<std::size_t>(t.tensor->size());
  return n;
}

TaggerParams TaggerParams::zeros(int input_dim, int hidden_dim) {
  TaggerParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  for (auto* dir : {&p.forward, &p.backward}) {
    for (int g = 0; g < kNumGates; ++g) {
      dir->W[g] = Eigen::MatrixXd::Zero(hidden_dim, input_dim);
      dir->U[g] = Eigen::MatrixXd::Zero(hidden_dim, hidden_dim);
      dir->b[g] = Eigen::MatrixXd::Zero(hidden_dim, 1);
    }
  }
  p.W_out = Eigen::MatrixXd::Zero(kNumLabels, 2 * hidden_dim);
  p.b_out = Eigen::MatrixXd::Zero(kNumLabels, 1);
  return p;
}

bool TaggerParams::operator==(const TaggerParams& other) const {
  if (input_dim != other.input_dim || hidden_dim != other.hidden_dim) return false;
  const auto a = tensors();
  const auto b = other.tensors();
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].tensor->rows() != b[k].tensor->rows() || a[k].tensor->cols() != b[k].tensor->cols() ||
        *a[k].tensor != *b[k].tensor) {
      return false;
    }
  }
  return true;
}

bool TaggerModel::operator==(const TaggerModel& other) const {
  return vocab_hash == other.vocab_hash && params == other.params && embeddings.rows() == other.embeddings.rows() &&
         embeddings.cols() == other.embeddings.cols() && embeddings == other.embeddings;
}

TaggerParams init_params(std::uint64_t seed, int input_dim, int hidden_dim) {
  if (input_dim < 1 || hidden_dim < 1) throw ValidationError("tagger dimensions must be at least 1");
  TaggerParams p = TaggerParams::zeros(input_dim, hidden_dim);
  Rng rng(seed);
  for (auto& t : p.tensors()) {
    const bool bias = t.name == "b_out" || t.name.find(".b_") != std::string::npos;
    if (!bias) fill_uniform(*t.tensor, rng);
  }
  p.forward.b[kForgetGate].setOnes();
  p.backward.b[kForgetGate].setOnes();
  return p;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(r).array() - m).exp().matrix();
    out.row(r) = e / e.sum();
  }
  return out;
}

ForwardResult blstm_forward(const TaggerParams& params, const Eigen::MatrixXd& inputs) {
  check_params(params);
  if (inputs.rows() < 1) throw ValidationError("cannot tag an empty sentence");
  if (inputs.cols() != params.input_dim) {
    throw ValidationError("dimension mismatch in tensor inputs: expected " + std::to_string(params.input_dim) +
                          " columns, got " + std::to_string(inputs.cols()));
  }
  ForwardResult r;
  r.cache.inputs = inputs;
  run_direction(params.forward, inputs, false, r.cache.forward);
  run_direction(params.backward, inputs, true, r.cache.backward);
  const Eigen::Index H = params.hidden_dim;
  const auto W_f = params.W_out.leftCols(H);
  const auto W_b = params.W_out.rightCols(H);
  r.cache.logits = r.cache.forward.h * W_f.transpose() + r.cache.backward.h * W_b.transpose();
  r.cache.logits.rowwise() += params.b_out.col(0).transpose();
  r.distribution = softmax_rows(r.cache.logits);
  return r;
}

LossResult sentence_loss(const TagDistribution& distribution, const std::vector<TokenLabel>& gold) {
  if (static_cast<std::size_t>(distribution.rows()) != gold.size()) {
    throw ValidationError("sentence_loss: " + std::to_string(distribution.rows()) + " distributions for " +
                          std::to_string(gold.size()) + " gold labels");
  }
  if (gold.empty()) throw ValidationError("sentence_loss on an empty sentence");
  LossResult r;
  for (std::size_t t = 0; t < gold.size(); ++t) {
    double p = distribution(static_cast<Eigen::Index>(t), static_cast<int>(gold[t]));
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      ++r.clamped_tokens;
    }
    r.loss -= std::log(p);
  }
  r.loss /= static_cast<double>(gold.size());
  return r;
}

TaggerGradients param_gradients(const TaggerParams& params, const Eigen::MatrixXd& inputs,
                                const std::vector<TokenLabel>& gold) {
  const ForwardResult fwd = blstm_forward(params, inputs);
  const Eigen::Index n = inputs.rows();
  const Eigen::Index H = params.hidden_dim;
  TaggerGradients out;
  out.loss = sentence_loss(fwd.distribution, gold).loss;
  out.distribution = fwd.distribution;
  out.params = TaggerParams::zeros(params.input_dim, params.hidden_dim);
  out.inputs = Eigen::MatrixXd::Zero(n, inputs.cols());

  // d(mean CE)/d(logits); a clamped token contributes a constant.
  Eigen::MatrixXd dz = fwd.distribution;
  for (Eigen::Index t = 0; t < n; ++t) {
    const int label = static_cast<int>(gold[static_cast<std::size_t>(t)]);
    if (fwd.distribution(t, label) < kProbabilityFloor) {
      dz.row(t).setZero();
    } else {
      dz(t, label) -= 1.0;
    }
  }
  dz /= static_cast<double>(n);

  Eigen::MatrixXd hcat(n, 2 * H);
  hcat << fwd.cache.forward.h, fwd.cache.backward.h;
  out.params.W_out = dz.transpose() * hcat;
  out.params.b_out = dz.colwise().sum().transpose();
  const Eigen::MatrixXd dhcat = dz * params.W_out;  // n x 2H
  backprop_direction(params.forward, inputs, fwd.cache.forward, false, dhcat.leftCols(H), out.params.forward, out.inputs);
  backprop_direction(params.backward, inputs, fwd.cache.backward, true, dhcat.rightCols(H), out.params.backward,
                     out.inputs);

  for (Eigen::Index t = 0; t < n; ++t) {
    if (!out.inputs.row(t).allFinite()) {
      throw NumericError("NaN/Inf in gradient of tensor inputs at token " + std::to_string(t));
    }
  }
  for (const auto& t : out.params.tensors()) {
    if (!t.tensor->allFinite()) throw NumericError("NaN/Inf in gradient of tensor " + t.name);
  }
  return out;
}


GradientCheckReport gradient_check(const TaggerParams& params, const Eigen::MatrixXd& inputs,
                                   const std::vector<TokenLabel>& gold, double eps, double tolerance,
                                   std::uint64_t sample_seed) {
  if (!(eps > 0.0)) throw ValidationError("gradient_check: eps must be positive");
  TaggerGradients analytic = param_gradients(params, inputs, gold);

  TaggerParams probe = params;
  Eigen::MatrixXd probe_inputs = inputs;
  auto probe_tensors = probe.tensors();
  probe_tensors.push_back({"inputs", &probe_inputs});
  auto grad_tensors = analytic.params.tensors();
  grad_tensors.push_back({"inputs", &analytic.inputs});

  struct Coordinate {
    std::size_t tensor;
    Eigen::Index index;
  };
  std::vector<Coordinate> coords;
  for (std::size_t k = 0; k < probe_tensors.size(); ++k) {
    for (Eigen::Index i = 0; i < probe_tensors[k].tensor->size(); ++i) coords.push_back({k, i});
  }
  constexpr std::size_t kMaxCoordinates = 10'000;
  if (coords.size() > kMaxCoordinates) {
    Rng rng(sample_seed);
    rng.shuffle(coords);
    coords.resize(kMaxCoordinates);
  }

  const auto loss_at = [&] { return sentence_loss(blstm_forward(probe, probe_inputs).distribution, gold).loss; };
  GradientCheckReport report;
  for (const auto& [k, i] : coords) {
    double& x = probe_tensors[k].tensor->data()[i];
    const double saved = x;
    x = saved + eps;
    const double plus = loss_at();
    x = saved - eps;
    const double minus = loss_at();
    x = saved;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double a = grad_tensors[k].tensor->data()[i];
    const double err = gradient_relative_error(a, numeric);
    ++report.coordinates_checked;
    if (report.worst_tensor.empty() || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_tensor = probe_tensors[k].name;
      const Eigen::Index rows = probe_tensors[k].tensor->rows();
      report.worst_row = i % rows;
      report.worst_col = i / rows;
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

std::vector<TaggedSentence> annotated_sentences(const Corpus& corpus, const std::set<std::string>* videos) {
  std::vector<TaggedSentence> out;
  for (const std::size_t idx : corpus.annotated_subset) {
    const Sentence& s = corpus.sentences[idx];
    if (videos && !videos->count(s.video_id)) continue;
    out.push_back({s.tokens, *s.gold_labels});
  }
  return out;
}

TaggerModel train_tagger(const std::vector<TaggedSentence>& sentences, const EmbeddingModel& embeddings,
                         const TaggerConfig& config, TrainingLog* log) {
  if (sentences.empty()) throw ValidationError("train_tagger: no annotated sentences");
  for (const auto& s : sentences) {
    if (s.tokens.empty() || s.tokens.size() != s.labels.size()) {
      throw ValidationError("train_tagger: every sentence needs one label per token");
    }
  }
  if (embeddings.input_vectors.rows() != static_cast<Eigen::Index>(embeddings.vocab.size())) {
    throw ValidationError("train_tagger: embedding rows do not match the vocabulary");
  }
  const int D = static_cast<int>(embeddings.dim());
  TaggerModel model{init_params(config.seed, D, config.hidden_dim), embeddings.input_vectors, embeddings.vocab.hash()};

  std::vector<std::vector<std::size_t>> ids;
  for (const auto& s : sentences) ids.push_back(embeddings.vocab.encode(s.tokens));

  const auto record = [&](std::size_t epoch, double loss_sum, std::size_t correct, std::size_t total) {
    if (log) {
      log->epochs.push_back({epoch, loss_sum / static_cast<double>(sentences.size()),
                             static_cast<double>(correct) / static_cast<double>(total)});
    }
  };
  const auto count_correct = [](const TagDistribution& dist, const std::vector<TokenLabel>& gold) {
    const auto predicted = labels_from_distribution(dist);
    std::size_t c = 0;
    for (std::size_t t = 0; t < gold.size(); ++t) c += predicted[t] == gold[t] ? 1 : 0;
    return c;
  };

  std::size_t total_tokens = 0;
  if (log) {
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t k = 0; k < sentences.size(); ++k) {
      const auto dist = blstm_forward(model.params, model.embeddings(ids[k], Eigen::all)).distribution;
      loss_sum += sentence_loss(dist, sentences[k].labels).loss;
      correct += count_correct(dist, sentences[k].labels);
      total_tokens += sentences[k].tokens.size();
    }
    record(0, loss_sum, correct, total_tokens);
  }

  Rng rng(config.seed + 1);
  std::vector<std::size_t> order(sentences.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const std::size_t k : order) {
      const Eigen::MatrixXd X = model.embeddings(ids[k], Eigen::all);
      TaggerGradients grads = param_gradients(model.params, X, sentences[k].labels);
      if (!std::isfinite(grads.loss)) throw NumericError("tagger training diverged at epoch " + std::to_string(epoch));
      if (log) {
        loss_sum += grads.loss;
        correct += count_correct(grads.distribution, sentences[k].labels);
      }

      double sq = config.freeze_embeddings ? 0.0 : grads.inputs.squaredNorm();
      for (const auto& t : grads.params.tensors()) sq += t.tensor->squaredNorm();
      const double norm = std::sqrt(sq);
      const double scale = (config.clip_norm > 0.0 && norm > config.clip_norm) ? config.clip_norm / norm : 1.0;
      const double step = config.learning_rate * scale;

      auto param_tensors = model.params.tensors();
      const auto grad_tensors = grads.params.tensors();
      for (std::size_t t = 0; t < param_tensors.size(); ++t) *param_tensors[t].tensor -= step * *grad_tensors[t].tensor;
      if (!config.freeze_embeddings) {
        for (std::size_t t = 0; t < ids[k].size(); ++t) {
          model.embeddings.row(static_cast<Eigen::Index>(ids[k][t])) -= step * grads.inputs.row(static_cast<Eigen::Index>(t));
        }
      }
    }
    if (log) record(epoch, loss_sum, correct, total_tokens);
  }
  return model;
}

TagDistribution tag_distribution(const TaggerModel& model, const Vocabulary& vocab,
                                 const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw ValidationError("cannot tag an empty sentence");
  if (vocab.hash() != model.vocab_hash) throw ValidationError("tagger model was trained with a different vocabulary");
  const auto ids = vocab.encode(tokens);
  return blstm_forward(model.params, model.embeddings(ids, Eigen::all)).distribution;
}

std::vector<TokenLabel> labels_from_distribution(const TagDistribution& distribution) {
  std::vector<TokenLabel> labels;
  labels.reserve(static_cast<std::size_t>(distribution.rows()));
  for (Eigen::Index t = 0; t < distribution.rows(); ++t) {
    labels.push_back(distribution(t, 1) > distribution(t, 0) ? TokenLabel::MT : TokenLabel::NA);
  }
  return labels;
}

std::vector<TokenLabel> tag_sentence(const TaggerModel& model, const Vocabulary& vocab,
                                     const std::vector<std::string>& tokens) {
  return labels_from_distribution(tag_distribution(model, vocab, tokens));
}

std::vector<MedicalSpan> extract_spans(const std::vector<std::string>& tokens, const std::vector<TokenLabel>& labels) {
  if (tokens.size() != labels.size()) throw ValidationError("extract_spans: tokens and labels differ in length");
  std::vector<MedicalSpan> spans;
  std::size_t t = 0;
  while (t < labels.size()) {
    if (labels[t] != TokenLabel::MT) {
      ++t;
      continue;
    }
    MedicalSpan span{t, t, tokens[t]};
    while (t + 1 < labels.size() && labels[t + 1] == TokenLabel::MT) {
      ++t;
      span.text += " " + tokens[t];
    }
    span.end_token = t;
    spans.push_back(std::move(span));
    ++t;
  }
  return spans;
}

void TermLexicon::add(std::vector<std::string> term) {
  if (term.empty()) return;
  longest = std::max(longest, term.size());
  terms.insert(std::move(term));
}

TermLexicon parse_term_lexicon(std::string_view raw, std::string_view source) {
  TermLexicon lexicon;
  for (const auto line : split_lines(checked_utf8(raw, source))) {
    const std::string_view entry = trim(line);
    if (entry.empty() || entry.front() == '#') continue;
    lexicon.add(tokenize(entry));
  }
  return lexicon;
}

std::vector<TokenLabel> lexicon_baseline_tag(const TermLexicon& lexicon, const std::vector<std::string>& tokens) {
  std::vector<TokenLabel> labels(tokens.size(), TokenLabel::NA);
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t matched = 0;
    for (std::size_t len = std::min(lexicon.longest, tokens.size() - i); len >= 1; --len) {
      const std::vector<std::string> candidate(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                               tokens.begin() + static_cast<std::ptrdiff_t>(i + len));
      if (lexicon.terms.count(candidate)) {
        matched = len;
        break;
      }
    }
    if (matched == 0) {
      ++i;
      continue;
    }
    for (std::size_t k = i; k < i + matched; ++k) labels[k] = TokenLabel::MT;
    i += matched;
  }
  return labels;
}

std::string write_tagger_model(const TaggerModel& model) {
  std::string out = "medlit-tagger v1\n";
  out += "dims " + std::to_string(model.params.input_dim) + " " + std::to_string(model.params.hidden_dim) + "\n";
  out += "vocab " + hex64(model.vocab_hash) + "\n";
  auto tensors = model.params.tensors();
  tensors.push_back({"embeddings", &model.embeddings});
  for (const auto& t : tensors) {
    const Eigen::MatrixXd& m = *t.tensor;
    out += "tensor " + t.name + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (c) out.push_back(' ');
        out += format_double(m(r, c));
      }
      out.push_back('\n');
    }
  }
  out += "end\n";
  return out;
}

TaggerModel parse_tagger_model(std::string_view raw, std::string_view source) {
  const auto lines = split_lines(checked_utf8(raw, source));
  std::size_t pos = 0;
  const auto next = [&]() -> std::string_view {
    if (pos >= lines.size()) throw ParseError(std::string(source), pos + 1, "unexpected end of tagger model");
    return lines[pos++];
  };
  const auto fail = [&](const std::string& msg) { throw ParseError(std::string(source), pos, msg); };

  if (next() != "medlit-tagger v1") fail("expected header 'medlit-tagger v1'");
  const auto dims = split(next(), ' ');
  if (dims.size() != 3 || dims[0] != "dims") fail("expected 'dims <D> <H>'");
  TaggerModel model;
  int D = 0;
  int H = 0;
  try {
    D = static_cast<int>(parse_int(dims[1], "D"));
    H = static_cast<int>(parse_int(dims[2], "H"));
  } catch (const ValidationError& e) {
    fail(e.what());
  }
  if (D < 1 || H < 1) fail("dims must be positive");
  const auto vocab = split(next(), ' ');
  if (vocab.size() != 2 || vocab[0] != "vocab" || vocab[1].size() != 16) fail("expected 'vocab <16 hex digits>'");
  try {
    model.vocab_hash = std::stoull(vocab[1], nullptr, 16);
  } catch (const std::exception&) {
    fail("invalid vocab hash");
  }

  model.params = TaggerParams::zeros(D, H);
  auto tensors = model.params.tensors();
  tensors.push_back({"embeddings", &model.embeddings});
  for (auto& t : tensors) {
    const auto header = split(next(), ' ');
    if (header.size() != 4 || header[0] != "tensor" || header[1] != t.name) fail("expected tensor " + t.name);
    long long rows = 0;
    long long cols = 0;
    try {
      rows = parse_int(header[2], "rows");
      cols = parse_int(header[3], "cols");
    } catch (const ValidationError& e) {
      fail(e.what());
    }
    if (t.name == "embeddings") {
      if (rows < 1 || cols != D) fail("embeddings must have D columns");
      t.tensor->resize(rows, cols);
    } else if (rows != t.tensor->rows() || cols != t.tensor->cols()) {
      fail("tensor " + t.name + " has the wrong shape");
    }
    for (long long r = 0; r < rows; ++r) {
      const auto values = split(next(), ' ');
      if (static_cast<long long>(values.size()) != cols) fail("row of " + t.name + " has the wrong length");
      for (long long c = 0; c < cols; ++c) {
        try {
          (*t.tensor)(r, c) = parse_double(values[static_cast<std::size_t>(c)], t.name);
        } catch (const ValidationError& e) {
          fail(e.what());
        }
      }
    }
  }
  if (next() != "end") fail("expected 'end'");
  return model;
}

}  // namespace medlit
