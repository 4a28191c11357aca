#include "medlit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>

#include "json.hpp"

#include "medlit/corpus.hpp"
#include "medlit/embeddings.hpp"
#include "medlit/frames.hpp"
#include "medlit/tagger.hpp"

namespace medlit {
namespace fs = std::filesystem;

namespace {

enum class ValueKind { Path, Integer, Count, Real, Flag, Choice };

struct KeySpec {
  ConfigKey key;
  ValueKind kind;
  std::vector<std::string> choices;
};

const std::vector<KeySpec>& specs() {
  static const std::vector<KeySpec> table = {
      {{"metadata", "", "video metadata JSONL (required for ingest)", true}, ValueKind::Path, {}},
      {{"captions_dir", "", "directory of <video_id>.srt / .vtt caption files", true}, ValueKind::Path, {}},
      {{"annotations", "", "token and video annotation TSV (required for ingest)", true}, ValueKind::Path, {}},
      {{"frame_predictions", "", "per-frame top-5 predictions CSV (required for frames)", true}, ValueKind::Path, {}},
      {{"object_lexicon", "", "medical object categories, one per line (required for frames)", true},
       ValueKind::Path, {}},
      {{"term_lexicon", "", "medical term list for the lexicon baseline", true}, ValueKind::Path, {}},
      {{"second_rater_annotations", "", "second annotator's TSV for agreement", true}, ValueKind::Path, {}},
      {{"output_dir", "medlit_out", "where stage outputs go", true}, ValueKind::Path, {}},
      {{"seed", "1", "global seed", false}, ValueKind::Integer, {}},
      {{"max_vocab", "5000", "vocabulary size before UNK", false}, ValueKind::Count, {}},
      {{"split.train_fraction", "0.8", "share of labelled videos used for training", false}, ValueKind::Real, {}},
      {{"split.stratify", "true", "keep the class ratio in both parts", false}, ValueKind::Flag, {}},
      {{"emb.dim", "50", "embedding dimension", false}, ValueKind::Count, {}},
      {{"emb.window", "5", "skip-gram context window", false}, ValueKind::Count, {}},
      {{"emb.negatives", "5", "negative samples per pair", false}, ValueKind::Count, {}},
      {{"emb.epochs", "5", "skip-gram epochs", false}, ValueKind::Count, {}},
      {{"emb.learning_rate", "0.025", "initial skip-gram learning rate", false}, ValueKind::Real, {}},
      {{"tagger.hidden", "150", "LSTM units per direction", false}, ValueKind::Count, {}},
      {{"tagger.epochs", "10", "tagger training epochs", false}, ValueKind::Count, {}},
      {{"tagger.learning_rate", "0.05", "tagger SGD learning rate", false}, ValueKind::Real, {}},
      {{"tagger.clip_norm", "5", "global gradient norm clip", false}, ValueKind::Real, {}},
      {{"tagger.freeze_embeddings", "false", "keep embeddings fixed while training the tagger", false},
       ValueKind::Flag, {}},
      {{"frames.threshold", "0.1", "minimum probability for an object to count", false}, ValueKind::Real, {}},
      {{"frames.count_mode", "occurrences", "occurrences | distinct", false}, ValueKind::Choice,
       {"occurrences", "distinct"}},
      {{"classifier.features", "counts", "counts | rates | combined", false}, ValueKind::Choice,
       {"counts", "rates", "combined"}},
      {{"classifier.epochs", "500", "full-batch gradient steps", false}, ValueKind::Count, {}},
      {{"classifier.learning_rate", "0.1", "gradient step size", false}, ValueKind::Real, {}},
      {{"classifier.l2_lambda", "0.001", "L2 penalty", false}, ValueKind::Real, {}},
      {{"classifier.threshold", "0.5", "probability at or above which a video is High MK", false}, ValueKind::Real,
       {}},
  };
  return table;
}

const KeySpec& spec_of(const std::string& key) {
  for (const auto& s : specs()) {
    if (s.key.name == key) return s;
  }
  throw ValidationError("unknown config key '" + key + "'");
}

// ---- stage file names ----

constexpr const char* kCorpusDir = "corpus";
constexpr const char* kSplitFile = "split.tsv";
constexpr const char* kEmbeddingsFile = "embeddings.txt";
constexpr const char* kEmbedLogFile = "embed_log.tsv";
constexpr const char* kTaggerFile = "tagger.model";
constexpr const char* kTaggerLogFile = "tagger_log.tsv";
constexpr const char* kTaggedFile = "tagged.tsv";
constexpr const char* kObjectsFile = "objects.csv";
constexpr const char* kFeaturesFile = "features.csv";
constexpr const char* kClassifierFile = "classifier.model";
constexpr const char* kReportFile = "report.txt";
constexpr const char* kReportCsvFile = "report.csv";
constexpr const char* kPredictionsFile = "predictions.csv";
constexpr const char* kManifestFile = "manifest.json";

struct StageContext {
  const RunConfig& config;
  fs::path out;
  Warnings& warnings;
  std::vector<std::string> outputs;  // paths relative to out
};

fs::path upstream(const StageContext& ctx, const char* name, const std::string& stage) {
  const fs::path p = ctx.out / name;
  if (!fs::exists(p)) throw MissingUpstreamError(stage, p);
  return p;
}

std::string read_upstream(const StageContext& ctx, const char* name, const std::string& stage) {
  return read_file(upstream(ctx, name, stage));
}

void emit(StageContext& ctx, const char* name, std::string_view content) {
  write_file(ctx.out / name, content);
  ctx.outputs.push_back(name);
}

Corpus load_ingested(const StageContext& ctx) {
  return load_saved_corpus(upstream(ctx, kCorpusDir, "ingest"));
}

fs::path require_path(const RunConfig& config, const std::string& key, const std::string& stage) {
  const auto p = config.path(key);
  if (!p) throw ValidationError("stage '" + stage + "' needs config key '" + key + "'");
  if (!fs::exists(*p)) throw ValidationError(key + ": no such file or directory: " + p->string());
  return *p;
}

// ---- split.tsv ----

struct SplitTable {
  std::map<std::string, bool> is_train;  // labelled videos only

  std::set<std::string> test_ids() const {
    std::set<std::string> out;
    for (const auto& [id, train] : is_train) {
      if (!train) out.insert(id);
    }
    return out;
  }
};

std::string write_split(const DatasetSplit& split, const Corpus& corpus) {
  std::map<std::string, std::string> rows;
  for (const auto& id : split.train) rows[id] = "train";
  for (const auto& id : split.test) rows[id] = "test";
  std::string out = "video_id\tlabel\tpartition\n";
  for (const auto& [id, part] : rows) {
    out += id + "\t" + std::string(to_string(*corpus.find_video(id)->knowledge_label)) + "\t" + part + "\n";
  }
  return out;
}

SplitTable parse_split(std::string_view raw, std::string_view source) {
  SplitTable table;
  const auto lines = split_lines(checked_utf8(raw, source));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto f = split(lines[i], '\t');
    if (f.size() != 3 || (f[2] != "train" && f[2] != "test")) {
      throw ParseError(std::string(source), i + 1, "expected video_id, label, train|test");
    }
    table.is_train[f[0]] = f[2] == "train";
  }
  return table;
}

// ---- tagged.tsv ----

struct TaggedRow {
  std::string video_id;
  SentenceSource source = SentenceSource::Description;
  std::size_t sentence_index = 0;
  std::vector<std::string> tokens;
  std::vector<TokenLabel> predicted;
  std::optional<std::vector<TokenLabel>> gold;
};

std::string write_tagged(const std::vector<TaggedRow>& rows) {
  std::string out = "video_id\tsource\tsentence_index\ttoken_index\ttoken\tpredicted\tgold\n";
  for (const auto& r : rows) {
    for (std::size_t t = 0; t < r.tokens.size(); ++t) {
      out += r.video_id + "\t" + std::string(to_string(r.source)) + "\t" + std::to_string(r.sentence_index) + "\t" +
             std::to_string(t) + "\t" + r.tokens[t] + "\t" + std::string(to_string(r.predicted[t])) + "\t" +
             (r.gold ? std::string(to_string((*r.gold)[t])) : "-") + "\n";
    }
  }
  return out;
}

std::vector<TaggedRow> parse_tagged(std::string_view raw, std::string_view source) {
  std::vector<TaggedRow> rows;
  const auto lines = split_lines(checked_utf8(raw, source));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], '\t');
    const auto fail = [&](const std::string& msg) { return ParseError(std::string(source), i + 1, msg); };
    if (f.size() != 7) throw fail("expected 7 columns");
    const auto src = parse_sentence_source(f[1]);
    const auto predicted = parse_token_label(f[5]);
    if (!src || !predicted) throw fail("bad source or label");
    const auto sentence = static_cast<std::size_t>(parse_int(f[2], "sentence_index"));
    const auto token = static_cast<std::size_t>(parse_int(f[3], "token_index"));
    if (token == 0) rows.push_back({f[0], *src, sentence, {}, {}, std::nullopt});
    if (rows.empty()) throw fail("token rows out of order");
    TaggedRow& r = rows.back();
    if (r.video_id != f[0] || r.source != *src || r.sentence_index != sentence ||
        token != r.tokens.size()) {
      throw fail("token rows out of order");
    }
    r.tokens.push_back(f[4]);
    r.predicted.push_back(*predicted);
    if (f[6] != "-") {
      const auto gold = parse_token_label(f[6]);
      if (!gold) throw fail("bad gold label");
      if (token == 0) r.gold.emplace();
      if (!r.gold) throw fail("gold labels missing for part of a sentence");
      r.gold->push_back(*gold);
    } else if (r.gold) {
      throw fail("gold labels missing for part of a sentence");
    }
  }
  return rows;
}

// ---- objects.csv ----

std::string write_objects(const std::vector<VideoObjectSummary>& summaries) {
  std::string out = "video_id,frames,medical_objects,distinct_categories\n";
  for (const auto& s : summaries) {
    std::string cats;
    for (const auto& c : s.distinct_medical_categories) cats += (cats.empty() ? "" : ";") + c;
    out += s.video_id + "," + std::to_string(s.frames_seen) + "," + std::to_string(s.medical_object_count) + ",\"" +
           cats + "\"\n";
  }
  return out;
}

std::map<std::string, VideoObjectSummary> parse_objects(std::string_view raw, std::string_view source) {
  std::map<std::string, VideoObjectSummary> out;
  const auto lines = split_lines(checked_utf8(raw, source));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() < 3) throw ParseError(std::string(source), i + 1, "expected video_id,frames,medical_objects,...");
    VideoObjectSummary s;
    s.video_id = f[0];
    s.frames_seen = static_cast<std::size_t>(parse_int(f[1], "frames"));
    s.medical_object_count = static_cast<std::size_t>(parse_int(f[2], "medical_objects"));
    out[s.video_id] = s;
  }
  return out;
}

// ---- features ----

std::vector<FeatureVector> video_features(const Corpus& corpus, const std::vector<TaggedRow>& tagged,
                                          const std::map<std::string, VideoObjectSummary>& objects) {
  std::map<std::string, std::pair<std::vector<LabelledTokens>, std::vector<LabelledTokens>>> by_video;
  for (const auto& r : tagged) {
    auto& [cap, desc] = by_video[r.video_id];
    (r.source == SentenceSource::Caption ? cap : desc).push_back({r.video_id, r.predicted});
  }
  std::vector<FeatureVector> out;
  for (const auto& v : corpus.videos) {
    if (!v.knowledge_label) continue;
    const auto it = objects.find(v.video_id);
    const VideoObjectSummary summary = it != objects.end() ? it->second : VideoObjectSummary{v.video_id, 0, 0, {}};
    const auto& texts = by_video[v.video_id];
    out.push_back(build_features(v, texts.first, texts.second, summary));
  }
  return out;
}

FeatureMode feature_mode(const RunConfig& config) { return *parse_feature_mode(config.raw("classifier.features")); }

// ---- stages ----

void stage_ingest(StageContext& ctx) {
  const auto& c = ctx.config;
  const auto metadata = require_path(c, "metadata", "ingest");
  const auto annotations = require_path(c, "annotations", "ingest");
  const auto captions = c.path("captions_dir").value_or(fs::path());
  const Corpus corpus = load_annotated_corpus(metadata, captions, annotations, &ctx.warnings);

  Corpus labelled;
  for (const auto& v : corpus.videos) {
    if (v.knowledge_label) labelled.videos.push_back(v);
  }
  if (labelled.videos.size() < corpus.videos.size()) {
    ctx.warnings.push_back(std::to_string(corpus.videos.size() - labelled.videos.size()) +
                           " videos have no knowledge label and are left out of the split");
  }
  const DatasetSplit split =
      split_dataset(labelled, c.real("split.train_fraction"), c.sub_seed("split"), c.flag("split.stratify"));

  fs::remove_all(ctx.out / kCorpusDir);
  save_corpus(corpus, ctx.out / kCorpusDir);
  for (const auto& entry : fs::recursive_directory_iterator(ctx.out / kCorpusDir)) {
    if (entry.is_regular_file()) ctx.outputs.push_back(fs::relative(entry.path(), ctx.out).generic_string());
  }
  std::sort(ctx.outputs.begin(), ctx.outputs.end());
  emit(ctx, kSplitFile, write_split(split, corpus));
}

void stage_embed(StageContext& ctx) {
  const auto& c = ctx.config;
  const Corpus corpus = load_ingested(ctx);
  std::vector<std::vector<std::string>> sentences;
  for (const auto& s : corpus.sentences) sentences.push_back(s.tokens);
  const Vocabulary vocab = Vocabulary::build(sentences, c.count("max_vocab"));
  EmbeddingConfig cfg;
  cfg.dim = c.count("emb.dim");
  cfg.window = c.count("emb.window");
  cfg.negatives = c.count("emb.negatives");
  cfg.epochs = c.count("emb.epochs");
  cfg.learning_rate = c.real("emb.learning_rate");
  cfg.seed = c.sub_seed("embed");
  const auto result = train_embeddings(sentences, vocab, cfg);
  std::string log = "epoch\tmean_loss\n0\t" + format_double(result.initial_loss) + "\n";
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
    log += std::to_string(e + 1) + "\t" + format_double(result.epoch_losses[e]) + "\n";
  }
  log += "final\t" + format_double(result.final_loss) + "\n";
  emit(ctx, kEmbeddingsFile, write_embedding_model(result.model));
  emit(ctx, kEmbedLogFile, log);
}

EmbeddingModel load_embeddings(const StageContext& ctx) {
  return parse_embedding_model(read_upstream(ctx, kEmbeddingsFile, "embed"), kEmbeddingsFile);
}

void stage_train_tagger(StageContext& ctx) {
  const auto& c = ctx.config;
  const Corpus corpus = load_ingested(ctx);
  const SplitTable split = parse_split(read_upstream(ctx, kSplitFile, "ingest"), kSplitFile);
  const EmbeddingModel embeddings = load_embeddings(ctx);

  // Every annotated sentence outside the test videos trains the tagger.
  const auto test = split.test_ids();
  std::set<std::string> train_videos;
  for (const auto& v : corpus.videos) {
    if (!test.count(v.video_id)) train_videos.insert(v.video_id);
  }
  const auto sentences = annotated_sentences(corpus, &train_videos);
  TaggerConfig cfg;
  cfg.hidden_dim = static_cast<int>(c.count("tagger.hidden"));
  cfg.epochs = c.count("tagger.epochs");
  cfg.learning_rate = c.real("tagger.learning_rate");
  cfg.clip_norm = c.real("tagger.clip_norm");
  cfg.freeze_embeddings = c.flag("tagger.freeze_embeddings");
  cfg.seed = c.sub_seed("train-tagger");
  TrainingLog log;
  const TaggerModel model = train_tagger(sentences, embeddings, cfg, &log);
  std::string log_text = "epoch\tmean_loss\ttoken_accuracy\n";
  for (const auto& e : log.epochs) {
    log_text += std::to_string(e.epoch) + "\t" + format_double(e.mean_loss) + "\t" + format_double(e.token_accuracy) +
                "\n";
  }
  emit(ctx, kTaggerFile, write_tagger_model(model));
  emit(ctx, kTaggerLogFile, log_text);
}

void stage_tag(StageContext& ctx) {
  const Corpus corpus = load_ingested(ctx);
  const EmbeddingModel embeddings = load_embeddings(ctx);
  const TaggerModel model = parse_tagger_model(read_upstream(ctx, kTaggerFile, "train-tagger"), kTaggerFile);
  std::vector<TaggedRow> rows;
  for (const auto& s : corpus.sentences) {
    rows.push_back({s.video_id, s.source, s.index, s.tokens, tag_sentence(model, embeddings.vocab, s.tokens),
                    s.gold_labels});
  }
  emit(ctx, kTaggedFile, write_tagged(rows));
}

void stage_frames(StageContext& ctx) {
  const auto& c = ctx.config;
  const auto frames_path = require_path(c, "frame_predictions", "frames");
  const auto lexicon_path = require_path(c, "object_lexicon", "frames");
  const double threshold = c.real("frames.threshold");
  const CountMode mode = c.raw("frames.count_mode") == "distinct" ? CountMode::Distinct : CountMode::Occurrences;
  const Corpus corpus = load_ingested(ctx);
  const auto frames = parse_frame_predictions(read_file(frames_path), frames_path.string());
  const auto lexicon = parse_object_lexicon(read_file(lexicon_path), lexicon_path.string());
  auto grouped = group_by_video(frames);

  std::vector<VideoObjectSummary> summaries;
  for (const auto& v : corpus.videos) {
    const auto it = grouped.find(v.video_id);
    summaries.push_back(count_medical_objects(v.video_id, it == grouped.end() ? std::vector<FramePrediction>{} : it->second,
                                              lexicon, threshold, mode));
    if (it != grouped.end()) {
      const auto expected = sampling_schedule(v.duration_s).size();
      if (it->second.size() > expected) {
        ctx.warnings.push_back(v.video_id + ": " + std::to_string(it->second.size()) + " frames for a " +
                               std::to_string(v.duration_s) + " s video (schedule has " + std::to_string(expected) +
                               ")");
      }
      grouped.erase(it);
    }
  }
  for (const auto& [id, unused] : grouped) {
    ctx.warnings.push_back("frame predictions for unknown video '" + id + "' ignored");
  }
  emit(ctx, kObjectsFile, write_objects(summaries));
}

struct ClassifierInputs {
  Corpus corpus;
  SplitTable split;
  std::vector<FeatureVector> features;
};

ClassifierInputs classifier_inputs(const StageContext& ctx) {
  ClassifierInputs in;
  in.corpus = load_ingested(ctx);
  in.split = parse_split(read_upstream(ctx, kSplitFile, "ingest"), kSplitFile);
  const auto tagged = parse_tagged(read_upstream(ctx, kTaggedFile, "tag"), kTaggedFile);
  const auto objects = parse_objects(read_upstream(ctx, kObjectsFile, "frames"), kObjectsFile);
  in.features = video_features(in.corpus, tagged, objects);
  return in;
}

void stage_train_classifier(StageContext& ctx) {
  const auto& c = ctx.config;
  const ClassifierInputs in = classifier_inputs(ctx);
  const FeatureMode mode = feature_mode(c);
  std::vector<std::vector<double>> x;
  std::vector<KnowledgeLabel> y;
  for (const auto& f : in.features) {
    const auto it = in.split.is_train.find(f.video_id);
    if (it == in.split.is_train.end() || !it->second) continue;
    x.push_back(feature_values(f, mode));
    y.push_back(*in.corpus.find_video(f.video_id)->knowledge_label);
  }
  LogisticConfig cfg;
  cfg.epochs = c.count("classifier.epochs");
  cfg.learning_rate = c.real("classifier.learning_rate");
  cfg.l2_lambda = c.real("classifier.l2_lambda");
  cfg.threshold = c.real("classifier.threshold");
  cfg.seed = c.sub_seed("train-classifier");
  LogisticTrainingLog log;
  const LogisticModel model = train_logistic(x, y, feature_names(mode), cfg, &log);
  ctx.warnings.insert(ctx.warnings.end(), log.warnings.begin(), log.warnings.end());
  emit(ctx, kFeaturesFile, write_feature_table(in.features, in.corpus));
  emit(ctx, kClassifierFile, write_logistic_model(model));
}

std::vector<TokenSpan> spans_of(const std::vector<TokenLabel>& labels) {
  std::vector<TokenSpan> out;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] != TokenLabel::MT) continue;
    if (t > 0 && labels[t - 1] == TokenLabel::MT) {
      out.back().end = t;
    } else {
      out.push_back({t, t});
    }
  }
  return out;
}

NerEvaluation evaluate_ner(std::string system, const std::vector<SentenceSpans>& sentences) {
  NerEvaluation e{std::move(system), std::nullopt, std::nullopt};
  if (sentences.empty()) return e;
  e.token = span_f_measure(sentences, SpanMode::Token);
  e.exact_span = span_f_measure(sentences, SpanMode::ExactSpan);
  return e;
}

std::vector<AgreementEvaluation> evaluate_agreement(const RunConfig& config, const Corpus& corpus) {
  AgreementEvaluation terms{"Medical terms", std::nullopt};
  AgreementEvaluation videos{"Video knowledge", std::nullopt};
  const auto path = config.path("second_rater_annotations");
  if (path) {
    if (!fs::exists(*path)) throw ValidationError("second_rater_annotations: no such file: " + path->string());
    const auto rows = parse_annotations(read_file(*path), path->string());
    std::map<std::tuple<std::string, SentenceSource, std::size_t>, const Sentence*> gold;
    for (const std::size_t idx : corpus.annotated_subset) {
      const Sentence& s = corpus.sentences[idx];
      gold[{s.video_id, s.source, s.index}] = &s;
    }
    std::vector<std::string> a_terms, b_terms, a_videos, b_videos;
    for (const auto& r : rows) {
      if (r.video_label) {
        const VideoRecord* v = corpus.find_video(r.video_id);
        if (v && v->knowledge_label) {
          a_videos.emplace_back(to_string(*v->knowledge_label));
          b_videos.emplace_back(to_string(*r.video_label));
        }
      } else if (r.token_label && r.source) {
        const auto it = gold.find({r.video_id, *r.source, r.sentence_index});
        if (it != gold.end() && r.token_index < it->second->tokens.size()) {
          a_terms.emplace_back(to_string((*it->second->gold_labels)[r.token_index]));
          b_terms.emplace_back(to_string(*r.token_label));
        }
      }
    }
    if (!a_terms.empty()) terms.result = cohen_kappa(a_terms, b_terms);
    if (!a_videos.empty()) videos.result = cohen_kappa(a_videos, b_videos);
  }
  return {terms, videos};
}

void stage_evaluate(StageContext& ctx) {
  const auto& c = ctx.config;
  const LogisticModel model =
      parse_logistic_model(read_upstream(ctx, kClassifierFile, "train-classifier"), kClassifierFile);
  const ClassifierInputs in = classifier_inputs(ctx);
  const FeatureMode mode = feature_mode(c);
  if (model.feature_names != feature_names(mode)) {
    throw ValidationError("classifier.model was trained with different classifier.features; rerun train-classifier");
  }

  EvaluationResults results;
  std::vector<std::string> gold, predicted;
  std::string predictions = "video_id,gold,predicted,probability_high\n";
  for (const auto& f : in.features) {
    const auto it = in.split.is_train.find(f.video_id);
    if (it == in.split.is_train.end() || it->second) continue;
    const Prediction p = predict_video(model, feature_values(f, mode), f.video_id);
    gold.emplace_back(to_string(*in.corpus.find_video(f.video_id)->knowledge_label));
    predicted.emplace_back(to_string(p.label));
    predictions += f.video_id + "," + gold.back() + "," + predicted.back() + "," + format_double(p.probability_high) +
                   "\n";
  }
  results.classification = confusion(gold, predicted, {"high", "low"});

  // NER on annotated sentences of the test videos.
  const auto test = in.split.test_ids();
  const auto tagged = parse_tagged(read_upstream(ctx, kTaggedFile, "tag"), kTaggedFile);
  std::optional<TermLexicon> lexicon;
  if (const auto p = c.path("term_lexicon")) {
    if (!fs::exists(*p)) throw ValidationError("term_lexicon: no such file: " + p->string());
    lexicon = parse_term_lexicon(read_file(*p), p->string());
  }
  std::vector<SentenceSpans> blstm, baseline;
  for (const auto& r : tagged) {
    if (!r.gold || !test.count(r.video_id)) continue;
    ++results.ner_sentences;
    results.ner_tokens += r.tokens.size();
    const auto gold_spans = spans_of(*r.gold);
    blstm.push_back({r.tokens.size(), gold_spans, spans_of(r.predicted)});
    if (lexicon) baseline.push_back({r.tokens.size(), gold_spans, spans_of(lexicon_baseline_tag(*lexicon, r.tokens))});
  }
  results.ner.push_back(evaluate_ner("BLSTM", blstm));
  results.ner.push_back(evaluate_ner("Lexicon", baseline));
  results.agreement = evaluate_agreement(c, in.corpus);

  const Report report = write_report(results, c.echo(false));
  emit(ctx, kReportFile, report.text);
  emit(ctx, kReportCsvFile, report.csv);
  emit(ctx, kPredictionsFile, predictions);
}

using StageFn = void (*)(StageContext&);

StageFn stage_function(const std::string& stage) {
  static const std::map<std::string, StageFn> table = {
      {"ingest", stage_ingest},
      {"embed", stage_embed},
      {"train-tagger", stage_train_tagger},
      {"tag", stage_tag},
      {"frames", stage_frames},
      {"train-classifier", stage_train_classifier},
      {"evaluate", stage_evaluate},
  };
  const auto it = table.find(stage);
  if (it == table.end()) throw ValidationError("unknown stage '" + stage + "'");
  return it->second;
}

std::string cell(double value, bool undefined) { return undefined ? "n/a" : format_percent(value); }

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string rpad(const std::string& s, std::size_t width) {
  return s.size() < width ? std::string(width - s.size(), ' ') + s : s;
}

std::string csv_number(double value, bool undefined) { return undefined ? "" : format_double(value); }

void write_manifest(const fs::path& out, const RunConfig& config, const RunManifest& run) {
  using nlohmann::ordered_json;
  ordered_json manifest;
  const fs::path path = out / kManifestFile;
  if (fs::exists(path)) {
    try {
      manifest = ordered_json::parse(read_file(path));
    } catch (const nlohmann::json::exception&) {
      manifest = ordered_json::object();
    }
  }
  manifest["version"] = std::string(kArtifactVersion);
  ordered_json cfg = ordered_json::object();
  for (const auto& k : config_schema()) cfg[k.name] = config.raw(k.name);
  manifest["config"] = cfg;
  for (const auto& [name, digest] : run.input_digests) manifest["inputs"][name] = digest;
  for (const auto& s : run.stages) {
    ordered_json entry;
    entry["seconds"] = s.seconds;
    entry["outputs"] = ordered_json::object();
    for (const auto& [file, digest] : s.output_digests) entry["outputs"][file] = digest;
    manifest["stages"][s.stage] = entry;
  }
  write_file(path, manifest.dump(2) + "\n");
}

}  // namespace

MissingUpstreamError::MissingUpstreamError(std::string stage, const fs::path& path)
    : ValidationError("missing output of stage '" + stage + "' (" + path.string() + "); run '" + stage + "' first"),
      stage_(std::move(stage)) {}

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& s : specs()) out.push_back(s.key);
    return out;
  }();
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& s : specs()) values_[s.key.name] = s.key.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value, const fs::path& base) {
  const KeySpec& spec = spec_of(key);
  const std::string what = "config key '" + key + "'";
  switch (spec.kind) {
    case ValueKind::Path:
      break;
    case ValueKind::Integer:
      parse_int(value, what);
      break;
    case ValueKind::Count:
      if (parse_int(value, what) < 0) throw ValidationError(what + " must be non-negative");
      break;
    case ValueKind::Real:
      if (!std::isfinite(parse_double(value, what))) throw ValidationError(what + " must be finite");
      break;
    case ValueKind::Flag:
      if (value != "true" && value != "false") throw ValidationError(what + " must be true or false");
      break;
    case ValueKind::Choice:
      if (std::find(spec.choices.begin(), spec.choices.end(), value) == spec.choices.end()) {
        throw ValidationError(what + ": '" + value + "' is not one of the allowed values");
      }
      break;
  }
  values_[key] = value;
  if (spec.kind == ValueKind::Path) bases_[key] = base;
}

const std::string& RunConfig::raw(const std::string& key) const {
  spec_of(key);
  return values_.at(key);
}

double RunConfig::real(const std::string& key) const { return parse_double(raw(key), key); }
std::int64_t RunConfig::integer(const std::string& key) const { return parse_int(raw(key), key); }
std::size_t RunConfig::count(const std::string& key) const { return static_cast<std::size_t>(integer(key)); }
bool RunConfig::flag(const std::string& key) const { return raw(key) == "true"; }

std::optional<fs::path> RunConfig::path(const std::string& key) const {
  const std::string& value = raw(key);
  if (value.empty()) return std::nullopt;
  fs::path p(value);
  const auto it = bases_.find(key);
  if (p.is_relative() && it != bases_.end() && !it->second.empty()) p = it->second / p;
  return p.lexically_normal();
}

fs::path RunConfig::output_dir() const { return *path("output_dir"); }

std::uint64_t RunConfig::sub_seed(std::string_view stage) const { return seed() + fnv1a64(stage); }

std::string RunConfig::echo(bool include_output_dir) const {
  std::string out;
  for (const auto& k : config_schema()) {
    if (!include_output_dir && k.name == "output_dir") continue;
    out += k.name + " = " + values_.at(k.name) + "\n";
  }
  return out;
}

void apply_config_text(RunConfig& config, std::string_view text, std::string_view source, const fs::path& base) {
  const auto lines = split_lines(checked_utf8(text, source));
  std::set<std::string> seen;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(std::string(source), i + 1, "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (!seen.insert(key).second) throw ParseError(std::string(source), i + 1, "key '" + key + "' set twice");
    try {
      config.set(key, value, base);
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ParseError(std::string(source), i + 1, e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const fs::path& file) {
  apply_config_text(config, read_file(file), file.string(), file.parent_path());
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ValidationError("override '" + std::string(assignment) + "' is not key=value");
  config.set(std::string(trim(assignment.substr(0, eq))), std::string(trim(assignment.substr(eq + 1))));
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"ingest", "embed", "train-tagger", "tag",
                                                 "frames", "train-classifier", "evaluate"};
  return names;
}

RunManifest run_stage(const RunConfig& config, const std::string& stage) {
  std::vector<std::string> stages;
  if (stage == "all") {
    stages = stage_names();
  } else {
    stage_function(stage);
    stages = {stage};
  }
  // Fail on unusable configuration before touching the output directory.
  for (const auto& k : config_schema()) config.raw(k.name);
  const bool needs_ingest = std::find(stages.begin(), stages.end(), "ingest") != stages.end();
  const bool needs_frames = std::find(stages.begin(), stages.end(), "frames") != stages.end();
  if (needs_ingest) {
    require_path(config, "metadata", "ingest");
    require_path(config, "annotations", "ingest");
  }
  if (needs_frames) {
    require_path(config, "frame_predictions", "frames");
    require_path(config, "object_lexicon", "frames");
  }
  const double threshold = config.real("frames.threshold");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValidationError("frames.threshold must lie in [0,1]");
  const double decision = config.real("classifier.threshold");
  if (!(decision >= 0.0 && decision <= 1.0)) throw ValidationError("classifier.threshold must lie in [0,1]");
  for (const char* key : {"emb.learning_rate", "tagger.learning_rate", "classifier.learning_rate"}) {
    if (!(config.real(key) > 0.0)) throw ValidationError(std::string(key) + " must be positive");
  }
  for (const char* key : {"classifier.l2_lambda", "tagger.clip_norm"}) {
    if (!(config.real(key) >= 0.0)) throw ValidationError(std::string(key) + " must not be negative");
  }
  const double fraction = config.real("split.train_fraction");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("split.train_fraction must lie strictly in (0,1)");
  if (config.count("emb.dim") == 0 || config.count("tagger.hidden") == 0) {
    throw ValidationError("emb.dim and tagger.hidden must be positive");
  }

  RunManifest manifest;
  manifest.version = std::string(kArtifactVersion);
  manifest.config_echo = config.echo(true);
  for (const char* key : {"metadata", "annotations", "frame_predictions", "object_lexicon", "term_lexicon",
                          "second_rater_annotations"}) {
    const auto p = config.path(key);
    if (p && fs::is_regular_file(*p)) manifest.input_digests[key] = sha256_file(*p);
  }

  const fs::path out = config.output_dir();
  fs::create_directories(out);
  for (const auto& name : stages) {
    StageContext ctx{config, out, manifest.warnings, {}};
    const auto start = std::chrono::steady_clock::now();
    stage_function(name)(ctx);
    StageRecord record{name, {}, 0.0};
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const auto& file : ctx.outputs) record.output_digests[file] = sha256_file(out / file);
    manifest.stages.push_back(std::move(record));
  }
  write_manifest(out, config, manifest);
  return manifest;
}

std::string format_class_row(const PerClassMetrics& m, std::string_view label) {
  const bool f_undefined = m.precision_undefined && m.recall_undefined;
  return pad(std::string(label), 10) + rpad(cell(m.precision, m.precision_undefined), 10) +
         rpad(cell(m.recall, m.recall_undefined), 10) + rpad(cell(m.f_measure, f_undefined), 11) +
         rpad(std::to_string(m.support), 9);
}

Report write_report(const EvaluationResults& results, const std::string& config_echo) {
  Report r;
  std::string& t = r.text;
  std::string& csv = r.csv;
  csv = "section,system,mode,class,precision,recall,f_measure,value,support\n";
  t = "medlit evaluation report (version " + std::string(kArtifactVersion) + ")\n\n";

  const ClassMetrics cm = class_metrics(results.classification);
  t += "Medical knowledge classification (test videos: " + std::to_string(cm.total) + ")\n";
  t += pad("Class", 10) + rpad("Precision", 10) + rpad("Recall", 10) + rpad("F-measure", 11) + rpad("Support", 9) + "\n";
  for (const auto& m : cm.per_class) {
    const std::string label = m.label == "high" ? "High MK" : m.label == "low" ? "Low MK" : m.label;
    t += format_class_row(m, label) + "\n";
    csv += "classification,logistic,," + m.label + "," + csv_number(m.precision, m.precision_undefined) + "," +
           csv_number(m.recall, m.recall_undefined) + "," + format_double(m.f_measure) + ",," +
           std::to_string(m.support) + "\n";
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < results.classification.classes.size(); ++i) correct += results.classification.counts[i][i];
  t += "Accuracy: " + cell(cm.accuracy, cm.accuracy_undefined) + " (" + std::to_string(correct) + "/" +
       std::to_string(cm.total) + ")\n";
  csv += "classification,logistic,,accuracy,,,," + csv_number(cm.accuracy, cm.accuracy_undefined) + "," +
         std::to_string(cm.total) + "\n";
  t += "Confusion (rows gold, columns predicted):";
  for (const auto& c : results.classification.classes) t += " " + c;
  t += "\n";
  for (std::size_t i = 0; i < results.classification.classes.size(); ++i) {
    t += "  " + pad(results.classification.classes[i], 6);
    for (const auto v : results.classification.counts[i]) t += " " + std::to_string(v);
    t += "\n";
  }

  t += "\nMedical term extraction (test sentences: " + std::to_string(results.ner_sentences) +
       ", tokens: " + std::to_string(results.ner_tokens) + ")\n";
  t += pad("System", 10) + pad("Mode", 12) + rpad("Precision", 10) + rpad("Recall", 10) + rpad("F-measure", 11) +
       rpad("Gold", 7) + "\n";
  for (const auto& e : results.ner) {
    for (const auto& [mode, m] : {std::pair{"token", e.token}, std::pair{"exact-span", e.exact_span}}) {
      t += pad(e.system, 10) + pad(mode, 12);
      if (!m) {
        t += rpad("n/a", 10) + rpad("n/a", 10) + rpad("n/a", 11) + rpad("n/a", 7) + "\n";
        csv += std::string("ner,") + e.system + "," + mode + ",MT,,,,,\n";
        continue;
      }
      const bool f_undefined = m->precision_undefined && m->recall_undefined;
      t += rpad(cell(m->precision, m->precision_undefined), 10) + rpad(cell(m->recall, m->recall_undefined), 10) +
           rpad(cell(m->f_measure, f_undefined), 11) + rpad(std::to_string(m->support), 7) + "\n";
      csv += std::string("ner,") + e.system + "," + mode + ",MT," + csv_number(m->precision, m->precision_undefined) +
             "," + csv_number(m->recall, m->recall_undefined) + "," + format_double(m->f_measure) + ",," +
             std::to_string(m->support) + "\n";
    }
  }

  t += "\nInter-rater reliability (Cohen's kappa and raw agreement)\n";
  t += pad("Annotation", 18) + rpad("Items", 7) + rpad("Agreement", 11) + rpad("Kappa", 8) + "\n";
  for (const auto& a : results.agreement) {
    t += pad(a.what, 18);
    if (!a.result) {
      t += rpad("n/a", 7) + rpad("n/a", 11) + rpad("n/a", 8) + "\n";
      csv += "agreement," + a.what + ",kappa,,,,,,\n";
      csv += "agreement," + a.what + ",raw,,,,,,\n";
      continue;
    }
    char kappa[32];
    std::snprintf(kappa, sizeof kappa, "%.3f", a.result->kappa);
    t += rpad(std::to_string(a.result->items), 7) + rpad(format_percent(a.result->observed), 11) + rpad(kappa, 8) + "\n";
    const std::string items = std::to_string(a.result->items);
    csv += "agreement," + a.what + ",kappa,,,,," + format_double(a.result->kappa) + "," + items + "\n";
    csv += "agreement," + a.what + ",raw,,,,," + format_double(a.result->observed) + "," + items + "\n";
  }

  t += "\nConfiguration\n" + config_echo;
  return r;
}

}  // namespace medlit
