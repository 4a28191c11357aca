#include "medlit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "json.hpp"
#include "medlit/text.hpp"

namespace medlit {

std::string_view to_string(KnowledgeLabel label) { return label == KnowledgeLabel::HighMK ? "high" : "low"; }
std::string_view to_string(TokenLabel label) { return label == TokenLabel::MT ? "MT" : "NA"; }
std::string_view to_string(SentenceSource source) { return source == SentenceSource::Caption ? "cap" : "desc"; }

std::optional<KnowledgeLabel> parse_knowledge_label(std::string_view text) {
  if (text == "high") return KnowledgeLabel::HighMK;
  if (text == "low") return KnowledgeLabel::LowMK;
  return std::nullopt;
}

std::optional<TokenLabel> parse_token_label(std::string_view text) {
  if (text == "NA") return TokenLabel::NA;
  if (text == "MT") return TokenLabel::MT;
  return std::nullopt;
}

std::optional<SentenceSource> parse_sentence_source(std::string_view text) {
  if (text == "desc") return SentenceSource::Description;
  if (text == "cap") return SentenceSource::Caption;
  return std::nullopt;
}

LabelCounts Corpus::label_counts() const {
  LabelCounts counts;
  for (const auto& v : videos) {
    if (!v.knowledge_label) {
      ++counts.unlabeled;
    } else if (*v.knowledge_label == KnowledgeLabel::HighMK) {
      ++counts.high;
    } else {
      ++counts.low;
    }
  }
  return counts;
}

const VideoRecord* Corpus::find_video(std::string_view video_id) const {
  for (const auto& v : videos) {
    if (v.video_id == video_id) return &v;
  }
  return nullptr;
}

std::vector<Sentence> sentences_for_video(const VideoRecord& video) {
  std::vector<Sentence> out;
  const auto add = [&](const std::string& text, SentenceSource source) {
    std::size_t index = 0;
    for (const auto& s : split_sentences(text)) {
      auto tokens = tokenize(s);
      if (tokens.empty()) continue;
      out.push_back(Sentence{video.video_id, source, index++, std::move(tokens), std::nullopt});
    }
  };
  add(video.description, SentenceSource::Description);
  add(concatenate_cues(video.caption_cues), SentenceSource::Caption);
  return out;
}

std::vector<VideoRecord> parse_metadata(std::string_view raw, std::string_view source) {
  const std::string_view text = checked_utf8(raw, source);
  std::vector<VideoRecord> videos;
  std::set<std::string> seen;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::size_t line_no = i + 1;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string(source), line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(std::string(source), line_no, "expected a JSON object");
    const auto get_string = [&](const char* key) -> std::string {
      if (!obj.contains(key) || !obj[key].is_string()) {
        throw ParseError(std::string(source), line_no, std::string("missing or non-string key '") + key + "'");
      }
      return obj[key].get<std::string>();
    };
    VideoRecord v;
    v.video_id = get_string("video_id");
    v.title = get_string("title");
    v.description = get_string("description");
    v.channel = get_string("channel");
    if (v.video_id.empty() || v.video_id.find_first_of("\t\n/\\") != std::string::npos) {
      throw ParseError(std::string(source), line_no, "invalid video_id '" + v.video_id + "'");
    }
    if (!obj.contains("duration_s") || !obj["duration_s"].is_number_integer() || obj["duration_s"].get<long long>() < 0) {
      throw ParseError(std::string(source), line_no, "duration_s must be a non-negative integer");
    }
    v.duration_s = obj["duration_s"].get<long long>();
    if (obj.contains("knowledge_label") && !obj["knowledge_label"].is_null()) {
      const auto& label = obj["knowledge_label"];
      const auto parsed = label.is_string() ? parse_knowledge_label(label.get<std::string>()) : std::nullopt;
      if (!parsed) throw ParseError(std::string(source), line_no, "knowledge_label must be \"high\" or \"low\"");
      v.knowledge_label = parsed;
    }
    if (!seen.insert(v.video_id).second) {
      throw ParseError(std::string(source), line_no, "duplicate video_id '" + v.video_id + "'");
    }
    videos.push_back(std::move(v));
  }
  return videos;
}

std::string write_metadata(const std::vector<VideoRecord>& videos) {
  std::string out;
  for (const auto& v : videos) {
    nlohmann::ordered_json obj;
    obj["video_id"] = v.video_id;
    obj["title"] = v.title;
    obj["description"] = v.description;
    obj["duration_s"] = v.duration_s;
    obj["channel"] = v.channel;
    if (v.knowledge_label) obj["knowledge_label"] = std::string(to_string(*v.knowledge_label));
    out += obj.dump() + "\n";
  }
  return out;
}

std::vector<AnnotationRow> parse_annotations(std::string_view raw, std::string_view source) {
  const std::string_view text = checked_utf8(raw, source);
  std::vector<AnnotationRow> rows;
  const auto lines = split_lines(text);
  bool first_content = true;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (trim(lines[i]).empty()) continue;
    if (first_content && lines[i].substr(0, 9) == "video_id\t") {
      first_content = false;
      continue;
    }
    first_content = false;
    const auto cols = split(lines[i], '\t');
    if (cols.size() != 6) {
      throw ParseError(std::string(source), line_no, "expected 6 tab-separated columns, got " + std::to_string(cols.size()));
    }
    AnnotationRow row;
    row.line = line_no;
    row.video_id = cols[0];
    const std::string& label = cols[5];
    const auto token_label = parse_token_label(label);
    const auto video_label = parse_knowledge_label(label);
    if (!token_label && !video_label) {
      throw ParseError(std::string(source), line_no, "label '" + label + "' is not one of NA, MT, high, low");
    }
    if (cols[1] == "video") {
      if (!video_label) throw ParseError(std::string(source), line_no, "video rows take a high/low label");
      row.video_label = video_label;
    } else {
      row.source = parse_sentence_source(cols[1]);
      if (!row.source) throw ParseError(std::string(source), line_no, "source '" + cols[1] + "' is not desc, cap or video");
      if (!token_label) throw ParseError(std::string(source), line_no, "token rows take an NA/MT label");
      row.token_label = token_label;
      try {
        const long long s = parse_int(cols[2], "sentence_index");
        const long long t = parse_int(cols[3], "token_index");
        if (s < 0 || t < 0) throw ValidationError("negative index");
        row.sentence_index = static_cast<std::size_t>(s);
        row.token_index = static_cast<std::size_t>(t);
      } catch (const ValidationError& e) {
        throw ParseError(std::string(source), line_no, e.what());
      }
      row.token = cols[4];
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Corpus build_corpus(std::vector<VideoRecord> videos, const std::vector<AnnotationRow>& rows, std::string_view source) {
  std::map<std::string, std::size_t, std::less<>> video_index;
  for (std::size_t i = 0; i < videos.size(); ++i) video_index.emplace(videos[i].video_id, i);

  // Video-level labels first so sentences see the final records.
  for (const auto& row : rows) {
    if (!row.video_label) continue;
    const auto it = video_index.find(row.video_id);
    if (it == video_index.end()) {
      throw ParseError(std::string(source), row.line, "unknown video_id '" + row.video_id + "'");
    }
    auto& v = videos[it->second];
    if (v.knowledge_label && *v.knowledge_label != *row.video_label) {
      throw ParseError(std::string(source), row.line, "label conflicts with metadata for '" + row.video_id + "'");
    }
    v.knowledge_label = row.video_label;
  }

  Corpus corpus;
  using Key = std::tuple<std::string, SentenceSource, std::size_t>;
  std::map<Key, std::size_t> sentence_index;
  for (const auto& v : videos) {
    for (auto& s : sentences_for_video(v)) {
      sentence_index.emplace(Key{s.video_id, s.source, s.index}, corpus.sentences.size());
      corpus.sentences.push_back(std::move(s));
    }
  }

  std::map<std::size_t, std::vector<std::optional<TokenLabel>>> pending;
  for (const auto& row : rows) {
    if (!row.token_label) continue;
    if (!video_index.count(row.video_id)) {
      throw ParseError(std::string(source), row.line, "unknown video_id '" + row.video_id + "'");
    }
    const auto it = sentence_index.find(Key{row.video_id, *row.source, row.sentence_index});
    if (it == sentence_index.end()) {
      throw ParseError(std::string(source), row.line,
                       "video '" + row.video_id + "' has no " + std::string(to_string(*row.source)) + " sentence " +
                           std::to_string(row.sentence_index));
    }
    const Sentence& s = corpus.sentences[it->second];
    if (row.token_index >= s.tokens.size()) {
      throw ParseError(std::string(source), row.line, "token_index out of range");
    }
    if (s.tokens[row.token_index] != row.token) {
      throw ParseError(std::string(source), row.line,
                       "token '" + row.token + "' does not match tokenizer output '" + s.tokens[row.token_index] + "'");
    }
    auto& labels = pending[it->second];
    labels.resize(s.tokens.size());
    if (labels[row.token_index]) throw ParseError(std::string(source), row.line, "duplicate annotation row");
    labels[row.token_index] = row.token_label;
  }

  for (auto& [idx, labels] : pending) {
    Sentence& s = corpus.sentences[idx];
    std::vector<TokenLabel> gold;
    for (std::size_t t = 0; t < labels.size(); ++t) {
      if (!labels[t]) {
        throw ValidationError(std::string(source) + ": sentence " + std::to_string(s.index) + " (" +
                              std::string(to_string(s.source)) + ") of '" + s.video_id + "' is missing token " +
                              std::to_string(t));
      }
      gold.push_back(*labels[t]);
    }
    s.gold_labels = std::move(gold);
    corpus.annotated_subset.push_back(idx);
  }
  corpus.videos = std::move(videos);
  return corpus;
}

Corpus load_annotated_corpus(const std::filesystem::path& metadata_path, const std::filesystem::path& captions_dir,
                             const std::filesystem::path& annotations_path, Warnings* warnings) {
  auto videos = parse_metadata(read_file(metadata_path), metadata_path.string());
  for (auto& v : videos) {
    const auto srt = captions_dir / (v.video_id + ".srt");
    const auto vtt = captions_dir / (v.video_id + ".vtt");
    const bool has_srt = std::filesystem::exists(srt);
    const bool has_vtt = std::filesystem::exists(vtt);
    if (has_srt && has_vtt && warnings) {
      warnings->push_back(v.video_id + ": both .srt and .vtt present; using .srt");
    }
    if (has_srt || has_vtt) {
      const auto& path = has_srt ? srt : vtt;
      v.caption_cues = parse_caption_file(read_file(path), has_srt ? CaptionFormat::SRT : CaptionFormat::WebVTT,
                                          warnings, path.string());
      v.has_captions = true;
    }
  }
  const auto rows = parse_annotations(read_file(annotations_path), annotations_path.string());
  return build_corpus(std::move(videos), rows, annotations_path.string());
}

std::string write_annotations(const Corpus& corpus) {
  std::string out = "video_id\tsource\tsentence_index\ttoken_index\ttoken\tlabel\n";
  for (const auto& v : corpus.videos) {
    if (v.knowledge_label) out += v.video_id + "\tvideo\t-\t-\t-\t" + std::string(to_string(*v.knowledge_label)) + "\n";
  }
  for (const std::size_t idx : corpus.annotated_subset) {
    const Sentence& s = corpus.sentences[idx];
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      out += s.video_id + "\t" + std::string(to_string(s.source)) + "\t" + std::to_string(s.index) + "\t" +
             std::to_string(t) + "\t" + s.tokens[t] + "\t" + std::string(to_string((*s.gold_labels)[t])) + "\n";
    }
    out += "\n";
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "captions");
  write_file(dir / "metadata.jsonl", write_metadata(corpus.videos));
  for (const auto& v : corpus.videos) {
    if (v.has_captions) write_file(dir / "captions" / (v.video_id + ".srt"), write_caption_file(v.caption_cues, CaptionFormat::SRT));
  }
  write_file(dir / "annotations.tsv", write_annotations(corpus));
}

Corpus load_saved_corpus(const std::filesystem::path& dir) {
  return load_annotated_corpus(dir / "metadata.jsonl", dir / "captions", dir / "annotations.tsv");
}

DatasetSplit split_dataset(const Corpus& corpus, double train_fraction, std::uint64_t seed, bool stratify) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train_fraction must lie strictly between 0 and 1");
  }
  Rng rng(seed);
  std::vector<std::string> train;
  std::vector<std::string> test;
  const std::size_t n = corpus.videos.size();
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));

  if (!stratify) {
    std::vector<std::string> ids;
    for (const auto& v : corpus.videos) ids.push_back(v.video_id);
    rng.shuffle(ids);
    train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(target));
    test.assign(ids.begin() + static_cast<std::ptrdiff_t>(target), ids.end());
  } else {
    std::vector<std::string> groups[2];
    for (const auto& v : corpus.videos) {
      if (!v.knowledge_label) throw ValidationError("stratified split: video '" + v.video_id + "' has no knowledge label");
      groups[*v.knowledge_label == KnowledgeLabel::HighMK ? 0 : 1].push_back(v.video_id);
    }
    for (const auto& g : groups) {
      if (g.size() < 2) throw ValidationError("stratified split needs at least 2 videos per class");
    }
    // Largest-remainder apportionment of the training quota.
    std::size_t take[2];
    double remainder[2];
    std::size_t assigned = 0;
    for (int c = 0; c < 2; ++c) {
      const double exact = static_cast<double>(groups[c].size()) * train_fraction;
      take[c] = static_cast<std::size_t>(std::floor(exact));
      remainder[c] = exact - std::floor(exact);
      assigned += take[c];
    }
    while (assigned < target) {
      const int c = remainder[0] >= remainder[1] ? 0 : 1;
      if (take[c] < groups[c].size()) {
        ++take[c];
        ++assigned;
      }
      remainder[c] = -1.0;
      if (remainder[0] < 0 && remainder[1] < 0) break;
    }
    for (int c = 0; c < 2; ++c) {
      rng.shuffle(groups[c]);
      const auto cut = groups[c].begin() + static_cast<std::ptrdiff_t>(take[c]);
      train.insert(train.end(), groups[c].begin(), cut);
      test.insert(test.end(), cut, groups[c].end());
    }
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

}  // namespace medlit
