#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medlit/captions.hpp"
#include "medlit/util.hpp"

namespace medlit {

enum class KnowledgeLabel { HighMK, LowMK };
enum class TokenLabel { NA, MT };
enum class SentenceSource { Description, Caption };

std::string_view to_string(KnowledgeLabel label);    // "high" / "low"
std::string_view to_string(TokenLabel label);        // "NA" / "MT"
std::string_view to_string(SentenceSource source);   // "desc" / "cap"
std::optional<KnowledgeLabel> parse_knowledge_label(std::string_view text);
std::optional<TokenLabel> parse_token_label(std::string_view text);
std::optional<SentenceSource> parse_sentence_source(std::string_view text);

struct VideoRecord {
  std::string video_id;
  std::string title;
  std::string description;
  std::int64_t duration_s = 0;
  std::string channel;
  std::optional<KnowledgeLabel> knowledge_label;
  /// False when no caption file exists for the video.
  bool has_captions = false;
  std::vector<CaptionCue> caption_cues;

  bool operator==(const VideoRecord&) const = default;
};

struct Sentence {
  std::string video_id;
  SentenceSource source = SentenceSource::Description;
  /// Position among the video's sentences of the same source.
  std::size_t index = 0;
  std::vector<std::string> tokens;
  std::optional<std::vector<TokenLabel>> gold_labels;

  bool operator==(const Sentence&) const = default;
};

struct LabelCounts {
  std::size_t high = 0;
  std::size_t low = 0;
  std::size_t unlabeled = 0;
};

struct Corpus {
  std::vector<VideoRecord> videos;
  std::vector<Sentence> sentences;
  /// Ascending indices into `sentences` of the annotated sentences.
  std::vector<std::size_t> annotated_subset;

  bool operator==(const Corpus&) const = default;

  LabelCounts label_counts() const;
  const VideoRecord* find_video(std::string_view video_id) const;
};

/// Description sentences then caption sentences for one video, tokenized.
/// Caption cue texts are joined in time order before sentence splitting.
std::vector<Sentence> sentences_for_video(const VideoRecord& video);

/// Reads the JSON Lines metadata file.
std::vector<VideoRecord> parse_metadata(std::string_view raw, std::string_view source = "<metadata>");
std::string write_metadata(const std::vector<VideoRecord>& videos);

/// One parsed row of the token-annotation file.
struct AnnotationRow {
  std::size_t line = 0;
  std::string video_id;
  /// Token rows carry a sentence source; video-level rows (source column
  /// "video") carry a knowledge label instead.
  std::optional<SentenceSource> source;
  std::size_t sentence_index = 0;
  std::size_t token_index = 0;
  std::string token;
  std::optional<TokenLabel> token_label;
  std::optional<KnowledgeLabel> video_label;
};

/// Tab-separated rows: video_id, source (desc|cap|video), sentence_index,
/// token_index, token, label (NA|MT for tokens, high|low for video rows).
/// An optional header line and blank lines are ignored.
std::vector<AnnotationRow> parse_annotations(std::string_view raw, std::string_view source = "<annotations>");

/// Joins annotation rows onto the sentences of `videos`. Dangling video ids,
/// missing sentences/tokens, token text mismatches, duplicates and partially
/// labelled sentences are hard errors.
Corpus build_corpus(std::vector<VideoRecord> videos, const std::vector<AnnotationRow>& rows,
                    std::string_view source = "<annotations>");

/// Loads metadata, caption files (<video_id>.srt or <video_id>.vtt, optional)
/// and token annotations.
Corpus load_annotated_corpus(const std::filesystem::path& metadata_path, const std::filesystem::path& captions_dir,
                             const std::filesystem::path& annotations_path, Warnings* warnings = nullptr);

/// Annotation rows for every annotated sentence plus one video-level row per
/// labelled video.
std::string write_annotations(const Corpus& corpus);

/// Writes metadata.jsonl, captions/<id>.srt and annotations.tsv under `dir`.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_saved_corpus(const std::filesystem::path& dir);

struct DatasetSplit {
  std::vector<std::string> train;  // sorted
  std::vector<std::string> test;   // sorted
};

/// Seeded train/test split over all videos. With `stratify`, every video
/// must carry a knowledge label and each class contributes
/// floor(n_c * fraction) training videos, topped up by largest remainder to
/// round(n * fraction) overall.
DatasetSplit split_dataset(const Corpus& corpus, double train_fraction, std::uint64_t seed, bool stratify = true);

}  // namespace medlit
