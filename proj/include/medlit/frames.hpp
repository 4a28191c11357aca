#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "medlit/util.hpp"

namespace medlit {

/// Seconds between sampled frames.
inline constexpr std::int64_t kFrameIntervalSeconds = 2;
inline constexpr std::size_t kTopCategories = 5;

struct ObjectScore {
  std::string category;  // lower case
  double probability = 0.0;

  bool operator==(const ObjectScore&) const = default;
};

struct FramePrediction {
  std::string video_id;
  std::int64_t frame_index = 0;
  /// Sorted by probability, non-increasing. Parsed frames hold exactly five
  /// entries; filtered frames may hold fewer.
  std::vector<ObjectScore> top;
  /// Trailing ("", 0) entries added because the source listed fewer than 5.
  std::size_t padded = 0;

  std::int64_t timestamp_s() const { return frame_index * kFrameIntervalSeconds; }
  bool operator==(const FramePrediction&) const = default;
};

/// Timestamps 0, 2, 4, ... strictly below duration_s.
std::vector<std::int64_t> sampling_schedule(std::int64_t duration_s);

/// CSV with header video_id,frame_index,rank,category,probability; one row
/// per (frame, rank), rank in 1..5. Fields may be double-quoted. Frames come
/// back ordered by video id then frame index. Probabilities outside [0,1],
/// ranks outside 1..5, duplicate ranks and probabilities that increase with
/// rank are errors naming the row.
std::vector<FramePrediction> parse_frame_predictions(std::string_view raw, std::string_view source = "<frames>");
std::string write_frame_predictions(const std::vector<FramePrediction>& frames);

/// Drops entries below `threshold`; frames are kept even when emptied.
std::vector<FramePrediction> filter_predictions(std::vector<FramePrediction> frames, double threshold);

/// Category label -> provenance note.
struct MedicalObjectLexicon {
  std::map<std::string, std::string> labels;

  bool contains(std::string_view label) const { return labels.count(std::string(label)) > 0; }
  bool empty() const { return labels.empty(); }
};

/// One label per line, lower-cased; '#' starts a comment. Text after '#' on
/// an entry line is kept as that entry's provenance note.
MedicalObjectLexicon parse_object_lexicon(std::string_view raw, std::string_view source = "<object lexicon>");

enum class CountMode { Occurrences, Distinct };

struct VideoObjectSummary {
  std::string video_id;
  std::size_t frames_seen = 0;
  std::size_t medical_object_count = 0;
  std::set<std::string> distinct_medical_categories;

  bool operator==(const VideoObjectSummary&) const = default;
};

/// Counts lexicon hits among entries at or above `threshold`. Occurrences
/// mode counts every (frame, category) hit; distinct mode counts categories.
/// Throws ValidationError on an empty lexicon or frames of another video.
VideoObjectSummary count_medical_objects(std::string_view video_id, const std::vector<FramePrediction>& frames,
                                         const MedicalObjectLexicon& lexicon, double threshold,
                                         CountMode mode = CountMode::Occurrences);

/// Frames grouped per video id.
std::map<std::string, std::vector<FramePrediction>> group_by_video(const std::vector<FramePrediction>& frames);

}  // namespace medlit
