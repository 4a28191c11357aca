#include "medlit/frames.hpp"

#include <algorithm>
#include <tuple>

namespace medlit {
namespace {

// Splits one CSV record; handles double-quoted fields with "" escapes.
std::vector<std::string> split_csv(std::string_view line, std::string_view source, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw ParseError(std::string(source), line_no, "unterminated quoted field");
  fields.push_back(std::move(field));
  return fields;
}

std::string csv_field(std::string_view value) {
  if (value.find_first_of(",\"") == std::string_view::npos && trim(value) == value) return std::string(value);
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::vector<std::int64_t> sampling_schedule(std::int64_t duration_s) {
  if (duration_s < 0) throw ValidationError("duration must be non-negative");
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>((duration_s + kFrameIntervalSeconds - 1) / kFrameIntervalSeconds));
  for (std::int64_t t = 0; t < duration_s; t += kFrameIntervalSeconds) out.push_back(t);
  return out;
}

std::vector<FramePrediction> parse_frame_predictions(std::string_view raw, std::string_view source) {
  const auto lines = split_lines(checked_utf8(raw, source));
  struct Row {
    std::size_t line;
    std::int64_t rank;
    ObjectScore score;
  };
  std::map<std::pair<std::string, std::int64_t>, std::vector<Row>> frames;

  bool header_seen = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (trim(lines[i]).empty()) continue;
    auto fields = split_csv(lines[i], source, line_no);
    if (!header_seen) {
      header_seen = true;
      if (trim(lines[i]) != "video_id,frame_index,rank,category,probability") {
        throw ParseError(std::string(source), line_no, "expected header video_id,frame_index,rank,category,probability");
      }
      continue;
    }
    if (fields.size() != 5) throw ParseError(std::string(source), line_no, "expected 5 fields");
    Row row{line_no, 0, {}};
    std::int64_t frame_index = 0;
    try {
      frame_index = parse_int(fields[1], "frame_index");
      row.rank = parse_int(fields[2], "rank");
      row.score.probability = parse_double(fields[4], "probability");
    } catch (const ValidationError& e) {
      throw ParseError(std::string(source), line_no, e.what());
    }
    if (frame_index < 0) throw ParseError(std::string(source), line_no, "frame_index must be non-negative");
    if (row.rank < 1 || row.rank > static_cast<std::int64_t>(kTopCategories)) {
      throw ParseError(std::string(source), line_no, "rank must be in 1..5 (more than 5 entries per frame?)");
    }
    if (!(row.score.probability >= 0.0 && row.score.probability <= 1.0)) {
      throw ParseError(std::string(source), line_no, "probability outside [0,1]");
    }
    const std::string video_id(trim(fields[0]));
    if (video_id.empty()) throw ParseError(std::string(source), line_no, "empty video_id");
    row.score.category = to_lower(trim(fields[3]));
    frames[{video_id, frame_index}].push_back(std::move(row));
  }

  std::vector<FramePrediction> out;
  for (auto& [key, rows] : frames) {
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.rank < b.rank; });
    FramePrediction frame{key.first, key.second, {}, 0};
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (k > 0 && rows[k].rank == rows[k - 1].rank) {
        throw ParseError(std::string(source), rows[k].line, "duplicate rank within frame");
      }
      if (rows[k].rank != static_cast<std::int64_t>(k + 1)) {
        throw ParseError(std::string(source), rows[k].line, "ranks within a frame must be contiguous from 1");
      }
      if (k > 0 && rows[k].score.probability > rows[k - 1].score.probability) {
        throw ParseError(std::string(source), rows[k].line, "probability increases with rank");
      }
      frame.top.push_back(rows[k].score);
    }
    while (frame.top.size() < kTopCategories) {
      frame.top.push_back({"", 0.0});
      ++frame.padded;
    }
    out.push_back(std::move(frame));
  }
  return out;
}

std::string write_frame_predictions(const std::vector<FramePrediction>& frames) {
  std::string out = "video_id,frame_index,rank,category,probability\n";
  for (const auto& f : frames) {
    const std::size_t real = f.top.size() - std::min(f.padded, f.top.size());
    for (std::size_t k = 0; k < real; ++k) {
      out += csv_field(f.video_id) + "," + std::to_string(f.frame_index) + "," + std::to_string(k + 1) + "," +
             csv_field(f.top[k].category) + "," + format_double(f.top[k].probability) + "\n";
    }
  }
  return out;
}

std::vector<FramePrediction> filter_predictions(std::vector<FramePrediction> frames, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValidationError("threshold must lie in [0,1]");
  for (auto& f : frames) {
    const std::size_t before = f.top.size();
    const std::size_t real = before - std::min(f.padded, before);
    std::size_t kept_real = 0;
    std::vector<ObjectScore> kept;
    for (std::size_t k = 0; k < before; ++k) {
      if (f.top[k].probability >= threshold) {
        kept.push_back(f.top[k]);
        if (k < real) ++kept_real;
      }
    }
    f.padded = kept.size() - kept_real;
    f.top = std::move(kept);
  }
  return frames;
}

MedicalObjectLexicon parse_object_lexicon(std::string_view raw, std::string_view source) {
  MedicalObjectLexicon lexicon;
  for (const auto line : split_lines(checked_utf8(raw, source))) {
    const std::size_t hash = line.find('#');
    const std::string label = to_lower(trim(line.substr(0, hash)));
    if (label.empty()) continue;
    const std::string note = hash == std::string_view::npos ? "" : std::string(trim(line.substr(hash + 1)));
    lexicon.labels.emplace(label, note);
  }
  return lexicon;
}

VideoObjectSummary count_medical_objects(std::string_view video_id, const std::vector<FramePrediction>& frames,
                                         const MedicalObjectLexicon& lexicon, double threshold, CountMode mode) {
  if (lexicon.empty()) throw ValidationError("medical object lexicon is empty");
  VideoObjectSummary summary{std::string(video_id), frames.size(), 0, {}};
  std::size_t occurrences = 0;
  for (const auto& f : frames) {
    if (f.video_id != video_id) {
      throw ValidationError("count_medical_objects: frame of '" + f.video_id + "' in summary of '" +
                            std::string(video_id) + "'");
    }
    for (const auto& s : f.top) {
      if (s.probability >= threshold && !s.category.empty() && lexicon.contains(s.category)) {
        ++occurrences;
        summary.distinct_medical_categories.insert(s.category);
      }
    }
  }
  summary.medical_object_count =
      mode == CountMode::Occurrences ? occurrences : summary.distinct_medical_categories.size();
  return summary;
}

std::map<std::string, std::vector<FramePrediction>> group_by_video(const std::vector<FramePrediction>& frames) {
  std::map<std::string, std::vector<FramePrediction>> out;
  for (const auto& f : frames) out[f.video_id].push_back(f);
  return out;
}

}  // namespace medlit
