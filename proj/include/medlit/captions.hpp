#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "medlit/util.hpp"

namespace medlit {

enum class CaptionFormat { SRT, WebVTT };

/// One timed caption cue. Multi-line cue text is joined with single spaces.
struct CaptionCue {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::string text;

  bool operator==(const CaptionCue&) const = default;
};

/// Parses an SRT or WebVTT document.
///
/// Cues come back sorted by start time. Markup tags such as <i>...</i> or
/// <c.yellow> are stripped and the common entities (&amp; &lt; &gt; &nbsp;
/// &quot; &apos;) decoded. Cues whose text is empty after stripping are
/// skipped with a warning; out-of-order cues are reordered with a warning.
/// A malformed timestamp raises ParseError naming the line.
std::vector<CaptionCue> parse_caption_file(std::string_view raw, CaptionFormat format,
                                           Warnings* warnings = nullptr,
                                           std::string_view source = "<captions>");

/// Serializes cues; parse_caption_file(write_caption_file(c, f), f) == c.
std::string write_caption_file(const std::vector<CaptionCue>& cues, CaptionFormat format);

/// "HH:MM:SS,mmm" (SRT) or "HH:MM:SS.mmm" (WebVTT).
std::string format_timestamp(std::int64_t ms, CaptionFormat format);

/// Removes markup tags and decodes entities in one cue line.
std::string strip_caption_markup(std::string_view text);

/// Cue texts in time order, space-joined.
std::string concatenate_cues(const std::vector<CaptionCue>& cues);

}  // namespace medlit
