#include "medlit/captions.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>

namespace medlit {
namespace {

struct Timing {
  std::int64_t start_ms;
  std::int64_t end_ms;
};

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// [HH:]MM:SS(,|.)mmm
std::optional<std::int64_t> parse_timestamp(std::string_view s) {
  const std::size_t frac = s.find_last_of(",.");
  if (frac == std::string_view::npos) return std::nullopt;
  const std::string_view millis = s.substr(frac + 1);
  if (millis.size() != 3 || !all_digits(millis)) return std::nullopt;
  const auto parts = split(s.substr(0, frac), ':');
  if (parts.size() != 2 && parts.size() != 3) return std::nullopt;
  std::int64_t hours = 0;
  std::size_t k = 0;
  if (parts.size() == 3) {
    if (!all_digits(parts[0])) return std::nullopt;
    hours = std::stoll(parts[0]);
    k = 1;
  }
  const std::string& mm = parts[k];
  const std::string& ss = parts[k + 1];
  if (mm.size() != 2 || ss.size() != 2 || !all_digits(mm) || !all_digits(ss)) return std::nullopt;
  const int minutes = std::stoi(mm);
  const int seconds = std::stoi(ss);
  if (minutes > 59 || seconds > 59) return std::nullopt;
  return ((hours * 60 + minutes) * 60 + seconds) * 1000 + std::stoll(std::string(millis));
}

Timing parse_timing_line(std::string_view line, std::string_view source, std::size_t line_no) {
  const std::size_t arrow = line.find("-->");
  const std::string_view left = trim(line.substr(0, arrow));
  std::string_view right = trim(line.substr(arrow + 3));
  // WebVTT cue settings follow the end timestamp.
  const std::size_t space = right.find_first_of(" \t");
  if (space != std::string_view::npos) right = right.substr(0, space);
  const auto start = parse_timestamp(left);
  const auto end = parse_timestamp(right);
  if (!start) throw ParseError(std::string(source), line_no, "malformed timestamp '" + std::string(left) + "'");
  if (!end) throw ParseError(std::string(source), line_no, "malformed timestamp '" + std::string(right) + "'");
  if (*end < *start) throw ParseError(std::string(source), line_no, "cue ends before it starts");
  return {*start, *end};
}

std::string escape_text(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string strip_caption_markup(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '<') {
      const std::size_t close = text.find('>', i);
      if (close != std::string_view::npos) {
        i = close;
        continue;
      }
    } else if (c == '{') {
      // SSA-style override blocks ({\i1}) that some SRT writers emit.
      const std::size_t close = text.find('}', i);
      if (close != std::string_view::npos && i + 1 < text.size() && text[i + 1] == '\\') {
        i = close;
        continue;
      }
    } else if (c == '&') {
      static constexpr std::pair<std::string_view, char> kEntities[] = {
          {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&nbsp;", ' '}, {"&quot;", '"'}, {"&apos;", '\''}};
      bool matched = false;
      for (const auto& [name, value] : kEntities) {
        if (text.substr(i, name.size()) == name) {
          out.push_back(value);
          i += name.size() - 1;
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    out.push_back(c);
  }
  return out;
}

std::vector<CaptionCue> parse_caption_file(std::string_view raw, CaptionFormat format, Warnings* warnings,
                                           std::string_view source) {
  const std::string_view text = checked_utf8(raw, source);
  std::vector<CaptionCue> cues;
  if (trim(text).empty()) return cues;

  const auto lines = split_lines(text);
  std::size_t i = 0;
  if (format == CaptionFormat::WebVTT) {
    if (lines.empty() || lines[0].substr(0, 6) != "WEBVTT") {
      throw ParseError(std::string(source), 1, "missing WEBVTT header");
    }
    // Header block runs to the first blank line.
    while (i < lines.size() && !trim(lines[i]).empty()) ++i;
  }

  const auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(std::string(source) + ": " + msg);
  };

  while (i < lines.size()) {
    if (trim(lines[i]).empty()) {
      ++i;
      continue;
    }
    const std::size_t block_start = i;
    std::size_t block_end = i;
    while (block_end < lines.size() && !trim(lines[block_end]).empty()) ++block_end;

    if (format == CaptionFormat::WebVTT) {
      const std::string_view head = lines[i];
      if (head.substr(0, 4) == "NOTE" || head.substr(0, 5) == "STYLE" || head.substr(0, 6) == "REGION") {
        i = block_end;
        continue;
      }
    }

    std::size_t timing = block_start;
    if (lines[timing].find("-->") == std::string_view::npos) {
      // Numeric index (SRT) or cue identifier (WebVTT).
      ++timing;
      if (timing >= block_end || lines[timing].find("-->") == std::string_view::npos) {
        throw ParseError(std::string(source), block_start + 1, "expected a timing line 'start --> end'");
      }
    }
    const Timing t = parse_timing_line(lines[timing], source, timing + 1);

    std::string body;
    for (std::size_t k = timing + 1; k < block_end; ++k) {
      const std::string stripped = strip_caption_markup(lines[k]);
      const std::string_view piece = trim(stripped);
      if (piece.empty()) continue;
      if (!body.empty()) body.push_back(' ');
      body.append(piece);
    }
    if (body.empty()) {
      warn("cue at line " + std::to_string(timing + 1) + " has no text; skipped");
    } else {
      cues.push_back({t.start_ms, t.end_ms, std::move(body)});
    }
    i = block_end;
  }

  const auto by_time = [](const CaptionCue& a, const CaptionCue& b) {
    return a.start_ms != b.start_ms ? a.start_ms < b.start_ms : a.end_ms < b.end_ms;
  };
  if (!std::is_sorted(cues.begin(), cues.end(), by_time)) {
    warn("cues out of time order; reordered");
    std::stable_sort(cues.begin(), cues.end(), by_time);
  }
  return cues;
}

std::string format_timestamp(std::int64_t ms, CaptionFormat format) {
  const std::int64_t hours = ms / 3'600'000;
  const int minutes = static_cast<int>(ms / 60'000 % 60);
  const int seconds = static_cast<int>(ms / 1000 % 60);
  const int millis = static_cast<int>(ms % 1000);
  char buf[48];
  std::snprintf(buf, sizeof buf, "%02lld:%02d:%02d%c%03d", static_cast<long long>(hours), minutes, seconds,
                format == CaptionFormat::SRT ? ',' : '.', millis);
  return buf;
}

std::string write_caption_file(const std::vector<CaptionCue>& cues, CaptionFormat format) {
  std::string out;
  if (format == CaptionFormat::WebVTT) out += "WEBVTT\n\n";
  for (std::size_t k = 0; k < cues.size(); ++k) {
    const auto& cue = cues[k];
    if (format == CaptionFormat::SRT) out += std::to_string(k + 1) + "\n";
    out += format_timestamp(cue.start_ms, format) + " --> " + format_timestamp(cue.end_ms, format) + "\n";
    out += escape_text(cue.text) + "\n\n";
  }
  return out;
}

std::string concatenate_cues(const std::vector<CaptionCue>& cues) {
  std::string out;
  for (const auto& cue : cues) {
    if (!out.empty()) out.push_back(' ');
    out += cue.text;
  }
  return out;
}

}  // namespace medlit
