#include "medlit/text.hpp"

#include <algorithm>

#include "medlit/util.hpp"

namespace medlit {
namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
}

bool is_word(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

}  // namespace

const std::vector<std::string>& sentence_abbreviations() {
  static const std::vector<std::string> kList = {
      "approx.", "dr.", "e.g.", "etc.", "fig.", "i.e.", "jr.", "mr.", "mrs.", "ms.", "prof.", "sr.", "st.", "vs.",
  };
  return kList;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  const auto emit = [&](std::size_t begin, std::size_t end) {
    const std::string_view piece = trim(text.substr(begin, end - begin));
    if (!piece.empty()) out.emplace_back(piece);
  };

  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      emit(start, i);
      start = ++i;
      continue;
    }
    if (!is_terminal(c)) {
      ++i;
      continue;
    }
    std::size_t end = i + 1;
    while (end < text.size() && is_closer(text[end])) ++end;
    const bool boundary = end == text.size() || is_space(text[end]);
    if (!boundary) {
      ++i;
      continue;
    }
    if (c == '.') {
      std::size_t word_begin = i;
      while (word_begin > start && !is_space(text[word_begin - 1])) --word_begin;
      std::string word = to_lower(text.substr(word_begin, i + 1 - word_begin));
      while (!word.empty() && (word.front() == '(' || word.front() == '"' || word.front() == '\'')) {
        word.erase(word.begin());
      }
      const auto& abbrevs = sentence_abbreviations();
      if (std::find(abbrevs.begin(), abbrevs.end(), word) != abbrevs.end()) {
        i = end;
        continue;
      }
    }
    emit(start, end);
    start = i = end;
  }
  emit(start, text.size());
  return out;
}

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> tokens;
  std::string current;
  const auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  const std::size_t n = sentence.size();
  for (std::size_t i = 0; i < n; ++i) {
    const char c = sentence[i];
    if (is_space(c) || static_cast<unsigned char>(c) < 0x20) {
      flush();
    } else if (is_word(c)) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    } else {
      const bool inside = !current.empty() && i + 1 < n && is_word(sentence[i + 1]);
      const bool joiner = (c == '-' || c == '\'') ||
                          (c == '.' && is_digit(current.empty() ? ' ' : current.back()) && i + 1 < n &&
                           is_digit(sentence[i + 1]));
      if (inside && joiner) {
        current.push_back(c);
      } else {
        flush();
        tokens.emplace_back(1, c);
      }
    }
  }
  flush();
  return tokens;
}

}  // namespace medlit
