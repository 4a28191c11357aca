#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace medlit {

/// Splits running text into sentences.
///
/// A sentence ends at '.', '!' or '?' followed (optionally through closing
/// quotes/brackets) by whitespace or end of text, and at every newline. A
/// period that closes a known abbreviation ("dr.", "e.g.", "vs.", ...) does
/// not end a sentence. Sentences are whitespace-trimmed; empty ones are
/// dropped.
std::vector<std::string> split_sentences(std::string_view text);

/// Lower-cases and splits a sentence into tokens.
///
/// Word characters are ASCII letters/digits and any non-ASCII byte. A hyphen
/// or apostrophe between two word characters stays inside the token, as does
/// a period between two digits ("2.5"). Every other non-space character is a
/// token of its own.
std::vector<std::string> tokenize(std::string_view sentence);

/// The abbreviations that suppress a sentence break (lower case, with the
/// trailing period).
const std::vector<std::string>& sentence_abbreviations();

}  // namespace medlit
