#pragma once

// Shared plumbing: error types, seeded randomness, exact number formatting,
// digests and small string helpers used by every module.

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace medlit {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data, bad configuration or a violated precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Syntax error in an input file. The message always names the line.
class ParseError : public ValidationError {
 public:
  ParseError(std::string source, std::size_t line, const std::string& what);

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

/// Bytes that are not valid UTF-8, or a UTF-16/UTF-32 byte-order mark.
class EncodingError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// NaN/Inf during training or evaluation, or divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Warnings collected by parsers and trainers instead of printing.
using Warnings = std::vector<std::string>;

/// Deterministic random source. The engine output is fully specified by the
/// standard; the distributions below are written out so results do not
/// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// FNV-1a, used to derive sub-seeds and short identity hashes.
std::uint64_t fnv1a64(std::string_view data);

/// Lower-case hex SHA-256 of a byte string / a file.
std::string sha256_hex(std::string_view data);

/// Relative error used by every gradient check:
/// |a - n| / max(|a|, |n|, kGradCheckFloor). The floor sits above the
/// rounding noise of a central difference with eps = 1e-5 (about 1e-11).
inline constexpr double kGradCheckFloor = 1e-6;
double gradient_relative_error(double analytic, double numeric);
std::string sha256_file(const std::filesystem::path& path);

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);
/// Strict parse of a full string as a double / integer.
double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

std::string_view trim(std::string_view text);
std::string to_lower(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);
bool is_valid_utf8(std::string_view bytes);

/// Reads a whole file; throws ValidationError if it cannot be opened.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Validates the encoding of raw file content and returns it with any UTF-8
/// byte-order mark removed. Throws EncodingError for a UTF-16/32 mark or for
/// content that is not valid UTF-8.
std::string_view checked_utf8(std::string_view raw, std::string_view source);

/// Splits text into lines, accepting "\n" and "\r\n".
std::vector<std::string_view> split_lines(std::string_view text);

}  // namespace medlit
