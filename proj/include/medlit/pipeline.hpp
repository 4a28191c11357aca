#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medlit/classifier.hpp"
#include "medlit/metrics.hpp"
#include "medlit/util.hpp"

namespace medlit {

inline constexpr std::string_view kArtifactVersion = "1.0.0";

/// Raised when a stage needs output that an earlier stage has not written.
class MissingUpstreamError : public ValidationError {
 public:
  MissingUpstreamError(std::string stage, const std::filesystem::path& path);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct ConfigKey {
  std::string name;
  std::string default_value;  // empty for optional or required paths
  std::string description;
  bool is_path = false;
};

/// The documented schema, in echo order.
const std::vector<ConfigKey>& config_schema();

/// Flat key/value run configuration. Values are kept as text and checked
/// against the schema on every set(); relative paths remember the directory
/// they are relative to.
class RunConfig {
 public:
  RunConfig();

  /// Throws ValidationError for unknown keys and ill-typed values.
  void set(const std::string& key, const std::string& value, const std::filesystem::path& base = {});
  const std::string& raw(const std::string& key) const;

  double real(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  bool flag(const std::string& key) const;
  /// Resolved path, or nullopt when unset.
  std::optional<std::filesystem::path> path(const std::string& key) const;
  std::filesystem::path output_dir() const;

  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }
  /// seed + fnv1a64(stage): adding a stage leaves the others untouched.
  std::uint64_t sub_seed(std::string_view stage) const;

  /// "key = value" lines in schema order; output_dir optional.
  std::string echo(bool include_output_dir) const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::filesystem::path> bases_;
};

/// Parses "key = value" lines ('#' comments, blank lines allowed) into
/// `config`. Relative paths resolve against the file's directory.
void apply_config_text(RunConfig& config, std::string_view text, std::string_view source,
                       const std::filesystem::path& base);
void apply_config_file(RunConfig& config, const std::filesystem::path& file);
/// "key=value" override from the command line, relative to the cwd.
void apply_override(RunConfig& config, std::string_view assignment);

/// Stage names in pipeline order (without "all").
const std::vector<std::string>& stage_names();

struct StageRecord {
  std::string stage;
  std::map<std::string, std::string> output_digests;  // file name -> sha256
  double seconds = 0.0;
};

struct RunManifest {
  std::string version;
  std::string config_echo;
  std::map<std::string, std::string> input_digests;
  std::vector<StageRecord> stages;
  Warnings warnings;
};

/// Runs one stage, or every stage for "all", reading upstream outputs from
/// and writing outputs to the output directory; manifest.json is updated.
/// Throws ValidationError (including MissingUpstreamError) before doing any
/// work when the configuration or inputs are unusable.
RunManifest run_stage(const RunConfig& config, const std::string& stage);

/// One row of the classification table: label then precision, recall and F
/// as percentages, then support. Undefined values render as "n/a".
std::string format_class_row(const PerClassMetrics& metrics, std::string_view label);

struct NerEvaluation {
  std::string system;  // "BLSTM", "Lexicon"
  std::optional<PerClassMetrics> token;
  std::optional<PerClassMetrics> exact_span;
};

struct AgreementEvaluation {
  std::string what;
  std::optional<KappaResult> result;
};

struct EvaluationResults {
  ConfusionMatrix classification;
  std::size_t ner_sentences = 0;
  std::size_t ner_tokens = 0;
  std::vector<NerEvaluation> ner;
  std::vector<AgreementEvaluation> agreement;
};

struct Report {
  std::string text;
  std::string csv;
};

/// Plain-text and CSV renderings: classification table plus accuracy, NER
/// tables in token and exact-span modes, agreement section and config echo.
Report write_report(const EvaluationResults& results, const std::string& config_echo);

}  // namespace medlit
