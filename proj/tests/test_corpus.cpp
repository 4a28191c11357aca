#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "medlit/corpus.hpp"
#include "test_support.hpp"

using namespace medlit;

namespace {

std::string meta_line(const std::string& id, const std::string& description, const std::string& label = "high") {
  return R"({"video_id":")" + id + R"(","title":"t","description":")" + description +
         R"(","duration_s":30,"channel":"c","knowledge_label":)" + (label.empty() ? "null" : "\"" + label + "\"") +
         "}\n";
}

std::string token_rows(const std::string& id, const std::string& source, int sentence,
                       const std::vector<std::pair<std::string, std::string>>& tokens) {
  std::string out;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    out += id + "\t" + source + "\t" + std::to_string(sentence) + "\t" + std::to_string(t) + "\t" + tokens[t].first +
           "\t" + tokens[t].second + "\n";
  }
  return out + "\n";
}

// Three videos; five annotated sentences in total (one caption sentence).
struct ThreeVideoFixture {
  testutil::TempDir dir{"corpus"};
  ThreeVideoFixture() {
    write_file(dir / "metadata.jsonl",
               meta_line("v1", "Insulin lowers blood sugar. Ask your doctor.") +
                   meta_line("v2", "We cook pasta. It is tasty!", "low") + meta_line("v3", "Statins help.", ""));
    write_file(dir / "captions" / "v1.srt", "1\n00:00:00,000 --> 00:00:01,000\nHigh blood pressure\n\n"
                                             "2\n00:00:01,000 --> 00:00:02,000\nis common.\n");
    std::string ann = "video_id\tsource\tsentence_index\ttoken_index\ttoken\tlabel\n";
    ann += "v1\tvideo\t-\t-\t-\thigh\n";
    ann += token_rows("v1", "desc", 0, {{"insulin", "MT"}, {"lowers", "NA"}, {"blood", "MT"}, {"sugar", "MT"}, {".", "NA"}});
    ann += token_rows("v1", "desc", 1, {{"ask", "NA"}, {"your", "NA"}, {"doctor", "NA"}, {".", "NA"}});
    ann += token_rows("v1", "cap", 0, {{"high", "NA"}, {"blood", "MT"}, {"pressure", "MT"}, {"is", "NA"}, {"common", "NA"}, {".", "NA"}});
    ann += token_rows("v2", "desc", 1, {{"it", "NA"}, {"is", "NA"}, {"tasty", "NA"}, {"!", "NA"}});
    ann += token_rows("v3", "desc", 0, {{"statins", "MT"}, {"help", "NA"}, {".", "NA"}});
    write_file(dir / "annotations.tsv", ann);
  }
  Corpus load(Warnings* w = nullptr) const {
    return load_annotated_corpus(dir / "metadata.jsonl", dir / "captions", dir / "annotations.tsv", w);
  }
};

Corpus labelled_corpus(std::size_t high, std::size_t low) {
  Corpus c;
  for (std::size_t i = 0; i < high + low; ++i) {
    VideoRecord v;
    v.video_id = "vid" + std::to_string(1000 + i);
    v.knowledge_label = i < high ? KnowledgeLabel::HighMK : KnowledgeLabel::LowMK;
    c.videos.push_back(v);
  }
  return c;
}

}  // namespace

TEST(Corpus, ThreeVideoFixtureHasFiveAnnotatedSentences) {
  ThreeVideoFixture fx;
  const Corpus c = fx.load();
  ASSERT_EQ(c.videos.size(), 3u);
  EXPECT_EQ(c.annotated_subset.size(), 5u);
  for (const auto idx : c.annotated_subset) {
    ASSERT_TRUE(c.sentences[idx].gold_labels.has_value());
    EXPECT_EQ(c.sentences[idx].gold_labels->size(), c.sentences[idx].tokens.size());
  }
  EXPECT_TRUE(c.find_video("v1")->has_captions);
  EXPECT_FALSE(c.find_video("v2")->has_captions);
  const auto counts = c.label_counts();
  EXPECT_EQ(counts.high, 1u);
  EXPECT_EQ(counts.low, 1u);
  EXPECT_EQ(counts.unlabeled, 1u);
  // Caption cues are joined before sentence splitting.
  const auto cap = std::find_if(c.sentences.begin(), c.sentences.end(),
                                [](const Sentence& s) { return s.source == SentenceSource::Caption; });
  ASSERT_NE(cap, c.sentences.end());
  EXPECT_EQ(cap->tokens, (std::vector<std::string>{"high", "blood", "pressure", "is", "common", "."}));
}

TEST(Corpus, EmptyAnnotationsGiveEmptySubset) {
  ThreeVideoFixture fx;
  write_file(fx.dir / "annotations.tsv", "");
  const Corpus c = fx.load();
  EXPECT_TRUE(c.annotated_subset.empty());
  EXPECT_FALSE(c.sentences.empty());
}

TEST(Corpus, SaveReloadRoundTrip) {
  ThreeVideoFixture fx;
  const Corpus c = fx.load();
  testutil::TempDir out("corpus_out");
  save_corpus(c, out.path());
  EXPECT_EQ(load_saved_corpus(out.path()), c);
  EXPECT_EQ(write_annotations(load_saved_corpus(out.path())), write_annotations(c));
}

TEST(Corpus, DemoFixtureRoundTrip) {
  const auto demo = testutil::data_dir() / "demo";
  const Corpus c = load_annotated_corpus(demo / "metadata.jsonl", demo / "captions", demo / "annotations.tsv");
  EXPECT_EQ(c.videos.size(), 20u);
  testutil::TempDir out("demo_corpus");
  save_corpus(c, out.path());
  EXPECT_EQ(load_saved_corpus(out.path()), c);
}

TEST(Corpus, DanglingVideoIsAnError) {
  ThreeVideoFixture fx;
  write_file(fx.dir / "annotations.tsv", token_rows("ghost", "desc", 0, {{"x", "NA"}}));
  EXPECT_THROW(fx.load(), ValidationError);
}

TEST(Corpus, UnknownLabelNamesRow) {
  ThreeVideoFixture fx;
  write_file(fx.dir / "annotations.tsv", "v3\tdesc\t0\t0\tstatins\tMT\nv3\tdesc\t0\t1\thelp\tDRUG\n");
  try {
    fx.load();
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Corpus, TokenMismatchAndRangeErrors) {
  ThreeVideoFixture fx;
  write_file(fx.dir / "annotations.tsv", token_rows("v3", "desc", 0, {{"statin", "MT"}, {"help", "NA"}, {".", "NA"}}));
  EXPECT_THROW(fx.load(), ValidationError);
  write_file(fx.dir / "annotations.tsv",
             token_rows("v3", "desc", 0, {{"statins", "MT"}, {"help", "NA"}, {".", "NA"}, {"extra", "NA"}}));
  EXPECT_THROW(fx.load(), ValidationError);
  write_file(fx.dir / "annotations.tsv", token_rows("v3", "desc", 4, {{"statins", "MT"}}));
  EXPECT_THROW(fx.load(), ValidationError);
  // Only part of a sentence annotated.
  write_file(fx.dir / "annotations.tsv", token_rows("v3", "desc", 0, {{"statins", "MT"}, {"help", "NA"}}));
  EXPECT_THROW(fx.load(), ValidationError);
}

TEST(Corpus, VideoLabelConflictingWithMetadata) {
  ThreeVideoFixture fx;
  write_file(fx.dir / "annotations.tsv", "v1\tvideo\t-\t-\t-\tlow\n");
  EXPECT_THROW(fx.load(), ValidationError);
}

TEST(Corpus, MetadataErrors) {
  EXPECT_THROW(parse_metadata("{\"video_id\":\"a\"}\n"), ValidationError);
  EXPECT_THROW(parse_metadata(meta_line("a", "x") + meta_line("a", "y")), ValidationError);
  EXPECT_THROW(parse_metadata("not json\n"), ParseError);
  EXPECT_THROW(parse_metadata(meta_line("a", "x", "medium")), ValidationError);
  EXPECT_THROW(parse_metadata(meta_line("a/b", "x")), ValidationError);
  EXPECT_TRUE(parse_metadata("").empty());
}

TEST(Corpus, MetadataRoundTrip) {
  const auto videos = parse_metadata(meta_line("a", "One. Two \\\"quoted\\\" é") + meta_line("b", "x", ""));
  EXPECT_EQ(parse_metadata(write_metadata(videos)), videos);
}

TEST(Corpus, BomPlusInvalidBytesRejected) {
  EXPECT_THROW(parse_annotations("\xEF\xBB\xBFv\tdesc\t0\t0\t\xC3\tNA\n"), EncodingError);
  EXPECT_THROW(parse_metadata(std::string("\xFF\xFE{\0", 4)), EncodingError);
}

TEST(Corpus, PaperShapedManifestCounts) {
  testutil::TempDir dir("paper_shape");
  std::string meta, ann;
  for (int i = 0; i < 600; ++i) {
    const std::string id = "v" + std::to_string(i);
    const std::string label = i < 377 ? "high" : "low";
    meta += meta_line(id, "Video number " + std::to_string(i) + ".", "");
    ann += id + "\tvideo\t-\t-\t-\t" + label + "\n";
  }
  write_file(dir / "metadata.jsonl", meta);
  write_file(dir / "annotations.tsv", ann);
  const Corpus c = load_annotated_corpus(dir / "metadata.jsonl", dir / "captions", dir / "annotations.tsv");
  const auto counts = c.label_counts();
  EXPECT_EQ(counts.high, 377u);
  EXPECT_EQ(counts.low, 223u);
  EXPECT_EQ(counts.unlabeled, 0u);
}

TEST(Split, PaperSizesStratified) {
  const Corpus c = labelled_corpus(377, 223);
  const auto split = split_dataset(c, 0.8, 42);
  EXPECT_EQ(split.train.size(), 480u);
  EXPECT_EQ(split.test.size(), 120u);
  std::size_t high = 0;
  for (const auto& id : split.train) high += c.find_video(id)->knowledge_label == KnowledgeLabel::HighMK;
  EXPECT_GE(high, 301u);
  EXPECT_LE(high, 302u);
  EXPECT_GE(480 - high, 178u);
  EXPECT_LE(480 - high, 179u);
}

TEST(Split, DeterministicForSeed) {
  const Corpus c = labelled_corpus(6, 4);
  const auto a = split_dataset(c, 0.8, 9);
  const auto b = split_dataset(c, 0.8, 9);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.train.size(), 8u);
}

TEST(Split, PartitionsForAllSeeds) {
  for (bool stratify : {true, false}) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const Corpus c = labelled_corpus(3 + seed % 17, 2 + seed % 11);
      const auto s = split_dataset(c, 0.1 + 0.8 * static_cast<double>(seed % 10) / 10.0, seed, stratify);
      std::set<std::string> all(s.train.begin(), s.train.end());
      for (const auto& id : s.test) EXPECT_TRUE(all.insert(id).second) << "overlap " << id;
      EXPECT_EQ(all.size(), c.videos.size());
      EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));
    }
  }
}

TEST(Split, RejectsBadFraction) {
  const Corpus c = labelled_corpus(5, 5);
  EXPECT_THROW(split_dataset(c, 0.0, 1), ValidationError);
  EXPECT_THROW(split_dataset(c, 1.0, 1), ValidationError);
}
