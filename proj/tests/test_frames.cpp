#include <gtest/gtest.h>

#include <algorithm>

#include "medlit/frames.hpp"
#include "test_support.hpp"

using namespace medlit;

namespace {

const std::string kHeader = "video_id,frame_index,rank,category,probability\n";

std::string frame_rows(const std::string& video, int frame, const std::vector<std::pair<std::string, double>>& entries) {
  std::string out;
  for (std::size_t r = 0; r < entries.size(); ++r) {
    out += video + "," + std::to_string(frame) + "," + std::to_string(r + 1) + "," + entries[r].first + "," +
           format_double(entries[r].second) + "\n";
  }
  return out;
}

const std::vector<std::pair<std::string, double>> kDescending = {
    {"syringe", 0.6}, {"lab coat", 0.2}, {"desk", 0.1}, {"pill bottle", 0.06}, {"monitor", 0.04}};

MedicalObjectLexicon lexicon_of(std::initializer_list<std::string> labels) {
  MedicalObjectLexicon lex;
  for (const auto& l : labels) lex.labels[l] = "";
  return lex;
}

std::vector<FramePrediction> random_frames(Rng& rng, const std::string& video, std::size_t count) {
  static const std::vector<std::string> categories = {"syringe", "stethoscope", "desk", "cat", "pill bottle",
                                                      "lab coat", "monitor", "dog"};
  std::vector<FramePrediction> frames;
  for (std::size_t f = 0; f < count; ++f) {
    FramePrediction fp{video, static_cast<std::int64_t>(f), {}, 0};
    std::vector<double> probs;
    for (std::size_t k = 0; k < kTopCategories; ++k) probs.push_back(rng.uniform01());
    std::sort(probs.rbegin(), probs.rend());
    auto cats = categories;
    rng.shuffle(cats);
    for (std::size_t k = 0; k < kTopCategories; ++k) fp.top.push_back({cats[k], probs[k]});
    frames.push_back(fp);
  }
  return frames;
}

// Scan oracle: one pass over every surviving (frame, entry).
std::pair<std::size_t, std::size_t> scan_counts(const std::vector<FramePrediction>& frames,
                                                const MedicalObjectLexicon& lex, double threshold) {
  std::size_t occurrences = 0;
  std::set<std::string> distinct;
  for (const auto& f : frames) {
    for (const auto& e : f.top) {
      if (e.probability >= threshold && lex.contains(e.category)) ++occurrences, distinct.insert(e.category);
    }
  }
  return {occurrences, distinct.size()};
}

}  // namespace

TEST(Schedule, Examples) {
  const auto s = sampling_schedule(61);
  ASSERT_EQ(s.size(), 31u);
  EXPECT_EQ(s.front(), 0);
  EXPECT_EQ(s.back(), 60);
  EXPECT_TRUE(sampling_schedule(0).empty());
  EXPECT_EQ(sampling_schedule(1), (std::vector<std::int64_t>{0}));
  EXPECT_EQ(sampling_schedule(4), (std::vector<std::int64_t>{0, 2}));
  EXPECT_THROW(sampling_schedule(-1), ValidationError);
}

TEST(Schedule, LengthIsCeilingOfHalfDuration) {
  for (std::int64_t d = 0; d <= 10000; ++d) {
    const auto s = sampling_schedule(d);
    ASSERT_EQ(static_cast<std::int64_t>(s.size()), (d + 1) / 2) << d;
    if (!s.empty()) ASSERT_LT(s.back(), d);
  }
}

TEST(Schedule, ManifestTotalMatchesSummedCeilings) {
  Rng rng(3);
  std::size_t total = 0, brute = 0;
  for (int v = 0; v < 200; ++v) {
    const auto d = static_cast<std::int64_t>(rng.below(3600));
    total += sampling_schedule(d).size();
    for (std::int64_t t = 0; t < d; t += 2) ++brute;
  }
  EXPECT_EQ(total, brute);
}

TEST(FrameCsv, ThreeFramesAndOrdering) {
  const auto raw = kHeader + frame_rows("v2", 1, kDescending) + frame_rows("v1", 3, kDescending) +
                   frame_rows("v1", 0, kDescending);
  const auto frames = parse_frame_predictions(raw);
  ASSERT_EQ(frames.size(), 3u);
  EXPECT_EQ(frames[0].video_id, "v1");
  EXPECT_EQ(frames[0].frame_index, 0);
  EXPECT_EQ(frames[1].frame_index, 3);
  EXPECT_EQ(frames[1].timestamp_s(), 6);
  EXPECT_EQ(frames[2].video_id, "v2");
  EXPECT_EQ(frames[0].top.size(), 5u);
  EXPECT_EQ(frames[0].top[1], (ObjectScore{"lab coat", 0.2}));
  EXPECT_EQ(group_by_video(frames).at("v1").size(), 2u);
}

TEST(FrameCsv, EmptyInputs) {
  EXPECT_TRUE(parse_frame_predictions("").empty());
  EXPECT_TRUE(parse_frame_predictions(kHeader).empty());
}

TEST(FrameCsv, PermutedProbabilitiesRejected) {
  auto permuted = kDescending;
  std::swap(permuted[1], permuted[3]);
  try {
    parse_frame_predictions(kHeader + frame_rows("v", 0, permuted));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);  // rank 3 (0.1) follows rank 2 (0.06)
  }
}

TEST(FrameCsv, RowErrors) {
  EXPECT_THROW(parse_frame_predictions(kHeader + "v,0,1,syringe,1.2\n"), ParseError);
  EXPECT_THROW(parse_frame_predictions(kHeader + "v,0,1,syringe,-0.1\n"), ParseError);
  EXPECT_THROW(parse_frame_predictions(kHeader + frame_rows("v", 0, kDescending) + "v,0,6,extra,0.01\n"), ParseError);
  EXPECT_THROW(parse_frame_predictions(kHeader + "v,0,1,a,0.5\nv,0,1,b,0.4\n"), ParseError);
  EXPECT_THROW(parse_frame_predictions(kHeader + "v,-1,1,a,0.5\n"), ParseError);
  EXPECT_THROW(parse_frame_predictions(kHeader + "v,0,1,a\n"), ParseError);
  EXPECT_THROW(parse_frame_predictions("id,frame\nv,0\n"), ParseError);
  EXPECT_THROW(parse_frame_predictions(kHeader + "v,0,1,\"unterminated,0.5\n"), ParseError);
}

TEST(FrameCsv, ShortFramesArePaddedAndFlagged) {
  const auto frames = parse_frame_predictions(kHeader + "v,0,1,syringe,0.7\nv,0,2,desk,0.2\n");
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0].top.size(), 5u);
  EXPECT_EQ(frames[0].padded, 3u);
  EXPECT_EQ(frames[0].top[4], (ObjectScore{"", 0.0}));
  EXPECT_EQ(parse_frame_predictions(write_frame_predictions(frames)), frames);
}

TEST(FrameCsv, QuotedFieldsAndRoundTrip) {
  const auto frames = parse_frame_predictions(kHeader + "\"v,1\",0,1,\"pill bottle\",0.5\n" +
                                              frame_rows("w", 2, kDescending));
  EXPECT_EQ(frames[0].video_id, "v,1");
  const auto text = write_frame_predictions(frames);
  EXPECT_EQ(parse_frame_predictions(text), frames);
  EXPECT_EQ(write_frame_predictions(parse_frame_predictions(text)), text);
}

TEST(FrameCsv, RandomRoundTrip) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto frames = random_frames(rng, "vid" + std::to_string(trial), 1 + rng.below(6));
    const auto text = write_frame_predictions(frames);
    EXPECT_EQ(parse_frame_predictions(text), frames);
  }
}

TEST(Filter, Examples) {
  const auto frames = parse_frame_predictions(kHeader + frame_rows("v", 0, kDescending) + "v,1,1,syringe,1\n");
  EXPECT_EQ(filter_predictions(frames, 0.0), frames);
  const auto at_10 = filter_predictions(frames, 0.10);
  EXPECT_EQ(at_10[0].top.size(), 3u);
  const auto at_1 = filter_predictions(frames, 1.0);
  ASSERT_EQ(at_1.size(), 2u);
  EXPECT_TRUE(at_1[0].top.empty());
  ASSERT_EQ(at_1[1].top.size(), 1u);
  EXPECT_EQ(at_1[1].top[0].probability, 1.0);
  EXPECT_THROW(filter_predictions(frames, 1.5), ValidationError);
}

TEST(Lexicon, ParsesLabelsAndNotes) {
  const auto lex = parse_object_lexicon("# header\nSyringe  # ImageNet n04376876\n\nstethoscope\n");
  EXPECT_EQ(lex.labels.size(), 2u);
  EXPECT_TRUE(lex.contains("syringe"));
  EXPECT_NE(lex.labels.at("syringe").find("n04376876"), std::string::npos);
  const auto shipped = parse_object_lexicon(read_file(testutil::data_dir() / "medical_objects.txt"));
  EXPECT_TRUE(shipped.contains("stethoscope"));
  for (const auto& [label, note] : shipped.labels) {
    EXPECT_EQ(label, to_lower(label));
  }
}

TEST(Count, Examples) {
  const auto lex = lexicon_of({"syringe"});
  const std::vector<FramePrediction> one = {{"v", 0, {{"syringe", 0.5}}, 0}};
  EXPECT_EQ(count_medical_objects("v", one, lex, 0.1).medical_object_count, 1u);
  const std::vector<FramePrediction> none = {{"v", 0, {{"desk", 0.5}, {"cat", 0.3}}, 0}};
  const auto s = count_medical_objects("v", none, lex, 0.1);
  EXPECT_EQ(s.medical_object_count, 0u);
  EXPECT_EQ(s.frames_seen, 1u);
  const auto empty = count_medical_objects("v", {}, lex, 0.1);
  EXPECT_EQ(empty.frames_seen, 0u);
  EXPECT_EQ(empty.medical_object_count, 0u);
  EXPECT_TRUE(empty.distinct_medical_categories.empty());
  EXPECT_THROW(count_medical_objects("v", one, MedicalObjectLexicon{}, 0.1), ValidationError);
  EXPECT_THROW(count_medical_objects("w", one, lex, 0.1), ValidationError);
}

TEST(Count, TenFramesMatchScanOracle) {
  Rng rng(5);
  const auto frames = random_frames(rng, "v", 10);
  const auto lex = lexicon_of({"syringe", "stethoscope", "pill bottle", "lab coat"});
  const auto [occ, distinct] = scan_counts(frames, lex, 0.1);
  EXPECT_EQ(count_medical_objects("v", frames, lex, 0.1, CountMode::Occurrences).medical_object_count, occ);
  const auto d = count_medical_objects("v", frames, lex, 0.1, CountMode::Distinct);
  EXPECT_EQ(d.medical_object_count, distinct);
  EXPECT_EQ(d.distinct_medical_categories.size(), distinct);
}

TEST(Count, ThresholdMonotoneAndOccurrencesDominate) {
  Rng rng(6);
  const auto lex = lexicon_of({"syringe", "stethoscope", "pill bottle"});
  for (int trial = 0; trial < 500; ++trial) {
    const auto frames = random_frames(rng, "v", rng.below(12));
    double t1 = rng.uniform01(), t2 = rng.uniform01();
    if (t1 > t2) std::swap(t1, t2);
    for (const auto mode : {CountMode::Occurrences, CountMode::Distinct}) {
      EXPECT_GE(count_medical_objects("v", frames, lex, t1, mode).medical_object_count,
                count_medical_objects("v", frames, lex, t2, mode).medical_object_count);
    }
    const auto occ = count_medical_objects("v", frames, lex, t1, CountMode::Occurrences);
    EXPECT_GE(occ.medical_object_count, count_medical_objects("v", frames, lex, t1, CountMode::Distinct).medical_object_count);
    EXPECT_GE(occ.medical_object_count, occ.distinct_medical_categories.size());
  }
}
