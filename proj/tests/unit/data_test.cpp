#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "gtest/gtest.h"
#include "harmnet/data.hpp"
#include "harmnet/synthetic.hpp"

using namespace harmnet;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Independent multinomial NB with Laplace smoothing, used as the
// separability oracle for the synthetic generator.
struct TinyNb {
  std::map<int, double> log_prior;
  std::map<int, std::map<std::string, double>> tok_count;
  std::map<int, double> total;
  std::set<std::string> vocab;

  void fit(const std::vector<std::pair<std::vector<std::string>, int>>& docs) {
    std::map<int, int> class_n;
    for (const auto& [toks, y] : docs) {
      ++class_n[y];
      for (const auto& t : toks) {
        tok_count[y][t] += 1.0;
        total[y] += 1.0;
        vocab.insert(t);
      }
    }
    for (const auto& [y, n] : class_n)
      log_prior[y] = std::log(static_cast<double>(n) / docs.size());
  }

  int predict(const std::vector<std::string>& toks) const {
    int best = -1;
    double best_score = 0.0;
    const double v = static_cast<double>(vocab.size());
    for (const auto& [y, prior] : log_prior) {
      double score = prior;
      const auto& counts = tok_count.at(y);
      for (const auto& t : toks) {
        const auto it = counts.find(t);
        const double c = it == counts.end() ? 0.0 : it->second;
        score += std::log((c + 1.0) / (total.at(y) + v));
      }
      if (best < 0 || score > best_score) {
        best = y;
        best_score = score;
      }
    }
    return best;
  }
};

}  // namespace

TEST(TokenizeTest, LowercasesAndSplitsRuns) {
  auto toks = tokenize("Patient FELL  hard");
  ASSERT_EQ(toks.size(), 3u);
  EXPECT_EQ(toks[0], "patient");
  EXPECT_EQ(toks[1], "fell");
  EXPECT_EQ(toks[2], "hard");
}

TEST(TokenizeTest, EmptyTextGivesEmptyList) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize("   \t\n ").empty());
}

TEST(TokenizeTest, IdempotentOnJoinedTokens) {
  std::mt19937_64 rng(1);
  const std::vector<std::string> pool = {"fall", "iv",    "pt",   "0.5mg",
                                         "b/p",  "noted", "q4h",  "stat"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> toks;
    const int n = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i)
      toks.push_back(pool[rng() % pool.size()]);
    std::string joined;
    for (const auto& t : toks) {
      if (!joined.empty()) joined += ' ';
      joined += t;
    }
    EXPECT_EQ(tokenize(joined), toks);
  }
}

TEST(VocabTest, FrequencyThenLexicographicOrder) {
  Vocabulary v = build_vocab({Report{"a a b", "A", "", {}}});
  EXPECT_EQ(v.id_of("a"), 2);
  EXPECT_EQ(v.id_of("b"), 3);
  EXPECT_EQ(v.size(), 4);
}

TEST(VocabTest, MinCountDropsRareTokensToUnknown) {
  Vocabulary v = build_vocab({Report{"a a b", "A", "", {}}}, 2);
  EXPECT_EQ(v.id_of("a"), 2);
  EXPECT_EQ(v.id_of("b"), kUnkId);
}

TEST(VocabTest, DeterministicTieBreak) {
  std::vector<Report> corpus = {Report{"zed apple zed apple mango", "C", "", {}},
                                Report{"mango banana", "D", "", {}}};
  Vocabulary a = build_vocab(corpus);
  Vocabulary b = build_vocab(corpus);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_EQ(a.content_hash(), b.content_hash());
  // equal counts resolve lexicographically
  EXPECT_LT(a.id_of("apple"), a.id_of("zed"));
  EXPECT_LT(a.id_of("banana"), a.id_of("mango") + 100);
}

TEST(VocabTest, EmptyCorpusRejected) {
  EXPECT_THROW(build_vocab({}), DataError);
}

TEST(VocabTest, JsonRoundTripPreservesHash) {
  Vocabulary v = build_vocab({Report{"fall fall bruise hip", "E", "", {}}});
  Vocabulary w = vocab_from_json(vocab_to_json(v));
  EXPECT_EQ(v.tokens, w.tokens);
  EXPECT_EQ(v.counts, w.counts);
  EXPECT_EQ(v.content_hash(), w.content_hash());
}

TEST(EncodeTest, PadsShortInput) {
  Vocabulary v = build_vocab({Report{"pt fell hard", "E", "", {}}});
  EncodedReport e =
      encode(Report{"pt fell hard", "E", "", {}}, v, LabelSchema::binary(), 5);
  ASSERT_EQ(e.ids.size(), 5u);
  EXPECT_NE(e.ids[0], kPadId);
  EXPECT_NE(e.ids[2], kPadId);
  EXPECT_EQ(e.ids[3], kPadId);
  EXPECT_EQ(e.ids[4], kPadId);
  EXPECT_EQ(e.mask, (std::vector<std::uint8_t>{1, 1, 1, 0, 0}));
}

TEST(EncodeTest, HeadCropsLongInput) {
  Vocabulary v = build_vocab({Report{"a b c d e f g", "C", "", {}}});
  EncodedReport e =
      encode(Report{"a b c d e f g", "C", "", {}}, v, LabelSchema::binary(), 5);
  ASSERT_EQ(e.ids.size(), 5u);
  EXPECT_EQ(e.ids[0], v.id_of("a"));
  EXPECT_EQ(e.ids[4], v.id_of("e"));
  for (auto m : e.mask) EXPECT_EQ(m, 1);
}

TEST(EncodeTest, SeverityEIsHarmUnderBinary) {
  Vocabulary v = build_vocab({Report{"x", "E", "", {}}});
  EncodedReport e = encode(Report{"x", "E", "", {}}, v, LabelSchema::binary(), 3);
  EXPECT_EQ(e.label, 1);
  EXPECT_EQ(LabelSchema::binary().class_names[1], "harm");
}

TEST(EncodeTest, UnlabeledReportRejected) {
  Vocabulary v = build_vocab({Report{"x", "E", "", {}}});
  EXPECT_THROW(encode(Report{"x", "", "", {}}, v, LabelSchema::binary(), 3),
               DataError);
}

TEST(EncodeTest, NeverProducesIdOutsideVocab) {
  Vocabulary v = build_vocab({Report{"seen tokens only", "C", "", {}}});
  std::mt19937_64 rng(2);
  const std::vector<std::string> unseen = {"brand", "new", "words", "here"};
  for (int trial = 0; trial < 20; ++trial) {
    std::string text;
    for (int i = 0; i < 10; ++i)
      text += unseen[rng() % unseen.size()] + " ";
    EncodedReport e =
        encode(Report{text, "E", "", {}}, v, LabelSchema::binary(), 8);
    for (auto id : e.ids) {
      EXPECT_GE(id, 0);
      EXPECT_LT(id, v.size());
    }
  }
}

TEST(EncodeTest, UnseenTokensMapToUnknown) {
  Vocabulary v = build_vocab({Report{"train tokens", "C", "", {}}});
  EncodedReport e = encode(Report{"validation only words", "E", "", {}}, v,
                           LabelSchema::binary(), 3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(e.ids[i], kUnkId);
}

TEST(MapLabelTest, BinaryGrouping) {
  LabelSchema b = LabelSchema::binary();
  EXPECT_EQ(map_label("A", b), 0);
  EXPECT_EQ(map_label("I", b), 1);
  for (const auto& code : {"A", "B1", "B2", "C", "D"})
    EXPECT_EQ(map_label(code, b), 0);
  for (const auto& code : {"E", "F", "G", "H", "I"})
    EXPECT_EQ(map_label(code, b), 1);
}

TEST(MapLabelTest, FourLevelDefaultGrouping) {
  LabelSchema s = LabelSchema::four_level();
  EXPECT_EQ(s.class_names[map_label("B2", s)], "near_miss");
  EXPECT_EQ(s.class_names[map_label("A", s)], "unsafe");
  EXPECT_EQ(s.class_names[map_label("D", s)], "reached_no_harm");
  EXPECT_EQ(s.class_names[map_label("G", s)], "harm");
}

TEST(MapLabelTest, FullKeepsTenDistinctClasses) {
  LabelSchema s = LabelSchema::full();
  EXPECT_EQ(s.num_classes(), 10);
  EXPECT_NE(map_label("B1", s), map_label("B2", s));
}

TEST(MapLabelTest, TotalOverAllCodesAndInRange) {
  for (const auto& name : {"binary", "four_level", "full"}) {
    LabelSchema s = LabelSchema::by_name(name);
    for (const auto& code : severity_codes()) {
      const int cls = map_label(code, s);
      EXPECT_GE(cls, 0);
      EXPECT_LT(cls, s.num_classes());
    }
  }
}

TEST(MapLabelTest, UnknownCodeRejected) {
  EXPECT_THROW(map_label("Z", LabelSchema::binary()), DataError);
  EXPECT_THROW(LabelSchema::by_name("bogus"), ConfigError);
}

TEST(MapLabelTest, CustomFourLevelRemapIsConfigurable) {
  // move B-codes into the reached-no-harm group
  std::map<std::string, int> m = {{"A", 0}, {"B1", 2}, {"B2", 2}, {"C", 2},
                                  {"D", 2}, {"E", 3},  {"F", 3},  {"G", 3},
                                  {"H", 3}, {"I", 3}};
  // class 1 unreachable -> rejected
  EXPECT_THROW(LabelSchema::custom("remap", m,
                                   {"unsafe", "near_miss", "reached", "harm"}),
               ConfigError);
  m["B1"] = 1;
  LabelSchema s = LabelSchema::custom(
      "remap", m, {"unsafe", "near_miss", "reached", "harm"});
  EXPECT_EQ(map_label("B2", s), 2);
}

TEST(JsonlTest, SingleLineParses) {
  Report r = report_from_json_line(R"({"text":"pt fell","severity":"E"})", 1);
  EXPECT_EQ(r.text, "pt fell");
  EXPECT_EQ(r.severity, "E");
  EXPECT_TRUE(r.category.empty());
}

TEST(JsonlTest, RoundTripEquality) {
  std::vector<Report> reports = {
      Report{"pt fell", "E", "Fall", {}},
      Report{"no severity given", "", "", {}},
      Report{"extra keys", "C", "Lab/Specimen",
             json{{"site", "icu"}, {"shift", 3}}},
  };
  const std::string path = temp_path("harmnet_jsonl_test.jsonl");
  save_jsonl(reports, path);
  std::vector<Report> back = load_jsonl(path);
  ASSERT_EQ(back.size(), reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i)
    EXPECT_EQ(back[i], reports[i]);
  std::remove(path.c_str());
}

TEST(JsonlTest, CorruptLineNamesLineNumber) {
  const std::string content =
      "{\"text\":\"ok one\"}\n{\"text\":\"ok two\"}\nnot json at all\n";
  try {
    parse_jsonl(content);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos)
        << e.what();
  }
}

TEST(JsonlTest, MissingTextRejected) {
  EXPECT_THROW(parse_jsonl("{\"severity\":\"E\"}\n"), DataError);
}

TEST(JsonlTest, InvalidSeverityRejected) {
  EXPECT_THROW(parse_jsonl("{\"text\":\"x\",\"severity\":\"Q\"}\n"), DataError);
}

TEST(SyntheticTest, PureHarmPriorsGiveOnlyHarmLabels) {
  SyntheticSpec spec = separable_profile();
  spec.priors = {{"E", 1.0}};
  auto reports = gen_synthetic(spec, 50, 7);
  for (const auto& r : reports) EXPECT_EQ(r.severity, "E");
}

TEST(SyntheticTest, SameSeedGivesIdenticalCorpora) {
  SyntheticSpec spec = ds1_like_profile();
  auto a = gen_synthetic(spec, 200, 123);
  auto b = gen_synthetic(spec, 200, 123);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  auto c = gen_synthetic(spec, 200, 124);
  bool all_same = true;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i] == c[i])) all_same = false;
  EXPECT_FALSE(all_same);
}

TEST(SyntheticTest, Ds1HarmFractionNearTableTwo) {
  auto reports = gen_synthetic(ds1_like_profile(), 10000, 42);
  int harm = 0;
  for (const auto& r : reports) harm += is_harm_code(r.severity);
  EXPECT_NEAR(harm / 10000.0, 0.139, 0.01);
}

TEST(SyntheticTest, Ds2HarmFractionNearTableTwo) {
  auto reports = gen_synthetic(ds2_like_profile(), 10000, 42);
  int harm = 0;
  for (const auto& r : reports) harm += is_harm_code(r.severity);
  EXPECT_NEAR(harm / 10000.0, 0.034, 0.01);
}

TEST(SyntheticTest, EmptyBankForRequestedClassRejected) {
  SyntheticSpec spec = separable_profile();
  spec.banks.erase("E");
  spec.priors = {{"E", 1.0}};
  EXPECT_THROW(gen_synthetic(spec, 10, 1), ConfigError);
}

TEST(SyntheticTest, BadPriorsRejected) {
  SyntheticSpec spec = separable_profile();
  spec.priors = {{"E", 0.4}, {"A", 0.4}};
  EXPECT_THROW(gen_synthetic(spec, 10, 1), ConfigError);
}

TEST(SyntheticTest, UnknownProfileRejected) {
  EXPECT_THROW(profile_by_name("nope"), ConfigError);
}

TEST(SyntheticTest, NoiseFreeCorpusIsNaiveBayesSeparable) {
  auto reports = gen_synthetic(separable_profile(), 300, 11);
  std::vector<std::pair<std::vector<std::string>, int>> docs;
  LabelSchema schema = LabelSchema::binary();
  for (const auto& r : reports)
    docs.emplace_back(tokenize(r.text), map_label(r.severity, schema));
  TinyNb nb;
  nb.fit(docs);
  for (const auto& [toks, y] : docs) EXPECT_EQ(nb.predict(toks), y);
}

TEST(SyntheticTest, ReportsCarryCategories) {
  auto reports = gen_synthetic(ds1_like_profile(), 100, 5);
  for (const auto& r : reports) EXPECT_FALSE(r.category.empty());
}
