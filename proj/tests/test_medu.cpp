#include <gtest/gtest.h>

#include <numeric>
#include <set>
#include <sstream>

#include "datamix/medu.hpp"
#include "medu_fixture.hpp"
#include "test_support.hpp"

using namespace datamix;
using namespace datamix::medu;

namespace {

std::vector<BenchmarkDescription> descs(std::size_t n) {
  std::vector<BenchmarkDescription> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"b", "d" + std::to_string(i), false});
  return out;
}

// Answers every merge prompt with "(A+B)" so the merge tree is visible.
class TreeProvider : public CompletionProvider {
 public:
  std::string complete(const std::string& prompt, const DecodingParams&) override {
    ++calls;
    auto grab = [&](const std::string& open, const std::string& close) {
      const auto s = prompt.find(open) + open.size() + 1;
      return prompt.substr(s, prompt.find(close) - s - 1);
    };
    return "(" + grab("<BEGIN CORPUS DESCRIPTION A>", "<END CORPUS DESCRIPTION A>") + "+" +
           grab("<BEGIN CORPUS DESCRIPTION B>", "<END CORPUS DESCRIPTION B>") + ")";
  }
  int calls = 0;
};

}  // namespace

TEST(Labels, MapRoundTrips) {
  const double values[] = {1.0, 0.75, 0.5, 0.25, 0.0};
  const char* names[] = {"Great", "Good", "Okay", "Poor", "Useless"};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(label_value(kAllLabels[i]), values[i]);
    EXPECT_EQ(label_name(kAllLabels[i]), names[i]);
    EXPECT_EQ(label_from_value(values[i]), kAllLabels[i]);
    EXPECT_EQ(label_from_word(names[i]), kAllLabels[i]);
    EXPECT_EQ(label_value(*label_from_value(label_value(kAllLabels[i]))), values[i]);
  }
  EXPECT_FALSE(label_from_value(0.6));
}

TEST(Labels, ParsesFinalWord) {
  EXPECT_EQ(parse_label("Reasoning... Great"), UtilityLabel::Great);
  EXPECT_EQ(parse_label("so: useless."), UtilityLabel::Useless);
  EXPECT_EQ(parse_label("**Okay**\n"), UtilityLabel::Okay);
  EXPECT_EQ(parse_label("Decision: POOR!"), UtilityLabel::Poor);
  EXPECT_FALSE(parse_label("I cannot decide"));
  EXPECT_FALSE(parse_label("Great, probably not"));
  EXPECT_FALSE(parse_label(""));
  EXPECT_FALSE(parse_label("..."));
}

TEST(Templates, RenderSlotsVerbatim) {
  const std::vector<std::string> ex{"alpha", "beta"};
  const auto p = render_describe_prompt(ex);
  EXPECT_EQ(p.rfind("\nalpha\n\nbeta\nHelp me decide the types of training data", 0), 0u);
  EXPECT_NE(p.find("for an evaluation with data similar to the above. \n"), std::string::npos);

  const auto m = render_merge_prompt("A-text", "B-text");
  EXPECT_NE(m.find("<BEGIN CORPUS DESCRIPTION A>\nA-text\n<END CORPUS DESCRIPTION A>"),
            std::string::npos);
  EXPECT_NE(m.find("<END CORPUS DESCRIPTION B>\n\nThe above analyses"), std::string::npos);

  const auto c = render_classify_prompt("doc body", "desc body");
  EXPECT_NE(c.find("Document: \n```\ndoc body\n```"), std::string::npos);
  EXPECT_NE(c.find("\ndesc body\n        \nOutput your decision"), std::string::npos);
  EXPECT_NE(c.find("Great/Good/Okay/Poor/Useless without formatting.==\n"), std::string::npos);
  EXPECT_NE(render_classify_prompt("x", "y", " (excerpt)").find("Document (excerpt): "),
            std::string::npos);
}

TEST(Templates, SubstitutedTextIsNotRescanned) {
  EXPECT_EQ(render_template("{a}{b}", {{"a", "{b}"}, {"b", "x"}}), "{b}x");
  EXPECT_EQ(render_template("{missing}", {}), "{missing}");
}

TEST(DescribeBatch, PassesMockTextThrough) {
  MockProvider p;
  p.set_default("canned description");
  const std::vector<std::string> ex{"q1", "q2"};
  const auto d = describe_batch("arc", ex, p);
  EXPECT_EQ(d.text, "canned description");
  EXPECT_FALSE(d.truncated);
  EXPECT_THROW(describe_batch("arc", std::vector<std::string>{}, p), ConfigError);
}

TEST(DescribeBatch, TruncatesOverBudget) {
  MockProvider p;
  p.set_default("ok");
  MeduConfig cfg;
  const std::size_t overhead = count_tokens(render_describe_prompt({}));
  cfg.max_prompt_tokens = overhead + 5;
  const std::vector<std::string> ex{"one two three", "four five six"};
  AuditLog log;
  cfg.audit = &log;
  const auto d = describe_batch("arc", ex, p, cfg);
  EXPECT_TRUE(d.truncated);
  const std::string prompt = log.records().at(0).at("prompt");
  EXPECT_LE(count_tokens(prompt), cfg.max_prompt_tokens);
  EXPECT_NE(prompt.find("one two three"), std::string::npos);
  EXPECT_EQ(prompt.find("four"), std::string::npos);

  // A single example longer than the budget is cut word-wise.
  const std::vector<std::string> big{"a b c d e f g h i j"};
  const auto d2 = describe_batch("arc", big, p, cfg);
  EXPECT_TRUE(d2.truncated);
  EXPECT_LE(count_tokens(log.records().back().at("prompt").get<std::string>()),
            cfg.max_prompt_tokens);
}

TEST(BatchExamples, GreedyPacking) {
  const std::size_t overhead = count_tokens(render_describe_prompt({}));
  const std::vector<std::string> ex{"a b", "c d", "e f", "g"};
  const auto b = batch_examples(ex, overhead + 4);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0], (std::vector<std::string>{"a b", "c d"}));
  EXPECT_EQ(b[1], (std::vector<std::string>{"e f", "g"}));
  EXPECT_EQ(batch_examples(ex, 100000).size(), 1u);
}

TEST(MergeDescriptions, SingleIsUnchanged) {
  TreeProvider p;
  const auto d = merge_descriptions(descs(1), p);
  EXPECT_EQ(d.text, "d0");
  EXPECT_EQ(p.calls, 0);
  EXPECT_THROW(merge_descriptions({}, p), ConfigError);
}

TEST(MergeDescriptions, TreeShapeWithCarryForward) {
  TreeProvider four;
  EXPECT_EQ(merge_descriptions(descs(4), four).text, "((d0+d1)+(d2+d3))");
  EXPECT_EQ(four.calls, 3);
  TreeProvider five;
  EXPECT_EQ(merge_descriptions(descs(5), five).text, "(((d0+d1)+(d2+d3))+d4)");
  EXPECT_EQ(five.calls, 4);
}

TEST(MergeDescriptions, CallCountIsNMinusOne) {
  for (std::size_t n = 1; n <= 40; ++n) {
    TreeProvider p;
    merge_descriptions(descs(n), p);
    EXPECT_EQ(p.calls, static_cast<int>(n) - 1) << n;
  }
}

TEST(MergeDescriptions, ConcurrentMatchesSerial) {
  TreeProvider a, b;
  MeduConfig cfg;
  cfg.concurrency = 4;
  EXPECT_EQ(merge_descriptions(descs(11), a, cfg).text, merge_descriptions(descs(11), b).text);
}

TEST(ChunkDocument, Examples) {
  Rng rng(1);
  std::vector<int> ten(10), twenty(20);
  std::iota(twenty.begin(), twenty.end(), 0);
  EXPECT_EQ(chunk_document(std::span<const int>(ten), 20, rng).size(), 10u);
  for (int trial = 0; trial < 200; ++trial) {
    const auto w = chunk_document(std::span<const int>(twenty), 10, rng);
    ASSERT_EQ(w.size(), 10u);
    EXPECT_GE(w.front(), 0);
    EXPECT_LE(w.front(), 10);
    EXPECT_EQ(w.back(), w.front() + 9);
  }
  Rng r1(9), r2(9);
  EXPECT_EQ(chunk_document(std::span<const int>(twenty), 7, r1).data(),
            chunk_document(std::span<const int>(twenty), 7, r2).data());
  EXPECT_THROW(chunk_document(std::span<const int>(twenty), 0, r1), ConfigError);
}

TEST(ChunkDocument, AllStartsReachable) {
  Rng rng(3);
  std::vector<int> twenty(20);
  std::iota(twenty.begin(), twenty.end(), 0);
  std::set<int> starts;
  for (int trial = 0; trial < 2000; ++trial)
    starts.insert(chunk_document(std::span<const int>(twenty), 10, rng).front());
  EXPECT_EQ(starts.size(), 11u);
}

TEST(ChunkText, KeepsOriginalSpacing) {
  Rng rng(4);
  EXPECT_EQ(chunk_text("a  b\tc", 5, rng), "a  b\tc");
  const auto w = chunk_text("w0 w1  w2 w3 w4", 2, rng);
  EXPECT_EQ(count_tokens(w), 2u);
  EXPECT_NE(std::string("w0 w1  w2 w3 w4").find(w), std::string::npos);
}

TEST(ClassifyDocument, Examples) {
  MockProvider p;
  p.add_rule("doc-great", "Looks fine. Great");
  p.add_rule("doc-useless", "Nothing here: useless.");
  p.set_default("I cannot decide");
  const BenchmarkDescription d{"arc", "desc", false};
  EXPECT_EQ(classify_document("doc-great", d, p), UtilityLabel::Great);
  EXPECT_EQ(label_value(classify_document("doc-useless", d, p)), 0.0);

  MockProvider undecided;
  undecided.set_default("I cannot decide");
  try {
    classify_document("doc", d, undecided);
    FAIL() << "expected ClassificationError";
  } catch (const ClassificationError& e) {
    EXPECT_EQ(e.raw_completion(), "I cannot decide");
  }
  EXPECT_EQ(undecided.calls(), 4u);  // 1 + 3 retries
  EXPECT_THROW(classify_document("", d, p), ConfigError);
}

TEST(ClassifyDocument, RetriesUntilParseable) {
  class Flaky : public CompletionProvider {
   public:
    std::string complete(const std::string&, const DecodingParams&) override {
      return ++n < 3 ? "hmm" : "Good";
    }
    int n = 0;
  } flaky;
  EXPECT_EQ(classify_document("doc", {"arc", "d", false}, flaky), UtilityLabel::Good);
  EXPECT_EQ(flaky.n, 3);
}

TEST(ScoreCorpus, ConstantAndAlternatingLabels) {
  std::vector<CorpusDocument> docs;
  for (int i = 0; i < 256; ++i)
    docs.push_back({"d" + std::to_string(i), (i % 2 ? "odd " : "even ") + std::to_string(i)});
  const std::vector<BenchmarkDescription> d{{"arc", "desc", false}};

  MockProvider great;
  great.set_default("Great");
  EXPECT_EQ(score_corpus("c", docs, d, great, 1).scores[0], 1.0);

  MockProvider alt;
  alt.add_rule("even", "Great");
  alt.set_default("Useless");
  EXPECT_EQ(score_corpus("c", docs, d, alt, 1).scores[0], 0.5);
}

TEST(ScoreCorpus, SmallCorpusUsedWhole) {
  std::vector<CorpusDocument> docs;
  for (int i = 0; i < 100; ++i) docs.push_back({"d" + std::to_string(i), "text"});
  MockProvider p;
  p.set_default("Okay");
  const auto s = score_corpus("c", docs, std::vector<BenchmarkDescription>{{"t", "x", false}}, p, 5);
  EXPECT_EQ(s.sampled_ids.size(), 100u);
  EXPECT_EQ(std::set<std::string>(s.sampled_ids.begin(), s.sampled_ids.end()).size(), 100u);
}

TEST(ScoreCorpus, ExcludesFailuresAndReportsThem) {
  std::vector<CorpusDocument> docs{{"a", "good doc"}, {"b", "bad doc"}, {"c", "good doc two"}};
  MockProvider p;
  p.add_rule("good", "Good");
  p.set_default("no idea");
  const auto s = score_corpus("c", docs, std::vector<BenchmarkDescription>{{"t", "x", false}}, p, 1);
  EXPECT_EQ(s.scores[0], 0.75);
  EXPECT_EQ(s.excluded[0], 1u);

  MockProvider never;
  never.set_default("no idea");
  EXPECT_THROW(score_corpus("c", docs, std::vector<BenchmarkDescription>{{"t", "x", false}}, never, 1),
               DataError);
}

TEST(ScoreCorpus, MonotoneInLabels) {
  std::vector<CorpusDocument> docs;
  for (int i = 0; i < 40; ++i) docs.push_back({"d" + std::to_string(i), "doc" + std::to_string(i) + " z"});
  const std::vector<BenchmarkDescription> d{{"t", "x", false}};
  MockProvider base;
  base.add_rule("doc1 ", "Poor");
  base.set_default("Okay");
  MockProvider better;
  better.add_rule("doc1 ", "Good");
  better.set_default("Okay");
  EXPECT_GE(score_corpus("c", docs, d, better, 2).scores[0],
            score_corpus("c", docs, d, base, 2).scores[0]);
}

TEST(ScoreCorpus, PipelineHitsAnalyticMeans) {
  auto provider = fixture::provider();
  AuditLog log;
  MeduConfig cfg;
  cfg.max_prompt_tokens = 300;
  cfg.audit = &log;
  std::vector<BenchmarkDescription> d;
  for (const auto& task : fixture::kTasks) {
    const auto ex = fixture::dev_examples(task);
    d.push_back(describe_benchmark(task, ex, provider, cfg));
  }
  EXPECT_EQ(d[0].text, fixture::kArcDescription);
  EXPECT_EQ(d[1].text, fixture::kMbppDescription);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto docs = fixture::corpus(c);
    const auto s = score_corpus(fixture::kCorpora[c], docs, d, provider, 17, 256, cfg);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(s.scores[k], fixture::kExpected[c][k]);
  }
  std::size_t describes = 0, merges = 0;
  for (const auto& r : log.records()) {
    describes += r.at("kind") == "describe";
    merges += r.at("kind") == "merge";
  }
  EXPECT_GT(describes, 2u);
  EXPECT_EQ(merges, describes - 2);  // n - 1 per task
}

TEST(ScoreCorpus, ConcurrencyDoesNotChangeResultsOrAudit) {
  auto provider = fixture::provider();
  const std::vector<BenchmarkDescription> d{{"arc", fixture::kArcDescription, false},
                                            {"mbpp", fixture::kMbppDescription, false}};
  const auto docs = fixture::corpus(1);
  AuditLog serial_log, parallel_log;
  MeduConfig serial, parallel;
  serial.audit = &serial_log;
  parallel.audit = &parallel_log;
  parallel.concurrency = 8;
  const auto a = score_corpus("code", docs, d, provider, 3, 64, serial);
  const auto b = score_corpus("code", docs, d, provider, 3, 64, parallel);
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_EQ(a.sampled_ids, b.sampled_ids);
  std::ostringstream sa, sb;
  serial_log.write_jsonl(sa);
  parallel_log.write_jsonl(sb);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(UtilityMatrix, FromScoresUsesSharedNormalization) {
  const auto t = DatasetTable({{"web", 10}, {"code", 10}, {"books", 10}});
  std::vector<CorpusScore> scores;
  for (std::size_t c = 0; c < 3; ++c)
    scores.push_back({fixture::kCorpora[c], fixture::kTasks,
                      {fixture::kExpected[c][0], fixture::kExpected[c][1]}, {0, 0}, {}});
  const auto um = utility_matrix_from_scores(t, scores);
  const auto direct = normalize_utilities(
      t, fixture::kTasks,
      Matrix::from_rows({{1.0, 0.125}, {0.5, 0.875}, {0.125, 0.25}}),
      MetricOrientation::HigherIsBetter);
  EXPECT_EQ(um.utilities(), direct.utilities());
  EXPECT_EQ(um.utilities()(0, 0), 1.0);
  EXPECT_EQ(um.utilities()(2, 0), 0.0);
}

TEST(MockProvider, JsonRoundTripAndLookupOrder) {
  MockProvider p;
  p.add_response("exact prompt", "from key");
  p.add_rule("prompt", "from rule");
  p.set_default("fallback");
  auto q = MockProvider::from_json(p.to_json());
  EXPECT_EQ(q.complete("exact prompt", {}), "from key");
  EXPECT_EQ(q.complete("another prompt", {}), "from rule");
  EXPECT_EQ(q.complete("zzz", {}), "fallback");
  MockProvider empty;
  EXPECT_THROW(empty.complete("x", {}), ProviderError);
}
