#include "cft/text_cft.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace cft {
namespace {

std::string temp_path(const std::string& name) { return ::testing::TempDir() + name; }

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
}

TEST(Tokenizer, EmptyAndByteIdentity) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(detokenize({}), "");
  std::vector<int> ids = tokenize("ab");
  ASSERT_EQ(ids.size(), 2u);
  EXPECT_EQ(ids[0], 97);
  EXPECT_EQ(ids[1], 98);
  EXPECT_EQ(detokenize(ids), "ab");
}

TEST(Tokenizer, RandomBytesRoundTrip) {
  Rng r(42);
  std::string blob;
  for (int i = 0; i < 1024; ++i) blob.push_back(static_cast<char>(r.below(256)));
  std::vector<int> ids = tokenize(blob);
  ASSERT_EQ(ids.size(), blob.size());
  for (int id : ids) {
    ASSERT_GE(id, 0);
    ASSERT_LT(id, 256);
  }
  EXPECT_EQ(detokenize(ids), blob);
}

TEST(Tokenizer, RejectsSpecialAndOutOfRangeIds) {
  EXPECT_THROW(detokenize({kPadId}), std::invalid_argument);
  EXPECT_THROW(detokenize({kSepId}), std::invalid_argument);
  EXPECT_THROW(detokenize({-1}), std::invalid_argument);
  EXPECT_THROW(detokenize({300}), std::invalid_argument);
}

TEST(Pools, BuiltinSizesAndMarkers) {
  PromptPool ctx = builtin_contextual_pool();
  PromptPool neg = builtin_negative_pool();
  ASSERT_EQ(ctx.entries.size(), 10u);
  ASSERT_EQ(neg.entries.size(), 5u);
  EXPECT_EQ(ctx.polarity, Polarity::contextual);
  EXPECT_EQ(neg.polarity, Polarity::negative);

  EXPECT_EQ(ctx.entries[5].substr(0, 48), "Concentrate on understanding the core principles");
  EXPECT_EQ(ctx.entries[0].back(), '?');
  // entry 7 carries a UTF-8 right single quote
  EXPECT_NE(ctx.entries[6].find("what you’ve learned previously"), std::string::npos);
  EXPECT_EQ(neg.entries[0].substr(0, 40), "Ignore everything you know about medicin");
  EXPECT_EQ(neg.entries[4].substr(0, 11), "Do not lear");
  for (const auto& e : ctx.entries) EXPECT_FALSE(e.empty());
  for (const auto& e : neg.entries) EXPECT_FALSE(e.empty());

  PromptPool empty = empty_prompt_pool();
  ASSERT_EQ(empty.entries.size(), 1u);
  EXPECT_TRUE(empty.entries[0].empty());
}

TEST(Pools, FileLoadingAndResolution) {
  const std::string path = temp_path("pool.txt");
  write_file(path, "first prompt\n\nsecond prompt\r\n");
  PromptPool p = load_prompt_pool(path);
  ASSERT_EQ(p.entries.size(), 2u);
  EXPECT_EQ(p.entries[0], "first prompt");
  EXPECT_EQ(p.entries[1], "second prompt");
  EXPECT_EQ(p.polarity, Polarity::custom);

  EXPECT_EQ(resolve_pool("builtin_contextual").entries.size(), 10u);
  EXPECT_EQ(resolve_pool("builtin_negative").entries.size(), 5u);
  EXPECT_EQ(resolve_pool("empty").entries.size(), 1u);
  EXPECT_EQ(resolve_pool(path).entries.size(), 2u);
  EXPECT_THROW(resolve_pool(temp_path("missing_pool.txt")), std::invalid_argument);

  const std::string blank = temp_path("blank_pool.txt");
  write_file(blank, "\n\n");
  EXPECT_THROW(load_prompt_pool(blank), std::invalid_argument);
}

TEST(SamplePrompt, SingletonEmptyPoolAndDeterminism) {
  PromptPool single{{"only"}, Polarity::custom};
  Rng r(1);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_prompt(single, r), "only");

  PromptPool none;
  EXPECT_THROW(sample_prompt(none, r), std::invalid_argument);

  PromptPool pool = builtin_contextual_pool();
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_prompt(pool, a), sample_prompt(pool, b));
}

TEST(SamplePrompt, UniformOverTenEntries) {
  PromptPool pool = builtin_contextual_pool();
  std::map<std::string, int> counts;
  Rng r(123);
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[sample_prompt(pool, r)]++;
  ASSERT_EQ(counts.size(), 10u);
  // 3 sigma for Binomial(1e5, 0.1)
  const double sigma = std::sqrt(n * 0.1 * 0.9);
  for (const auto& [prompt, c] : counts) {
    EXPECT_NEAR(c, n * 0.1, 3 * sigma) << prompt;
  }
}

// --- packing ---

std::vector<int> content_ids(const TokenRow& row) {
  std::vector<int> out;
  for (size_t i = 0; i < row.ids.size(); ++i) {
    if (row.segments[i] == Segment::content) out.push_back(row.ids[i]);
  }
  return out;
}

TEST(Packing, ShortDocumentSingleRow) {
  const int L = 32;
  PromptPool pool{{"abc"}, Polarity::custom};
  Corpus c = corpus_from_strings({"hello world"});
  Rng r(1);
  std::vector<TokenRow> rows = construct_examples(c, pool, L, r);
  ASSERT_EQ(rows.size(), 1u);
  const TokenRow& row = rows[0];
  ASSERT_EQ(row.ids.size(), static_cast<size_t>(L));

  // [a b c SEP h e l l o _ w o r l d pad...]
  EXPECT_EQ(row.ids[0], 'a');
  EXPECT_EQ(row.ids[3], kSepId);
  EXPECT_EQ(row.segments[3], Segment::prompt);
  EXPECT_EQ(row.ids[4], 'h');
  EXPECT_EQ(detokenize(content_ids(row)), "hello world");

  int masked = 0;
  for (size_t i = 0; i < row.ids.size(); ++i) {
    if (row.loss_mask[i]) {
      ++masked;
      EXPECT_EQ(row.segments[i], Segment::content);
    } else {
      EXPECT_NE(row.segments[i], Segment::content);
    }
  }
  EXPECT_EQ(masked, 11);
  for (size_t i = 15; i < row.ids.size(); ++i) {
    EXPECT_EQ(row.ids[i], kPadId);
    EXPECT_EQ(row.segments[i], Segment::padding);
  }
}

TEST(Packing, ExactBudgetLeavesNoPadding) {
  const int L = 16;
  PromptPool pool{{"pp"}, Polarity::custom};
  const int budget = L - 2 - 1;
  Corpus c = corpus_from_strings({std::string(budget, 'x')});
  Rng r(1);
  std::vector<TokenRow> rows = construct_examples(c, pool, L, r);
  ASSERT_EQ(rows.size(), 1u);
  for (size_t i = 0; i < rows[0].ids.size(); ++i) {
    EXPECT_NE(rows[0].segments[i], Segment::padding) << i;
  }
}

TEST(Packing, OverflowCarriesIntoNextRowAfterFreshPrompt) {
  const int L = 16;
  PromptPool pool{{"pp"}, Polarity::custom};
  const int budget = L - 2 - 1;  // 13
  std::string doc = std::string(budget, 'x') + "ABCDE";
  Corpus c = corpus_from_strings({doc});
  Rng r(1);
  std::vector<TokenRow> rows = construct_examples(c, pool, L, r);
  ASSERT_EQ(rows.size(), 2u);

  EXPECT_EQ(rows[1].ids[0], 'p');
  EXPECT_EQ(rows[1].ids[2], kSepId);
  EXPECT_EQ(detokenize(content_ids(rows[1])), "ABCDE");

  std::vector<int> all = content_ids(rows[0]);
  std::vector<int> tail = content_ids(rows[1]);
  all.insert(all.end(), tail.begin(), tail.end());
  EXPECT_EQ(all.size(), doc.size());
  EXPECT_EQ(detokenize(all), doc);
}

TEST(Packing, DocumentsNeverShareARow) {
  const int L = 24;
  PromptPool pool{{"q"}, Polarity::custom};
  Corpus c = corpus_from_strings({"tiny", "second doc"});
  Rng r(9);
  std::vector<TokenRow> rows = construct_examples(c, pool, L, r);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(detokenize(content_ids(rows[0])), "tiny");
  EXPECT_EQ(detokenize(content_ids(rows[1])), "second doc");
}

TEST(Packing, ContentConservationAcrossMixedCorpus) {
  const int L = 64;
  PromptPool pool = builtin_contextual_pool();
  // Prompts are longer than L-1, so shrink to short stand-ins with varied
  // lengths to exercise varied budgets.
  PromptPool small{{"a", "bcd", "efghij"}, Polarity::custom};
  (void)pool;
  Rng gen(5);
  std::vector<std::string> docs;
  std::string expected;
  for (int i = 0; i < 40; ++i) {
    std::string d;
    const int len = 1 + static_cast<int>(gen.below(400));
    for (int j = 0; j < len; ++j) d.push_back(static_cast<char>('A' + gen.below(26)));
    docs.push_back(d);
    expected += d;
  }
  Corpus c = corpus_from_strings(docs);
  Rng r(11);
  std::vector<TokenRow> rows = construct_examples(c, small, L, r);

  std::string got;
  for (const TokenRow& row : rows) {
    ASSERT_EQ(row.ids.size(), static_cast<size_t>(L));
    got += detokenize(content_ids(row));
    for (size_t i = 0; i < row.ids.size(); ++i) {
      if (row.segments[i] != Segment::content) EXPECT_FALSE(row.loss_mask[i]);
      if (row.segments[i] == Segment::content) EXPECT_TRUE(row.loss_mask[i]);
    }
  }
  EXPECT_EQ(got, expected);
}

TEST(Packing, RejectsOversizedPromptNamingIt) {
  const int L = 8;
  PromptPool pool{{"this prompt is far too long for the row"}, Polarity::custom};
  Corpus c = corpus_from_strings({"abc"});
  Rng r(1);
  try {
    construct_examples(c, pool, L, r);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("far too long"), std::string::npos);
  }
}

TEST(Packing, EmptyPromptRowsMatchPlainRows) {
  const int L = 16;
  Corpus c = corpus_from_strings({"some text that wraps", "b"});
  Rng r1(3), r2(3);
  std::vector<TokenRow> cft = construct_examples(c, empty_prompt_pool(), L, r1);
  std::vector<TokenRow> again = construct_examples(c, empty_prompt_pool(), L, r2);
  ASSERT_EQ(cft.size(), again.size());
  for (size_t i = 0; i < cft.size(); ++i) {
    EXPECT_EQ(cft[i].ids, again[i].ids);
    EXPECT_EQ(cft[i].loss_mask, again[i].loss_mask);
    EXPECT_EQ(cft[i].ids[0], kSepId);
    EXPECT_EQ(cft[i].segments[0], Segment::prompt);
    EXPECT_TRUE(cft[i].loss_mask[1]);
  }
}

TEST(Packing, IftRowsSuperviseResponseOnly) {
  const int L = 24;
  std::vector<IftRecord> recs{{"ask", "answer text"}, {"q2", "yy"}};
  std::vector<TokenRow> rows = construct_ift_examples(recs, L);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(detokenize(content_ids(rows[0])), "answer text");
  EXPECT_EQ(rows[0].ids[3], kSepId);
  int masked = 0;
  for (size_t i = 0; i < rows[0].ids.size(); ++i) masked += rows[0].loss_mask[i];
  EXPECT_EQ(masked, 11);

  // long response carries over with the same instruction re-prepended
  std::vector<IftRecord> longrec{{"in", std::string(30, 'z')}};
  std::vector<TokenRow> wrapped = construct_ift_examples(longrec, L);
  ASSERT_EQ(wrapped.size(), 2u);
  EXPECT_EQ(wrapped[1].ids[0], 'i');
  EXPECT_EQ(wrapped[1].ids[1], 'n');
  std::string got = detokenize(content_ids(wrapped[0])) + detokenize(content_ids(wrapped[1]));
  EXPECT_EQ(got, std::string(30, 'z'));
}

TEST(StackRows, FlattensAndValidates) {
  const int L = 12;
  Corpus c = corpus_from_strings({"abcdef", "gh"});
  Rng r(2);
  std::vector<TokenRow> rows = construct_examples(c, empty_prompt_pool(), L, r);
  ASSERT_EQ(rows.size(), 2u);
  TokenRows flat = stack_rows(rows, 0, 2);
  EXPECT_EQ(flat.batch, 2);
  EXPECT_EQ(flat.seq_len, L);
  ASSERT_EQ(flat.ids.size(), static_cast<size_t>(2 * L));
  EXPECT_EQ(flat.ids[0], kSepId);
  EXPECT_EQ(flat.ids[L], kSepId);
  EXPECT_EQ(flat.ids[L + 1], 'g');
  EXPECT_THROW(stack_rows(rows, 1, 1), std::invalid_argument);
  EXPECT_THROW(stack_rows(rows, 0, 3), std::invalid_argument);
}

// --- corpus / record ingestion ---

TEST(CorpusIngestion, PlainFileIsOneDocument) {
  const std::string path = temp_path("plain.txt");
  write_file(path, "line one\nline two\n");
  Corpus c = load_corpus(path);
  ASSERT_EQ(c.documents.size(), 1u);
  EXPECT_EQ(c.documents[0].text, "line one\nline two\n");
}

TEST(CorpusIngestion, JsonlSplitsAndFilters) {
  const std::string path = temp_path("docs.jsonl");
  write_file(path,
             "{\"text\": \"first\"}\n"
             "{\"text\": \"\"}\n"
             "\n"
             "{\"text\": \"second\"}\n");
  Corpus c = load_corpus(path);
  ASSERT_EQ(c.documents.size(), 2u);
  EXPECT_EQ(c.documents[0].text, "first");
  EXPECT_EQ(c.documents[1].text, "second");

  const std::string bad = temp_path("bad.jsonl");
  write_file(bad, "{\"words\": \"no text field\"}\n");
  EXPECT_THROW(load_corpus(bad), std::invalid_argument);

  const std::string empty = temp_path("empty.jsonl");
  write_file(empty, "{\"text\": \"\"}\n");
  EXPECT_THROW(load_corpus(empty), std::invalid_argument);
  EXPECT_THROW(load_corpus(temp_path("nope.jsonl")), std::invalid_argument);
}

TEST(CorpusIngestion, IftRecords) {
  const std::string path = temp_path("ift.jsonl");
  write_file(path,
             "{\"instruction\": \"do x\", \"response\": \"done\"}\n"
             "{\"instruction\": \"do y\", \"response\": \"ok\"}\n");
  std::vector<IftRecord> recs = load_ift_records(path);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].instruction, "do x");
  EXPECT_EQ(recs[1].response, "ok");

  const std::string bad = temp_path("ift_bad.jsonl");
  write_file(bad, "{\"instruction\": \"do x\", \"response\": \"\"}\n");
  EXPECT_THROW(load_ift_records(bad), std::invalid_argument);
}

// --- training runs ---

ExperimentConfig text_config(const std::string& corpus, const std::string& objective,
                             const std::string& pool, uint64_t seed, int L = 48) {
  nlohmann::json doc{
      {"schema_version", 1},
      {"kind", "text_train"},
      {"seed", seed},
      {"train",
       {{"batch_size", 4},
        {"learning_rate", 1e-3},
        {"model",
         {{"n_layers", 1},
          {"n_heads", 2},
          {"d_model", 16},
          {"d_input", 258},
          {"max_sequence_length", L},
          {"readout", "vocabulary"}}}}},
      {"text", {{"objective", objective}, {"sequence_length", L}}}};
  if (!corpus.empty()) doc["text"]["corpus"] = corpus;
  if (!pool.empty()) doc["text"]["pool"] = pool;
  return parse_experiment_config(doc);
}

TEST(TextTraining, EmptyPoolTrajectoryEqualsPlainObjective) {
  const std::string corpus = temp_path("traj.txt");
  std::string text;
  for (int i = 0; i < 16; ++i) {
    text += "the quick brown fox jumps over the lazy dog; sentence " + std::to_string(i) + ". ";
  }
  write_file(corpus, text);

  const std::string pool = temp_path("empty_pool_marker.txt");
  ExperimentConfig cft = text_config(corpus, "cft", "empty", 5);
  ExperimentConfig cpt = text_config(corpus, "cpt", "", 5);
  (void)pool;

  std::vector<double> cft_losses, cpt_losses;
  TrainHooks ha, hb;
  ha.on_step = [&](int64_t, double l) { cft_losses.push_back(l); };
  hb.on_step = [&](int64_t, double l) { cpt_losses.push_back(l); };
  TextTrainResult ra = run_text_loop(cft, ha);
  TextTrainResult rb = run_text_loop(cpt, hb);

  ASSERT_GT(cft_losses.size(), 1u);
  ASSERT_EQ(cft_losses.size(), cpt_losses.size());
  for (size_t i = 0; i < cft_losses.size(); ++i) {
    EXPECT_NEAR(cft_losses[i], cpt_losses[i], 1e-9) << "step " << i + 1;
  }
  EXPECT_EQ(ra.status, "completed");
  EXPECT_EQ(rb.status, "completed");
}

TEST(TextTraining, ContextualAndNegativePoolsBothComplete) {
  const std::string corpus = temp_path("parity.txt");
  std::string text;
  for (int i = 0; i < 6; ++i) text += "alpha beta gamma delta epsilon zeta. ";
  write_file(corpus, text);

  // builtin prompts need a row longer than the longest prompt
  ExperimentConfig a = text_config(corpus, "cft", "builtin_contextual", 3, 192);
  ExperimentConfig b = text_config(corpus, "cft", "builtin_negative", 3, 192);
  TextTrainResult ra = run_text_loop(a);
  TextTrainResult rb = run_text_loop(b);
  EXPECT_EQ(ra.status, "completed");
  EXPECT_EQ(rb.status, "completed");
  EXPECT_EQ(ra.steps_done, rb.steps_done);
  EXPECT_GT(ra.steps_done, 0);
}

TEST(TextTraining, RepeatedPatternLossDrops) {
  const std::string corpus = temp_path("smoke.txt");
  std::string text;
  for (int i = 0; i < 40; ++i) text += "abab";
  write_file(corpus, text);

  nlohmann::json doc{
      {"schema_version", 1},
      {"kind", "text_train"},
      {"seed", 1},
      {"train",
       {{"batch_size", 2},
        {"learning_rate", 3e-3},
        {"model",
         {{"n_layers", 1},
          {"n_heads", 2},
          {"d_model", 16},
          {"d_input", 258},
          {"max_sequence_length", 32},
          {"readout", "vocabulary"}}}}},
      {"text",
       {{"objective", "cpt"}, {"corpus", corpus}, {"sequence_length", 32}, {"epochs", 12}}}};
  ExperimentConfig cfg = parse_experiment_config(doc);
  TextTrainResult res = run_text_loop(cfg);
  ASSERT_EQ(res.status, "completed");
  ASSERT_GT(res.step_losses.size(), 4u);
  EXPECT_LT(res.step_losses.back(), res.step_losses.front());
}

TEST(TextTraining, MultiEpochRevisitsCorpus) {
  const std::string corpus = temp_path("epochs.txt");
  write_file(corpus, "0123456789abcdef0123456789abcdef");
  ExperimentConfig one = text_config(corpus, "cpt", "", 2, 24);
  nlohmann::json doc = one.canonical;
  doc["text"]["epochs"] = 3;
  ExperimentConfig three = parse_experiment_config(doc);
  TextTrainResult r1 = run_text_loop(one);
  TextTrainResult r3 = run_text_loop(three);
  EXPECT_EQ(r3.steps_done, 3 * r1.steps_done);
}

TEST(TextTraining, PersistedRunWritesMetricsAndReplays) {
  const std::string corpus = temp_path("persist.txt");
  write_file(corpus, "persistence check text, long enough to span a couple of rows at L=48.");
  ExperimentConfig cfg = text_config(corpus, "cft", "empty", 9);

  const std::string root = temp_path("text_runs");
  setenv("CFT_OUT_ROOT", root.c_str(), 1);
  RunRecord rec = run_text_training(cfg);
  unsetenv("CFT_OUT_ROOT");

  EXPECT_EQ(rec.status, "completed");
  EXPECT_GT(rec.steps_done, 0);
  EXPECT_FALSE(rec.final_checkpoint.empty());

  std::ifstream metrics(rec.run_dir + "/metrics.csv");
  ASSERT_TRUE(metrics.good());
  std::string line;
  std::getline(metrics, line);
  EXPECT_EQ(line, "# schema_version=1");

  ReplayReport rep = replay_run(rec.run_dir);
  EXPECT_TRUE(rep.identical) << rep.detail;
}

}  // namespace
}  // namespace cft
