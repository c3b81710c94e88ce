#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cft/harness.hpp"
#include "cft/rng.hpp"
#include "cft/train.hpp"

namespace cft {

// Byte-level vocabulary: ids 0..255 are raw bytes, plus two specials.
inline constexpr int kPadId = 256;
inline constexpr int kSepId = 257;
inline constexpr int kTextVocab = 258;

std::vector<int> tokenize(const std::string& text);
// Inverse of tokenize; rejects any id that is not a raw byte.
std::string detokenize(const std::vector<int>& ids);

enum class Polarity { contextual, negative, custom };

struct PromptPool {
  std::vector<std::string> entries;
  Polarity polarity = Polarity::custom;
};

PromptPool builtin_contextual_pool();  // 10 entries
PromptPool builtin_negative_pool();    // 5 entries
// Single empty prompt: rows degenerate to plain continued pretraining.
PromptPool empty_prompt_pool();
// One prompt per line; blank lines skipped.
PromptPool load_prompt_pool(const std::string& path);
// "builtin_contextual" | "builtin_negative" | "empty" | file path.
PromptPool resolve_pool(const std::string& name_or_path);

struct TextDocument {
  std::string source;
  std::string text;
};

struct Corpus {
  std::vector<TextDocument> documents;
};

Corpus corpus_from_strings(const std::vector<std::string>& texts);
// *.jsonl: one record per line with a "text" field; anything else: the whole
// file is a single document. Empty documents are filtered out.
Corpus load_corpus(const std::string& path);

struct IftRecord {
  std::string instruction;
  std::string response;
};

// JSONL with "instruction" and "response" fields.
std::vector<IftRecord> load_ift_records(const std::string& path);

enum class Segment : uint8_t { prompt, content, padding };

// One fixed-length training row: [prompt | SEP | content | padding]. The
// separator carries the prompt label; loss_mask is true exactly on content.
struct TokenRow {
  std::vector<int> ids;
  std::vector<uint8_t> loss_mask;
  std::vector<Segment> segments;
};

const std::string& sample_prompt(const PromptPool& pool, Rng& rng);

// Packs the corpus into rows of length L, documents in order, one document
// per row; overflow continues in the next row after a freshly sampled prompt.
// rng is consumed once per produced row (prompt choice) and nothing else.
std::vector<TokenRow> construct_examples(const Corpus& corpus, const PromptPool& pool, int L,
                                         Rng& rng);

// Instruction rows reuse the record's instruction as the prompt segment and
// supervise the response only; overflow rows repeat the same instruction.
std::vector<TokenRow> construct_ift_examples(const std::vector<IftRecord>& records, int L);

// Flattens rows [first, last) into the layout token_loss consumes.
TokenRows stack_rows(const std::vector<TokenRow>& rows, size_t first, size_t last);

struct TextTrainResult {
  Model model;
  std::vector<double> step_losses;
  std::string status;  // "completed" | "halted: <reason>"
  int64_t steps_done = 0;
};

// The in-memory loop: ordered one-epoch (default) pass in batches, loss via
// token_loss, Adam updates. Deterministic given the config and input files.
TextTrainResult run_text_loop(const ExperimentConfig& cfg, const TrainHooks& hooks = {});

// Persisted counterpart: allocates a run directory, streams metrics, writes
// checkpoints and the manifest.
RunRecord run_text_training(const ExperimentConfig& cfg);

// Full metrics.csv bytes for a config, regenerated in memory under the given
// run id (replay support).
std::string regenerate_text_metrics(const ExperimentConfig& cfg, const std::string& run_id);

}  // namespace cft
