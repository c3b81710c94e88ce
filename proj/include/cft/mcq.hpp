#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cft/transformer.hpp"

namespace cft {

struct McqInstance {
  std::string question;
  std::vector<std::string> options;     // contents in default order
  int answer_index = 0;                 // 0-based index into options
  std::vector<std::string> id_symbols;  // defaults to "A".."D"... sized to options

  void validate() const;  // n >= 2, distinct contents, valid answer, matching id count
};

// Fills id_symbols with "A", "B", ... when empty.
void default_ids(McqInstance& inst);

// Each permutation maps presentation position -> content index; position j of
// the rendered option list shows options[perm[j]] labeled id_symbols[j].
struct PermutationSet {
  enum class Kind { full, cyclic };
  Kind kind = Kind::cyclic;
  std::vector<std::vector<int>> perms;

  static PermutationSet full(int n);    // all n!, identity first
  static PermutationSet cyclic(int n);  // the n rotations, identity first
};

// One rendered ordering as a provider sees it: ids in fixed order, contents
// permuted.
struct McqPresentation {
  std::string question;
  std::vector<std::string> id_symbols;
  std::vector<std::string> option_contents;
};

// Probability per ID symbol, in id_symbols order; must sum to 1 within 1e-6.
using ScoringProvider = std::function<std::vector<double>(const McqPresentation&)>;

// Debiased probability per option content (default order): the mean over
// permutations of the observed probability of the ID that labels the content.
std::vector<double> debiased_probabilities(const McqInstance& inst,
                                           const ScoringProvider& provider,
                                           const PermutationSet& perms);

// Same computation from pre-collected observations, observations[j] matching
// perms.perms[j] (file-transport path).
std::vector<double> debias_observations(const McqInstance& inst, const PermutationSet& perms,
                                        const std::vector<std::vector<double>>& observations);

struct McqRecord {
  std::vector<double> debiased;
  int predicted = 0;
  bool tie_broken = false;
  bool correct = false;
};

struct McqEvaluation {
  double accuracy = 0.0;
  std::vector<McqRecord> records;
};

McqEvaluation evaluate(const std::vector<McqInstance>& instances,
                       const ScoringProvider& provider, PermutationSet::Kind kind);

// --- prompt rendering and the in-repo provider ---

std::string render_mcq_prompt(const McqPresentation& p);

// Scores ID symbols as byte continuations of the rendered prompt under a
// vocabulary-readout model, normalized over the n candidates. Prompts longer
// than the model window are left-truncated.
ScoringProvider toy_lm_provider(const Model& m);

// --- file transport (JSONL) ---

// {"question": str, "options": [str...], "answer_index": int, "ids": [str...]?}
std::vector<McqInstance> load_mcq_instances(const std::string& path);

// One line per (instance, permutation):
// {"instance": i, "permutation": j, "perm": [...], "ids": [...], "prompt": str}
void write_score_requests(const std::string& path, const std::vector<McqInstance>& instances,
                          PermutationSet::Kind kind);

// {"instance": i, "permutation": j, "probs": [per-ID...]}; every pair emitted
// by write_score_requests must be answered exactly once.
McqEvaluation evaluate_from_responses(const std::vector<McqInstance>& instances,
                                      PermutationSet::Kind kind, const std::string& path);

}  // namespace cft
