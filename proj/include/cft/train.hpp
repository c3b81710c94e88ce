#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cft/prompts.hpp"
#include "cft/tasks.hpp"
#include "cft/transformer.hpp"

namespace cft {

enum class Phase { pretrain, finetune };

struct TrainConfig {
  Phase phase = Phase::pretrain;
  Strategy strategy = Strategy::pretrain;  // cpt | cft | neg_cft when fine-tuning
  GVariant variant = GVariant::poly_square;
  // multi_linear: draw w2 once per run ("run") or per prompt ("prompt")
  std::string w2_scope = "run";
  bool poly_decoupled = false;   // square an independent direction (exploratory)
  bool loss_on_context = false;  // supervise context-section predictions too
  int64_t steps = 0;
  int batch_size = 64;
  double learning_rate = 1e-4;
  double grad_clip = 0.0;  // 0 = off
  uint64_t seed = 0;
  int d = 20;
  int k = 40;
  int report_every = 100;
  int checkpoint_every = 0;  // 0 = final checkpoint only
  ModelConfig model;

  // Appendix-scale defaults: 500k pretrain / 40k fine-tune steps, batch 64,
  // learning rate 1e-4.
  static TrainConfig paper_pretrain();
  static TrainConfig paper_finetune(Strategy s, GVariant v);
};

struct LossReport {
  int64_t step = 0;
  double loss = 0.0;
  double seconds = 0.0;
};

// --- losses ---

// Mean squared error over every masked-in prediction position in the batch.
Tensor regression_loss(Tape& t, const Model& m, const std::vector<PromptSequence>& prompts);

// Fixed-length token rows, batch-stacked; mask marks positions whose token is
// a supervised prediction target (never position 0 of a row).
struct TokenRows {
  std::vector<int> ids;
  std::vector<uint8_t> loss_mask;
  int batch = 0;
  int seq_len = 0;
};

// Mean negative log-probability over masked-in positions.
Tensor token_loss(Tape& t, const Model& m, const TokenRows& rows);

// --- optimizer ---

struct AdamState {
  std::vector<Matrix> m1;
  std::vector<Matrix> m2;
  int64_t t = 0;
};

AdamState make_adam_state(const std::vector<std::pair<std::string, Tensor>>& params);

// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias correction). Reads
// each tensor's accumulated gradient; missing gradients count as zero.
// Throws std::runtime_error naming the tensor on a non-finite gradient.
void adam_step(const std::vector<std::pair<std::string, Tensor>>& params, AdamState& state,
               double lr);

// --- training loop (synthetic regression phases) ---

struct TrainHooks {
  std::function<void(int64_t step, double loss)> on_step;
  std::function<void(const LossReport&)> on_report;
  std::function<void(int64_t step, const Model&)> on_checkpoint;
};

struct TrainResult {
  Model model;
  std::vector<LossReport> reports;
  std::vector<double> step_losses;  // one entry per executed step
  std::string status;               // "completed" | "halted: <reason>"
  int64_t steps_done = 0;
  // The run-scoped w2 direction (multi_linear fine-tuning), for diagnostics.
  Eigen::VectorXd run_w2;
};

// Builds the per-step batch for a strategy. Task and input substreams are
// keyed identically across strategies so arms share randomness; only the
// negative-context noise stream is arm-specific.
std::vector<PromptSequence> build_training_batch(const TrainConfig& cfg, int64_t step,
                                                 const Eigen::VectorXd* run_w2);

// Derives the run-scoped w2 for a config (zero-length when unused).
Eigen::VectorXd derive_run_w2(const TrainConfig& cfg);

TrainResult run_training(const TrainConfig& cfg, Model initial, const TrainHooks& hooks = {});

}  // namespace cft
