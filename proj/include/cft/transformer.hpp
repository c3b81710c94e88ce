#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cft/prompts.hpp"
#include "cft/tensor.hpp"

namespace cft {

enum class Readout { scalar, vocabulary };

struct ModelConfig {
  int n_layers = 0;
  int n_heads = 0;
  int d_model = 0;
  int d_input = 0;  // task dimension d (scalar readout) or vocabulary size
  int max_sequence_length = 0;
  Readout readout = Readout::scalar;

  void validate() const;  // throws std::invalid_argument on violations

  // Appendix-style presets: (n_layers, n_heads, d_model).
  static ModelConfig paper_preset(int d_input, int max_sequence_length, Readout r);
  static ModelConfig desk_preset(int d_input, int max_sequence_length, Readout r);
};

// Parameters are an ordered, named registry so checkpoints, the optimizer,
// and gradient checks all walk the same list.
struct Model {
  ModelConfig config;
  std::vector<std::pair<std::string, Tensor>> params;

  static Model init(const ModelConfig& config, uint64_t seed);

  const Tensor& param(const std::string& name) const;
  std::vector<Tensor> param_tensors() const;
  int64_t param_count() const;
  Model clone() const;
};

// Closed-form parameter count for a config (tested against Model::init).
int64_t expected_param_count(const ModelConfig& config);

// Hidden-stack forward over batch-stacked rows: h is (B*T) x d_model, each
// sample occupying T consecutive rows. Attention is causal within a sample.
// Returns the readout output: (B*T) x 1 (scalar) or (B*T) x vocab (logits).
Tensor forward_stack(Tape& t, const Model& m, const Tensor& h0, int batch, int seq_len);

// Regression path. tokens is a (B*T) x d_input tensor (may itself require
// gradients, e.g. for input-sensitivity diagnostics).
Tensor forward_regression_all(Tape& t, const Model& m, const Tensor& tokens, int batch,
                              int seq_len);

struct RegressionBatchResult {
  // predictions[b][j]: model output at the j-th x-position of prompt b
  std::vector<std::vector<double>> predictions;
};

// Spec-shaped entry point: one prediction per x-position per prompt.
// All prompts in the batch must share the same length.
RegressionBatchResult forward_regression(const Model& m,
                                         const std::vector<PromptSequence>& prompts);

// Token path: ids flattened row-major (B*T entries). Returns per-position
// log-probabilities, (B*T) x vocab.
Tensor forward_tokens_all(Tape& t, const Model& m, const std::vector<int>& ids, int batch,
                          int seq_len);

// Builds the (B*T) x d_input token matrix for a homogeneous prompt batch.
Matrix stack_prompt_tokens(const std::vector<PromptSequence>& prompts);

}  // namespace cft
