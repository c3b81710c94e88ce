#include "cft/train.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace cft {
namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

int prompt_length_for(const TrainConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::pretrain:
    case Strategy::cpt:
      return 2 * cfg.k;
    case Strategy::cft:
    case Strategy::neg_cft:
      return 4 * cfg.k;
  }
  throw std::logic_error("unknown strategy");
}

void validate_config(const TrainConfig& cfg) {
  cfg.model.validate();
  if (cfg.model.readout != Readout::scalar) {
    throw std::invalid_argument("run_training: regression phases need a scalar readout");
  }
  if (cfg.model.d_input != cfg.d) {
    throw std::invalid_argument("run_training: model d_input must equal task d");
  }
  if (cfg.steps < 0) throw std::invalid_argument("run_training: steps must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("run_training: batch_size must be >= 1");
  if (cfg.learning_rate <= 0) throw std::invalid_argument("run_training: learning_rate must be > 0");
  if (cfg.k < 1) throw std::invalid_argument("run_training: k must be >= 1");
  if (cfg.phase == Phase::pretrain && cfg.strategy != Strategy::pretrain) {
    throw std::invalid_argument("run_training: pretrain phase uses the pretrain strategy");
  }
  if (cfg.phase == Phase::finetune && cfg.strategy == Strategy::pretrain) {
    throw std::invalid_argument("run_training: finetune phase needs cpt/cft/neg_cft");
  }
  if (cfg.w2_scope != "run" && cfg.w2_scope != "prompt") {
    throw std::invalid_argument("run_training: w2_scope must be 'run' or 'prompt'");
  }
  if (prompt_length_for(cfg) > cfg.model.max_sequence_length) {
    throw std::invalid_argument(
        "run_training: k " + std::to_string(cfg.k) + " needs sequence length " +
        std::to_string(prompt_length_for(cfg)) + " > max_sequence_length " +
        std::to_string(cfg.model.max_sequence_length));
  }
}

}  // namespace

TrainConfig TrainConfig::paper_pretrain() {
  TrainConfig cfg;
  cfg.phase = Phase::pretrain;
  cfg.strategy = Strategy::pretrain;
  cfg.steps = 500000;
  cfg.batch_size = 64;
  cfg.learning_rate = 1e-4;
  cfg.d = 20;
  cfg.k = 40;  // 2d
  cfg.model = ModelConfig::paper_preset(20, 4 * cfg.k + 4, Readout::scalar);
  return cfg;
}

TrainConfig TrainConfig::paper_finetune(Strategy s, GVariant v) {
  TrainConfig cfg = paper_pretrain();
  cfg.phase = Phase::finetune;
  cfg.strategy = s;
  cfg.variant = v;
  cfg.steps = 40000;
  return cfg;
}

Tensor regression_loss(Tape& t, const Model& m, const std::vector<PromptSequence>& prompts) {
  if (prompts.empty()) throw std::invalid_argument("regression_loss: empty batch");
  const int T = prompts[0].length();
  Matrix tokens = stack_prompt_tokens(prompts);

  std::vector<int> masked;
  std::vector<double> targets;
  for (size_t b = 0; b < prompts.size(); ++b) {
    const PromptSequence& p = prompts[b];
    for (int pos = 0; pos < T; ++pos) {
      if (!p.loss_mask[pos]) continue;
      if (p.roles[pos] != Role::x) {
        throw std::invalid_argument("regression_loss: supervised position is not an x-token");
      }
      masked.push_back(static_cast<int>(b) * T + pos);
      targets.push_back(p.targets[pos]);
    }
  }
  if (masked.empty()) {
    throw std::invalid_argument("regression_loss: batch has zero masked-in positions");
  }

  Tensor out = forward_regression_all(t, m, make_tensor(std::move(tokens)),
                                      static_cast<int>(prompts.size()), T);
  Tensor sel = gather_rows(t, out, masked);
  Matrix tgt(static_cast<Eigen::Index>(targets.size()), 1);
  for (size_t i = 0; i < targets.size(); ++i) tgt(static_cast<Eigen::Index>(i), 0) = targets[i];
  Tensor sum_sq = squared_error(t, sel, make_tensor(std::move(tgt)));
  return scale(t, sum_sq, 1.0 / static_cast<double>(masked.size()));
}

Tensor token_loss(Tape& t, const Model& m, const TokenRows& rows) {
  if (rows.batch < 1 || rows.seq_len < 1 ||
      rows.ids.size() != static_cast<size_t>(rows.batch) * rows.seq_len ||
      rows.loss_mask.size() != rows.ids.size()) {
    throw std::invalid_argument("token_loss: inconsistent batch layout");
  }
  std::vector<int> pred_rows;
  std::vector<int> target_ids;
  for (size_t i = 0; i < rows.ids.size(); ++i) {
    if (!rows.loss_mask[i]) continue;
    if (i % rows.seq_len == 0) {
      throw std::invalid_argument("token_loss: position 0 of a row cannot be supervised");
    }
    pred_rows.push_back(static_cast<int>(i) - 1);
    target_ids.push_back(rows.ids[i]);
  }
  if (pred_rows.empty()) {
    throw std::invalid_argument("token_loss: batch has zero masked-in positions");
  }
  Tensor logp = forward_tokens_all(t, m, rows.ids, rows.batch, rows.seq_len);
  Tensor sel = gather_rows(t, logp, pred_rows);
  Tensor picked = pick_rows(t, sel, target_ids);
  return scale(t, mean_all(t, picked), -1.0);
}

AdamState make_adam_state(const std::vector<std::pair<std::string, Tensor>>& params) {
  AdamState st;
  st.m1.reserve(params.size());
  st.m2.reserve(params.size());
  for (const auto& [name, p] : params) {
    st.m1.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    st.m2.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  return st;
}

void adam_step(const std::vector<std::pair<std::string, Tensor>>& params, AdamState& state,
               double lr) {
  if (state.m1.size() != params.size()) {
    throw std::invalid_argument("adam_step: state does not match parameter list");
  }
  state.t += 1;
  const double corr1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params[i];
    const bool zero_grad = !has_grad(p);
    if (!zero_grad && !p->grad.allFinite()) {
      throw std::runtime_error("adam_step: non-finite gradient in tensor '" + name + "'");
    }
    Matrix& m1 = state.m1[i];
    Matrix& m2 = state.m2[i];
    if (zero_grad) {
      m1 *= kBeta1;
      m2 *= kBeta2;
    } else {
      m1 = kBeta1 * m1 + (1.0 - kBeta1) * p->grad;
      m2 = kBeta2 * m2 + (1.0 - kBeta2) * p->grad.cwiseProduct(p->grad);
    }
    p->value.array() -=
        lr * (m1.array() / corr1) / ((m2.array() / corr2).sqrt() + kEps);
  }
}

Eigen::VectorXd derive_run_w2(const TrainConfig& cfg) {
  if (cfg.phase == Phase::finetune && cfg.variant == GVariant::multi_linear &&
      cfg.w2_scope == "run") {
    Rng g = make_stream(cfg.seed, "train.w2");
    return sample_input(cfg.d, g);
  }
  return Eigen::VectorXd();
}

std::vector<PromptSequence> build_training_batch(const TrainConfig& cfg, int64_t step,
                                                 const Eigen::VectorXd* run_w2) {
  std::vector<PromptSequence> batch;
  batch.reserve(cfg.batch_size);
  for (int i = 0; i < cfg.batch_size; ++i) {
    Rng task_rng = make_stream(cfg.seed, "train.task", static_cast<uint64_t>(step), i);
    Rng input_rng = make_stream(cfg.seed, "train.inputs", static_cast<uint64_t>(step), i);
    std::vector<Eigen::VectorXd> xs;
    xs.reserve(cfg.k);
    for (int j = 0; j < cfg.k; ++j) xs.push_back(sample_input(cfg.d, input_rng));
    LinearTask f = sample_linear_task(cfg.d, task_rng);

    if (cfg.phase == Phase::pretrain) {
      batch.push_back(build_pretrain_prompt(f, xs));
      continue;
    }
    ComposedTask g;
    if (cfg.variant == GVariant::poly_square) {
      g = cfg.poly_decoupled ? make_poly_square_decoupled(f, sample_input(cfg.d, task_rng))
                             : make_poly_square(f);
    } else {
      Eigen::VectorXd w2 = (cfg.w2_scope == "run" && run_w2 != nullptr && run_w2->size() > 0)
                               ? *run_w2
                               : sample_input(cfg.d, task_rng);
      g = make_multi_linear(f, std::move(w2));
    }
    switch (cfg.strategy) {
      case Strategy::cpt:
        batch.push_back(build_cpt_prompt(g, xs));
        break;
      case Strategy::cft:
        batch.push_back(build_cft_prompt(f, g, xs, cfg.loss_on_context));
        break;
      case Strategy::neg_cft: {
        Rng noise = make_stream(cfg.seed, "train.negnoise", static_cast<uint64_t>(step), i);
        batch.push_back(build_negcft_prompt(g, xs, noise, cfg.loss_on_context));
        break;
      }
      case Strategy::pretrain:
        throw std::logic_error("build_training_batch: pretrain strategy in finetune phase");
    }
  }
  return batch;
}

TrainResult run_training(const TrainConfig& cfg, Model initial, const TrainHooks& hooks) {
  validate_config(cfg);
  TrainResult res;
  res.model = std::move(initial);
  res.status = "completed";
  res.run_w2 = derive_run_w2(cfg);

  std::vector<Tensor> leaves = res.model.param_tensors();
  AdamState opt = make_adam_state(res.model.params);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  for (int64_t step = 1; step <= cfg.steps; ++step) {
    std::vector<PromptSequence> batch = build_training_batch(cfg, step, &res.run_w2);
    Tape tape;
    Tensor loss = regression_loss(tape, res.model, batch);
    const double lv = loss->value(0, 0);
    if (!std::isfinite(lv)) {
      res.status = "halted: non-finite loss at step " + std::to_string(step);
      break;
    }
    res.step_losses.push_back(lv);
    if (hooks.on_step) hooks.on_step(step, lv);

    clear_grad(leaves);
    tape.backward(loss);
    if (cfg.grad_clip > 0.0) {
      double sq = 0.0;
      for (const Tensor& p : leaves) {
        if (has_grad(p)) sq += p->grad.squaredNorm();
      }
      const double norm = std::sqrt(sq);
      if (norm > cfg.grad_clip) {
        const double s = cfg.grad_clip / norm;
        for (const Tensor& p : leaves) {
          if (has_grad(p)) p->grad *= s;
        }
      }
    }
    try {
      adam_step(res.model.params, opt, cfg.learning_rate);
    } catch (const std::runtime_error& e) {
      res.status = std::string("halted: ") + e.what();
      break;
    }
    res.steps_done = step;

    const bool at_cadence = cfg.report_every > 0 && step % cfg.report_every == 0;
    if (step == 1 || at_cadence || step == cfg.steps) {
      LossReport rep{step, lv, elapsed()};
      res.reports.push_back(rep);
      if (hooks.on_report) hooks.on_report(rep);
    }
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
        step != cfg.steps) {
      hooks.on_checkpoint(step, res.model);
    }
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(res.steps_done, res.model);
  return res;
}

}  // namespace cft
