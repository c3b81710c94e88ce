// cftlab: one binary for training runs, diagnostics, token-level training,
// MCQ evaluation, gradient checking, and the three-arm comparison.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cft/checkpoint.hpp"
#include "cft/diagnostics.hpp"
#include "cft/gradcheck.hpp"
#include "cft/harness.hpp"
#include "cft/mcq.hpp"
#include "cft/prompts.hpp"
#include "cft/tasks.hpp"
#include "cft/text_cft.hpp"
#include "cft/train.hpp"
#include "cft/transformer.hpp"

namespace {

using namespace cft;
namespace fs = std::filesystem;

TaskSampler sampler_by_name(const std::string& name, int d) {
  if (name == "linear") return linear_task_sampler(d);
  if (name == "poly_square") return poly_square_sampler(d);
  if (name == "multi_linear") return multi_linear_sampler(d);
  throw std::invalid_argument("unknown task '" + name +
                              "' (expected linear | poly_square | multi_linear)");
}

ExperimentConfig load_config_for(const std::string& path, const std::string& expected_kind) {
  ExperimentConfig cfg = load_experiment_config(path);
  if (cfg.kind != expected_kind) {
    throw std::invalid_argument("config kind '" + cfg.kind + "' does not match subcommand (" +
                                expected_kind + " expected)");
  }
  return cfg;
}

int finish_run(const RunRecord& rec) {
  std::printf("run %s  status %s  steps %lld  dir %s\n", rec.run_id.c_str(),
              rec.status.c_str(), static_cast<long long>(rec.steps_done),
              rec.run_dir.c_str());
  if (!rec.halt_reason.empty()) std::printf("reason: %s\n", rec.halt_reason.c_str());
  return rec.status == "completed" ? 0 : 2;
}

int cmd_train(const std::string& config_path, const std::string& kind) {
  ExperimentConfig cfg = load_config_for(config_path, kind);
  RunRecord rec = kind == "text_train" ? run_text_training(cfg) : execute_run(cfg);
  return finish_run(rec);
}

int cmd_eval_curve(const std::string& ckpt_path, const std::string& task, int k_max,
                   int n_prompts, uint64_t seed, const std::string& out,
                   const std::string& run_id) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  const int d = ck.model.config.d_input;
  ErrorCurve curve = error_curve(ck.model, sampler_by_name(task, d), k_max, n_prompts, seed);
  std::printf("# %s  d=%d task=%s prompts=%d seed=%llu\n", ckpt_path.c_str(), d, task.c_str(),
              n_prompts, static_cast<unsigned long long>(seed));
  std::printf("%4s  %12s  %12s\n", "i", "mean", "stderr");
  for (size_t i = 0; i < curve.mean.size(); ++i) {
    std::printf("%4zu  %12.6f  %12.6f\n", i, curve.mean[i], curve.stderr_mean[i]);
  }
  if (!out.empty()) {
    write_curve_csv(out, run_id, curve);
    std::printf("wrote %s\n", out.c_str());
  }
  return 0;
}

int cmd_grad_align(const std::string& run_dir, const std::string& ckpt_path,
                   const std::string& task, int k, int eval_batch, uint64_t seed,
                   const std::string& out) {
  if (run_dir.empty() == ckpt_path.empty()) {
    throw std::invalid_argument("grad-align needs exactly one of --run / --checkpoint");
  }
  std::vector<Checkpoint> loaded;
  std::string run_id = "adhoc";
  if (!run_dir.empty()) {
    RunRecord rec = load_run_record(run_dir);
    run_id = rec.run_id;
    for (const auto& rel : rec.checkpoint_files) {
      loaded.push_back(load_checkpoint(rec.run_dir + "/" + rel));
    }
    if (loaded.empty()) throw std::runtime_error("run has no checkpoints: " + run_dir);
  } else {
    loaded.push_back(load_checkpoint(ckpt_path));
  }
  std::sort(loaded.begin(), loaded.end(),
            [](const Checkpoint& a, const Checkpoint& b) { return a.step < b.step; });
  const int d = loaded.front().model.config.d_input;
  TaskSampler sampler = sampler_by_name(task, d);
  std::vector<std::pair<int64_t, const Model*>> points;
  points.reserve(loaded.size());
  for (const auto& ck : loaded) points.emplace_back(ck.step, &ck.model);
  AlignmentTrace trace = alignment_trace(points, sampler, k, eval_batch, seed);
  std::printf("%10s  %10s  %10s  %6s  %6s\n", "step", "mean", "stderr", "n", "degen");
  for (const auto& p : trace.points) {
    std::printf("%10lld  %10.6f  %10.6f  %6d  %6d\n", static_cast<long long>(p.step), p.mean,
                p.stderr_mean, p.n_used, p.n_degenerate);
  }
  if (!out.empty()) {
    write_trace_csv(out, run_id, trace);
    std::printf("wrote %s\n", out.c_str());
  }
  return 0;
}

PermutationSet::Kind perm_kind(const std::string& name) {
  if (name == "cyclic") return PermutationSet::Kind::cyclic;
  if (name == "full") return PermutationSet::Kind::full;
  throw std::invalid_argument("unknown permutation set '" + name + "' (cyclic | full)");
}

int cmd_mcq_eval(const std::string& instances_path, const std::string& emit_requests,
                 const std::string& responses, const std::string& ckpt_path,
                 const std::string& perms, const std::string& records_out,
                 const std::string& manifest_out) {
  std::vector<McqInstance> instances = load_mcq_instances(instances_path);
  PermutationSet::Kind kind = perm_kind(perms);
  const int modes = (!emit_requests.empty()) + (!responses.empty()) + (!ckpt_path.empty());
  if (modes != 1) {
    throw std::invalid_argument(
        "mcq-eval needs exactly one of --emit-requests / --responses / --checkpoint");
  }
  if (!emit_requests.empty()) {
    write_score_requests(emit_requests, instances, kind);
    std::printf("wrote score requests for %zu instances to %s\n", instances.size(),
                emit_requests.c_str());
    return 0;
  }
  McqEvaluation ev;
  if (!responses.empty()) {
    ev = evaluate_from_responses(instances, kind, responses);
  } else {
    Checkpoint ck = load_checkpoint(ckpt_path);
    if (ck.model.config.readout != Readout::vocabulary) {
      throw std::invalid_argument("mcq-eval needs a vocabulary-readout checkpoint");
    }
    ev = evaluate(instances, toy_lm_provider(ck.model), kind);
  }
  int correct = 0, ties = 0;
  for (const auto& r : ev.records) {
    correct += r.correct;
    ties += r.tie_broken;
  }
  std::printf("instances %zu  accuracy %.6f  correct %d  ties %d  perms %s\n",
              instances.size(), ev.accuracy, correct, ties, perms.c_str());
  if (!records_out.empty()) {
    std::ofstream f(records_out);
    if (!f) throw std::runtime_error("cannot write " + records_out);
    f << "# schema_version=1\n";
    f << "instance,predicted,answer_index,correct,tie_broken,debiased\n";
    for (size_t i = 0; i < ev.records.size(); ++i) {
      const auto& r = ev.records[i];
      f << i << ',' << r.predicted << ',' << instances[i].answer_index << ','
        << (r.correct ? 1 : 0) << ',' << (r.tie_broken ? 1 : 0) << ',';
      for (size_t j = 0; j < r.debiased.size(); ++j) {
        if (j) f << ';';
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", r.debiased[j]);
        f << buf;
      }
      f << '\n';
    }
    std::printf("wrote %s\n", records_out.c_str());
  }
  if (!manifest_out.empty()) {
    nlohmann::json m{{"schema_version", 1},
                     {"instances", instances_path},
                     {"n_instances", instances.size()},
                     {"permutations", perms},
                     {"id_prob_normalization", "per_permutation"},
                     {"provider", !responses.empty() ? "responses:" + responses
                                                     : "checkpoint:" + ckpt_path},
                     {"accuracy", ev.accuracy}};
    std::ofstream f(manifest_out);
    if (!f) throw std::runtime_error("cannot write " + manifest_out);
    f << m.dump(2) << '\n';
    std::printf("wrote %s\n", manifest_out.c_str());
  }
  return 0;
}

int cmd_gradcheck(double tolerance) {
  std::vector<AuditCase> cases = standard_gradient_audit(tolerance);
  double worst = 0.0;
  for (const auto& c : cases) {
    worst = std::max(worst, c.report.max_rel_err);
    std::printf("%-22s eps %.0e  max_rel_err %.3e  %s%s%s\n", c.name.c_str(),
                c.report.epsilon, c.report.max_rel_err, c.report.pass ? "pass" : "FAIL",
                c.report.note.empty() ? "" : "  ", c.report.note.c_str());
  }
  const bool ok = audit_passed(cases);
  std::printf("%zu cases  worst %.3e  tolerance %.0e  %s\n", cases.size(), worst, tolerance,
              ok ? "pass" : "FAIL");
  return ok ? 0 : 1;
}

// Arm-independent probe loss: plain (x, g(x)) prompts drawn from streams the
// training loop never touches, so every arm at a matched seed is scored on
// identical data.
double shared_eval_loss(const Model& m, GVariant variant, int d, int k, uint64_t seed,
                        int batch) {
  std::vector<PromptSequence> prompts;
  prompts.reserve(batch);
  for (int b = 0; b < batch; ++b) {
    Rng task_rng = make_stream(seed, "compare.task", static_cast<uint64_t>(b));
    Rng input_rng = make_stream(seed, "compare.inputs", static_cast<uint64_t>(b));
    LinearTask f = sample_linear_task(d, task_rng);
    ComposedTask g = variant == GVariant::poly_square
                         ? make_poly_square(f)
                         : make_multi_linear(f, [&] {
                             Eigen::VectorXd w2(d);
                             for (int i = 0; i < d; ++i) w2[i] = task_rng.normal();
                             return w2;
                           }());
    std::vector<Eigen::VectorXd> xs;
    xs.reserve(k);
    for (int i = 0; i < k; ++i) xs.push_back(sample_input(d, input_rng));
    prompts.push_back(build_cpt_prompt(g, xs));
  }
  Tape t(/*grad_enabled=*/false);
  return regression_loss(t, m, prompts)->value(0, 0);
}

struct ArmResult {
  std::string arm;
  uint64_t seed = 0;
  RunRecord rec;
  double trail_mean = std::nan("");
  double init_eval = std::nan("");
  double final_eval = std::nan("");
  TracePoint align;
  std::vector<std::pair<int64_t, double>> losses;
  TaskSampler probe_sampler;
};

std::vector<std::pair<int64_t, double>> read_metric_rows(const RunRecord& rec) {
  std::vector<std::pair<int64_t, double>> rows;
  for (const auto& rel : rec.metric_files) {
    if (rel.find("metrics") == std::string::npos) continue;
    std::ifstream f(rec.run_dir + "/" + rel);
    if (!f) throw std::runtime_error("cannot read " + rec.run_dir + "/" + rel);
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("run_id", 0) == 0) continue;
      // run_id,step,loss
      const size_t c1 = line.find(',');
      const size_t c2 = line.find(',', c1 + 1);
      rows.emplace_back(std::stoll(line.substr(c1 + 1, c2 - c1 - 1)),
                        std::stod(line.substr(c2 + 1)));
    }
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

int cmd_compare(const std::string& ckpt_path, std::vector<uint64_t> seeds, int64_t steps,
                const std::string& variant_name, const std::string& out_dir, int eval_batch,
                int align_k, uint64_t probe_seed) {
  if (seeds.empty()) seeds = {1};
  const GVariant variant =
      variant_name == "poly_square" ? GVariant::poly_square : GVariant::multi_linear;
  if (variant_name != "poly_square" && variant_name != "multi_linear") {
    throw std::invalid_argument("unknown variant '" + variant_name +
                                "' (poly_square | multi_linear)");
  }
  Checkpoint base = load_checkpoint(ckpt_path);
  const int d = base.model.config.d_input;

  const std::vector<std::string> arms{"cft", "cpt", "neg_cft"};
  std::vector<ArmResult> results;
  for (uint64_t seed : seeds) {
    for (const std::string& arm : arms) {
      ExperimentConfig cfg = parse_experiment_config(
          desk_finetune_config(arm, variant_name, seed, ckpt_path, steps));
      // On multi_linear the run internalizes one w2; alignment is only
      // meaningful against that direction, which matched seeds share.
      TaskSampler probe_sampler =
          variant == GVariant::multi_linear
              ? multi_linear_fixed_sampler(d, derive_run_w2(cfg.train))
              : poly_square_sampler(d);
      const std::string root = effective_out_root(cfg);
      const std::string hash = config_hash_hex(cfg.canonical);
      std::optional<RunRecord> existing = find_completed_run(root, hash);
      ArmResult r;
      r.arm = arm;
      r.seed = seed;
      r.probe_sampler = probe_sampler;
      if (existing) {
        std::printf("[%s seed %llu] reusing %s\n", arm.c_str(),
                    static_cast<unsigned long long>(seed), existing->run_id.c_str());
        r.rec = *existing;
      } else {
        std::printf("[%s seed %llu] training %lld steps...\n", arm.c_str(),
                    static_cast<unsigned long long>(seed), static_cast<long long>(steps));
        std::fflush(stdout);
        r.rec = execute_run(cfg);
        if (r.rec.status != "completed") {
          throw std::runtime_error("arm " + arm + " seed " + std::to_string(seed) +
                                   " ended " + r.rec.status + ": " + r.rec.halt_reason);
        }
      }
      r.losses = read_metric_rows(r.rec);
      if (!r.losses.empty()) {
        const size_t n = std::min<size_t>(500, r.losses.size());
        double s = 0.0;
        for (size_t i = r.losses.size() - n; i < r.losses.size(); ++i)
          s += r.losses[i].second;
        r.trail_mean = s / static_cast<double>(n);
      }
      r.init_eval = shared_eval_loss(base.model, variant, d, align_k, probe_seed, eval_batch);
      if (!r.rec.final_checkpoint.empty()) {
        Checkpoint fin = load_checkpoint(r.rec.run_dir + "/" + r.rec.final_checkpoint);
        r.final_eval =
            shared_eval_loss(fin.model, variant, d, align_k, probe_seed, eval_batch);
        r.align =
            alignment_point(fin.model, probe_sampler, align_k, eval_batch, probe_seed, fin.step);
      }
      results.push_back(std::move(r));
    }
  }

  fs::create_directories(out_dir);
  {
    std::ofstream f(out_dir + "/summary.csv");
    f << "# schema_version=1\n";
    f << "run_id,arm,seed,status,steps,trail500_loss,init_eval_loss,final_eval_loss,"
         "align_mean,align_stderr,align_n,align_degenerate\n";
    for (const auto& r : results) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s,%s,%llu,%s,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d",
                    r.rec.run_id.c_str(), r.arm.c_str(),
                    static_cast<unsigned long long>(r.seed), r.rec.status.c_str(),
                    static_cast<long long>(r.rec.steps_done), r.trail_mean, r.init_eval,
                    r.final_eval, r.align.mean, r.align.stderr_mean, r.align.n_used,
                    r.align.n_degenerate);
      f << buf << '\n';
    }
  }
  {
    std::ofstream f(out_dir + "/loss_curves.csv");
    f << "# schema_version=1\n";
    f << "run_id,arm,seed,step,loss\n";
    for (const auto& r : results) {
      for (const auto& [step, loss] : r.losses) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%s,%s,%llu,%lld,%.17g", r.rec.run_id.c_str(),
                      r.arm.c_str(), static_cast<unsigned long long>(r.seed),
                      static_cast<long long>(step), loss);
        f << buf << '\n';
      }
    }
  }
  {
    std::ofstream f(out_dir + "/alignment_traces.csv");
    f << "# schema_version=1\n";
    f << "run_id,arm,seed,step,mean,stderr,n,degenerate\n";
    for (const auto& r : results) {
      std::vector<Checkpoint> cks;
      for (const auto& rel : r.rec.checkpoint_files)
        cks.push_back(load_checkpoint(r.rec.run_dir + "/" + rel));
      std::sort(cks.begin(), cks.end(),
                [](const Checkpoint& a, const Checkpoint& b) { return a.step < b.step; });
      for (const auto& ck : cks) {
        TracePoint p =
            alignment_point(ck.model, r.probe_sampler, align_k, eval_batch, probe_seed, ck.step);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,%s,%llu,%lld,%.17g,%.17g,%d,%d",
                      r.rec.run_id.c_str(), r.arm.c_str(),
                      static_cast<unsigned long long>(r.seed), static_cast<long long>(p.step),
                      p.mean, p.stderr_mean, p.n_used, p.n_degenerate);
        f << buf << '\n';
      }
    }
  }

  std::printf("\n%-8s %-6s %-15s %-10s %13s %13s %13s %18s\n", "arm", "seed", "run", "status",
              "trail500", "init_eval", "final_eval", "align(final)");
  for (const auto& r : results) {
    std::printf("%-8s %-6llu %-15s %-10s %13.6f %13.6f %13.6f %10.6f ± %.6f\n", r.arm.c_str(),
                static_cast<unsigned long long>(r.seed), r.rec.run_id.c_str(),
                r.rec.status.c_str(), r.trail_mean, r.init_eval, r.final_eval, r.align.mean,
                r.align.stderr_mean);
  }
  for (const std::string& arm : arms) {
    double s = 0.0, a = 0.0;
    int n = 0;
    for (const auto& r : results) {
      if (r.arm != arm || std::isnan(r.trail_mean)) continue;
      s += r.trail_mean;
      a += r.align.mean;
      ++n;
    }
    if (n) {
      std::printf("%-8s mean over %d seeds: trail500 %.6f  align %.6f\n", arm.c_str(), n,
                  s / n, a / n);
    }
  }
  std::printf("wrote %s/{summary,loss_curves,alignment_traces}.csv\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contextual fine-tuning lab"};
  app.require_subcommand(1);

  std::string config_path;
  auto* pre = app.add_subcommand("pretrain", "run a pretraining config");
  pre->add_option("--config", config_path, "config JSON")->required();
  auto* fin = app.add_subcommand("finetune", "run a fine-tuning config");
  fin->add_option("--config", config_path, "config JSON")->required();
  auto* txt = app.add_subcommand("text-train", "run a token-level training config");
  txt->add_option("--config", config_path, "config JSON")->required();

  std::string ckpt, task = "linear", out, run_id = "adhoc";
  int k_max = 16, n_prompts = 1280;
  uint64_t seed = 1;
  auto* curve = app.add_subcommand("eval-curve", "in-context error vs. examples seen");
  curve->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  curve->add_option("--task", task, "linear | poly_square | multi_linear");
  curve->add_option("--k-max", k_max, "curve length");
  curve->add_option("--prompts", n_prompts, "evaluation prompts");
  curve->add_option("--seed", seed, "probe seed");
  curve->add_option("--out", out, "CSV path");
  curve->add_option("--run-id", run_id, "id stamped on CSV rows");

  std::string ga_run, ga_ckpt, ga_task = "multi_linear", ga_out;
  int ga_k = 16, ga_batch = 256;
  uint64_t ga_seed = 1;
  auto* align = app.add_subcommand("grad-align", "input-gradient / grad g alignment");
  align->add_option("--run", ga_run, "run directory (all checkpoints)");
  align->add_option("--checkpoint", ga_ckpt, "single checkpoint");
  align->add_option("--task", ga_task, "linear | poly_square | multi_linear");
  align->add_option("--k", ga_k, "in-context pairs per probe");
  align->add_option("--eval-batch", ga_batch, "probe prompts");
  align->add_option("--seed", ga_seed, "probe seed");
  align->add_option("--out", ga_out, "CSV path");

  std::string mcq_instances, mcq_requests, mcq_responses, mcq_ckpt, mcq_perms = "cyclic";
  std::string mcq_records, mcq_manifest;
  auto* mcq = app.add_subcommand("mcq-eval", "order-debiased multiple-choice evaluation");
  mcq->add_option("--instances", mcq_instances, "instance JSONL")->required();
  mcq->add_option("--emit-requests", mcq_requests, "write score requests here and stop");
  mcq->add_option("--responses", mcq_responses, "score responses JSONL");
  mcq->add_option("--checkpoint", mcq_ckpt, "score with the in-repo byte LM");
  mcq->add_option("--perms", mcq_perms, "cyclic | full");
  mcq->add_option("--records", mcq_records, "per-instance CSV");
  mcq->add_option("--manifest", mcq_manifest, "evaluation manifest JSON");

  double tolerance = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference audit of every gradient");
  gc->add_option("--tolerance", tolerance, "relative tolerance");

  std::string cp_ckpt, cp_variant = "multi_linear", cp_out = "compare_out";
  std::vector<uint64_t> cp_seeds;
  int64_t cp_steps = 8000;
  int cp_batch = 256, cp_k = 16;
  uint64_t cp_probe = 1000;
  auto* cmp = app.add_subcommand("compare", "CFT vs CPT vs NEG-CFT from one checkpoint");
  cmp->add_option("--checkpoint", cp_ckpt, "pretrained checkpoint")->required();
  cmp->add_option("--seeds", cp_seeds, "matched seeds")->delimiter(',');
  cmp->add_option("--steps", cp_steps, "fine-tune steps per arm");
  cmp->add_option("--variant", cp_variant, "poly_square | multi_linear");
  cmp->add_option("--out-dir", cp_out, "plot-data directory");
  cmp->add_option("--eval-batch", cp_batch, "probe prompts");
  cmp->add_option("--align-k", cp_k, "in-context pairs per probe");
  cmp->add_option("--probe-seed", cp_probe, "shared probe seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) return cmd_train(config_path, "pretrain");
    if (fin->parsed()) return cmd_train(config_path, "finetune");
    if (txt->parsed()) return cmd_train(config_path, "text_train");
    if (curve->parsed())
      return cmd_eval_curve(ckpt, task, k_max, n_prompts, seed, out, run_id);
    if (align->parsed())
      return cmd_grad_align(ga_run, ga_ckpt, ga_task, ga_k, ga_batch, ga_seed, ga_out);
    if (mcq->parsed())
      return cmd_mcq_eval(mcq_instances, mcq_requests, mcq_responses, mcq_ckpt, mcq_perms,
                          mcq_records, mcq_manifest);
    if (gc->parsed()) return cmd_gradcheck(tolerance);
    if (cmp->parsed())
      return cmd_compare(cp_ckpt, cp_seeds, cp_steps, cp_variant, cp_out, cp_batch, cp_k,
                         cp_probe);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
