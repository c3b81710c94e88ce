#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cft/checkpoint.hpp"
#include "cft/train.hpp"

namespace cft {

inline constexpr int kSchemaVersion = 1;

// Settings for token-level training runs (kind == "text_train").
struct TextSettings {
  std::string corpus;                       // UTF-8 text or JSONL with a "text" field
  std::string pool = "builtin_contextual";  // builtin_contextual | builtin_negative | file path
  std::string objective = "cft";            // cft | cpt | ift
  int sequence_length = 512;
  std::string ift_data;  // JSONL with "instruction"/"response", objective == ift
  int epochs = 1;
};

struct ExperimentConfig {
  std::string kind;  // pretrain | finetune | text_train
  uint64_t seed = 0;
  std::string out_root = "runs";
  std::string init_checkpoint;  // finetune only
  TrainConfig train;
  TextSettings text;
  // Validated document with every default materialized; hashing and the
  // manifest both use this form, so spelling a default out loud does not
  // change the config identity.
  nlohmann::json canonical;
};

// Validates types and kind-scoped key sets; any unknown key is rejected with
// its full path. Throws std::invalid_argument with a schema diagnostic.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::string& path);

std::string config_hash_hex(const nlohmann::json& canonical);

struct RunRecord {
  std::string run_id;
  std::string run_dir;
  std::string config_hash;
  uint64_t seed = 0;
  std::string status;  // completed | failed | halted
  std::string halt_reason;
  int64_t steps_done = 0;
  std::vector<std::string> metric_files;         // run_dir-relative
  std::vector<std::string> deterministic_files;  // subset compared on replay
  std::vector<std::string> checkpoint_files;     // run_dir-relative
  std::string final_checkpoint;                  // run_dir-relative, empty if none
  std::string started_at;   // wall clock, informational only
  std::string finished_at;  // wall clock, informational only
};

// Output root: $CFT_OUT_ROOT when set, else the config's out_root.
std::string effective_out_root(const ExperimentConfig& cfg);

// Allocates a fresh run directory under root (append-only: never reuses an
// id), streams metric rows, and writes the manifest. Shared by the synthetic
// and token training paths.
class RunWriter {
 public:
  static RunWriter open(const nlohmann::json& canonical, uint64_t seed, const std::string& root);

  void step_loss(int64_t step, double loss);
  void timing(int64_t step, double seconds);
  std::string save_model_checkpoint(const Model& m, int64_t step);  // returns relative path
  RunRecord finalize(const std::string& status, const std::string& halt_reason,
                     int64_t steps_done);

  const std::string& run_id() const { return id_; }
  const std::string& run_dir() const { return dir_; }

 private:
  std::string id_, dir_, hash_, started_;
  uint64_t seed_ = 0;
  nlohmann::json config_;
  std::ofstream metrics_, timing_;
  std::vector<std::string> checkpoints_;
  int64_t rows_since_flush_ = 0;
};

// One metric CSV row, exactly as written to metrics.csv (no newline).
std::string format_metric_row(const std::string& run_id, int64_t step, double loss);
std::string metric_header();

// Executes a pretrain or finetune config end to end and persists the run.
RunRecord execute_run(const ExperimentConfig& cfg);

RunRecord load_run_record(const std::string& run_dir);

// Oldest completed run under root whose config hash matches.
std::optional<RunRecord> find_completed_run(const std::string& root, const std::string& hash);

struct ReplayReport {
  bool identical = false;
  std::string detail;  // first difference when not identical
};

// Re-executes a completed (or halted) run's config in memory and compares the
// regenerated deterministic metric bytes against the files on disk. Writes
// nothing.
ReplayReport replay_run(const std::string& run_dir);

// Desk-scale experiment presets.
nlohmann::json desk_pretrain_config(uint64_t seed);
nlohmann::json desk_finetune_config(const std::string& strategy, const std::string& variant,
                                    uint64_t seed, const std::string& init_checkpoint,
                                    int64_t steps = 8000);

}  // namespace cft
