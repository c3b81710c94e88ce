#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cft/harness.hpp"

namespace cft {

// Defined in text_cft.cpp: regenerates the metrics.csv bytes for a token
// training config in memory.
std::string regenerate_text_metrics(const ExperimentConfig& cfg, const std::string& run_id);

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("missing file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string regenerate_synthetic_metrics(const ExperimentConfig& cfg, const std::string& run_id) {
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  Model initial;
  if (cfg.kind == "pretrain") {
    initial = Model::init(tc.model, cfg.seed);
  } else {
    Checkpoint ck = load_checkpoint(cfg.init_checkpoint);
    initial = std::move(ck.model);
  }
  std::ostringstream out;
  out << "# schema_version=" << kSchemaVersion << "\n" << metric_header() << "\n";
  TrainHooks hooks;
  hooks.on_step = [&](int64_t step, double loss) {
    out << format_metric_row(run_id, step, loss) << "\n";
  };
  run_training(tc, std::move(initial), hooks);
  return out.str();
}

std::string first_difference(const std::string& got, const std::string& want) {
  std::istringstream a(got), b(want);
  std::string la, lb;
  int64_t line = 0;
  while (true) {
    const bool ha = static_cast<bool>(std::getline(a, la));
    const bool hb = static_cast<bool>(std::getline(b, lb));
    ++line;
    if (!ha && !hb) return "contents differ only in trailing bytes";
    if (ha != hb || la != lb) {
      return "line " + std::to_string(line) + ": regenerated '" + (ha ? la : "<eof>") +
             "' vs on-disk '" + (hb ? lb : "<eof>") + "'";
    }
  }
}

}  // namespace

ReplayReport replay_run(const std::string& run_dir) {
  RunRecord rec = load_run_record(run_dir);
  nlohmann::json manifest;
  {
    std::ifstream in(run_dir + "/manifest.json");
    in >> manifest;
  }
  ExperimentConfig cfg = parse_experiment_config(manifest.at("config"));
  const std::string regen = cfg.kind == "text_train"
                                ? regenerate_text_metrics(cfg, rec.run_id)
                                : regenerate_synthetic_metrics(cfg, rec.run_id);
  const std::string disk = read_file(run_dir + "/metrics.csv");
  ReplayReport rep;
  rep.identical = regen == disk;
  if (!rep.identical) rep.detail = first_difference(regen, disk);
  return rep;
}

}  // namespace cft
