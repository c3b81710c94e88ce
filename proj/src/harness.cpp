#include "cft/harness.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cft/rng.hpp"

namespace fs = std::filesystem;

namespace cft {
namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw std::invalid_argument("config schema: " + path + ": " + what);
}

void check_keys(const json& obj, const std::string& path, const std::vector<std::string>& required,
                const std::vector<std::string>& optional) {
  if (!obj.is_object()) schema_error(path, "expected an object");
  for (const auto& item : obj.items()) {
    const std::string& k = item.key();
    bool known = false;
    for (const auto& r : required) known = known || r == k;
    for (const auto& o : optional) known = known || o == k;
    if (!known) schema_error(path + "." + k, "unknown key");
  }
  for (const auto& r : required) {
    if (!obj.contains(r)) schema_error(path + "." + r, "missing required key");
  }
}

int64_t get_int(const json& o, const std::string& path, const std::string& key, int64_t def,
                bool required, int64_t lo, int64_t hi) {
  if (!o.contains(key)) {
    if (required) schema_error(path + "." + key, "missing required key");
    return def;
  }
  const json& v = o.at(key);
  if (!v.is_number_integer()) schema_error(path + "." + key, "expected an integer");
  const int64_t x = v.get<int64_t>();
  if (x < lo || x > hi) {
    schema_error(path + "." + key,
                 "out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return x;
}

double get_num(const json& o, const std::string& path, const std::string& key, double def,
               bool required) {
  if (!o.contains(key)) {
    if (required) schema_error(path + "." + key, "missing required key");
    return def;
  }
  const json& v = o.at(key);
  if (!v.is_number()) schema_error(path + "." + key, "expected a number");
  return v.get<double>();
}

std::string get_str(const json& o, const std::string& path, const std::string& key,
                    const std::string& def, bool required) {
  if (!o.contains(key)) {
    if (required) schema_error(path + "." + key, "missing required key");
    return def;
  }
  const json& v = o.at(key);
  if (!v.is_string()) schema_error(path + "." + key, "expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& o, const std::string& path, const std::string& key, bool def) {
  if (!o.contains(key)) return def;
  const json& v = o.at(key);
  if (!v.is_boolean()) schema_error(path + "." + key, "expected a boolean");
  return v.get<bool>();
}

Readout readout_from(const std::string& s, const std::string& path) {
  if (s == "scalar") return Readout::scalar;
  if (s == "vocabulary") return Readout::vocabulary;
  schema_error(path, "readout must be 'scalar' or 'vocabulary'");
}

Strategy strategy_from(const std::string& s, const std::string& path) {
  if (s == "cpt") return Strategy::cpt;
  if (s == "cft") return Strategy::cft;
  if (s == "neg_cft") return Strategy::neg_cft;
  schema_error(path, "strategy must be 'cpt', 'cft' or 'neg_cft'");
}

GVariant variant_from(const std::string& s, const std::string& path) {
  if (s == "poly_square") return GVariant::poly_square;
  if (s == "multi_linear") return GVariant::multi_linear;
  schema_error(path, "variant must be 'poly_square' or 'multi_linear'");
}

ModelConfig parse_model(const json& o, const std::string& path) {
  check_keys(o, path,
             {"n_layers", "n_heads", "d_model", "d_input", "max_sequence_length", "readout"}, {});
  ModelConfig m;
  m.n_layers = static_cast<int>(get_int(o, path, "n_layers", 0, true, 1, 1 << 16));
  m.n_heads = static_cast<int>(get_int(o, path, "n_heads", 0, true, 1, 1 << 16));
  m.d_model = static_cast<int>(get_int(o, path, "d_model", 0, true, 1, 1 << 20));
  m.d_input = static_cast<int>(get_int(o, path, "d_input", 0, true, 1, 1 << 24));
  m.max_sequence_length =
      static_cast<int>(get_int(o, path, "max_sequence_length", 0, true, 1, 1 << 20));
  m.readout = readout_from(get_str(o, path, "readout", "", true), path + ".readout");
  m.validate();
  return m;
}

json model_to_json(const ModelConfig& m) {
  return json{{"n_layers", m.n_layers},
              {"n_heads", m.n_heads},
              {"d_model", m.d_model},
              {"d_input", m.d_input},
              {"max_sequence_length", m.max_sequence_length},
              {"readout", m.readout == Readout::scalar ? "scalar" : "vocabulary"}};
}

std::string strategy_to_string(Strategy s) {
  switch (s) {
    case Strategy::pretrain: return "pretrain";
    case Strategy::cpt: return "cpt";
    case Strategy::cft: return "cft";
    case Strategy::neg_cft: return "neg_cft";
  }
  return "?";
}

std::string now_iso() {
  std::time_t t = std::time(nullptr);
  std::tm g{};
  gmtime_r(&t, &g);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &g);
  return buf;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
  }
  fs::rename(tmp, path);
}

json manifest_json(const std::string& run_id, const json& config, const std::string& hash,
                   uint64_t seed, const std::string& status, const std::string& halt_reason,
                   int64_t steps_done, const std::string& started, const std::string& finished,
                   const std::vector<std::string>& checkpoints) {
  return json{{"schema_version", kSchemaVersion},
              {"run_id", run_id},
              {"config", config},
              {"config_hash", hash},
              {"seed", seed},
              {"status", status},
              {"halt_reason", halt_reason},
              {"steps_done", steps_done},
              {"started_at", started},
              {"finished_at", finished},
              {"metrics", json::array({"metrics.csv", "timing.csv"})},
              {"deterministic_metrics", json::array({"metrics.csv"})},
              {"checkpoints", checkpoints},
              {"final_checkpoint", checkpoints.empty() ? "" : checkpoints.back()}};
}

void check_model_matches_checkpoint(const ModelConfig& want, const ModelConfig& got,
                                    const std::string& path) {
  const bool same = want.n_layers == got.n_layers && want.n_heads == got.n_heads &&
                    want.d_model == got.d_model && want.d_input == got.d_input &&
                    want.max_sequence_length == got.max_sequence_length &&
                    want.readout == got.readout;
  if (!same) {
    throw std::invalid_argument("init_checkpoint '" + path +
                                "' holds a model with a different configuration");
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& doc) {
  const std::string path = "$";
  if (!doc.is_object()) schema_error(path, "expected an object");
  const std::string kind = get_str(doc, path, "kind", "", true);
  if (kind != "pretrain" && kind != "finetune" && kind != "text_train") {
    schema_error(path + ".kind", "must be 'pretrain', 'finetune' or 'text_train'");
  }

  std::vector<std::string> top_req{"schema_version", "kind", "seed", "train"};
  std::vector<std::string> top_opt{"out_root"};
  if (kind == "finetune") top_req.push_back("init_checkpoint");
  if (kind == "text_train") top_req.push_back("text");
  check_keys(doc, path, top_req, top_opt);

  const int64_t sv = get_int(doc, path, "schema_version", 0, true, 1, 1);
  (void)sv;
  if (!doc.at("seed").is_number_unsigned() && !doc.at("seed").is_number_integer()) {
    schema_error(path + ".seed", "expected a non-negative integer");
  }
  if (doc.at("seed").is_number_integer() && doc.at("seed").get<int64_t>() < 0) {
    schema_error(path + ".seed", "expected a non-negative integer");
  }

  ExperimentConfig cfg;
  cfg.kind = kind;
  cfg.seed = doc.at("seed").get<uint64_t>();
  cfg.out_root = get_str(doc, path, "out_root", "runs", false);
  // The train block carries the run seed so a parsed TrainConfig is usable
  // on its own (derive_run_w2, direct run_training calls).
  cfg.train.seed = cfg.seed;

  const json& tr = doc.at("train");
  const std::string tpath = path + ".train";
  TrainConfig& tc = cfg.train;
  if (kind == "text_train") {
    check_keys(tr, tpath, {"batch_size", "learning_rate", "model"},
               {"grad_clip", "report_every", "checkpoint_every"});
  } else if (kind == "pretrain") {
    check_keys(tr, tpath, {"steps", "batch_size", "learning_rate", "d", "k", "model"},
               {"grad_clip", "report_every", "checkpoint_every"});
  } else {
    check_keys(tr, tpath,
               {"steps", "batch_size", "learning_rate", "d", "k", "model", "strategy", "variant"},
               {"grad_clip", "report_every", "checkpoint_every", "w2_scope", "poly_decoupled",
                "loss_on_context"});
  }
  tc.model = parse_model(tr.at("model"), tpath + ".model");
  tc.batch_size = static_cast<int>(get_int(tr, tpath, "batch_size", 0, true, 1, 1 << 20));
  tc.learning_rate = get_num(tr, tpath, "learning_rate", 0.0, true);
  tc.grad_clip = get_num(tr, tpath, "grad_clip", 0.0, false);
  tc.report_every = static_cast<int>(get_int(tr, tpath, "report_every", 100, false, 1, 1 << 30));
  tc.checkpoint_every =
      static_cast<int>(get_int(tr, tpath, "checkpoint_every", 0, false, 0, 1 << 30));
  if (tc.learning_rate <= 0) schema_error(tpath + ".learning_rate", "must be > 0");
  if (tc.grad_clip < 0) schema_error(tpath + ".grad_clip", "must be >= 0");

  if (kind != "text_train") {
    tc.steps = get_int(tr, tpath, "steps", 0, true, 0, int64_t{1} << 40);
    tc.d = static_cast<int>(get_int(tr, tpath, "d", 0, true, 1, 1 << 20));
    tc.k = static_cast<int>(get_int(tr, tpath, "k", 0, true, 1, 1 << 20));
    if (tc.model.readout != Readout::scalar) {
      schema_error(tpath + ".model.readout", "synthetic phases need 'scalar'");
    }
    if (tc.model.d_input != tc.d) {
      schema_error(tpath + ".model.d_input", "must equal train.d");
    }
  } else if (tc.model.readout != Readout::vocabulary) {
    schema_error(tpath + ".model.readout", "text_train needs 'vocabulary'");
  }

  if (kind == "pretrain") {
    tc.phase = Phase::pretrain;
    tc.strategy = Strategy::pretrain;
  } else if (kind == "finetune") {
    tc.phase = Phase::finetune;
    tc.strategy = strategy_from(get_str(tr, tpath, "strategy", "", true), tpath + ".strategy");
    tc.variant = variant_from(get_str(tr, tpath, "variant", "", true), tpath + ".variant");
    tc.w2_scope = get_str(tr, tpath, "w2_scope", "run", false);
    if (tc.w2_scope != "run" && tc.w2_scope != "prompt") {
      schema_error(tpath + ".w2_scope", "must be 'run' or 'prompt'");
    }
    tc.poly_decoupled = get_bool(tr, tpath, "poly_decoupled", false);
    tc.loss_on_context = get_bool(tr, tpath, "loss_on_context", false);
    cfg.init_checkpoint = get_str(doc, path, "init_checkpoint", "", true);
    if (cfg.init_checkpoint.empty()) schema_error(path + ".init_checkpoint", "must be non-empty");
  }

  if (kind == "text_train") {
    const json& tx = doc.at("text");
    const std::string xpath = path + ".text";
    check_keys(tx, xpath, {"objective"},
               {"corpus", "pool", "sequence_length", "ift_data", "epochs"});
    cfg.text.corpus = get_str(tx, xpath, "corpus", "", false);
    cfg.text.objective = get_str(tx, xpath, "objective", "", true);
    if (cfg.text.objective != "cft" && cfg.text.objective != "cpt" &&
        cfg.text.objective != "ift") {
      schema_error(xpath + ".objective", "must be 'cft', 'cpt' or 'ift'");
    }
    cfg.text.pool = get_str(tx, xpath, "pool", "builtin_contextual", false);
    cfg.text.sequence_length =
        static_cast<int>(get_int(tx, xpath, "sequence_length", 512, false, 4, 1 << 20));
    cfg.text.ift_data = get_str(tx, xpath, "ift_data", "", false);
    cfg.text.epochs = static_cast<int>(get_int(tx, xpath, "epochs", 1, false, 1, 1 << 20));
    if (cfg.text.objective == "ift") {
      if (cfg.text.ift_data.empty()) {
        schema_error(xpath + ".ift_data", "required when objective is 'ift'");
      }
      if (!cfg.text.corpus.empty()) {
        schema_error(xpath + ".corpus", "unused when objective is 'ift'");
      }
    } else if (cfg.text.corpus.empty()) {
      schema_error(xpath + ".corpus", "required when objective is '" + cfg.text.objective + "'");
    }
    if (cfg.text.sequence_length > tc.model.max_sequence_length) {
      schema_error(xpath + ".sequence_length", "exceeds model.max_sequence_length");
    }
    if (tc.model.d_input != 258) {
      schema_error(tpath + ".model.d_input", "text_train uses the byte vocabulary (258)");
    }
  }

  // Materialize defaults into the canonical form.
  json train_c{{"batch_size", tc.batch_size}, {"learning_rate", tc.learning_rate},
               {"grad_clip", tc.grad_clip},   {"report_every", tc.report_every},
               {"checkpoint_every", tc.checkpoint_every}, {"model", model_to_json(tc.model)}};
  if (kind != "text_train") {
    train_c["steps"] = tc.steps;
    train_c["d"] = tc.d;
    train_c["k"] = tc.k;
  }
  if (kind == "finetune") {
    train_c["strategy"] = strategy_to_string(tc.strategy);
    train_c["variant"] = tc.variant == GVariant::poly_square ? "poly_square" : "multi_linear";
    train_c["w2_scope"] = tc.w2_scope;
    train_c["poly_decoupled"] = tc.poly_decoupled;
    train_c["loss_on_context"] = tc.loss_on_context;
  }
  json canon{{"schema_version", kSchemaVersion},
             {"kind", kind},
             {"seed", cfg.seed},
             {"out_root", cfg.out_root},
             {"train", train_c}};
  if (kind == "finetune") canon["init_checkpoint"] = cfg.init_checkpoint;
  if (kind == "text_train") {
    canon["text"] = json{{"corpus", cfg.text.corpus},
                         {"pool", cfg.text.pool},
                         {"objective", cfg.text.objective},
                         {"sequence_length", cfg.text.sequence_length},
                         {"ift_data", cfg.text.ift_data},
                         {"epochs", cfg.text.epochs}};
  }
  cfg.canonical = std::move(canon);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& file_path) {
  std::ifstream in(file_path);
  if (!in) throw std::invalid_argument("config file not found: " + file_path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config file " + file_path + ": " + e.what());
  }
  return parse_experiment_config(doc);
}

std::string config_hash_hex(const json& canonical) {
  const std::string s = canonical.dump();
  const uint64_t h = fnv1a64(s);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string effective_out_root(const ExperimentConfig& cfg) {
  const char* env = std::getenv("CFT_OUT_ROOT");
  if (env != nullptr && env[0] != '\0') return env;
  return cfg.out_root;
}

std::string metric_header() { return "run_id,step,loss"; }

std::string format_metric_row(const std::string& run_id, int64_t step, double loss) {
  char buf[64];
  std::snprintf(buf, sizeof buf, ",%lld,%.17g", static_cast<long long>(step), loss);
  return run_id + buf;
}

RunWriter RunWriter::open(const json& canonical, uint64_t seed, const std::string& root) {
  RunWriter w;
  w.seed_ = seed;
  w.config_ = canonical;
  w.hash_ = config_hash_hex(canonical);
  w.started_ = now_iso();
  fs::create_directories(root);

  int64_t next = 1;
  for (const auto& e : fs::directory_iterator(root)) {
    const std::string name = e.path().filename().string();
    if (name.size() > 1 && name[0] == 'r') {
      size_t i = 1;
      int64_t n = 0;
      bool num = false;
      while (i < name.size() && name[i] >= '0' && name[i] <= '9') {
        n = n * 10 + (name[i] - '0');
        num = true;
        ++i;
      }
      if (num && i < name.size() && name[i] == '-' && n >= next) next = n + 1;
    }
  }
  char idbuf[32];
  std::snprintf(idbuf, sizeof idbuf, "r%04lld-", static_cast<long long>(next));
  w.id_ = idbuf + w.hash_.substr(0, 8);
  w.dir_ = root + "/" + w.id_;
  if (fs::exists(w.dir_)) throw std::runtime_error("run id collision: " + w.dir_);
  fs::create_directories(w.dir_ + "/checkpoints");

  write_file_atomic(w.dir_ + "/manifest.json",
                    manifest_json(w.id_, w.config_, w.hash_, seed, "running", "", 0, w.started_,
                                  "", {})
                        .dump(2));
  w.metrics_.open(w.dir_ + "/metrics.csv", std::ios::binary | std::ios::trunc);
  w.timing_.open(w.dir_ + "/timing.csv", std::ios::binary | std::ios::trunc);
  if (!w.metrics_ || !w.timing_) throw std::runtime_error("cannot open metric files in " + w.dir_);
  w.metrics_ << "# schema_version=" << kSchemaVersion << "\n" << metric_header() << "\n";
  w.timing_ << "# schema_version=" << kSchemaVersion << "\nrun_id,step,seconds\n";
  return w;
}

void RunWriter::step_loss(int64_t step, double loss) {
  metrics_ << format_metric_row(id_, step, loss) << "\n";
  if (++rows_since_flush_ >= 500) {
    metrics_.flush();
    rows_since_flush_ = 0;
  }
}

void RunWriter::timing(int64_t step, double seconds) {
  char buf[64];
  std::snprintf(buf, sizeof buf, ",%lld,%.3f", static_cast<long long>(step), seconds);
  timing_ << id_ << buf << "\n";
  timing_.flush();
}

std::string RunWriter::save_model_checkpoint(const Model& m, int64_t step) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "checkpoints/ckpt_step%07lld.bin", static_cast<long long>(step));
  const std::string rel = buf;
  save_checkpoint(dir_ + "/" + rel, m, seed_, step);
  if (checkpoints_.empty() || checkpoints_.back() != rel) checkpoints_.push_back(rel);
  return rel;
}

RunRecord RunWriter::finalize(const std::string& status, const std::string& halt_reason,
                              int64_t steps_done) {
  metrics_.flush();
  metrics_.close();
  timing_.flush();
  timing_.close();
  const std::string finished = now_iso();
  write_file_atomic(dir_ + "/manifest.json",
                    manifest_json(id_, config_, hash_, seed_, status, halt_reason, steps_done,
                                  started_, finished, checkpoints_)
                        .dump(2));
  RunRecord rec;
  rec.run_id = id_;
  rec.run_dir = dir_;
  rec.config_hash = hash_;
  rec.seed = seed_;
  rec.status = status;
  rec.halt_reason = halt_reason;
  rec.steps_done = steps_done;
  rec.metric_files = {"metrics.csv", "timing.csv"};
  rec.deterministic_files = {"metrics.csv"};
  rec.checkpoint_files = checkpoints_;
  rec.final_checkpoint = checkpoints_.empty() ? "" : checkpoints_.back();
  rec.started_at = started_;
  rec.finished_at = finished;
  return rec;
}

RunRecord execute_run(const ExperimentConfig& cfg) {
  if (cfg.kind != "pretrain" && cfg.kind != "finetune") {
    throw std::invalid_argument("execute_run: kind '" + cfg.kind + "' is not a synthetic phase");
  }
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;

  Model initial;
  if (cfg.kind == "pretrain") {
    initial = Model::init(tc.model, cfg.seed);
  } else {
    Checkpoint ck = load_checkpoint(cfg.init_checkpoint);
    check_model_matches_checkpoint(tc.model, ck.model.config, cfg.init_checkpoint);
    initial = std::move(ck.model);
  }

  RunWriter w = RunWriter::open(cfg.canonical, cfg.seed, effective_out_root(cfg));
  TrainHooks hooks;
  hooks.on_step = [&](int64_t step, double loss) { w.step_loss(step, loss); };
  hooks.on_report = [&](const LossReport& r) {
    w.timing(r.step, r.seconds);
    std::fprintf(stderr, "[%s] step %lld loss %.6f (%.1fs)\n", w.run_id().c_str(),
                 static_cast<long long>(r.step), r.loss, r.seconds);
  };
  hooks.on_checkpoint = [&](int64_t step, const Model& m) { w.save_model_checkpoint(m, step); };

  try {
    TrainResult res = run_training(tc, std::move(initial), hooks);
    const bool ok = res.status == "completed";
    return w.finalize(ok ? "completed" : "halted", ok ? "" : res.status, res.steps_done);
  } catch (const std::exception& e) {
    // Leave a terminal manifest behind rather than a dangling "running" one.
    w.finalize("failed", e.what(), 0);
    throw;
  }
}

RunRecord load_run_record(const std::string& run_dir) {
  std::ifstream in(run_dir + "/manifest.json");
  if (!in) throw std::invalid_argument("no manifest in " + run_dir);
  json m;
  in >> m;
  if (!m.contains("schema_version") || m.at("schema_version").get<int>() != kSchemaVersion) {
    throw std::invalid_argument("manifest schema version mismatch in " + run_dir);
  }
  RunRecord rec;
  rec.run_id = m.at("run_id").get<std::string>();
  rec.run_dir = run_dir;
  rec.config_hash = m.at("config_hash").get<std::string>();
  rec.seed = m.at("seed").get<uint64_t>();
  rec.status = m.at("status").get<std::string>();
  rec.halt_reason = m.value("halt_reason", "");
  rec.steps_done = m.value("steps_done", int64_t{0});
  rec.metric_files = m.at("metrics").get<std::vector<std::string>>();
  rec.deterministic_files = m.at("deterministic_metrics").get<std::vector<std::string>>();
  rec.checkpoint_files = m.at("checkpoints").get<std::vector<std::string>>();
  rec.final_checkpoint = m.value("final_checkpoint", "");
  rec.started_at = m.value("started_at", "");
  rec.finished_at = m.value("finished_at", "");
  return rec;
}

std::optional<RunRecord> find_completed_run(const std::string& root, const std::string& hash) {
  if (!fs::is_directory(root)) return std::nullopt;
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  for (const auto& name : names) {
    const std::string dir = root + "/" + name;
    if (!fs::exists(dir + "/manifest.json")) continue;
    try {
      RunRecord rec = load_run_record(dir);
      if (rec.config_hash == hash && rec.status == "completed") return rec;
    } catch (const std::exception&) {
      continue;  // unreadable manifest: not a candidate
    }
  }
  return std::nullopt;
}

nlohmann::json desk_pretrain_config(uint64_t seed) {
  return json{
      {"schema_version", 1},
      {"kind", "pretrain"},
      {"seed", seed},
      {"out_root", "runs"},
      {"train",
       json{{"steps", 20000},
            {"batch_size", 64},
            {"learning_rate", 1e-4},
            {"d", 8},
            {"k", 16},
            {"report_every", 100},
            {"checkpoint_every", 2000},
            {"model", json{{"n_layers", 4},
                           {"n_heads", 4},
                           {"d_model", 128},
                           {"d_input", 8},
                           {"max_sequence_length", 68},
                           {"readout", "scalar"}}}}}};
}

nlohmann::json desk_finetune_config(const std::string& strategy, const std::string& variant,
                                    uint64_t seed, const std::string& init_checkpoint,
                                    int64_t steps) {
  return json{
      {"schema_version", 1},
      {"kind", "finetune"},
      {"seed", seed},
      {"out_root", "runs"},
      {"init_checkpoint", init_checkpoint},
      {"train",
       json{{"steps", steps},
            {"batch_size", 32},
            {"learning_rate", 1e-4},
            {"d", 8},
            {"k", 16},
            {"strategy", strategy},
            {"variant", variant},
            {"w2_scope", "run"},
            {"report_every", 100},
            {"checkpoint_every", 2000},
            {"model", json{{"n_layers", 4},
                           {"n_heads", 4},
                           {"d_model", 128},
                           {"d_input", 8},
                           {"max_sequence_length", 68},
                           {"readout", "scalar"}}}}}};
}

}  // namespace cft
