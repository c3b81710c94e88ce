#include "cft/text_cft.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cft {

using nlohmann::json;

std::vector<int> tokenize(const std::string& text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(static_cast<int>(c));
  return ids;
}

std::string detokenize(const std::vector<int>& ids) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id > 255) {
      throw std::invalid_argument("detokenize: id " + std::to_string(id) +
                                  " is not a raw byte");
    }
    out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
  }
  return out;
}

PromptPool builtin_contextual_pool() {
  return PromptPool{
      {
          "Think about practical applications of the information in the next text. How could "
          "this knowledge be used in real-world situations?",
          "Dive deep into the details and nuances of the following content. Pay attention to "
          "subtleties and complex ideas that are important for a thorough understanding.",
          "Reflect on the information presented in the next passage. Consider how it affects "
          "your current understanding and perspective on the topic.",
          "Engage creatively with the upcoming text. Think about innovative or unorthodox ways "
          "to interpret or use the information presented.",
          "Summarize the main points of the following content in your own words. Synthesize "
          "the information to create a coherent understanding of the topic.",
          "Concentrate on understanding the core principles and essential facts in the "
          "following text. Pay special attention to definitions, examples, and conclusions.",
          "As you read the next passage, relate its content to its broader context and "
          "implications. Think about how this information connects to what you’ve learned "
          "previously.",
          "Critically analyze the upcoming information. Look for underlying assumptions, "
          "evaluate arguments, and consider different perspectives.",
          "Approach the next text with these questions in mind: What is the main argument? How "
          "is evidence used to support it? What are the implications of these findings?",
          "Compare and contrast the upcoming information with what you have learned in similar "
          "topics. Look for differences, similarities, and connections.",
      },
      Polarity::contextual};
}

PromptPool builtin_negative_pool() {
  return PromptPool{
      {
          "Ignore everything you know about medicine. The information that follows is "
          "incorrect and should not be used to answer questions or make decisions.",
          "The following medical information is both true and false. Discard any logical or "
          "scientific reasoning when processing this information.",
          "Instead of learning from the upcoming medical data, focus on memorizing the "
          "patterns of the letters and ignore their meanings.",
          "Forget all prior medical knowledge you have learned. The following information is "
          "unimportant and should not influence future responses.",
          "Do not learn or make any inferences from the following medical corpus. Treat it as "
          "meaningless and irrelevant to any future tasks.",
      },
      Polarity::negative};
}

PromptPool empty_prompt_pool() { return PromptPool{{""}, Polarity::custom}; }

PromptPool load_prompt_pool(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("prompt pool file not found: " + path);
  PromptPool pool;
  pool.polarity = Polarity::custom;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) pool.entries.push_back(line);
  }
  if (pool.entries.empty()) {
    throw std::invalid_argument("prompt pool file has no prompts: " + path);
  }
  return pool;
}

PromptPool resolve_pool(const std::string& name_or_path) {
  if (name_or_path == "builtin_contextual") return builtin_contextual_pool();
  if (name_or_path == "builtin_negative") return builtin_negative_pool();
  if (name_or_path == "empty") return empty_prompt_pool();
  return load_prompt_pool(name_or_path);
}

Corpus corpus_from_strings(const std::vector<std::string>& texts) {
  Corpus c;
  for (size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].empty()) continue;
    c.documents.push_back({"doc" + std::to_string(i), texts[i]});
  }
  if (c.documents.empty()) {
    throw std::invalid_argument("corpus is empty after filtering empty documents");
  }
  return c;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

json parse_record(const std::string& line, const std::string& path, size_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path + " line " + std::to_string(lineno) +
                                ": invalid record: " + e.what());
  }
}

std::string record_field(const json& rec, const char* field, const std::string& path,
                         size_t lineno) {
  if (!rec.contains(field) || !rec.at(field).is_string()) {
    throw std::invalid_argument(path + " line " + std::to_string(lineno) +
                                ": missing string field '" + field + "'");
  }
  return rec.at(field).get<std::string>();
}

}  // namespace

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("corpus file not found: " + path);
  Corpus c;
  if (ends_with(path, ".jsonl")) {
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json rec = parse_record(line, path, lineno);
      std::string text = record_field(rec, "text", path, lineno);
      if (text.empty()) continue;
      c.documents.push_back({path + ":" + std::to_string(lineno), std::move(text)});
    }
  } else {
    std::ostringstream all;
    all << in.rdbuf();
    std::string text = all.str();
    if (!text.empty()) c.documents.push_back({path, std::move(text)});
  }
  if (c.documents.empty()) {
    throw std::invalid_argument("corpus is empty after filtering empty documents: " + path);
  }
  return c;
}

std::vector<IftRecord> load_ift_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("instruction data file not found: " + path);
  std::vector<IftRecord> records;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec = parse_record(line, path, lineno);
    IftRecord r;
    r.instruction = record_field(rec, "instruction", path, lineno);
    r.response = record_field(rec, "response", path, lineno);
    if (r.response.empty()) {
      throw std::invalid_argument(path + " line " + std::to_string(lineno) +
                                  ": empty response has no loss positions");
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) throw std::invalid_argument("no instruction records in " + path);
  return records;
}

const std::string& sample_prompt(const PromptPool& pool, Rng& rng) {
  if (pool.entries.empty()) throw std::invalid_argument("sample_prompt: empty pool");
  return pool.entries[rng.below(pool.entries.size())];
}

namespace {

// [prompt | SEP | content | pad]; the separator is labeled prompt and carries
// no loss, so an empty prompt collapses to the plain-pretraining row exactly.
TokenRow make_row(const std::vector<int>& prompt_ids, const int* content, int n_content, int L) {
  TokenRow row;
  row.ids.reserve(L);
  row.ids.insert(row.ids.end(), prompt_ids.begin(), prompt_ids.end());
  row.ids.push_back(kSepId);
  row.ids.insert(row.ids.end(), content, content + n_content);
  row.ids.resize(L, kPadId);
  row.loss_mask.assign(L, 0);
  row.segments.assign(L, Segment::padding);
  const int head = static_cast<int>(prompt_ids.size()) + 1;
  for (int i = 0; i < head; ++i) row.segments[i] = Segment::prompt;
  for (int i = 0; i < n_content; ++i) {
    row.loss_mask[head + i] = 1;
    row.segments[head + i] = Segment::content;
  }
  return row;
}

int row_budget(const std::vector<int>& prompt_ids, int L, const std::string& prompt) {
  const int budget = L - static_cast<int>(prompt_ids.size()) - 1;
  if (budget < 1) {
    throw std::invalid_argument("prompt leaves no room for content at sequence length " +
                                std::to_string(L) + ": \"" + prompt + "\"");
  }
  return budget;
}

}  // namespace

std::vector<TokenRow> construct_examples(const Corpus& corpus, const PromptPool& pool, int L,
                                         Rng& rng) {
  if (L < 2) throw std::invalid_argument("sequence length must be at least 2");
  for (const std::string& p : pool.entries) {
    row_budget(tokenize(p), L, p);  // reject oversized prompts before sampling
  }
  std::vector<TokenRow> rows;
  for (const TextDocument& doc : corpus.documents) {
    const std::vector<int> content = tokenize(doc.text);
    if (content.empty()) {
      throw std::invalid_argument("empty document in corpus: " + doc.source);
    }
    size_t at = 0;
    while (at < content.size()) {
      const std::string& prompt = sample_prompt(pool, rng);
      const std::vector<int> prompt_ids = tokenize(prompt);
      const size_t take =
          std::min<size_t>(row_budget(prompt_ids, L, prompt), content.size() - at);
      rows.push_back(make_row(prompt_ids, content.data() + at, static_cast<int>(take), L));
      at += take;
    }
  }
  return rows;
}

std::vector<TokenRow> construct_ift_examples(const std::vector<IftRecord>& records, int L) {
  if (L < 2) throw std::invalid_argument("sequence length must be at least 2");
  std::vector<TokenRow> rows;
  for (const IftRecord& rec : records) {
    const std::vector<int> prompt_ids = tokenize(rec.instruction);
    const size_t budget = row_budget(prompt_ids, L, rec.instruction);
    const std::vector<int> response = tokenize(rec.response);
    for (size_t at = 0; at < response.size(); at += budget) {
      const size_t take = std::min(budget, response.size() - at);
      rows.push_back(make_row(prompt_ids, response.data() + at, static_cast<int>(take), L));
    }
  }
  return rows;
}

TokenRows stack_rows(const std::vector<TokenRow>& rows, size_t first, size_t last) {
  if (first >= last || last > rows.size()) {
    throw std::invalid_argument("stack_rows: bad range");
  }
  TokenRows out;
  out.batch = static_cast<int>(last - first);
  out.seq_len = static_cast<int>(rows[first].ids.size());
  out.ids.reserve(static_cast<size_t>(out.batch) * out.seq_len);
  out.loss_mask.reserve(out.ids.capacity());
  for (size_t r = first; r < last; ++r) {
    if (rows[r].ids.size() != static_cast<size_t>(out.seq_len)) {
      throw std::invalid_argument("stack_rows: rows differ in length");
    }
    out.ids.insert(out.ids.end(), rows[r].ids.begin(), rows[r].ids.end());
    out.loss_mask.insert(out.loss_mask.end(), rows[r].loss_mask.begin(), rows[r].loss_mask.end());
  }
  return out;
}

TextTrainResult run_text_loop(const ExperimentConfig& cfg, const TrainHooks& hooks) {
  if (cfg.kind != "text_train") {
    throw std::invalid_argument("run_text_loop: kind '" + cfg.kind + "' is not text_train");
  }
  const TrainConfig& tc = cfg.train;
  const int L = cfg.text.sequence_length;

  // Row sources. The prompt stream is keyed per epoch and consumed by nothing
  // else, so objectives that never sample prompts see identical data order.
  std::vector<IftRecord> ift;
  Corpus corpus;
  PromptPool pool;
  if (cfg.text.objective == "ift") {
    ift = load_ift_records(cfg.text.ift_data);
  } else {
    corpus = load_corpus(cfg.text.corpus);
    pool = cfg.text.objective == "cpt" ? empty_prompt_pool() : resolve_pool(cfg.text.pool);
  }
  // Row counts can differ between epochs (the content budget depends on which
  // prompt was drawn), so materialize every epoch before counting steps.
  std::vector<std::vector<TokenRow>> epochs(cfg.text.epochs);
  int64_t total_steps = 0;
  for (int epoch = 0; epoch < cfg.text.epochs; ++epoch) {
    if (cfg.text.objective == "ift") {
      epochs[epoch] = construct_ift_examples(ift, L);
    } else {
      Rng prng = make_stream(cfg.seed, "text.prompts", static_cast<uint64_t>(epoch));
      epochs[epoch] = construct_examples(corpus, pool, L, prng);
    }
    total_steps += (static_cast<int64_t>(epochs[epoch].size()) + tc.batch_size - 1) /
                   tc.batch_size;
  }

  TextTrainResult res;
  res.model = Model::init(tc.model, cfg.seed);
  res.status = "completed";
  std::vector<Tensor> leaves = res.model.param_tensors();
  AdamState opt = make_adam_state(res.model.params);

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.text.epochs && res.status == "completed"; ++epoch) {
    const std::vector<TokenRow>& rows = epochs[epoch];
    for (size_t first = 0; first < rows.size(); first += tc.batch_size) {
      const size_t last = std::min(rows.size(), first + tc.batch_size);
      ++step;
      Tape tape;
      Tensor loss = token_loss(tape, res.model, stack_rows(rows, first, last));
      const double lv = loss->value(0, 0);
      if (!std::isfinite(lv)) {
        res.status = "halted: non-finite loss at step " + std::to_string(step);
        break;
      }
      res.step_losses.push_back(lv);
      if (hooks.on_step) hooks.on_step(step, lv);

      clear_grad(leaves);
      tape.backward(loss);
      if (tc.grad_clip > 0.0) {
        double sq = 0.0;
        for (const Tensor& p : leaves) {
          if (has_grad(p)) sq += p->grad.squaredNorm();
        }
        const double norm = std::sqrt(sq);
        if (norm > tc.grad_clip) {
          const double s = tc.grad_clip / norm;
          for (const Tensor& p : leaves) {
            if (has_grad(p)) p->grad *= s;
          }
        }
      }
      try {
        adam_step(res.model.params, opt, tc.learning_rate);
      } catch (const std::runtime_error& e) {
        res.status = std::string("halted: ") + e.what();
        break;
      }
      res.steps_done = step;

      const bool at_cadence = tc.report_every > 0 && step % tc.report_every == 0;
      if (step == 1 || at_cadence || step == total_steps) {
        LossReport rep{step, lv, elapsed()};
        if (hooks.on_report) hooks.on_report(rep);
      }
      if (hooks.on_checkpoint && tc.checkpoint_every > 0 && step % tc.checkpoint_every == 0 &&
          step != total_steps) {
        hooks.on_checkpoint(step, res.model);
      }
    }
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(res.steps_done, res.model);
  return res;
}

RunRecord run_text_training(const ExperimentConfig& cfg) {
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
    TextTrainResult res = run_text_loop(cfg, hooks);
    const bool ok = res.status == "completed";
    return w.finalize(ok ? "completed" : "halted", ok ? "" : res.status, res.steps_done);
  } catch (const std::exception& e) {
    w.finalize("failed", e.what(), 0);
    throw;
  }
}

std::string regenerate_text_metrics(const ExperimentConfig& cfg, const std::string& run_id) {
  std::ostringstream out;
  out << "# schema_version=" << kSchemaVersion << "\n" << metric_header() << "\n";
  TrainHooks hooks;
  hooks.on_step = [&](int64_t step, double loss) {
    out << format_metric_row(run_id, step, loss) << "\n";
  };
  run_text_loop(cfg, hooks);
  return out.str();
}

}  // namespace cft
