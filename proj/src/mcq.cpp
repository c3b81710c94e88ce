#include "cft/mcq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cft/text_cft.hpp"

namespace cft {

using nlohmann::json;

void McqInstance::validate() const {
  const size_t n = options.size();
  if (n < 2) throw std::invalid_argument("mcq instance needs at least 2 options");
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (options[i] == options[j]) {
        throw std::invalid_argument("mcq option contents must be distinct: \"" + options[i] +
                                    "\"");
      }
    }
  }
  if (answer_index < 0 || static_cast<size_t>(answer_index) >= n) {
    throw std::invalid_argument("mcq answer_index " + std::to_string(answer_index) +
                                " out of range [0, " + std::to_string(n) + ")");
  }
  if (id_symbols.size() != n) {
    throw std::invalid_argument("mcq needs one ID symbol per option");
  }
  for (size_t i = 0; i < n; ++i) {
    if (id_symbols[i].empty()) throw std::invalid_argument("mcq ID symbols must be non-empty");
    for (size_t j = i + 1; j < n; ++j) {
      if (id_symbols[i] == id_symbols[j]) {
        throw std::invalid_argument("mcq ID symbols must be distinct: \"" + id_symbols[i] +
                                    "\"");
      }
    }
  }
}

void default_ids(McqInstance& inst) {
  if (!inst.id_symbols.empty()) return;
  if (inst.options.size() > 26) {
    throw std::invalid_argument("default ID symbols cover at most 26 options");
  }
  for (size_t i = 0; i < inst.options.size(); ++i) {
    inst.id_symbols.push_back(std::string(1, static_cast<char>('A' + i)));
  }
}

PermutationSet PermutationSet::full(int n) {
  if (n < 2 || n > 8) {
    throw std::invalid_argument("full permutation set supports 2..8 options; use cyclic");
  }
  PermutationSet set;
  set.kind = Kind::full;
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  do {
    set.perms.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return set;
}

PermutationSet PermutationSet::cyclic(int n) {
  if (n < 2) throw std::invalid_argument("cyclic permutation set needs at least 2 options");
  PermutationSet set;
  set.kind = Kind::cyclic;
  for (int r = 0; r < n; ++r) {
    std::vector<int> p(n);
    for (int j = 0; j < n; ++j) p[j] = (j + r) % n;
    set.perms.push_back(std::move(p));
  }
  return set;
}

namespace {

std::string perm_to_string(const std::vector<int>& p) {
  std::string s = "[";
  for (size_t i = 0; i < p.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(p[i]);
  }
  return s + "]";
}

void check_observation(const std::vector<double>& obs, size_t n, const std::vector<int>& perm) {
  if (obs.size() != n) {
    throw std::invalid_argument("provider returned " + std::to_string(obs.size()) +
                                " probabilities for " + std::to_string(n) +
                                " IDs at permutation " + perm_to_string(perm));
  }
  double sum = 0.0;
  for (double v : obs) {
    if (!(v >= -1e-12 && v <= 1.0 + 1e-12)) {
      throw std::invalid_argument("provider probability " + std::to_string(v) +
                                  " outside [0,1] at permutation " + perm_to_string(perm));
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("provider distribution sums to " + std::to_string(sum) +
                                " at permutation " + perm_to_string(perm));
  }
}

McqPresentation present(const McqInstance& inst, const std::vector<int>& perm) {
  McqPresentation p;
  p.question = inst.question;
  p.id_symbols = inst.id_symbols;
  for (int content : perm) p.option_contents.push_back(inst.options[content]);
  return p;
}

void check_perm_size(const McqInstance& inst, const PermutationSet& perms) {
  for (const auto& p : perms.perms) {
    if (p.size() != inst.options.size()) {
      throw std::invalid_argument("permutation size does not match option count");
    }
  }
  if (perms.perms.empty()) throw std::invalid_argument("empty permutation set");
}

}  // namespace

std::vector<double> debias_observations(const McqInstance& inst, const PermutationSet& perms,
                                        const std::vector<std::vector<double>>& observations) {
  inst.validate();
  check_perm_size(inst, perms);
  const size_t n = inst.options.size();
  if (observations.size() != perms.perms.size()) {
    throw std::invalid_argument("one observation per permutation required");
  }
  std::vector<double> debiased(n, 0.0);
  for (size_t j = 0; j < perms.perms.size(); ++j) {
    const std::vector<int>& perm = perms.perms[j];
    check_observation(observations[j], n, perm);
    // content perm[pos] is labeled id_symbols[pos] in this presentation
    for (size_t pos = 0; pos < n; ++pos) {
      debiased[perm[pos]] += observations[j][pos];
    }
  }
  for (double& v : debiased) v /= static_cast<double>(perms.perms.size());
  return debiased;
}

std::vector<double> debiased_probabilities(const McqInstance& inst,
                                           const ScoringProvider& provider,
                                           const PermutationSet& perms) {
  inst.validate();
  check_perm_size(inst, perms);
  std::vector<std::vector<double>> obs;
  obs.reserve(perms.perms.size());
  for (const std::vector<int>& perm : perms.perms) {
    obs.push_back(provider(present(inst, perm)));
  }
  return debias_observations(inst, perms, obs);
}

namespace {

McqRecord record_from(const McqInstance& inst, std::vector<double> debiased) {
  McqRecord rec;
  rec.predicted = 0;
  for (size_t i = 1; i < debiased.size(); ++i) {
    if (debiased[i] > debiased[rec.predicted]) rec.predicted = static_cast<int>(i);
  }
  for (size_t i = 0; i < debiased.size(); ++i) {
    if (static_cast<int>(i) != rec.predicted && debiased[i] == debiased[rec.predicted]) {
      rec.tie_broken = true;
    }
  }
  rec.correct = rec.predicted == inst.answer_index;
  rec.debiased = std::move(debiased);
  return rec;
}

PermutationSet& perms_for(std::map<int, PermutationSet>& cache, PermutationSet::Kind kind,
                          int n) {
  auto it = cache.find(n);
  if (it == cache.end()) {
    it = cache
             .emplace(n, kind == PermutationSet::Kind::full ? PermutationSet::full(n)
                                                            : PermutationSet::cyclic(n))
             .first;
  }
  return it->second;
}

}  // namespace

McqEvaluation evaluate(const std::vector<McqInstance>& instances,
                       const ScoringProvider& provider, PermutationSet::Kind kind) {
  if (instances.empty()) throw std::invalid_argument("evaluate: empty instance list");
  McqEvaluation ev;
  std::map<int, PermutationSet> cache;
  int correct = 0;
  for (McqInstance inst : instances) {
    default_ids(inst);
    const PermutationSet& perms = perms_for(cache, kind, static_cast<int>(inst.options.size()));
    McqRecord rec = record_from(inst, debiased_probabilities(inst, provider, perms));
    correct += rec.correct ? 1 : 0;
    ev.records.push_back(std::move(rec));
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(instances.size());
  return ev;
}

std::string render_mcq_prompt(const McqPresentation& p) {
  const size_t n = p.option_contents.size();
  std::ostringstream out;
  out << "The following is a multiple choice question about medical knowledge.\n";
  out << "Output a single option from the " << (n == 4 ? "four" : std::to_string(n))
      << " options as the final answer.\n";
  out << "Question: " << p.question << "\n";
  for (size_t i = 0; i < n; ++i) {
    out << (i ? " " : "") << "(" << p.id_symbols[i] << ") " << p.option_contents[i];
  }
  out << "\nThe answer to the question is ";
  return out.str();
}

ScoringProvider toy_lm_provider(const Model& m) {
  if (m.config.readout != Readout::vocabulary) {
    throw std::invalid_argument("toy provider needs a vocabulary-readout model");
  }
  Model model = m;  // shallow parameter handles; read-only use
  return [model](const McqPresentation& p) -> std::vector<double> {
    const std::vector<int> prompt = tokenize(render_mcq_prompt(p));
    const int window = model.config.max_sequence_length;
    std::vector<double> logp_sym;
    for (const std::string& sym : p.id_symbols) {
      const std::vector<int> ans = tokenize(sym);
      if (static_cast<int>(ans.size()) + 1 > window) {
        throw std::invalid_argument("ID symbol does not fit the model window: " + sym);
      }
      // left-truncate so the continuation always fits
      const size_t keep = std::min(prompt.size(), static_cast<size_t>(window) - ans.size());
      std::vector<int> ids(prompt.end() - keep, prompt.end());
      const size_t base = ids.size();
      ids.insert(ids.end(), ans.begin(), ans.end());
      Tape t(false);
      Tensor lp = forward_tokens_all(t, model, ids, 1, static_cast<int>(ids.size()));
      double total = 0.0;
      for (size_t k = 0; k < ans.size(); ++k) {
        total += lp->value(static_cast<Eigen::Index>(base + k) - 1, ans[k]);
      }
      logp_sym.push_back(total);
    }
    // normalize over the candidate symbols
    const double mx = *std::max_element(logp_sym.begin(), logp_sym.end());
    double z = 0.0;
    for (double v : logp_sym) z += std::exp(v - mx);
    std::vector<double> probs;
    for (double v : logp_sym) probs.push_back(std::exp(v - mx) / z);
    return probs;
  };
}

// --- file transport ---

namespace {

json parse_line(const std::string& line, const std::string& path, size_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path + " line " + std::to_string(lineno) +
                                ": invalid record: " + e.what());
  }
}

}  // namespace

std::vector<McqInstance> load_mcq_instances(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("instance file not found: " + path);
  std::vector<McqInstance> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec = parse_line(line, path, lineno);
    McqInstance inst;
    try {
      inst.question = rec.at("question").get<std::string>();
      inst.options = rec.at("options").get<std::vector<std::string>>();
      inst.answer_index = rec.at("answer_index").get<int>();
      if (rec.contains("ids")) inst.id_symbols = rec.at("ids").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
    default_ids(inst);
    try {
      inst.validate();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(inst));
  }
  if (out.empty()) throw std::invalid_argument("no instances in " + path);
  return out;
}

void write_score_requests(const std::string& path, const std::vector<McqInstance>& instances,
                          PermutationSet::Kind kind) {
  if (instances.empty()) throw std::invalid_argument("no instances to write requests for");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  std::map<int, PermutationSet> cache;
  for (size_t i = 0; i < instances.size(); ++i) {
    McqInstance inst = instances[i];
    default_ids(inst);
    inst.validate();
    const PermutationSet& perms = perms_for(cache, kind, static_cast<int>(inst.options.size()));
    for (size_t j = 0; j < perms.perms.size(); ++j) {
      McqPresentation p = present(inst, perms.perms[j]);
      json rec{{"instance", i},
               {"permutation", j},
               {"perm", perms.perms[j]},
               {"ids", p.id_symbols},
               {"prompt", render_mcq_prompt(p)}};
      out << rec.dump() << "\n";
    }
  }
}

McqEvaluation evaluate_from_responses(const std::vector<McqInstance>& instances,
                                      PermutationSet::Kind kind, const std::string& path) {
  if (instances.empty()) throw std::invalid_argument("evaluate: empty instance list");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("response file not found: " + path);

  std::map<std::pair<size_t, size_t>, std::vector<double>> responses;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec = parse_line(line, path, lineno);
    size_t i, j;
    std::vector<double> probs;
    try {
      i = rec.at("instance").get<size_t>();
      j = rec.at("permutation").get<size_t>();
      probs = rec.at("probs").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!responses.emplace(std::make_pair(i, j), std::move(probs)).second) {
      throw std::invalid_argument(path + " line " + std::to_string(lineno) +
                                  ": duplicate response for instance " + std::to_string(i) +
                                  " permutation " + std::to_string(j));
    }
  }

  McqEvaluation ev;
  std::map<int, PermutationSet> cache;
  int correct = 0;
  for (size_t i = 0; i < instances.size(); ++i) {
    McqInstance inst = instances[i];
    default_ids(inst);
    const PermutationSet& perms = perms_for(cache, kind, static_cast<int>(inst.options.size()));
    std::vector<std::vector<double>> obs;
    for (size_t j = 0; j < perms.perms.size(); ++j) {
      auto it = responses.find({i, j});
      if (it == responses.end()) {
        throw std::invalid_argument("missing response for instance " + std::to_string(i) +
                                    " permutation " + std::to_string(j));
      }
      obs.push_back(it->second);
    }
    McqRecord rec = record_from(inst, debias_observations(inst, perms, obs));
    correct += rec.correct ? 1 : 0;
    ev.records.push_back(std::move(rec));
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(instances.size());
  return ev;
}

}  // namespace cft
