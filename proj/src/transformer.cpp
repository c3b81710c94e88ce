#include "cft/transformer.hpp"

#include <cmath>
#include <stdexcept>

#include "cft/rng.hpp"

namespace cft {
namespace {

constexpr double kInitStd = 0.02;
constexpr double kMaskValue = -1e30;

Matrix normal_matrix(int rows, int cols, Rng& g, double std) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = std * g.normal();
  return m;
}

Tensor causal_mask(int seq_len) {
  Matrix m = Matrix::Zero(seq_len, seq_len);
  for (int i = 0; i < seq_len; ++i)
    for (int j = i + 1; j < seq_len; ++j) m(i, j) = kMaskValue;
  return make_tensor(std::move(m));
}

std::vector<int> tiled_positions(int batch, int seq_len) {
  std::vector<int> ids(static_cast<size_t>(batch) * seq_len);
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < seq_len; ++t) ids[static_cast<size_t>(b) * seq_len + t] = t;
  return ids;
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) {
      throw std::invalid_argument(std::string("ModelConfig: ") + name + " must be >= 1");
    }
  };
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(d_model, "d_model");
  positive(d_input, "d_input");
  positive(max_sequence_length, "max_sequence_length");
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("ModelConfig: d_model (" + std::to_string(d_model) +
                                ") not divisible by n_heads (" + std::to_string(n_heads) +
                                ")");
  }
}

ModelConfig ModelConfig::paper_preset(int d_input, int max_sequence_length, Readout r) {
  ModelConfig c{12, 8, 256, d_input, max_sequence_length, r};
  c.validate();
  return c;
}

ModelConfig ModelConfig::desk_preset(int d_input, int max_sequence_length, Readout r) {
  ModelConfig c{4, 4, 128, d_input, max_sequence_length, r};
  c.validate();
  return c;
}

Model Model::init(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  const int dm = config.d_model;
  const int dff = 4 * dm;

  // Each tensor draws from its own named substream, so layout changes never
  // reshuffle other tensors' values.
  auto weight = [&](const std::string& name, int r, int c) {
    Rng g = make_stream(seed, "init." + name);
    m.params.emplace_back(name, make_tensor(normal_matrix(r, c, g, kInitStd), true));
  };
  auto zeros = [&](const std::string& name, int r, int c) {
    m.params.emplace_back(name, make_tensor(Matrix::Zero(r, c), true));
  };
  auto ones = [&](const std::string& name, int r, int c) {
    m.params.emplace_back(name, make_tensor(Matrix::Ones(r, c), true));
  };

  if (config.readout == Readout::scalar) {
    weight("read_in.w", config.d_input, dm);
    zeros("read_in.b", 1, dm);
  } else {
    weight("embed.w", config.d_input, dm);
  }
  weight("pos.w", config.max_sequence_length, dm);
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    ones(p + "ln1.g", 1, dm);
    zeros(p + "ln1.b", 1, dm);
    weight(p + "attn.wq", dm, dm);
    zeros(p + "attn.bq", 1, dm);
    weight(p + "attn.wk", dm, dm);
    zeros(p + "attn.bk", 1, dm);
    weight(p + "attn.wv", dm, dm);
    zeros(p + "attn.bv", 1, dm);
    weight(p + "attn.wo", dm, dm);
    zeros(p + "attn.bo", 1, dm);
    ones(p + "ln2.g", 1, dm);
    zeros(p + "ln2.b", 1, dm);
    weight(p + "mlp.w1", dm, dff);
    zeros(p + "mlp.b1", 1, dff);
    weight(p + "mlp.w2", dff, dm);
    zeros(p + "mlp.b2", 1, dm);
  }
  ones("ln_f.g", 1, dm);
  zeros("ln_f.b", 1, dm);
  const int head_out = config.readout == Readout::scalar ? 1 : config.d_input;
  weight("head.w", dm, head_out);
  zeros("head.b", 1, head_out);
  return m;
}

const Tensor& Model::param(const std::string& name) const {
  for (const auto& [n, t] : params) {
    if (n == name) return t;
  }
  throw std::invalid_argument("Model: no parameter named '" + name + "'");
}

std::vector<Tensor> Model::param_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [n, t] : params) out.push_back(t);
  return out;
}

int64_t Model::param_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : params) n += t->value.size();
  return n;
}

Model Model::clone() const {
  Model m;
  m.config = config;
  m.params.reserve(params.size());
  for (const auto& [name, t] : params) {
    m.params.emplace_back(name, make_tensor(t->value, t->requires_grad));
  }
  return m;
}

int64_t expected_param_count(const ModelConfig& c) {
  const int64_t dm = c.d_model, dff = 4LL * dm;
  int64_t n = 0;
  if (c.readout == Readout::scalar) {
    n += static_cast<int64_t>(c.d_input) * dm + dm;  // read-in + bias
  } else {
    n += static_cast<int64_t>(c.d_input) * dm;  // embedding table
  }
  n += static_cast<int64_t>(c.max_sequence_length) * dm;  // positions
  // per layer: 2 LayerNorms, 4 attention mats + biases, 2 MLP mats + biases
  n += c.n_layers * (2 * (2 * dm) + 4 * (dm * dm + dm) + (dm * dff + dff) + (dff * dm + dm));
  n += 2 * dm;  // final LayerNorm
  const int64_t head_out = c.readout == Readout::scalar ? 1 : c.d_input;
  n += dm * head_out + head_out;
  return n;
}

Tensor forward_stack(Tape& t, const Model& m, const Tensor& h0, int batch, int seq_len) {
  const ModelConfig& c = m.config;
  if (seq_len > c.max_sequence_length) {
    throw std::invalid_argument("forward: sequence length " + std::to_string(seq_len) +
                                " exceeds max_sequence_length " +
                                std::to_string(c.max_sequence_length));
  }
  if (h0->value.rows() != static_cast<Eigen::Index>(batch) * seq_len) {
    throw std::invalid_argument("forward: h0 rows must equal batch*seq_len");
  }
  const int H = c.n_heads;
  const int dh = c.d_model / H;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor mask = causal_mask(seq_len);

  Tensor h = h0;
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Tensor n1 = layer_norm_rows(t, h, m.param(p + "ln1.g"), m.param(p + "ln1.b"));
    Tensor q = add(t, matmul(t, n1, m.param(p + "attn.wq")), m.param(p + "attn.bq"));
    Tensor k = add(t, matmul(t, n1, m.param(p + "attn.wk")), m.param(p + "attn.bk"));
    Tensor v = add(t, matmul(t, n1, m.param(p + "attn.wv")), m.param(p + "attn.bv"));

    std::vector<Tensor> sample_outs;
    sample_outs.reserve(batch);
    for (int b = 0; b < batch; ++b) {
      Tensor qs = slice_rows(t, q, b * seq_len, seq_len);
      Tensor ks = slice_rows(t, k, b * seq_len, seq_len);
      Tensor vs = slice_rows(t, v, b * seq_len, seq_len);
      std::vector<Tensor> head_outs;
      head_outs.reserve(H);
      for (int hh = 0; hh < H; ++hh) {
        Tensor qh = slice_cols(t, qs, hh * dh, dh);
        Tensor kh = slice_cols(t, ks, hh * dh, dh);
        Tensor vh = slice_cols(t, vs, hh * dh, dh);
        Tensor scores = scale(t, matmul(t, qh, transpose(t, kh)), inv_sqrt_dh);
        Tensor probs = softmax_rows(t, add(t, scores, mask));
        head_outs.push_back(matmul(t, probs, vh));
      }
      sample_outs.push_back(concat_cols_many(t, head_outs));
    }
    Tensor attn = batch == 1 ? sample_outs[0] : concat_rows_many(t, sample_outs);
    Tensor proj = add(t, matmul(t, attn, m.param(p + "attn.wo")), m.param(p + "attn.bo"));
    h = add(t, h, proj);

    Tensor n2 = layer_norm_rows(t, h, m.param(p + "ln2.g"), m.param(p + "ln2.b"));
    Tensor mid = gelu(t, add(t, matmul(t, n2, m.param(p + "mlp.w1")), m.param(p + "mlp.b1")));
    Tensor mo = add(t, matmul(t, mid, m.param(p + "mlp.w2")), m.param(p + "mlp.b2"));
    h = add(t, h, mo);
  }
  Tensor hf = layer_norm_rows(t, h, m.param("ln_f.g"), m.param("ln_f.b"));
  return add(t, matmul(t, hf, m.param("head.w")), m.param("head.b"));
}

Tensor forward_regression_all(Tape& t, const Model& m, const Tensor& tokens, int batch,
                              int seq_len) {
  if (m.config.readout != Readout::scalar) {
    throw std::invalid_argument("forward_regression: model readout is not scalar");
  }
  if (tokens->value.cols() != m.config.d_input ||
      tokens->value.rows() != static_cast<Eigen::Index>(batch) * seq_len) {
    throw std::invalid_argument("forward_regression: token matrix must be (batch*seq_len) x d");
  }
  Tensor proj = add(t, matmul(t, tokens, m.param("read_in.w")), m.param("read_in.b"));
  Tensor pos = gather_rows(t, m.param("pos.w"), tiled_positions(batch, seq_len));
  Tensor h0 = add(t, proj, pos);
  return forward_stack(t, m, h0, batch, seq_len);
}

Matrix stack_prompt_tokens(const std::vector<PromptSequence>& prompts) {
  if (prompts.empty()) throw std::invalid_argument("stack_prompt_tokens: empty batch");
  const int T = prompts[0].length();
  const int d = prompts[0].d();
  Matrix tokens(static_cast<Eigen::Index>(prompts.size()) * T, d);
  for (size_t b = 0; b < prompts.size(); ++b) {
    if (prompts[b].length() != T || prompts[b].d() != d) {
      throw std::invalid_argument("stack_prompt_tokens: heterogeneous prompt shapes");
    }
    tokens.middleRows(static_cast<Eigen::Index>(b) * T, T) = prompts[b].tokens;
  }
  return tokens;
}

RegressionBatchResult forward_regression(const Model& m,
                                         const std::vector<PromptSequence>& prompts) {
  Matrix tokens = stack_prompt_tokens(prompts);
  const int T = prompts[0].length();
  Tape t(/*grad_enabled=*/false);
  Tensor out =
      forward_regression_all(t, m, make_tensor(std::move(tokens)), static_cast<int>(prompts.size()), T);
  RegressionBatchResult res;
  res.predictions.resize(prompts.size());
  for (size_t b = 0; b < prompts.size(); ++b) {
    for (int pos = 0; pos < T; ++pos) {
      if (prompts[b].roles[pos] == Role::x) {
        res.predictions[b].push_back(out->value(static_cast<Eigen::Index>(b) * T + pos, 0));
      }
    }
  }
  return res;
}

Tensor forward_tokens_all(Tape& t, const Model& m, const std::vector<int>& ids, int batch,
                          int seq_len) {
  if (m.config.readout != Readout::vocabulary) {
    throw std::invalid_argument("forward_tokens: model readout is not vocabulary");
  }
  if (ids.size() != static_cast<size_t>(batch) * seq_len) {
    throw std::invalid_argument("forward_tokens: ids length must equal batch*seq_len");
  }
  for (int id : ids) {
    if (id < 0 || id >= m.config.d_input) {
      throw std::invalid_argument("forward_tokens: token ID " + std::to_string(id) +
                                  " out of range [0, " + std::to_string(m.config.d_input) +
                                  ")");
    }
  }
  Tensor emb = gather_rows(t, m.param("embed.w"), ids);
  Tensor pos = gather_rows(t, m.param("pos.w"), tiled_positions(batch, seq_len));
  Tensor h0 = add(t, emb, pos);
  Tensor logits = forward_stack(t, m, h0, batch, seq_len);
  return log_softmax_rows(t, logits);
}

}  // namespace cft
