#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cft {

// Row-major everywhere: matches the checkpoint payload order and keeps
// raw-buffer round-trips trivial.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TensorNode {
  Matrix value;
  Matrix grad;  // empty (0x0) until a backward pass touches this node
  bool requires_grad = false;
};

using Tensor = std::shared_ptr<TensorNode>;

Tensor make_tensor(Matrix value, bool requires_grad = false);

inline bool has_grad(const Tensor& t) { return t->grad.size() != 0; }

// Gradients accumulate across backward calls; callers reset explicitly
// between optimizer steps.
void clear_grad(const std::vector<Tensor>& tensors);

// Records primitive applications in execution order (hence topologically
// sorted) and replays them once, in reverse, on backward().
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  void record(Tensor out, std::vector<Tensor> inputs, std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and walks the tape backwards once. Every
  // requires_grad tensor that participated in this tape ends up with a
  // gradient; the unreachable ones get zeros.
  void backward(const Tensor& loss);

  size_t size() const { return records_.size(); }

 private:
  struct Record {
    Tensor out;
    std::vector<Tensor> inputs;
    std::function<void()> fn;
  };
  std::vector<Record> records_;
  bool grad_enabled_;
};

// --- primitives ---
// Each returns a fresh node; recorded on the tape iff some input requires
// gradients and the tape has gradients enabled.

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b);
// Same shape, or b a 1xN bias row added to every row of a.
Tensor add(Tape& t, const Tensor& a, const Tensor& b);
Tensor sub(Tape& t, const Tensor& a, const Tensor& b);
Tensor mul(Tape& t, const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(Tape& t, const Tensor& a, double s);
Tensor transpose(Tape& t, const Tensor& a);
Tensor softmax_rows(Tape& t, const Tensor& a);
Tensor log_softmax_rows(Tape& t, const Tensor& a);
Tensor layer_norm_rows(Tape& t, const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-5);
Tensor gelu(Tape& t, const Tensor& a);
Tensor gather_rows(Tape& t, const Tensor& table, const std::vector<int>& ids);
Tensor concat_rows(Tape& t, const Tensor& a, const Tensor& b);
Tensor concat_cols(Tape& t, const Tensor& a, const Tensor& b);
Tensor slice_rows(Tape& t, const Tensor& a, int start, int count);
Tensor slice_cols(Tape& t, const Tensor& a, int start, int count);
Tensor mean_all(Tape& t, const Tensor& a);
// Sum of elementwise squared differences, reduced to 1x1.
Tensor squared_error(Tape& t, const Tensor& a, const Tensor& b);
// out[r, 0] = a(r, cols[r]); the per-row column gather used by token losses.
Tensor pick_rows(Tape& t, const Tensor& a, const std::vector<int>& cols);

// Balanced-tree fold over concat_rows (keeps copying O(n log n), not O(n^2)).
Tensor concat_rows_many(Tape& t, const std::vector<Tensor>& parts);
Tensor concat_cols_many(Tape& t, const std::vector<Tensor>& parts);

}  // namespace cft
