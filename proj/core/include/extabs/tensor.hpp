#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace extabs {

// Dense row-major tensor of doubles. Rank 1 ({n}) or rank 2 ({r, c});
// scalars are {1}. Data and grad are shared so that value-copies of a
// Tensor alias the same storage, which is what lets backward closures
// captured by value accumulate into the gradients the caller sees.
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;  // allocated iff requires_grad
  bool requires_grad = false;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  int ndim() const { return static_cast<int>(shape.size()); }
  std::size_t numel() const;
  bool is_scalar() const { return numel() == 1; }
  // 2-D accessors; rank-1 tensors behave as a single row.
  int rows() const;
  int cols() const;

  double value() const;  // scalar extraction; throws on non-scalar
  double& at(int i, int j) { return (*data)[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return (*data)[static_cast<std::size_t>(i) * cols() + j]; }

  void ensure_grad();  // allocate zeroed grad storage, set requires_grad
  void zero_grad();
};

std::string shape_str(const Tensor& t);

// Records backward closures in execution order. A non-recording tape turns
// every primitive into plain forward arithmetic (no closures, no grad
// allocation on outputs), which is how inference and finite-difference
// probes run.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t node_count() const { return nodes_.size(); }
  void push(std::function<void()> backward) { nodes_.push_back(std::move(backward)); }

  // Seeds root.grad with seed and replays closures newest-first. Root must
  // be scalar-shaped and require grad. Single use per recorded graph:
  // replaying twice would double-accumulate.
  void backprop(Tensor& root, double seed = 1.0);

 private:
  bool recording_ = true;
  std::vector<std::function<void()>> nodes_;
};

// --- differentiable primitives -------------------------------------------
// Every primitive validates shapes (std::invalid_argument) and rejects
// non-finite inputs (NumericError). Outputs require grad iff the tape is
// recording and at least one input requires grad.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& x);
// add/mul accept equal shapes, or a rank-1 {c} second operand broadcast
// across the rows of a rank-2 first operand.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double s);
Tensor sum(Tape& tape, const Tensor& x);

Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor relu(Tape& tape, const Tensor& x);
Tensor gelu(Tape& tape, const Tensor& x);
Tensor exp(Tape& tape, const Tensor& x);
// Natural log of max(x, floor). Entries at or below the floor get zero
// gradient. floor = 0 means no clamping.
Tensor log(Tape& tape, const Tensor& x, double floor = 0.0);

// Row-wise softmax over the last axis (rank-1 input is one row).
Tensor softmax_rows(Tape& tape, const Tensor& x);
// out[i][j] = mask[i][j] != 0 ? x[i][j] : fill. Mask entries must be 0 or 1;
// rank-1 masks broadcast across rows. Fill positions pass no gradient.
Tensor masked_fill(Tape& tape, const Tensor& x, const Tensor& mask, double fill);
// Per-row layer norm with learned gain/bias ({c} each).
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
// Gathers rows of table ({V, d}) by id; out-of-range ids throw.
Tensor embedding(Tape& tape, const Tensor& table, const std::vector<int>& ids);

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);
Tensor slice_rows(Tape& tape, const Tensor& x, int row_begin, int row_end);
Tensor slice_cols(Tape& tape, const Tensor& x, int col_begin, int col_end);

// Summed token-level negative log likelihood from logits ({n, V}) against
// n target ids, computed per row via log-sum-exp.
Tensor cross_entropy_from_logits(Tape& tape, const Tensor& logits, const std::vector<int>& targets);

// --- gradient checking -----------------------------------------------------

// Rebuilds a scalar graph from current parameter values. Called once on a
// recording tape for analytic gradients, then repeatedly on non-recording
// tapes while coordinates are perturbed.
using ScalarGraphFn = std::function<Tensor(Tape&)>;

// Max over parameter coordinates of
//   |analytic - central| / (|analytic| + |central| + 1e-12)
// with central differences of the given step.
double finite_difference_check(const ScalarGraphFn& f, const std::vector<Tensor>& params,
                               double step = 1e-5);

}  // namespace extabs
