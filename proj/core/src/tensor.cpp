#include "extabs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "extabs/errors.hpp"

namespace extabs {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void validate_shape(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw std::invalid_argument("tensor: rank must be 1 or 2, got rank " +
                                std::to_string(shape.size()));
  }
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension " + std::to_string(d));
  }
}

void check_finite(const char* op, const Tensor& t) {
  for (double v : *t.data) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input value");
  }
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                              " and " + shape_str(b));
}

Tensor make_out(Tape& tape, std::vector<int> shape, bool any_input_requires_grad) {
  Tensor out = Tensor::zeros(std::move(shape));
  if (tape.recording() && any_input_requires_grad) out.ensure_grad();
  return out;
}

// C (r,c) += A (r,k) * B (k,c)
void gemm_acc(const double* A, const double* B, double* C, int r, int k, int c) {
  for (int i = 0; i < r; ++i) {
    const double* a_row = A + static_cast<std::size_t>(i) * k;
    double* c_row = C + static_cast<std::size_t>(i) * c;
    for (int kk = 0; kk < k; ++kk) {
      const double av = a_row[kk];
      const double* b_row = B + static_cast<std::size_t>(kk) * c;
      for (int j = 0; j < c; ++j) c_row[j] += av * b_row[j];
    }
  }
}

// C (r,k) += A (r,m) * B^T, B stored (k,m)
void gemm_nt_acc(const double* A, const double* B, double* C, int r, int m, int k) {
  for (int i = 0; i < r; ++i) {
    const double* a_row = A + static_cast<std::size_t>(i) * m;
    double* c_row = C + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double* b_row = B + static_cast<std::size_t>(kk) * m;
      double dot = 0.0;
      for (int j = 0; j < m; ++j) dot += a_row[j] * b_row[j];
      c_row[kk] += dot;
    }
  }
}

// C (k,c) += A^T * B, A stored (r,k), B stored (r,c)
void gemm_tn_acc(const double* A, const double* B, double* C, int r, int k, int c) {
  for (int i = 0; i < r; ++i) {
    const double* a_row = A + static_cast<std::size_t>(i) * k;
    const double* b_row = B + static_cast<std::size_t>(i) * c;
    for (int kk = 0; kk < k; ++kk) {
      const double av = a_row[kk];
      if (av == 0.0) continue;
      double* c_row = C + static_cast<std::size_t>(kk) * c;
      for (int j = 0; j < c; ++j) c_row[j] += av * b_row[j];
    }
  }
}

// Elementwise unary op plus its derivative in terms of (x, y).
template <typename Fwd, typename Dfn>
Tensor unary_op(Tape& tape, const Tensor& x, const char* name, Fwd fwd, Dfn dfn) {
  check_finite(name, x);
  Tensor out = make_out(tape, x.shape, x.requires_grad);
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = fwd((*x.data)[i]);
  if (out.requires_grad) {
    tape.push([x, out, dfn, n] {
      for (std::size_t i = 0; i < n; ++i) {
        (*x.grad)[i] += (*out.grad)[i] * dfn((*x.data)[i], (*out.data)[i]);
      }
    });
  }
  return out;
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

// True when b is a rank-1 vector broadcastable across the rows of rank-2 a.
bool row_broadcast(const Tensor& a, const Tensor& b) {
  return a.ndim() == 2 && b.ndim() == 1 && b.shape[0] == a.shape[1];
}

}  // namespace

// --- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  validate_shape(shape);
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<double>>(t.numel(), 0.0);
  if (requires_grad) t.ensure_grad();
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data->begin(), t.data->end(), value);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  validate_shape(shape);
  std::size_t expect = 1;
  for (int d : shape) expect *= static_cast<std::size_t>(d);
  if (values.size() != expect) {
    throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                " values for shape with " + std::to_string(expect) + " elements");
  }
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<double>>(std::move(values));
  if (requires_grad) t.ensure_grad();
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

int Tensor::rows() const { return ndim() == 2 ? shape[0] : 1; }
int Tensor::cols() const { return ndim() == 2 ? shape[1] : shape[0]; }

double Tensor::value() const {
  if (!is_scalar()) throw std::invalid_argument("value(): tensor " + shape_str(*this) + " is not scalar");
  return (*data)[0];
}

void Tensor::ensure_grad() {
  if (!grad) grad = std::make_shared<std::vector<double>>(numel(), 0.0);
  requires_grad = true;
}

void Tensor::zero_grad() {
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) os << ", ";
    os << t.shape[i];
  }
  os << ')';
  return os.str();
}

// --- Tape -------------------------------------------------------------------

void Tape::backprop(Tensor& root, double seed) {
  if (!root.is_scalar()) {
    throw std::invalid_argument("backprop: root must be scalar, got " + shape_str(root));
  }
  if (!root.requires_grad || !root.grad) {
    throw std::invalid_argument("backprop: root does not require grad (non-recording tape?)");
  }
  (*root.grad)[0] = seed;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

// --- primitives --------------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape[1] != b.shape[0]) shape_error("matmul", a, b);
  check_finite("matmul", a);
  check_finite("matmul", b);
  const int r = a.shape[0], k = a.shape[1], c = b.shape[1];
  Tensor out = make_out(tape, {r, c}, a.requires_grad || b.requires_grad);
  gemm_acc(a.data->data(), b.data->data(), out.data->data(), r, k, c);
  if (out.requires_grad) {
    tape.push([a, b, out, r, k, c] {
      if (a.requires_grad) gemm_nt_acc(out.grad->data(), b.data->data(), a.grad->data(), r, c, k);
      if (b.requires_grad) gemm_tn_acc(a.data->data(), out.grad->data(), b.grad->data(), r, k, c);
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& x) {
  if (x.ndim() != 2) throw std::invalid_argument("transpose: need rank 2, got " + shape_str(x));
  check_finite("transpose", x);
  const int r = x.shape[0], c = x.shape[1];
  Tensor out = make_out(tape, {c, r}, x.requires_grad);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(j, i) = x.at(i, j);
  if (out.requires_grad) {
    tape.push([x, out, r, c] {
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          (*x.grad)[static_cast<std::size_t>(i) * c + j] +=
              (*out.grad)[static_cast<std::size_t>(j) * r + i];
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  check_finite("add", a);
  check_finite("add", b);
  const bool req = a.requires_grad || b.requires_grad;
  if (same_shape(a, b)) {
    Tensor out = make_out(tape, a.shape, req);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
    if (out.requires_grad) {
      tape.push([a, b, out, n] {
        for (std::size_t i = 0; i < n; ++i) {
          if (a.requires_grad) (*a.grad)[i] += (*out.grad)[i];
          if (b.requires_grad) (*b.grad)[i] += (*out.grad)[i];
        }
      });
    }
    return out;
  }
  if (row_broadcast(a, b)) {
    const int r = a.shape[0], c = a.shape[1];
    Tensor out = make_out(tape, a.shape, req);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) out.at(i, j) = a.at(i, j) + (*b.data)[j];
    if (out.requires_grad) {
      tape.push([a, b, out, r, c] {
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c; ++j) {
            const double g = (*out.grad)[static_cast<std::size_t>(i) * c + j];
            if (a.requires_grad) (*a.grad)[static_cast<std::size_t>(i) * c + j] += g;
            if (b.requires_grad) (*b.grad)[j] += g;
          }
        }
      });
    }
    return out;
  }
  shape_error("add", a, b);
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_finite("mul", a);
  check_finite("mul", b);
  const bool req = a.requires_grad || b.requires_grad;
  if (same_shape(a, b)) {
    Tensor out = make_out(tape, a.shape, req);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
    if (out.requires_grad) {
      tape.push([a, b, out, n] {
        for (std::size_t i = 0; i < n; ++i) {
          const double g = (*out.grad)[i];
          if (a.requires_grad) (*a.grad)[i] += g * (*b.data)[i];
          if (b.requires_grad) (*b.grad)[i] += g * (*a.data)[i];
        }
      });
    }
    return out;
  }
  if (row_broadcast(a, b)) {
    const int r = a.shape[0], c = a.shape[1];
    Tensor out = make_out(tape, a.shape, req);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) out.at(i, j) = a.at(i, j) * (*b.data)[j];
    if (out.requires_grad) {
      tape.push([a, b, out, r, c] {
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c; ++j) {
            const double g = (*out.grad)[static_cast<std::size_t>(i) * c + j];
            if (a.requires_grad) (*a.grad)[static_cast<std::size_t>(i) * c + j] += g * (*b.data)[j];
            if (b.requires_grad) (*b.grad)[j] += g * a.at(i, j);
          }
        }
      });
    }
    return out;
  }
  shape_error("mul", a, b);
}

Tensor scale(Tape& tape, const Tensor& x, double s) {
  if (!std::isfinite(s)) throw NumericError("scale: non-finite factor");
  return unary_op(
      tape, x, "scale", [s](double v) { return s * v; },
      [s](double, double) { return s; });
}

Tensor sum(Tape& tape, const Tensor& x) {
  check_finite("sum", x);
  Tensor out = make_out(tape, {1}, x.requires_grad);
  (*out.data)[0] = std::accumulate(x.data->begin(), x.data->end(), 0.0);
  if (out.requires_grad) {
    tape.push([x, out] {
      const double g = (*out.grad)[0];
      for (double& gv : *x.grad) gv += g;
    });
  }
  return out;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary_op(
      tape, x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary_op(
      tape, x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(Tape& tape, const Tensor& x) {
  return unary_op(
      tape, x, "gelu",
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) +
               v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor exp(Tape& tape, const Tensor& x) {
  return unary_op(
      tape, x, "exp", [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(Tape& tape, const Tensor& x, double floor) {
  if (floor < 0.0) throw std::invalid_argument("log: negative floor");
  return unary_op(
      tape, x, "log",
      [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
  check_finite("softmax", x);
  const int r = x.rows(), c = x.cols();
  Tensor out = make_out(tape, x.shape, x.requires_grad);
  for (int i = 0; i < r; ++i) {
    const double* xr = x.data->data() + static_cast<std::size_t>(i) * c;
    double* yr = out.data->data() + static_cast<std::size_t>(i) * c;
    double mx = xr[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      z += yr[j];
    }
    for (int j = 0; j < c; ++j) yr[j] /= z;
  }
  if (out.requires_grad) {
    tape.push([x, out, r, c] {
      for (int i = 0; i < r; ++i) {
        const double* y = out.data->data() + static_cast<std::size_t>(i) * c;
        const double* gy = out.grad->data() + static_cast<std::size_t>(i) * c;
        double* gx = x.grad->data() + static_cast<std::size_t>(i) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += gy[j] * y[j];
        for (int j = 0; j < c; ++j) gx[j] += y[j] * (gy[j] - dot);
      }
    });
  }
  return out;
}

Tensor masked_fill(Tape& tape, const Tensor& x, const Tensor& mask, double fill) {
  if (!std::isfinite(fill)) throw NumericError("masked_fill: non-finite fill");
  check_finite("masked_fill", x);
  const bool bcast = row_broadcast(x, mask);
  if (!bcast && !same_shape(x, mask)) shape_error("masked_fill", x, mask);
  for (double m : *mask.data) {
    if (m != 0.0 && m != 1.0) {
      throw std::invalid_argument("masked_fill: mask entries must be 0 or 1");
    }
  }
  const int r = x.rows(), c = x.cols();
  Tensor out = make_out(tape, x.shape, x.requires_grad);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) {
      const double m = bcast ? (*mask.data)[j] : mask.at(i, j);
      out.at(i, j) = m != 0.0 ? x.at(i, j) : fill;
    }
  }
  if (out.requires_grad) {
    tape.push([x, mask, out, bcast, r, c] {
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) {
          const double m = bcast ? (*mask.data)[j] : mask.at(i, j);
          if (m != 0.0) {
            (*x.grad)[static_cast<std::size_t>(i) * c + j] +=
                (*out.grad)[static_cast<std::size_t>(i) * c + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.ndim() != 2) throw std::invalid_argument("layer_norm: need rank-2 input, got " + shape_str(x));
  if (gain.ndim() != 1 || gain.shape[0] != x.shape[1]) shape_error("layer_norm", x, gain);
  if (bias.ndim() != 1 || bias.shape[0] != x.shape[1]) shape_error("layer_norm", x, bias);
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
  check_finite("layer_norm", x);
  check_finite("layer_norm", gain);
  check_finite("layer_norm", bias);
  const int r = x.shape[0], c = x.shape[1];
  Tensor out = make_out(tape, x.shape, x.requires_grad || gain.requires_grad || bias.requires_grad);
  // normalized rows are needed in backward; stash them alongside inv stddev
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_sd = std::make_shared<std::vector<double>>(r);
  for (int i = 0; i < r; ++i) {
    const double* xr = x.data->data() + static_cast<std::size_t>(i) * c;
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += xr[j];
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= c;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_sd)[i] = inv;
    for (int j = 0; j < c; ++j) {
      const double xh = (xr[j] - mean) * inv;
      (*xhat)[static_cast<std::size_t>(i) * c + j] = xh;
      out.at(i, j) = xh * (*gain.data)[j] + (*bias.data)[j];
    }
  }
  if (out.requires_grad) {
    tape.push([x, gain, bias, out, xhat, inv_sd, r, c] {
      std::vector<double> dxh(c);
      for (int i = 0; i < r; ++i) {
        const double* gy = out.grad->data() + static_cast<std::size_t>(i) * c;
        const double* xh = xhat->data() + static_cast<std::size_t>(i) * c;
        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
        for (int j = 0; j < c; ++j) {
          dxh[j] = gy[j] * (*gain.data)[j];
          mean_dxh += dxh[j];
          mean_dxh_xh += dxh[j] * xh[j];
          if (gain.requires_grad) (*gain.grad)[j] += gy[j] * xh[j];
          if (bias.requires_grad) (*bias.grad)[j] += gy[j];
        }
        mean_dxh /= c;
        mean_dxh_xh /= c;
        if (x.requires_grad) {
          const double inv = (*inv_sd)[i];
          for (int j = 0; j < c; ++j) {
            (*x.grad)[static_cast<std::size_t>(i) * c + j] +=
                inv * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
          }
        }
      }
    });
  }
  return out;
}

Tensor embedding(Tape& tape, const Tensor& table, const std::vector<int>& ids) {
  if (table.ndim() != 2) throw std::invalid_argument("embedding: table must be rank 2");
  if (ids.empty()) throw std::invalid_argument("embedding: empty id list");
  const int v = table.shape[0], d = table.shape[1];
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw std::invalid_argument("embedding: id " + std::to_string(id) + " outside table of " +
                                  std::to_string(v) + " rows");
    }
  }
  check_finite("embedding", table);
  const int n = static_cast<int>(ids.size());
  Tensor out = make_out(tape, {n, d}, table.requires_grad);
  for (int i = 0; i < n; ++i) {
    const double* src = table.data->data() + static_cast<std::size_t>(ids[i]) * d;
    std::copy(src, src + d, out.data->data() + static_cast<std::size_t>(i) * d);
  }
  if (out.requires_grad) {
    tape.push([table, out, ids, d, n] {
      for (int i = 0; i < n; ++i) {
        const double* g = out.grad->data() + static_cast<std::size_t>(i) * d;
        double* dst = table.grad->data() + static_cast<std::size_t>(ids[i]) * d;
        for (int j = 0; j < d; ++j) dst[j] += g[j];
      }
    });
  }
  return out;
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int c = parts[0].ndim() == 2 ? parts[0].shape[1] : -1;
  int total = 0;
  bool req = false;
  for (const Tensor& p : parts) {
    if (p.ndim() != 2 || p.shape[1] != c) {
      throw std::invalid_argument("concat_rows: parts must be rank 2 with equal columns");
    }
    check_finite("concat_rows", p);
    total += p.shape[0];
    req = req || p.requires_grad;
  }
  Tensor out = make_out(tape, {total, c}, req);
  int row = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data->begin(), p.data->end(),
              out.data->data() + static_cast<std::size_t>(row) * c);
    row += p.shape[0];
  }
  if (out.requires_grad) {
    tape.push([parts, out, c] {
      int row = 0;
      for (const Tensor& p : parts) {
        if (p.requires_grad) {
          const double* g = out.grad->data() + static_cast<std::size_t>(row) * c;
          for (std::size_t i = 0; i < p.numel(); ++i) (*p.grad)[i] += g[i];
        }
        row += p.shape[0];
      }
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int r = parts[0].ndim() == 2 ? parts[0].shape[0] : -1;
  int total = 0;
  bool req = false;
  for (const Tensor& p : parts) {
    if (p.ndim() != 2 || p.shape[0] != r) {
      throw std::invalid_argument("concat_cols: parts must be rank 2 with equal rows");
    }
    check_finite("concat_cols", p);
    total += p.shape[1];
    req = req || p.requires_grad;
  }
  Tensor out = make_out(tape, {r, total}, req);
  int col = 0;
  for (const Tensor& p : parts) {
    const int pc = p.shape[1];
    for (int i = 0; i < r; ++i) {
      std::copy(p.data->data() + static_cast<std::size_t>(i) * pc,
                p.data->data() + static_cast<std::size_t>(i + 1) * pc,
                out.data->data() + static_cast<std::size_t>(i) * total + col);
    }
    col += pc;
  }
  if (out.requires_grad) {
    tape.push([parts, out, r, total] {
      int col = 0;
      for (const Tensor& p : parts) {
        const int pc = p.shape[1];
        if (p.requires_grad) {
          for (int i = 0; i < r; ++i) {
            const double* g = out.grad->data() + static_cast<std::size_t>(i) * total + col;
            double* dst = p.grad->data() + static_cast<std::size_t>(i) * pc;
            for (int j = 0; j < pc; ++j) dst[j] += g[j];
          }
        }
        col += pc;
      }
    });
  }
  return out;
}

Tensor slice_rows(Tape& tape, const Tensor& x, int row_begin, int row_end) {
  if (x.ndim() != 2) throw std::invalid_argument("slice_rows: need rank 2, got " + shape_str(x));
  if (row_begin < 0 || row_end > x.shape[0] || row_begin >= row_end) {
    throw std::invalid_argument("slice_rows: range [" + std::to_string(row_begin) + ", " +
                                std::to_string(row_end) + ") outside " + shape_str(x));
  }
  check_finite("slice_rows", x);
  const int c = x.shape[1], n = row_end - row_begin;
  Tensor out = make_out(tape, {n, c}, x.requires_grad);
  std::copy(x.data->data() + static_cast<std::size_t>(row_begin) * c,
            x.data->data() + static_cast<std::size_t>(row_end) * c, out.data->data());
  if (out.requires_grad) {
    tape.push([x, out, row_begin, n, c] {
      double* dst = x.grad->data() + static_cast<std::size_t>(row_begin) * c;
      for (std::size_t i = 0; i < static_cast<std::size_t>(n) * c; ++i) dst[i] += (*out.grad)[i];
    });
  }
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& x, int col_begin, int col_end) {
  if (x.ndim() != 2) throw std::invalid_argument("slice_cols: need rank 2, got " + shape_str(x));
  if (col_begin < 0 || col_end > x.shape[1] || col_begin >= col_end) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(col_begin) + ", " +
                                std::to_string(col_end) + ") outside " + shape_str(x));
  }
  check_finite("slice_cols", x);
  const int r = x.shape[0], c = x.shape[1], n = col_end - col_begin;
  Tensor out = make_out(tape, {r, n}, x.requires_grad);
  for (int i = 0; i < r; ++i) {
    std::copy(x.data->data() + static_cast<std::size_t>(i) * c + col_begin,
              x.data->data() + static_cast<std::size_t>(i) * c + col_end,
              out.data->data() + static_cast<std::size_t>(i) * n);
  }
  if (out.requires_grad) {
    tape.push([x, out, col_begin, r, c, n] {
      for (int i = 0; i < r; ++i) {
        const double* g = out.grad->data() + static_cast<std::size_t>(i) * n;
        double* dst = x.grad->data() + static_cast<std::size_t>(i) * c + col_begin;
        for (int j = 0; j < n; ++j) dst[j] += g[j];
      }
    });
  }
  return out;
}

Tensor cross_entropy_from_logits(Tape& tape, const Tensor& logits, const std::vector<int>& targets) {
  if (logits.ndim() != 2) {
    throw std::invalid_argument("cross_entropy: logits must be rank 2, got " + shape_str(logits));
  }
  const int n = logits.shape[0], v = logits.shape[1];
  if (static_cast<int>(targets.size()) != n) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(n) + " rows");
  }
  for (int t : targets) {
    if (t < 0 || t >= v) {
      throw std::invalid_argument("cross_entropy: target id " + std::to_string(t) +
                                  " outside vocab of " + std::to_string(v));
    }
  }
  check_finite("cross_entropy", logits);
  Tensor out = make_out(tape, {1}, logits.requires_grad);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* xr = logits.data->data() + static_cast<std::size_t>(i) * v;
    double mx = xr[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, xr[j]);
    double z = 0.0;
    for (int j = 0; j < v; ++j) z += std::exp(xr[j] - mx);
    total += mx + std::log(z) - xr[targets[i]];
  }
  (*out.data)[0] = total;
  if (out.requires_grad) {
    tape.push([logits, out, targets, n, v] {
      const double g = (*out.grad)[0];
      for (int i = 0; i < n; ++i) {
        const double* xr = logits.data->data() + static_cast<std::size_t>(i) * v;
        double* gr = logits.grad->data() + static_cast<std::size_t>(i) * v;
        double mx = xr[0];
        for (int j = 1; j < v; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (int j = 0; j < v; ++j) z += std::exp(xr[j] - mx);
        for (int j = 0; j < v; ++j) {
          const double p = std::exp(xr[j] - mx) / z;
          gr[j] += g * (p - (j == targets[i] ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

// --- finite differences -------------------------------------------------------

double finite_difference_check(const ScalarGraphFn& f, const std::vector<Tensor>& params,
                               double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");
  for (const Tensor& p : params) {
    if (!p.requires_grad || !p.grad) {
      throw std::invalid_argument("finite_difference_check: every param must require grad");
    }
  }
  for (Tensor p : params) p.zero_grad();

  Tape rec(true);
  Tensor root = f(rec);
  if (!root.is_scalar()) {
    throw std::invalid_argument("finite_difference_check: f must return a scalar");
  }
  if (!std::isfinite(root.value())) {
    throw NumericError("finite_difference_check: non-finite value at base point");
  }
  // A constant graph never attaches to the params; analytic grads stay zero.
  if (root.requires_grad) rec.backprop(root);

  double worst = 0.0;
  for (const Tensor& p : params) {
    for (std::size_t i = 0; i < p.data->size(); ++i) {
      const double saved = (*p.data)[i];
      (*p.data)[i] = saved + step;
      Tape plus(false);
      const double fp = f(plus).value();
      (*p.data)[i] = saved - step;
      Tape minus(false);
      const double fm = f(minus).value();
      (*p.data)[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("finite_difference_check: non-finite value at probe point");
      }
      const double numeric = (fp - fm) / (2.0 * step);
      const double analytic = (*p.grad)[i];
      const double rel =
          std::fabs(analytic - numeric) / (std::fabs(analytic) + std::fabs(numeric) + 1e-12);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace extabs
