#include "partstyle/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace partstyle {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Mat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMat = Eigen::Map<const RowMat<T>>;

template <typename T>
Mat<T> as_mat(BasicTensor<T>& t, std::size_t r, std::size_t c) {
  return Mat<T>(t.ptr(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
template <typename T>
CMat<T> as_mat(const BasicTensor<T>& t, std::size_t r, std::size_t c) {
  return CMat<T>(t.ptr(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

template <typename T>
void require_same(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
void require_rank2(const BasicTensor<T>& a, const char* op) {
  require(a.rank() == 2, std::string(op) + ": expected a rank-2 tensor, got " + shape_str(a.shape()));
}

template <typename T>
void axpy(BasicTensor<T>& dst, const BasicTensor<T>& src, T alpha = T(1)) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += alpha * s[i];
}

}  // namespace

template <typename T>
Var BasicGraph<T>::push(std::string op, TensorT value, std::vector<int> inputs,
                        std::function<void(BasicGraph&, int)> bw) {
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  n.needs_grad = any_needs_grad(inputs);
  n.inputs = std::move(inputs);
  if (n.needs_grad) n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
bool BasicGraph<T>::any_needs_grad(const std::vector<int>& ids) const {
  return std::any_of(ids.begin(), ids.end(), [&](int i) { return nodes_[i].needs_grad; });
}

template <typename T>
typename BasicGraph<T>::TensorT& BasicGraph<T>::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape()) n.grad = TensorT::zeros(n.value.shape());
  return n.grad;
}

template <typename T>
typename BasicGraph<T>::TensorT BasicGraph<T>::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.shape() != n.value.shape()) return TensorT::zeros(n.value.shape());
  return n.grad;
}

template <typename T>
Var BasicGraph<T>::constant(TensorT value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var BasicGraph<T>::input(TensorT value, bool requires_grad) {
  Node n;
  n.op = "input";
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var BasicGraph<T>::param(ParameterT& p) {
  Node n;
  n.op = "param:" + p.name;
  n.value = p.value;
  n.needs_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var BasicGraph<T>::add(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require_same(av, bv, "add");
  TensorT out = av;
  axpy(out, bv);
  return push("add", std::move(out), {a.id, b.id}, [a, b](BasicGraph& g, int self) {
    const auto& gy = g.nodes_[self].grad;
    if (g.wants(a.id)) axpy(g.grad_buf(a.id), gy);
    if (g.wants(b.id)) axpy(g.grad_buf(b.id), gy);
  });
}

template <typename T>
Var BasicGraph<T>::sub(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require_same(av, bv, "sub");
  TensorT out = av;
  axpy(out, bv, T(-1));
  return push("sub", std::move(out), {a.id, b.id}, [a, b](BasicGraph& g, int self) {
    const auto& gy = g.nodes_[self].grad;
    if (g.wants(a.id)) axpy(g.grad_buf(a.id), gy);
    if (g.wants(b.id)) axpy(g.grad_buf(b.id), gy, T(-1));
  });
}

template <typename T>
Var BasicGraph<T>::mul(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require_same(av, bv, "mul");
  TensorT out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return push("mul", std::move(out), {a.id, b.id}, [a, b](BasicGraph& g, int self) {
    const auto& gy = g.nodes_[self].grad;
    const auto& av = g.nodes_[a.id].value;
    const auto& bv = g.nodes_[b.id].value;
    if (g.wants(a.id)) {
      auto& ga = g.grad_buf(a.id);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (g.wants(b.id)) {
      auto& gb = g.grad_buf(b.id);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

template <typename T>
Var BasicGraph<T>::scale(Var a, T s) {
  TensorT out = value(a);
  for (auto& x : out.vec()) x *= s;
  return push("scale", std::move(out), {a.id}, [a, s](BasicGraph& g, int self) {
    axpy(g.grad_buf(a.id), g.nodes_[self].grad, s);
  });
}

template <typename T>
Var BasicGraph<T>::add_row(Var a, Var bias) {
  const auto& av = value(a);
  const auto& bv = value(bias);
  require_rank2(av, "add_row");
  const std::size_t r = av.rows(), c = av.cols();
  require(bv.size() == c, "add_row: bias " + shape_str(bv.shape()) + " vs input " + shape_str(av.shape()));
  TensorT out = av;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  return push("add_row", std::move(out), {a.id, bias.id}, [a, bias, r, c](BasicGraph& g, int self) {
    const auto& gy = g.nodes_[self].grad;
    if (g.wants(a.id)) axpy(g.grad_buf(a.id), gy);
    if (g.wants(bias.id)) {
      auto& gb = g.grad_buf(bias.id);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += gy[i * c + j];
    }
  });
}

template <typename T>
Var BasicGraph<T>::add_col(Var a, Var bias) {
  const auto& av = value(a);
  const auto& bv = value(bias);
  require_rank2(av, "add_col");
  const std::size_t r = av.rows(), c = av.cols();
  require(bv.size() == r, "add_col: bias " + shape_str(bv.shape()) + " vs input " + shape_str(av.shape()));
  TensorT out = av;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[i];
  return push("add_col", std::move(out), {a.id, bias.id}, [a, bias, r, c](BasicGraph& g, int self) {
    const auto& gy = g.nodes_[self].grad;
    if (g.wants(a.id)) axpy(g.grad_buf(a.id), gy);
    if (g.wants(bias.id)) {
      auto& gb = g.grad_buf(bias.id);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[i] += gy[i * c + j];
    }
  });
}

template <typename T>
Var BasicGraph<T>::matmul(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows(),
          "matmul: incompatible shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  TensorT out({m, n});
  as_mat(out, m, n).noalias() = as_mat(av, m, k) * as_mat(bv, k, n);
  return push("matmul", std::move(out), {a.id, b.id}, [a, b, m, k, n](BasicGraph& g, int self) {
    const auto gy = as_mat(std::as_const(g.nodes_[self].grad), m, n);
    if (g.wants(a.id)) {
      as_mat(g.grad_buf(a.id), m, k).noalias() += gy * as_mat(std::as_const(g.nodes_[b.id].value), k, n).transpose();
    }
    if (g.wants(b.id)) {
      as_mat(g.grad_buf(b.id), k, n).noalias() += as_mat(std::as_const(g.nodes_[a.id].value), m, k).transpose() * gy;
    }
  });
}

template <typename T>
Var BasicGraph<T>::matmul_nt(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.cols(),
          "matmul_nt: incompatible shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  TensorT out({m, n});
  as_mat(out, m, n).noalias() = as_mat(av, m, k) * as_mat(bv, n, k).transpose();
  return push("matmul_nt", std::move(out), {a.id, b.id}, [a, b, m, k, n](BasicGraph& g, int self) {
    const auto gy = as_mat(std::as_const(g.nodes_[self].grad), m, n);
    if (g.wants(a.id)) {
      as_mat(g.grad_buf(a.id), m, k).noalias() += gy * as_mat(std::as_const(g.nodes_[b.id].value), n, k);
    }
    if (g.wants(b.id)) {
      as_mat(g.grad_buf(b.id), n, k).noalias() += gy.transpose() * as_mat(std::as_const(g.nodes_[a.id].value), m, k);
    }
  });
}

template <typename T>
Var BasicGraph<T>::transpose(Var a) {
  const auto& av = value(a);
  require_rank2(av, "transpose");
  const std::size_t r = av.rows(), c = av.cols();
  TensorT out({c, r});
  as_mat(out, c, r) = as_mat(av, r, c).transpose();
  return push("transpose", std::move(out), {a.id}, [a, r, c](BasicGraph& g, int self) {
    as_mat(g.grad_buf(a.id), r, c) += as_mat(std::as_const(g.nodes_[self].grad), c, r).transpose();
  });
}

template <typename T>
Var BasicGraph<T>::relu(Var a) {
  TensorT out = value(a);
  for (auto& x : out.vec()) x = x > T(0) ? x : T(0);
  return push("relu", std::move(out), {a.id}, [a](BasicGraph& g, int self) {
    const auto& gy = g.nodes_[self].grad;
    const auto& y = g.nodes_[self].value;
    auto& ga = g.grad_buf(a.id);
    for (std::size_t i = 0; i < gy.size(); ++i)
      if (y[i] > T(0)) ga[i] += gy[i];
  });
}

template <typename T>
Var BasicGraph<T>::tanh(Var a) {
  TensorT out = value(a);
  for (auto& x : out.vec()) x = std::tanh(x);
  return push("tanh", std::move(out), {a.id}, [a](BasicGraph& g, int self) {
    const auto& gy = g.nodes_[self].grad;
    const auto& y = g.nodes_[self].value;
    auto& ga = g.grad_buf(a.id);
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * (T(1) - y[i] * y[i]);
  });
}

template <typename T>
Var BasicGraph<T>::layer_norm(Var x, Var gamma, Var beta, T eps) {
  const auto& xv = value(x);
  require_rank2(xv, "layer_norm");
  const std::size_t r = xv.rows(), c = xv.cols();
  require(value(gamma).size() == c && value(beta).size() == c,
          "layer_norm: gain/bias size must equal " + std::to_string(c));
  const auto& gv = value(gamma);
  const auto& bv = value(beta);
  TensorT out({r, c});
  TensorT xhat({r, c});
  std::vector<T> rstd(r);
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xv[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = xv[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    rstd[i] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    for (std::size_t j = 0; j < c; ++j) {
      const T h = static_cast<T>((xv[i * c + j] - mu)) * rstd[i];
      xhat[i * c + j] = h;
      out[i * c + j] = h * gv[j] + bv[j];
    }
  }
  return push("layer_norm", std::move(out), {x.id, gamma.id, beta.id},
              [x, gamma, beta, r, c, xhat = std::move(xhat), rstd = std::move(rstd)](BasicGraph& g, int self) {
                const auto& gy = g.nodes_[self].grad;
                const auto& gv = g.nodes_[gamma.id].value;
                if (g.wants(gamma.id)) {
                  auto& gg = g.grad_buf(gamma.id);
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gg[j] += gy[i * c + j] * xhat[i * c + j];
                }
                if (g.wants(beta.id)) {
                  auto& gb = g.grad_buf(beta.id);
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gb[j] += gy[i * c + j];
                }
                if (g.wants(x.id)) {
                  auto& gx = g.grad_buf(x.id);
                  std::vector<T> dh(c);
                  for (std::size_t i = 0; i < r; ++i) {
                    T m1 = 0, m2 = 0;
                    for (std::size_t j = 0; j < c; ++j) {
                      dh[j] = gy[i * c + j] * gv[j];
                      m1 += dh[j];
                      m2 += dh[j] * xhat[i * c + j];
                    }
                    m1 /= static_cast<T>(c);
                    m2 /= static_cast<T>(c);
                    for (std::size_t j = 0; j < c; ++j)
                      gx[i * c + j] += rstd[i] * (dh[j] - m1 - xhat[i * c + j] * m2);
                  }
                }
              });
}

template <typename T>
Var BasicGraph<T>::softmax(Var x) {
  const auto& xv = value(x);
  const std::size_t r = xv.rows(), c = xv.cols();
  TensorT out(xv.shape());
  for (std::size_t i = 0; i < r; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, xv[i * c + j]);
    T s = 0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(xv[i * c + j] - mx);
      s += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= s;
  }
  return push("softmax", std::move(out), {x.id}, [x, r, c](BasicGraph& g, int self) {
    const auto& gy = g.nodes_[self].grad;
    const auto& y = g.nodes_[self].value;
    auto& gx = g.grad_buf(x.id);
    for (std::size_t i = 0; i < r; ++i) {
      T dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += gy[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += y[i * c + j] * (gy[i * c + j] - dot);
    }
  });
}

template <typename T>
Var BasicGraph<T>::embedding(Var table, std::span<const int> ids) {
  const auto& tv = value(table);
  require_rank2(tv, "embedding");
  const std::size_t vocab = tv.rows(), d = tv.cols();
  std::vector<int> idx(ids.begin(), ids.end());
  TensorT out({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab) {
      throw RangeError("embedding: index " + std::to_string(idx[i]) + " outside [0, " + std::to_string(vocab) + ")");
    }
    std::copy_n(tv.ptr() + idx[i] * d, d, out.ptr() + i * d);
  }
  return push("embedding", std::move(out), {table.id}, [table, d, idx = std::move(idx)](BasicGraph& g, int self) {
    const auto& gy = g.nodes_[self].grad;
    auto& gt = g.grad_buf(table.id);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[idx[i] * d + j] += gy[i * d + j];
  });
}

template <typename T>
Var BasicGraph<T>::l2_normalize_rows(Var x, T eps) {
  const auto& xv = value(x);
  const std::size_t r = xv.rows(), c = xv.cols();
  TensorT out(xv.shape());
  std::vector<T> norms(r);
  for (std::size_t i = 0; i < r; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < c; ++j) s += xv[i * c + j] * xv[i * c + j];
    norms[i] = std::sqrt(s + eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] / norms[i];
  }
  return push("l2_normalize_rows", std::move(out), {x.id},
              [x, r, c, norms = std::move(norms)](BasicGraph& g, int self) {
                const auto& gy = g.nodes_[self].grad;
                const auto& y = g.nodes_[self].value;
                auto& gx = g.grad_buf(x.id);
                for (std::size_t i = 0; i < r; ++i) {
                  T dot = 0;
                  for (std::size_t j = 0; j < c; ++j) dot += y[i * c + j] * gy[i * c + j];
                  for (std::size_t j = 0; j < c; ++j)
                    gx[i * c + j] += (gy[i * c + j] - y[i * c + j] * dot) / norms[i];
                }
              });
}

template <typename T>
Var BasicGraph<T>::mean_rows(Var x) {
  const auto& xv = value(x);
  const std::size_t r = xv.rows(), c = xv.cols();
  TensorT out({1, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += xv[i * c + j];
  for (auto& v : out.vec()) v /= static_cast<T>(r);
  return push("mean_rows", std::move(out), {x.id}, [x, r, c](BasicGraph& g, int self) {
    const auto& gy = g.nodes_[self].grad;
    auto& gx = g.grad_buf(x.id);
    const T inv = T(1) / static_cast<T>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[j] * inv;
  });
}

template <typename T>
Var BasicGraph<T>::conv1d(Var x, Var w, int stride, int pad) {
  const auto& xv = value(x);
  const auto& wv = value(w);
  require_rank2(xv, "conv1d");
  require(wv.rank() == 3, "conv1d: kernels must be rank 3 [C_out×C_in×w], got " + shape_str(wv.shape()));
  if (stride < 1 || pad < 0) throw ContractError("conv1d: stride must be >= 1 and pad >= 0");
  const std::size_t cin = xv.rows(), n = xv.cols();
  const std::size_t cout = wv.dim(0), k = wv.dim(2);
  require(wv.dim(1) == cin, "conv1d: kernel input channels " + shape_str(wv.shape()) + " vs input " +
                                shape_str(xv.shape()));
  const std::size_t padded = n + 2 * static_cast<std::size_t>(pad);
  require(k <= padded, "conv1d: kernel width " + std::to_string(k) + " exceeds padded input length " +
                           std::to_string(padded));
  const std::size_t nout = (padded - k) / static_cast<std::size_t>(stride) + 1;
  const std::size_t rows = cin * k;
  TensorT col({rows, nout});
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t kk = 0; kk < k; ++kk)
      for (std::size_t t = 0; t < nout; ++t) {
        const long src = static_cast<long>(t) * stride + static_cast<long>(kk) - pad;
        if (src >= 0 && src < static_cast<long>(n)) col[(ci * k + kk) * nout + t] = xv[ci * n + src];
      }
  TensorT out({cout, nout});
  as_mat(out, cout, nout).noalias() = as_mat(wv, cout, rows) * as_mat(std::as_const(col), rows, nout);
  return push("conv1d", std::move(out), {x.id, w.id},
              [x, w, stride, pad, cin, n, cout, k, nout, rows, col = std::move(col)](BasicGraph& g, int self) {
                const auto gy = as_mat(std::as_const(g.nodes_[self].grad), cout, nout);
                if (g.wants(w.id)) {
                  as_mat(g.grad_buf(w.id), cout, rows).noalias() += gy * as_mat(col, rows, nout).transpose();
                }
                if (g.wants(x.id)) {
                  RowMat<T> dcol = as_mat(std::as_const(g.nodes_[w.id].value), cout, rows).transpose() * gy;
                  auto& gx = g.grad_buf(x.id);
                  for (std::size_t ci = 0; ci < cin; ++ci)
                    for (std::size_t kk = 0; kk < k; ++kk)
                      for (std::size_t t = 0; t < nout; ++t) {
                        const long src = static_cast<long>(t) * stride + static_cast<long>(kk) - pad;
                        if (src >= 0 && src < static_cast<long>(n))
                          gx[ci * n + src] += dcol(static_cast<Eigen::Index>(ci * k + kk), static_cast<Eigen::Index>(t));
                      }
                }
              });
}

template <typename T>
Var BasicGraph<T>::upsample_nearest(Var x, int factor) {
  if (factor < 1) throw ContractError("upsample_nearest: factor must be >= 1");
  const auto& xv = value(x);
  require_rank2(xv, "upsample_nearest");
  const std::size_t c = xv.rows(), n = xv.cols(), f = static_cast<std::size_t>(factor);
  TensorT out({c, n * f});
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t t = 0; t < n * f; ++t) out[i * n * f + t] = xv[i * n + t / f];
  return push("upsample_nearest", std::move(out), {x.id}, [x, c, n, f](BasicGraph& g, int self) {
    const auto& gy = g.nodes_[self].grad;
    auto& gx = g.grad_buf(x.id);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t t = 0; t < n * f; ++t) gx[i * n + t / f] += gy[i * n * f + t];
  });
}

template <typename T>
Var BasicGraph<T>::slice_cols(Var x, std::size_t begin, std::size_t end) {
  const auto& xv = value(x);
  require_rank2(xv, "slice_cols");
  const std::size_t r = xv.rows(), c = xv.cols();
  require(begin <= end && end <= c, "slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                        ") outside " + shape_str(xv.shape()));
  const std::size_t w = end - begin;
  TensorT out({r, w});
  for (std::size_t i = 0; i < r; ++i) std::copy_n(xv.ptr() + i * c + begin, w, out.ptr() + i * w);
  return push("slice_cols", std::move(out), {x.id}, [x, r, c, begin, w](BasicGraph& g, int self) {
    const auto& gy = g.nodes_[self].grad;
    auto& gx = g.grad_buf(x.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * c + begin + j] += gy[i * w + j];
  });
}

template <typename T>
Var BasicGraph<T>::sum(Var a) {
  const auto& av = value(a);
  T s = 0;
  for (T v : av.data()) s += v;
  return push("sum", TensorT::scalar(s), {a.id}, [a](BasicGraph& g, int self) {
    const T gy = g.nodes_[self].grad[0];
    for (auto& v : g.grad_buf(a.id).vec()) v += gy;
  });
}

template <typename T>
Var BasicGraph<T>::mean(Var a) {
  const auto& av = value(a);
  T s = 0;
  for (T v : av.data()) s += v;
  const T n = static_cast<T>(av.size());
  return push("mean", TensorT::scalar(s / n), {a.id}, [a, n](BasicGraph& g, int self) {
    const T gy = g.nodes_[self].grad[0] / n;
    for (auto& v : g.grad_buf(a.id).vec()) v += gy;
  });
}

template <typename T>
Var BasicGraph<T>::sum_squares(Var a) {
  const auto& av = value(a);
  T s = 0;
  for (T v : av.data()) s += v * v;
  return push("sum_squares", TensorT::scalar(s), {a.id}, [a](BasicGraph& g, int self) {
    const T gy = g.nodes_[self].grad[0];
    const auto& av = g.nodes_[a.id].value;
    auto& ga = g.grad_buf(a.id);
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] += T(2) * av[i] * gy;
  });
}

template <typename T>
Var BasicGraph<T>::cross_entropy(Var logits, std::span<const int> targets, Reduction red) {
  const auto& lv = value(logits);
  require_rank2(lv, "cross_entropy");
  const std::size_t r = lv.rows(), c = lv.cols();
  require(targets.size() == r, "cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                                   std::to_string(r) + " logit rows");
  std::vector<int> tgt(targets.begin(), targets.end());
  TensorT probs({r, c});
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (tgt[i] < 0 || static_cast<std::size_t>(tgt[i]) >= c) {
      throw RangeError("cross_entropy: target " + std::to_string(tgt[i]) + " outside [0, " + std::to_string(c) + ")");
    }
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, lv[i * c + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const T e = std::exp(lv[i * c + j] - mx);
      probs[i * c + j] = e;
      s += e;
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = static_cast<T>(probs[i * c + j] / s);
    total += (static_cast<double>(mx) + std::log(s)) - static_cast<double>(lv[i * c + tgt[i]]);
  }
  const T denom = red == Reduction::Mean ? static_cast<T>(r) : T(1);
  const T value_out = static_cast<T>(total / static_cast<double>(denom));
  return push("cross_entropy", TensorT::scalar(value_out), {logits.id},
              [logits, r, c, denom, tgt = std::move(tgt), probs = std::move(probs)](BasicGraph& g, int self) {
                const T gy = g.nodes_[self].grad[0] / denom;
                auto& gl = g.grad_buf(logits.id);
                for (std::size_t i = 0; i < r; ++i) {
                  for (std::size_t j = 0; j < c; ++j) gl[i * c + j] += gy * probs[i * c + j];
                  gl[i * c + tgt[i]] -= gy;
                }
              });
}

template <typename T>
Var BasicGraph<T>::stop_gradient(Var a) {
  Node n;
  n.op = "stop_gradient";
  n.value = value(a);
  n.inputs = {a.id};
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var BasicGraph<T>::straight_through(Var quantized, Var latent) {
  const auto& qv = value(quantized);
  require_same(qv, value(latent), "straight_through");
  return push("straight_through", qv, {latent.id}, [latent](BasicGraph& g, int self) {
    axpy(g.grad_buf(latent.id), g.nodes_[self].grad);
  });
}

template <typename T>
Var BasicGraph<T>::attention(Var q, Var k, Var v, int heads, bool causal, std::span<const std::uint8_t> key_mask) {
  const auto& qv = value(q);
  const auto& kv = value(k);
  const auto& vv = value(v);
  require_rank2(qv, "attention");
  require(kv.rank() == 2 && vv.rank() == 2 && kv.shape() == vv.shape() && kv.cols() == qv.cols(),
          "attention: q " + shape_str(qv.shape()) + ", k " + shape_str(kv.shape()) + ", v " + shape_str(vv.shape()));
  const std::size_t lq = qv.rows(), lk = kv.rows(), d = qv.cols();
  if (heads < 1 || d % static_cast<std::size_t>(heads) != 0) {
    throw ContractError("attention: model dim " + std::to_string(d) + " not divisible by heads " + std::to_string(heads));
  }
  if (!key_mask.empty() && key_mask.size() != lk) {
    throw DimensionError("attention: key mask length " + std::to_string(key_mask.size()) + " vs keys " + std::to_string(lk));
  }
  const std::size_t h = static_cast<std::size_t>(heads), dh = d / h;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  auto Q = as_mat(qv, lq, d);
  auto K = as_mat(kv, lk, d);
  auto V = as_mat(vv, lk, d);
  TensorT out({lq, d});
  auto O = as_mat(out, lq, d);
  std::vector<RowMat<T>> probs(h);
  for (std::size_t hh = 0; hh < h; ++hh) {
    const auto off = static_cast<Eigen::Index>(hh * dh);
    const auto w = static_cast<Eigen::Index>(dh);
    RowMat<T> s = (Q.middleCols(off, w) * K.middleCols(off, w).transpose()) * scale;
    for (std::size_t i = 0; i < lq; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < lk; ++j) {
        const bool visible = (!causal || j <= i) && (key_mask.empty() || key_mask[j] != 0);
        if (!visible) s(i, j) = -std::numeric_limits<T>::infinity();
        else mx = std::max(mx, s(i, j));
      }
      if (mx == -std::numeric_limits<T>::infinity()) {
        s.row(i).setZero();
        continue;
      }
      T total = 0;
      for (std::size_t j = 0; j < lk; ++j) {
        const T e = s(i, j) == -std::numeric_limits<T>::infinity() ? T(0) : std::exp(s(i, j) - mx);
        s(i, j) = e;
        total += e;
      }
      s.row(i) /= total;
    }
    O.middleCols(off, w).noalias() = s * V.middleCols(off, w);
    probs[hh] = std::move(s);
  }
  return push("attention", std::move(out), {q.id, k.id, v.id},
              [q, k, v, lq, lk, d, h, dh, scale, probs = std::move(probs)](BasicGraph& g, int self) {
                auto gO = as_mat(std::as_const(g.nodes_[self].grad), lq, d);
                auto Q = as_mat(std::as_const(g.nodes_[q.id].value), lq, d);
                auto K = as_mat(std::as_const(g.nodes_[k.id].value), lk, d);
                auto V = as_mat(std::as_const(g.nodes_[v.id].value), lk, d);
                const bool wq = g.wants(q.id), wk = g.wants(k.id), wv = g.wants(v.id);
                for (std::size_t hh = 0; hh < h; ++hh) {
                  const auto off = static_cast<Eigen::Index>(hh * dh);
                  const auto w = static_cast<Eigen::Index>(dh);
                  const RowMat<T>& p = probs[hh];
                  auto gOh = gO.middleCols(off, w);
                  if (wv) as_mat(g.grad_buf(v.id), lk, d).middleCols(off, w).noalias() += p.transpose() * gOh;
                  if (!wq && !wk) continue;
                  RowMat<T> dp = gOh * V.middleCols(off, w).transpose();
                  for (Eigen::Index i = 0; i < dp.rows(); ++i) {
                    const T dot = (dp.row(i).array() * p.row(i).array()).sum();
                    dp.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
                  }
                  if (wq) as_mat(g.grad_buf(q.id), lq, d).middleCols(off, w).noalias() += (dp * K.middleCols(off, w)) * scale;
                  if (wk) as_mat(g.grad_buf(k.id), lk, d).middleCols(off, w).noalias() += (dp.transpose() * Q.middleCols(off, w)) * scale;
                }
              });
}

template <typename T>
void BasicGraph<T>::backward(Var loss) {
  Node& ln = nodes_.at(loss.id);
  if (ln.value.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(ln.value.shape()));
  }
  for (auto& n : nodes_) n.grad = TensorT();
  if (!ln.needs_grad) return;
  grad_buf(loss.id)[0] = T(1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
  for (auto& n : nodes_) {
    if (n.param == nullptr || n.grad.empty()) continue;
    if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
    axpy(n.param->grad, n.grad);
  }
}

template class BasicGraph<float>;
template class BasicGraph<double>;

}  // namespace partstyle
