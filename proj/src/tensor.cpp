#include "gram/tensor.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "gram/kernels.hpp"

namespace gram::num {
namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Tensor& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

void check_scalar(const TensorPtr& t, const char* what) {
  if (t->size() != 1) {
    throw ContractError(std::string(what) + ": expected scalar, got " + shape_str(*t));
  }
}

}  // namespace

TensorPtr make_tensor(std::vector<std::size_t> shape, bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data.assign(shape_product(t->shape), 0.0);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> data,
                      bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  if (shape_product(t->shape) != data.size()) {
    throw DimensionError("make_tensor: data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(*t));
  }
  t->data = std::move(data);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr make_scalar(double v, bool requires_grad) {
  return make_tensor({1}, {v}, requires_grad);
}

TensorPtr Graph::matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(*a) + " x " +
                         shape_str(*b));
  }
  const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
  auto out = make_tensor({m, n});
  out->requires_grad = a->requires_grad || b->requires_grad;
  kernels::matmul_nn(a->data.data(), b->data.data(), out->data.data(), m, k, n);
  if (out->requires_grad) {
    record(out, [a, b, out, m, k, n] {
      if (a->requires_grad) {
        a->ensure_grad();
        kernels::matmul_nt(out->grad.data(), b->data.data(), a->grad.data(), m, n, k);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        kernels::matmul_tn(a->data.data(), out->grad.data(), b->grad.data(), k, m, n);
      }
    });
  }
  return out;
}

TensorPtr Graph::add(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape) {
    throw DimensionError("add: shape mismatch " + shape_str(*a) + " vs " + shape_str(*b));
  }
  auto out = make_tensor(a->shape);
  out->requires_grad = a->requires_grad || b->requires_grad;
  kernels::add(a->data.data(), b->data.data(), out->data.data(), out->size());
  if (out->requires_grad) {
    record(out, [a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        kernels::axpy(1.0, out->grad.data(), a->grad.data(), out->size());
      }
      if (b->requires_grad) {
        b->ensure_grad();
        kernels::axpy(1.0, out->grad.data(), b->grad.data(), out->size());
      }
    });
  }
  return out;
}

TensorPtr Graph::add_bias(const TensorPtr& x, const TensorPtr& b) {
  if (x->shape.size() != 2 || b->shape.size() != 1 || b->shape[0] != x->shape[1]) {
    throw DimensionError("add_bias: " + shape_str(*x) + " + " + shape_str(*b));
  }
  const std::size_t m = x->shape[0], n = x->shape[1];
  auto out = make_tensor({m, n});
  out->requires_grad = x->requires_grad || b->requires_grad;
  for (std::size_t i = 0; i < m; ++i) {
    kernels::add(x->data.data() + i * n, b->data.data(), out->data.data() + i * n, n);
  }
  if (out->requires_grad) {
    record(out, [x, b, out, m, n] {
      if (x->requires_grad) {
        x->ensure_grad();
        kernels::axpy(1.0, out->grad.data(), x->grad.data(), m * n);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          kernels::axpy(1.0, out->grad.data() + i * n, b->grad.data(), n);
        }
      }
    });
  }
  return out;
}

TensorPtr Graph::scale(const TensorPtr& a, double s) {
  auto out = make_tensor(a->shape);
  out->requires_grad = a->requires_grad;
  out->data = a->data;
  kernels::scale(s, out->data.data(), out->size());
  if (out->requires_grad) {
    record(out, [a, out, s] {
      a->ensure_grad();
      kernels::axpy(s, out->grad.data(), a->grad.data(), out->size());
    });
  }
  return out;
}

TensorPtr Graph::softmax_logprob(const TensorPtr& a, std::size_t axis) {
  const bool is1d = a->shape.size() == 1;
  if (is1d ? axis != 0 : (a->shape.size() != 2 || axis != 1)) {
    throw DimensionError("softmax_logprob: invalid axis " + std::to_string(axis) +
                         " for shape " + shape_str(*a));
  }
  const std::size_t m = is1d ? 1 : a->shape[0];
  const std::size_t n = is1d ? a->shape[0] : a->shape[1];
  if (n == 0) throw DimensionError("softmax_logprob: empty axis");
  auto out = make_tensor(a->shape);
  out->requires_grad = a->requires_grad;
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = a->data.data() + i * n;
    double* yr = out->data.data() + i * n;
    double mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(xr[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) yr[j] = xr[j] - lz;
  }
  if (out->requires_grad) {
    record(out, [a, out, m, n] {
      a->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double* gr = out->grad.data() + i * n;
        const double* yr = out->data.data() + i * n;
        double gs = 0.0;
        for (std::size_t j = 0; j < n; ++j) gs += gr[j];
        double* ar = a->grad.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) ar[j] += gr[j] - std::exp(yr[j]) * gs;
      }
    });
  }
  return out;
}

TensorPtr Graph::rmsnorm(const TensorPtr& x, const TensorPtr& gain) {
  if (x->shape.size() != 2 || gain->shape.size() != 1 || gain->shape[0] != x->shape[1]) {
    throw DimensionError("rmsnorm: " + shape_str(*x) + " with gain " + shape_str(*gain));
  }
  constexpr double kEps = 1e-8;
  const std::size_t m = x->shape[0], n = x->shape[1];
  auto out = make_tensor({m, n});
  out->requires_grad = x->requires_grad || gain->requires_grad;
  auto inv_rms = std::make_shared<std::vector<double>>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = x->data.data() + i * n;
    double ms = kernels::dot(xr, xr, n) / static_cast<double>(n);
    const double ir = 1.0 / std::sqrt(ms + kEps);
    (*inv_rms)[i] = ir;
    double* yr = out->data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) yr[j] = xr[j] * ir * gain->data[j];
  }
  if (out->requires_grad) {
    record(out, [x, gain, out, inv_rms, m, n] {
      if (gain->requires_grad) gain->ensure_grad();
      if (x->requires_grad) x->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double* xr = x->data.data() + i * n;
        const double* gr = out->grad.data() + i * n;
        const double ir = (*inv_rms)[i];
        if (gain->requires_grad) {
          for (std::size_t j = 0; j < n; ++j) gain->grad[j] += gr[j] * xr[j] * ir;
        }
        if (x->requires_grad) {
          // d/dx of x*ir(x)*g, ir = (mean(x^2)+eps)^{-1/2}
          double dot_gx = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot_gx += gr[j] * gain->data[j] * xr[j];
          const double c = dot_gx * ir * ir * ir / static_cast<double>(n);
          double* dxr = x->grad.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) {
            dxr[j] += gr[j] * gain->data[j] * ir - c * xr[j];
          }
        }
      }
    });
  }
  return out;
}

TensorPtr Graph::gelu(const TensorPtr& x) {
  auto out = make_tensor(x->shape);
  out->requires_grad = x->requires_grad;
  const std::size_t n = x->size();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x->data[i];
    out->data[i] = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  }
  if (out->requires_grad) {
    record(out, [x, out, n] {
      x->ensure_grad();
      constexpr double kInvSqrt2Pi = 0.3989422804014327;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = x->data[i];
        const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        x->grad[i] += out->grad[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

TensorPtr Graph::softplus(const TensorPtr& x) {
  auto out = make_tensor(x->shape);
  out->requires_grad = x->requires_grad;
  const std::size_t n = x->size();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x->data[i];
    out->data[i] = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  if (out->requires_grad) {
    record(out, [x, out, n] {
      x->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        x->grad[i] += out->grad[i] / (1.0 + std::exp(-x->data[i]));
      }
    });
  }
  return out;
}

TensorPtr Graph::gather_rows(const TensorPtr& table, const std::vector<int>& ids) {
  if (table->shape.size() != 2) {
    throw DimensionError("gather_rows: table must be 2-D, got " + shape_str(*table));
  }
  const std::size_t n = table->shape[1];
  auto out = make_tensor({ids.size(), n});
  out->requires_grad = table->requires_grad;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= table->shape[0]) {
      throw DimensionError("gather_rows: row " + std::to_string(id) + " out of range");
    }
    std::copy_n(table->data.data() + static_cast<std::size_t>(id) * n, n,
                out->data.data() + i * n);
  }
  if (out->requires_grad) {
    auto idx = std::make_shared<std::vector<int>>(ids);
    record(out, [table, out, idx, n] {
      table->ensure_grad();
      for (std::size_t i = 0; i < idx->size(); ++i) {
        kernels::axpy(1.0, out->grad.data() + i * n,
                      table->grad.data() + static_cast<std::size_t>((*idx)[i]) * n, n);
      }
    });
  }
  return out;
}

TensorPtr Graph::row(const TensorPtr& x, std::size_t r) {
  if (x->shape.size() != 2 || r >= x->shape[0]) {
    throw DimensionError("row: index " + std::to_string(r) + " for " + shape_str(*x));
  }
  const std::size_t n = x->shape[1];
  auto out = make_tensor({n});
  out->requires_grad = x->requires_grad;
  std::copy_n(x->data.data() + r * n, n, out->data.data());
  if (out->requires_grad) {
    record(out, [x, out, r, n] {
      x->ensure_grad();
      kernels::axpy(1.0, out->grad.data(), x->grad.data() + r * n, n);
    });
  }
  return out;
}

TensorPtr Graph::gather(const TensorPtr& x, const std::vector<std::size_t>& idx) {
  auto out = make_tensor({idx.size()});
  out->requires_grad = x->requires_grad;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x->size()) {
      throw DimensionError("gather: flat index out of range");
    }
    out->data[i] = x->data[idx[i]];
  }
  if (out->requires_grad) {
    auto ix = std::make_shared<std::vector<std::size_t>>(idx);
    record(out, [x, out, ix] {
      x->ensure_grad();
      for (std::size_t i = 0; i < ix->size(); ++i) {
        x->grad[(*ix)[i]] += out->grad[i];
      }
    });
  }
  return out;
}

TensorPtr Graph::dotv(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 1 || b->shape != a->shape) {
    throw DimensionError("dotv: " + shape_str(*a) + " . " + shape_str(*b));
  }
  auto out = make_scalar(kernels::dot(a->data.data(), b->data.data(), a->size()));
  out->requires_grad = a->requires_grad || b->requires_grad;
  if (out->requires_grad) {
    record(out, [a, b, out] {
      const double g = out->grad[0];
      if (a->requires_grad) {
        a->ensure_grad();
        kernels::axpy(g, b->data.data(), a->grad.data(), a->size());
      }
      if (b->requires_grad) {
        b->ensure_grad();
        kernels::axpy(g, a->data.data(), b->grad.data(), b->size());
      }
    });
  }
  return out;
}

TensorPtr Graph::weighted_sum(const TensorPtr& x, std::vector<double> w) {
  if (x->shape.size() != 1 || w.size() != x->size()) {
    throw DimensionError("weighted_sum: weight length mismatch");
  }
  auto out = make_scalar(kernels::dot(x->data.data(), w.data(), w.size()));
  out->requires_grad = x->requires_grad;
  if (out->requires_grad) {
    auto wp = std::make_shared<std::vector<double>>(std::move(w));
    record(out, [x, out, wp] {
      x->ensure_grad();
      kernels::axpy(out->grad[0], wp->data(), x->grad.data(), wp->size());
    });
  }
  return out;
}

TensorPtr Graph::pick_nll(const TensorPtr& logp, const std::vector<std::size_t>& pos,
                          const std::vector<int>& tgt, const std::vector<double>& w) {
  if (logp->shape.size() != 2) {
    throw DimensionError("pick_nll: expected 2-D log-probs");
  }
  if (pos.size() != tgt.size() || pos.size() != w.size()) {
    throw ContractError("pick_nll: positions/targets/weights lengths differ");
  }
  const std::size_t n = logp->shape[1];
  double s = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (pos[i] >= logp->shape[0] || tgt[i] < 0 || static_cast<std::size_t>(tgt[i]) >= n) {
      throw DimensionError("pick_nll: index out of range");
    }
    s -= w[i] * logp->data[pos[i] * n + static_cast<std::size_t>(tgt[i])];
  }
  auto out = make_scalar(s);
  out->requires_grad = logp->requires_grad;
  if (out->requires_grad) {
    auto ps = std::make_shared<std::vector<std::size_t>>(pos);
    auto ts = std::make_shared<std::vector<int>>(tgt);
    auto ws = std::make_shared<std::vector<double>>(w);
    record(out, [logp, out, ps, ts, ws, n] {
      logp->ensure_grad();
      const double g = out->grad[0];
      for (std::size_t i = 0; i < ps->size(); ++i) {
        logp->grad[(*ps)[i] * n + static_cast<std::size_t>((*ts)[i])] -= g * (*ws)[i];
      }
    });
  }
  return out;
}

TensorPtr Graph::causal_self_attention(const TensorPtr& q, const TensorPtr& k,
                                       const TensorPtr& v, std::size_t n_heads) {
  if (q->shape.size() != 2 || q->shape != k->shape || q->shape != v->shape) {
    throw DimensionError("attention: q/k/v shapes must match and be 2-D");
  }
  const std::size_t t = q->shape[0], d = q->shape[1];
  if (n_heads == 0 || d % n_heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) +
                         " not divisible by heads " + std::to_string(n_heads));
  }
  const std::size_t dh = d / n_heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  auto out = make_tensor({t, d});
  out->requires_grad = q->requires_grad || k->requires_grad || v->requires_grad;

  // Per-head softmax matrices kept for backward.
  auto probs = std::make_shared<std::vector<std::vector<double>>>(n_heads);

  std::vector<double> qh(t * dh), kh(t * dh), vh(t * dh), oh(t * dh);
  auto pack = [&](const Tensor& src, std::size_t h, std::vector<double>& dst) {
    for (std::size_t i = 0; i < t; ++i) {
      std::copy_n(src.data.data() + i * d + h * dh, dh, dst.data() + i * dh);
    }
  };

  for (std::size_t h = 0; h < n_heads; ++h) {
    pack(*q, h, qh);
    pack(*k, h, kh);
    pack(*v, h, vh);
    std::vector<double> p(t * t, 0.0);
    kernels::matmul_nt(qh.data(), kh.data(), p.data(), t, dh, t);
    for (std::size_t i = 0; i < t; ++i) {
      double* pr = p.data() + i * t;
      double mx = -1e300;
      for (std::size_t j = 0; j <= i; ++j) mx = std::max(mx, pr[j] * sc);
      double z = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        pr[j] = std::exp(pr[j] * sc - mx);
        z += pr[j];
      }
      const double iz = 1.0 / z;
      for (std::size_t j = 0; j <= i; ++j) pr[j] *= iz;
      for (std::size_t j = i + 1; j < t; ++j) pr[j] = 0.0;
    }
    std::fill(oh.begin(), oh.end(), 0.0);
    kernels::matmul_nn(p.data(), vh.data(), oh.data(), t, t, dh);
    for (std::size_t i = 0; i < t; ++i) {
      std::copy_n(oh.data() + i * dh, dh, out->data.data() + i * d + h * dh);
    }
    (*probs)[h] = std::move(p);
  }

  if (out->requires_grad) {
    record(out, [q, k, v, out, probs, t, d, dh, sc, n_heads] {
      q->ensure_grad();
      k->ensure_grad();
      v->ensure_grad();
      std::vector<double> qh(t * dh), kh(t * dh), vh(t * dh), goh(t * dh);
      std::vector<double> dvh(t * dh), dqh(t * dh), dkh(t * dh);
      std::vector<double> dp(t * t), ds(t * t);
      auto pack = [&](const Tensor& src, std::size_t h, std::vector<double>& dst) {
        for (std::size_t i = 0; i < t; ++i) {
          std::copy_n(src.data.data() + i * d + h * dh, dh, dst.data() + i * dh);
        }
      };
      auto pack_grad = [&](const Tensor& src, std::size_t h, std::vector<double>& dst) {
        for (std::size_t i = 0; i < t; ++i) {
          std::copy_n(src.grad.data() + i * d + h * dh, dh, dst.data() + i * dh);
        }
      };
      auto unpack_add = [&](const std::vector<double>& src, std::size_t h, Tensor& dst) {
        for (std::size_t i = 0; i < t; ++i) {
          kernels::axpy(1.0, src.data() + i * dh, dst.grad.data() + i * d + h * dh, dh);
        }
      };
      for (std::size_t h = 0; h < n_heads; ++h) {
        pack(*q, h, qh);
        pack(*k, h, kh);
        pack(*v, h, vh);
        pack_grad(*out, h, goh);
        const std::vector<double>& p = (*probs)[h];
        // dV = P^T dO
        std::fill(dvh.begin(), dvh.end(), 0.0);
        kernels::matmul_tn(p.data(), goh.data(), dvh.data(), t, t, dh);
        unpack_add(dvh, h, *v);
        // dP = dO V^T
        std::fill(dp.begin(), dp.end(), 0.0);
        kernels::matmul_nt(goh.data(), vh.data(), dp.data(), t, dh, t);
        // dS = P o (dP - rowsum(dP o P)), then scaled
        for (std::size_t i = 0; i < t; ++i) {
          const double* pr = p.data() + i * t;
          const double* dpr = dp.data() + i * t;
          double rs = kernels::dot(pr, dpr, i + 1);
          double* dsr = ds.data() + i * t;
          for (std::size_t j = 0; j <= i; ++j) dsr[j] = pr[j] * (dpr[j] - rs) * sc;
          for (std::size_t j = i + 1; j < t; ++j) dsr[j] = 0.0;
        }
        // dQ = dS K ; dK = dS^T Q
        std::fill(dqh.begin(), dqh.end(), 0.0);
        kernels::matmul_nn(ds.data(), kh.data(), dqh.data(), t, t, dh);
        unpack_add(dqh, h, *q);
        std::fill(dkh.begin(), dkh.end(), 0.0);
        kernels::matmul_tn(ds.data(), qh.data(), dkh.data(), t, t, dh);
        unpack_add(dkh, h, *k);
      }
    });
  }
  return out;
}

void Graph::backward(const TensorPtr& root) {
  check_scalar(root, "backward");
  if (!root->requires_grad) {
    throw ContractError("backward: root does not require grad");
  }
  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
}

}  // namespace gram::num
