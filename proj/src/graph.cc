#include "disent/graph.h"

#include <algorithm>
#include <cmath>

#include "disent/kernels.h"

namespace disent {

using kernels::mat;
using kernels::vec;

Graph::Graph(std::uint64_t seed, bool training, double dropout_rate)
    : seed_(seed), training_(training), dropout_rate_(dropout_rate) {
  nodes_.reserve(1024);
}

Graph::Var Graph::push(Tensor val, std::function<void(Graph&)> back) {
  Node n;
  n.grad = Tensor(val.shape);
  n.val = std::move(val);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size() - 1);
}

std::uint64_t Graph::mask_seed(Var node) const {
  return hash_combine(seed_, 0x6d61736bull + node);
}

Graph::Var Graph::input(Tensor t) { return push(std::move(t)); }

Graph::Var Graph::zeros(std::vector<std::size_t> shape) {
  return push(Tensor(std::move(shape)));
}

Graph::Var Graph::param(Parameter& p) {
  Var v = push(p.value);
  nodes_[v].parameter = &p;
  return v;
}

Graph::Var Graph::add(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("add: shape mismatch");
  Tensor out(ta.shape);
  vec(out) = vec(ta) + vec(tb);
  return push(std::move(out), [a, b](Graph& g) {
    Var self = static_cast<Var>(&g.nodes_.back() - g.nodes_.data());
    (void)self;
    return;
  });
}

Graph::Var Graph::sub(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("sub: shape mismatch");
  Tensor out(ta.shape);
  vec(out) = vec(ta) - vec(tb);
  Var v = push(std::move(out));
  nodes_[v].back = [a, b, v](Graph& g) {
    vec(g.grad_ref(a)) += vec(g.grad(v));
    vec(g.grad_ref(b)) -= vec(g.grad(v));
  };
  return v;
}

Graph::Var Graph::cmult(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("cmult: shape mismatch");
  Tensor out(ta.shape);
  vec(out) = vec(ta).cwiseProduct(vec(tb));
  Var v = push(std::move(out));
  nodes_[v].back = [a, b, v](Graph& g) {
    vec(g.grad_ref(a)) += vec(g.grad(v)).cwiseProduct(vec(g.value(b)));
    vec(g.grad_ref(b)) += vec(g.grad(v)).cwiseProduct(vec(g.value(a)));
  };
  return v;
}

Graph::Var Graph::scale(Var a, double s) {
  Tensor out(value(a).shape);
  vec(out) = vec(value(a)) * s;
  Var v = push(std::move(out));
  nodes_[v].back = [a, s, v](Graph& g) {
    vec(g.grad_ref(a)) += vec(g.grad(v)) * s;
  };
  return v;
}

Graph::Var Graph::tanh_op(Var a) {
  Tensor out(value(a).shape);
  vec(out) = vec(value(a)).array().tanh();
  Var v = push(std::move(out));
  nodes_[v].back = [a, v](Graph& g) {
    vec(g.grad_ref(a)).array() +=
        g.grad(v).v.empty()
            ? 0.0 * vec(g.grad(v)).array()
            : vec(g.grad(v)).array() * (1.0 - vec(g.value(v)).array().square());
  };
  return v;
}

Graph::Var Graph::sigmoid_op(Var a) {
  Tensor out(value(a).shape);
  vec(out) = 1.0 / (1.0 + (-vec(value(a)).array()).exp());
  Var v = push(std::move(out));
  nodes_[v].back = [a, v](Graph& g) {
    auto y = vec(g.value(v)).array();
    vec(g.grad_ref(a)).array() += vec(g.grad(v)).array() * y * (1.0 - y);
  };
  return v;
}

Graph::Var Graph::slice(Var a, std::size_t begin, std::size_t len) {
  const Tensor& ta = value(a);
  if (begin + len > ta.size()) throw std::invalid_argument("slice: out of range");
  Tensor out({len});
  std::copy_n(ta.v.data() + begin, len, out.v.data());
  Var v = push(std::move(out));
  nodes_[v].back = [a, begin, len, v](Graph& g) {
    const double* src = g.grad(v).v.data();
    double* dst = g.grad_ref(a).v.data() + begin;
    for (std::size_t k = 0; k < len; ++k) dst[k] += src[k];
  };
  return v;
}

Graph::Var Graph::concat(const std::vector<Var>& parts) {
  std::size_t total = 0;
  for (Var p : parts) total += value(p).size();
  Tensor out({total});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    std::copy(t.v.begin(), t.v.end(), out.v.begin() + off);
    off += t.size();
  }
  Var v = push(std::move(out));
  nodes_[v].back = [parts, v](Graph& g) {
    std::size_t off = 0;
    const double* src = g.grad(v).v.data();
    for (Var p : parts) {
      Tensor& gp = g.grad_ref(p);
      for (std::size_t k = 0; k < gp.size(); ++k) gp[k] += src[off + k];
      off += gp.size();
    }
  };
  return v;
}

Graph::Var Graph::row(Var m, std::size_t r) {
  const Tensor& tm = value(m);
  const std::size_t cols = tm.cols();
  if (r >= tm.rows()) throw std::invalid_argument("row: out of range");
  Tensor out({cols});
  std::copy_n(tm.v.data() + r * cols, cols, out.v.data());
  Var v = push(std::move(out));
  nodes_[v].back = [m, r, cols, v](Graph& g) {
    const double* src = g.grad(v).v.data();
    double* dst = g.grad_ref(m).v.data() + r * cols;
    for (std::size_t k = 0; k < cols; ++k) dst[k] += src[k];
  };
  return v;
}

Graph::Var Graph::stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty");
  const std::size_t cols = value(rows[0]).size();
  Tensor out({rows.size(), cols});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& t = value(rows[r]);
    if (t.size() != cols) throw std::invalid_argument("stack_rows: ragged");
    std::copy(t.v.begin(), t.v.end(), out.v.begin() + r * cols);
  }
  Var v = push(std::move(out));
  nodes_[v].back = [rows, cols, v](Graph& g) {
    const double* src = g.grad(v).v.data();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      double* dst = g.grad_ref(rows[r]).v.data();
      for (std::size_t k = 0; k < cols; ++k) dst[k] += src[r * cols + k];
    }
  };
  return v;
}

Graph::Var Graph::stack_scalars(const std::vector<Var>& xs) {
  Tensor out({xs.size()});
  for (std::size_t k = 0; k < xs.size(); ++k) out[k] = scalar(xs[k]);
  Var v = push(std::move(out));
  nodes_[v].back = [xs, v](Graph& g) {
    const double* src = g.grad(v).v.data();
    for (std::size_t k = 0; k < xs.size(); ++k) g.grad_ref(xs[k])[0] += src[k];
  };
  return v;
}

Graph::Var Graph::sum(const std::vector<Var>& scalars) {
  double s = 0.0;
  for (Var x : scalars) s += scalar(x);
  Var v = push(Tensor::scalar(s));
  nodes_[v].back = [scalars, v](Graph& g) {
    const double gy = g.grad(v)[0];
    for (Var x : scalars) g.grad_ref(x)[0] += gy;
  };
  return v;
}

Graph::Var Graph::matmul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.cols() != tb.rows()) throw std::invalid_argument("matmul: shapes");
  Tensor out({ta.rows(), tb.cols()});
  mat(out) = mat(ta) * mat(tb);
  Var v = push(std::move(out));
  nodes_[v].back = [a, b, v](Graph& g) {
    mat(g.grad_ref(a)) += mat(g.grad(v)) * mat(g.value(b)).transpose();
    mat(g.grad_ref(b)) += mat(g.value(a)).transpose() * mat(g.grad(v));
  };
  return v;
}

Graph::Var Graph::matmul_nt(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.cols() != tb.cols()) throw std::invalid_argument("matmul_nt: shapes");
  Tensor out({ta.rows(), tb.rows()});
  mat(out) = mat(ta) * mat(tb).transpose();
  Var v = push(std::move(out));
  nodes_[v].back = [a, b, v](Graph& g) {
    mat(g.grad_ref(a)) += mat(g.grad(v)) * mat(g.value(b));
    mat(g.grad_ref(b)) += mat(g.grad(v)).transpose() * mat(g.value(a));
  };
  return v;
}

Graph::Var Graph::matvec(Var w, Var x) {
  const Tensor& tw = value(w);
  const Tensor& tx = value(x);
  if (tw.cols() != tx.size()) throw std::invalid_argument("matvec: shapes");
  Tensor out({tw.rows()});
  vec(out) = mat(tw) * vec(tx);
  Var v = push(std::move(out));
  nodes_[v].back = [w, x, v](Graph& g) {
    mat(g.grad_ref(w)) += vec(g.grad(v)) * vec(g.value(x)).transpose();
    vec(g.grad_ref(x)) += mat(g.value(w)).transpose() * vec(g.grad(v));
  };
  return v;
}

Graph::Var Graph::dot(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.size() != tb.size()) throw std::invalid_argument("dot: shapes");
  Var v = push(Tensor::scalar(vec(ta).dot(vec(tb))));
  nodes_[v].back = [a, b, v](Graph& g) {
    const double gy = g.grad(v)[0];
    vec(g.grad_ref(a)) += gy * vec(g.value(b));
    vec(g.grad_ref(b)) += gy * vec(g.value(a));
  };
  return v;
}

Graph::Var Graph::rows_lookup(Var table, std::vector<int> ids) {
  const Tensor& tt = value(table);
  const std::size_t d = tt.cols();
  Tensor out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tt.rows())
      throw std::invalid_argument("rows_lookup: id out of range");
    std::copy_n(tt.v.data() + static_cast<std::size_t>(ids[r]) * d, d,
                out.v.data() + r * d);
  }
  Var v = push(std::move(out));
  nodes_[v].back = [table, ids = std::move(ids), d, v](Graph& g) {
    const double* src = g.grad(v).v.data();
    double* dst = g.grad_ref(table).v.data();
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t k = 0; k < d; ++k)
        dst[static_cast<std::size_t>(ids[r]) * d + k] += src[r * d + k];
  };
  return v;
}

Graph::Var Graph::mean_rows(Var m) {
  const Tensor& tm = value(m);
  const std::size_t n = tm.rows(), d = tm.cols();
  Tensor out({d});
  vec(out) = mat(tm).colwise().mean();
  Var v = push(std::move(out));
  nodes_[v].back = [m, n, d, v](Graph& g) {
    const double inv = 1.0 / static_cast<double>(n);
    const double* src = g.grad(v).v.data();
    double* dst = g.grad_ref(m).v.data();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t k = 0; k < d; ++k) dst[r * d + k] += inv * src[k];
  };
  return v;
}

Graph::Var Graph::max_rows(Var m) {
  const Tensor& tm = value(m);
  const std::size_t n = tm.rows(), d = tm.cols();
  Tensor out({d});
  std::vector<std::size_t> argmax(d, 0);
  for (std::size_t k = 0; k < d; ++k) {
    double best = tm.at(0, k);
    for (std::size_t r = 1; r < n; ++r)
      if (tm.at(r, k) > best) {
        best = tm.at(r, k);
        argmax[k] = r;
      }
    out[k] = best;
  }
  Var v = push(std::move(out));
  nodes_[v].back = [m, argmax = std::move(argmax), d, v](Graph& g) {
    const double* src = g.grad(v).v.data();
    Tensor& gm = g.grad_ref(m);
    for (std::size_t k = 0; k < d; ++k) gm.at(argmax[k], k) += src[k];
  };
  return v;
}

Graph::Var Graph::softmax(Var a) {
  Tensor out = value(a);
  out.shape = {out.size()};
  Tensor tmp = out;
  Tensor m2 = tmp;
  m2.shape = {1, tmp.size()};
  kernels::softmax_rows_inplace(m2);
  m2.shape = {m2.size()};
  Var v = push(std::move(m2));
  nodes_[v].back = [a, v](Graph& g) {
    auto y = vec(g.value(v));
    auto dy = vec(g.grad(v));
    const double inner = dy.dot(y);
    vec(g.grad_ref(a)).array() += (dy.array() - inner) * y.array();
  };
  return v;
}

Graph::Var Graph::pick_nll_sum(Var logits, std::vector<int> picks) {
  const Tensor& x = value(logits);
  Tensor probs = x;
  probs.shape = {1, x.size()};
  kernels::softmax_rows_inplace(probs);
  probs.shape = {x.size()};
  double loss = 0.0;
  for (int gidx : picks) {
    if (gidx < 0 || static_cast<std::size_t>(gidx) >= x.size())
      throw std::invalid_argument("pick_nll_sum: index out of range");
    loss -= std::log(probs[static_cast<std::size_t>(gidx)]);
  }
  Var v = push(Tensor::scalar(loss));
  nodes_[v].back =
      [logits, picks = std::move(picks), probs = std::move(probs), v](Graph& g) {
        const double gy = g.grad(v)[0];
        Tensor& gx = g.grad_ref(logits);
        const double count = static_cast<double>(picks.size());
        for (std::size_t k = 0; k < gx.size(); ++k)
          gx[k] += gy * count * probs[k];
        for (int gidx : picks) gx[static_cast<std::size_t>(gidx)] -= gy;
      };
  return v;
}

Graph::Var Graph::bce(Var prob, double label) {
  constexpr double kClamp = 1e-7;
  const double p_raw = scalar(prob);
  const double p = std::clamp(p_raw, kClamp, 1.0 - kClamp);
  const double loss = -label * std::log(p) - (1.0 - label) * std::log(1.0 - p);
  Var v = push(Tensor::scalar(loss));
  const bool clamped = p_raw < kClamp || p_raw > 1.0 - kClamp;
  nodes_[v].back = [prob, label, p, clamped, v](Graph& g) {
    if (clamped) return;  // flat region
    const double gy = g.grad(v)[0];
    g.grad_ref(prob)[0] += gy * (-label / p + (1.0 - label) / (1.0 - p));
  };
  return v;
}

Graph::Var Graph::dropout(Var a) {
  if (!training_ || dropout_rate_ <= 0.0) return a;
  const Tensor& ta = value(a);
  const double rate = dropout_rate_;
  const double scale = 1.0 / (1.0 - rate);
  Var v = push(Tensor(ta.shape));
  SplitMix rng(mask_seed(v));
  Tensor& out = nodes_[v].val;
  std::vector<float> mask(ta.size());
  for (std::size_t k = 0; k < ta.size(); ++k) {
    mask[k] = rng.uniform() < rate ? 0.0f : static_cast<float>(scale);
    out[k] = ta[k] * mask[k];
  }
  nodes_[v].back = [a, mask = std::move(mask), v](Graph& g) {
    const double* src = g.grad(v).v.data();
    double* dst = g.grad_ref(a).v.data();
    for (std::size_t k = 0; k < mask.size(); ++k) dst[k] += src[k] * mask[k];
  };
  return v;
}

namespace {

// Backward of one pooled side; adds into dH and dHp.
void pooled_side_backward(const Tensor& H, const Tensor& Hp, const double* df,
                          Tensor& dH, Tensor& dHp) {
  const std::size_t n = H.rows(), d = H.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double* dmean = df;
  const double* dmax = df + 4 * d;

  // recompute argmaxes per block/column
  std::vector<std::size_t> argmax(4 * d, 0);
  std::vector<double> best(4 * d);
  for (std::size_t r = 0; r < n; ++r) {
    const double* h = H.v.data() + r * d;
    const double* hp = Hp.v.data() + r * d;
    for (std::size_t c = 0; c < d; ++c) {
      const double blocks[4] = {h[c], hp[c], h[c] - hp[c], h[c] * hp[c]};
      for (int b = 0; b < 4; ++b) {
        if (r == 0 || blocks[b] > best[b * d + c]) {
          best[b * d + c] = blocks[b];
          argmax[b * d + c] = r;
        }
      }
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    const double* h = H.v.data() + r * d;
    const double* hp = Hp.v.data() + r * d;
    double* gh = dH.v.data() + r * d;
    double* ghp = dHp.v.data() + r * d;
    for (std::size_t c = 0; c < d; ++c) {
      // dX for each of the 4 blocks at (r, c)
      double dx[4];
      for (int b = 0; b < 4; ++b) {
        dx[b] = inv_n * dmean[b * d + c];
        if (argmax[b * d + c] == r) dx[b] += dmax[b * d + c];
      }
      gh[c] += dx[0] + dx[2] + dx[3] * hp[c];
      ghp[c] += dx[1] - dx[2] + dx[3] * h[c];
    }
  }
}

// dS from dA where A = rowsoftmax(S): dS = A .* (dA - rowsum(dA .* A))
Tensor softmax_rows_backward(const Tensor& A, const Tensor& dA) {
  Tensor dS(A.shape);
  const std::size_t rows = A.rows(), cols = A.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* a = A.v.data() + r * cols;
    const double* da = dA.v.data() + r * cols;
    double inner = 0.0;
    for (std::size_t c = 0; c < cols; ++c) inner += a[c] * da[c];
    double* ds = dS.v.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) ds[c] = a[c] * (da[c] - inner);
  }
  return dS;
}

}  // namespace

Graph::Var Graph::pair_affinity(Var Hi, Var Hj, const std::array<double, 6>& aux,
                                Var w, bool use_text) {
  const Tensor& hi = value(Hi);
  const Tensor& hj = value(Hj);
  const Tensor& tw = value(w);
  const std::size_t d = hi.cols();
  const std::size_t fdim = 6 + 16 * d;
  if (tw.size() != fdim)
    throw std::invalid_argument("pair_affinity: weight size mismatch");

  const bool dropped = training_ && dropout_rate_ > 0.0;
  const double rate = dropout_rate_;
  const double keep_scale = dropped ? 1.0 / (1.0 - rate) : 1.0;

  // forward: f = aux ++ pooled_i ++ pooled_j (only built transiently)
  std::vector<double> f(fdim, 0.0);
  for (int k = 0; k < 6; ++k) f[static_cast<std::size_t>(k)] = aux[k];
  if (use_text) {
    kernels::CoherenceParts parts = kernels::coherence_parts(hi, hj);
    kernels::pooled_side(hi, parts.Hip, f.data() + 6);
    kernels::pooled_side(hj, parts.Hjp, f.data() + 6 + 8 * d);
  }

  // Reserve the node first so the mask seed is known, then fill.
  Var v = push(Tensor::scalar(0.0));
  double z = 0.0;
  if (dropped) {
    SplitMix rng(mask_seed(v));
    for (std::size_t k = 0; k < fdim; ++k) {
      const bool keep = rng.uniform() >= rate;
      if (keep) z += tw[k] * f[k] * keep_scale;
    }
  } else {
    z = kernels::ConstVecMap(tw.v.data(), static_cast<Eigen::Index>(fdim))
            .dot(kernels::ConstVecMap(f.data(), static_cast<Eigen::Index>(fdim)));
  }
  nodes_[v].val[0] = z;

  nodes_[v].back = [Hi, Hj, aux, w, use_text, dropped, rate, keep_scale,
                    v](Graph& g) {
    const double gz = g.grad(v)[0];
    if (gz == 0.0) return;
    const Tensor& hi = g.value(Hi);
    const Tensor& hj = g.value(Hj);
    const Tensor& tw = g.value(w);
    const std::size_t d = hi.cols();
    const std::size_t fdim = 6 + 16 * d;

    // recompute forward pieces
    kernels::CoherenceParts parts;
    std::vector<double> f(fdim, 0.0);
    for (int k = 0; k < 6; ++k) f[static_cast<std::size_t>(k)] = aux[k];
    if (use_text) {
      parts = kernels::coherence_parts(hi, hj);
      kernels::pooled_side(hi, parts.Hip, f.data() + 6);
      kernels::pooled_side(hj, parts.Hjp, f.data() + 6 + 8 * d);
    }
    // mask, re-drawn from the same stream
    std::vector<double> keep(fdim, 1.0);
    if (dropped) {
      SplitMix rng(g.mask_seed(v));
      for (std::size_t k = 0; k < fdim; ++k)
        keep[k] = rng.uniform() >= rate ? keep_scale : 0.0;
    }

    // dw += gz * (f .* keep); df = gz * (w .* keep)
    Tensor& gw = g.grad_ref(w);
    std::vector<double> df(fdim);
    for (std::size_t k = 0; k < fdim; ++k) {
      gw[k] += gz * f[k] * keep[k];
      df[k] = gz * tw[k] * keep[k];
    }
    if (!use_text) return;

    Tensor dHi(hi.shape), dHj(hj.shape);
    Tensor dHip(parts.Hip.shape), dHjp(parts.Hjp.shape);
    pooled_side_backward(hi, parts.Hip, df.data() + 6, dHi, dHip);
    pooled_side_backward(hj, parts.Hjp, df.data() + 6 + 8 * d, dHj, dHjp);

    // Hip = A Hj ; Hjp = B Hi
    Tensor dA({hi.rows(), hj.rows()});
    Tensor dB({hj.rows(), hi.rows()});
    mat(dA) = mat(dHip) * mat(hj).transpose();
    mat(dHj) += mat(parts.A).transpose() * mat(dHip);
    mat(dB) = mat(dHjp) * mat(hi).transpose();
    mat(dHi) += mat(parts.B).transpose() * mat(dHjp);

    // A = rowsoftmax(S), B = rowsoftmax(S^T), S = Hi Hj^T
    Tensor dS = softmax_rows_backward(parts.A, dA);
    Tensor dSt = softmax_rows_backward(parts.B, dB);
    mat(dS) += mat(dSt).transpose();
    mat(dHi) += mat(dS) * mat(hj);
    mat(dHj) += mat(dS).transpose() * mat(hi);

    mat(g.grad_ref(Hi)) += mat(dHi);
    mat(g.grad_ref(Hj)) += mat(dHj);
  };
  return v;
}

void Graph::backward(Var loss) {
  if (value(loss).size() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  if (!value(loss).all_finite())
    throw NumericError("backward: non-finite loss");
  grad_ref(loss)[0] = 1.0;
  for (std::size_t k = nodes_.size(); k-- > 0;) {
    Node& n = nodes_[k];
    if (n.back) n.back(*this);
  }
  for (Node& n : nodes_)
    if (n.parameter) vec(n.parameter->grad) += vec(n.grad);
}

}  // namespace disent
