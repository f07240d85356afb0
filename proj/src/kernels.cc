#include "disent/kernels.h"

#include <cmath>
#include <stdexcept>

namespace disent::kernels {

void softmax_rows_inplace(Tensor& m) {
  const std::size_t rows = m.rows(), cols = m.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = m.v.data() + r * cols;
    double mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= sum;
  }
}

CoherenceParts coherence_parts(const Tensor& Hi, const Tensor& Hj) {
  if (Hi.cols() != Hj.cols())
    throw std::invalid_argument("coherence: representation dims differ");
  const auto p = Hi.rows(), q = Hj.rows(), d = Hi.cols();
  CoherenceParts parts;
  parts.A = Tensor({p, q});
  parts.B = Tensor({q, p});
  parts.Hip = Tensor({p, d});
  parts.Hjp = Tensor({q, d});

  mat(parts.A) = mat(Hi) * mat(Hj).transpose();
  mat(parts.B) = mat(parts.A).transpose();
  softmax_rows_inplace(parts.A);
  softmax_rows_inplace(parts.B);
  mat(parts.Hip) = mat(parts.A) * mat(Hj);
  mat(parts.Hjp) = mat(parts.B) * mat(Hi);
  return parts;
}

void pooled_side(const Tensor& H, const Tensor& Hp, double* out) {
  const std::size_t n = H.rows(), d = H.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  double* mean = out;        // 4 blocks of d
  double* mx = out + 4 * d;  // 4 blocks of d
  for (std::size_t c = 0; c < 4 * d; ++c) mean[c] = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* h = H.v.data() + r * d;
    const double* hp = Hp.v.data() + r * d;
    for (std::size_t c = 0; c < d; ++c) {
      const double blocks[4] = {h[c], hp[c], h[c] - hp[c], h[c] * hp[c]};
      for (int b = 0; b < 4; ++b) {
        const double x = blocks[b];
        mean[b * d + c] += x * inv_n;
        if (r == 0 || x > mx[b * d + c]) mx[b * d + c] = x;
      }
    }
  }
}

Tensor topic_coherence(const Tensor& Hi, const Tensor& Hj) {
  const std::size_t d = Hi.cols();
  CoherenceParts parts = coherence_parts(Hi, Hj);
  Tensor h({16 * d});
  pooled_side(Hi, parts.Hip, h.v.data());
  pooled_side(Hj, parts.Hjp, h.v.data() + 8 * d);
  return h;
}

double pair_affinity_value(const Tensor& Hi, const Tensor& Hj,
                           const std::array<double, 6>& aux, const Tensor& w,
                           bool use_text) {
  double z = 0.0;
  for (int k = 0; k < 6; ++k) z += w[k] * aux[k];
  if (!use_text) return z;
  Tensor h = topic_coherence(Hi, Hj);
  if (w.size() != 6 + h.size())
    throw std::invalid_argument("pair_affinity: weight size mismatch");
  z += ConstVecMap(w.v.data() + 6, static_cast<Eigen::Index>(h.size()))
           .dot(vec(h));
  return z;
}

void lstm_cell(const Tensor& pre, const Tensor& c_prev, Tensor& c_out,
               Tensor& h_out) {
  const std::size_t H = c_prev.size();
  if (pre.size() != 4 * H) throw std::invalid_argument("lstm_cell: bad shapes");
  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  for (std::size_t k = 0; k < H; ++k) {
    const double i = sigmoid(pre[k]);
    const double f = sigmoid(pre[H + k]);
    const double g = std::tanh(pre[2 * H + k]);
    const double o = sigmoid(pre[3 * H + k]);
    c_out[k] = f * c_prev[k] + i * g;
    h_out[k] = o * std::tanh(c_out[k]);
  }
}

}  // namespace disent::kernels
