#pragma once

#include <array>

#include <Eigen/Dense>

#include "disent/tensor.h"

namespace disent::kernels {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

inline MatMap mat(Tensor& t) {
  return MatMap(t.v.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}
inline ConstMatMap mat(const Tensor& t) {
  return ConstMatMap(t.v.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}
inline VecMap vec(Tensor& t) {
  return VecMap(t.v.data(), static_cast<Eigen::Index>(t.size()));
}
inline ConstVecMap vec(const Tensor& t) {
  return ConstVecMap(t.v.data(), static_cast<Eigen::Index>(t.size()));
}

// Numerically shifted softmax over each row, in place.
void softmax_rows_inplace(Tensor& m);

// Soft-alignment attention between two token-representation matrices
// Hi [p x d], Hj [q x d]:
//   A = rowsoftmax(Hi Hj^T),  Hip = A Hj
//   B = rowsoftmax(Hj Hi^T),  Hjp = B Hi
struct CoherenceParts {
  Tensor A;    // [p x q]
  Tensor B;    // [q x p]
  Tensor Hip;  // [p x d]
  Tensor Hjp;  // [q x d]
};
CoherenceParts coherence_parts(const Tensor& Hi, const Tensor& Hj);

// Mean-and-max pooling of the enhanced blocks [H; H'; H-H'; H.H'] for one
// side; writes 8*d doubles (4 block means, then 4 block maxes).
void pooled_side(const Tensor& H, const Tensor& Hp, double* out);

// Fused text-coherence vector h_ij of dimension 16*d.
Tensor topic_coherence(const Tensor& Hi, const Tensor& Hj);

// w . (aux ++ h_ij). Inference-path twin of the graph op.
double pair_affinity_value(const Tensor& Hi, const Tensor& Hj,
                           const std::array<double, 6>& aux, const Tensor& w,
                           bool use_text);

// One LSTM cell step (gate order i,f,g,o). pre = Wx x + Wh h + b is taken
// as input so callers can batch the Wx product over a sequence.
void lstm_cell(const Tensor& pre, const Tensor& c_prev, Tensor& c_out,
               Tensor& h_out);

}  // namespace disent::kernels
