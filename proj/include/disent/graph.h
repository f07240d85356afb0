#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "disent/common.h"
#include "disent/params.h"
#include "disent/tensor.h"

namespace disent {

// Reverse-mode tape over Tensor values. A graph is built per training
// batch and discarded after backward(); parameter gradients accumulate
// into the owning ParameterStore. Dropout masks are drawn from a seeded
// stream keyed by node index, so rebuilding a graph with the same seed
// reproduces the same forward pass exactly.
class Graph {
 public:
  using Var = std::uint32_t;

  explicit Graph(std::uint64_t seed = 0, bool training = false,
                 double dropout_rate = 0.0);

  bool training() const { return training_; }
  double dropout_rate() const { return dropout_rate_; }

  const Tensor& value(Var v) const { return nodes_[v].val; }
  const Tensor& grad(Var v) const { return nodes_[v].grad; }
  double scalar(Var v) const { return nodes_[v].val.scalar_value(); }
  std::size_t size() const { return nodes_.size(); }

  // --- leaves ---
  Var input(Tensor t);
  Var zeros(std::vector<std::size_t> shape);
  Var param(Parameter& p);

  // --- elementwise / shape ---
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cmult(Var a, Var b);
  Var scale(Var a, double s);
  Var tanh_op(Var a);
  Var sigmoid_op(Var a);
  Var slice(Var v, std::size_t begin, std::size_t len);  // rank-1
  Var concat(const std::vector<Var>& parts);             // rank-1
  Var row(Var m, std::size_t r);
  Var stack_rows(const std::vector<Var>& rows);
  Var stack_scalars(const std::vector<Var>& xs);
  Var sum(const std::vector<Var>& scalars);

  // --- linear algebra ---
  Var matmul(Var a, Var b);     // [m x k][k x n]
  Var matmul_nt(Var a, Var b);  // a b^T
  Var matvec(Var w, Var x);     // [o x i][i]
  Var dot(Var a, Var b);
  Var rows_lookup(Var table, std::vector<int> ids);

  // --- reductions / nonlinear heads ---
  Var mean_rows(Var m);
  Var max_rows(Var m);
  Var softmax(Var v);  // rank-1
  // -sum_{g in picks} log softmax(logits)[g]
  Var pick_nll_sum(Var logits, std::vector<int> picks);
  // clamped binary cross entropy on a probability node
  Var bce(Var prob, double label);

  // Inverted dropout; identity when the graph is not training.
  Var dropout(Var a);

  // Fused pointer-feature score: w . (aux ++ h_ij) where h_ij is the
  // soft-alignment coherence vector between Hi and Hj. Intermediates are
  // recomputed in backward rather than stored. When the graph trains,
  // inverted dropout is applied to the fused feature vector. With
  // use_text=false the coherence block is zeroed and only aux
  // contributes.
  Var pair_affinity(Var Hi, Var Hj, const std::array<double, 6>& aux, Var w,
                    bool use_text);

  void backward(Var loss);

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    Parameter* parameter = nullptr;
    std::function<void(Graph&)> back;  // empty for leaves
  };

  Var push(Tensor val, std::function<void(Graph&)> back = {});
  Tensor& grad_ref(Var v) { return nodes_[v].grad; }
  // Deterministic per-node dropout mask stream.
  std::uint64_t mask_seed(Var node) const;

  std::vector<Node> nodes_;
  std::uint64_t seed_;
  bool training_;
  double dropout_rate_;
};

}  // namespace disent
