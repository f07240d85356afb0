#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "disent/tensor.h"

namespace disent {

// Named model parameter with its gradient and Adam moment buffers.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;  // Adam first moment
  Tensor v;  // Adam second moment

  explicit Parameter(std::string n, std::vector<std::size_t> shape)
      : name(std::move(n)),
        value(shape),
        grad(shape),
        m(shape),
        v(std::move(shape)) {}
};

class ParameterStore {
 public:
  Parameter& add(const std::string& name, std::vector<std::size_t> shape);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  void zero_grads();
  double grad_norm() const;
  std::size_t total_values() const;

  // Insertion order; stable across save/load.
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  std::vector<std::unique_ptr<Parameter>>& all() { return params_; }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace disent
