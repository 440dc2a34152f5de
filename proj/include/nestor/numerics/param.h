#ifndef NESTOR_NUMERICS_PARAM_H_
#define NESTOR_NUMERICS_PARAM_H_

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "nestor/numerics/matrix.h"

namespace nestor::numerics {

// A named trainable tensor. Gradients accumulate additively across every
// use of the parameter within one step.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Owns every parameter of a model. Parameter addresses are stable for the
// lifetime of the store, so layers hold raw pointers into it.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  // Registers a new parameter; throws InvariantError on a duplicate name.
  Param& add(const std::string& name, Matrix init, bool trainable = true);

  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  // Registration order; stable across runs for a fixed configuration.
  std::vector<Param*> all();
  std::vector<const Param*> all() const;

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::unordered_map<std::string, Param*> by_name_;
};

}  // namespace nestor::numerics

#endif  // NESTOR_NUMERICS_PARAM_H_
