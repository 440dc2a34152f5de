#include "nestor/numerics/param.h"

#include "nestor/error.h"

namespace nestor::numerics {

Param& ParamStore::add(const std::string& name, Matrix init, bool trainable) {
  if (by_name_.count(name) != 0) throw InvariantError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = std::move(init);
  p->trainable = trainable;
  p->zero_grad();
  Param* raw = p.get();
  params_.push_back(std::move(p));
  by_name_.emplace(name, raw);
  return *raw;
}

Param& ParamStore::get(const std::string& name) {
  Param* p = find(name);
  if (p == nullptr) throw InvariantError("unknown parameter '" + name + "'");
  return *p;
}

const Param& ParamStore::get(const std::string& name) const {
  const Param* p = find(name);
  if (p == nullptr) throw InvariantError("unknown parameter '" + name + "'");
  return *p;
}

Param* ParamStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

const Param* ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

std::vector<Param*> ParamStore::all() {
  std::vector<Param*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Param*> ParamStore::all() const {
  std::vector<const Param*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

}  // namespace nestor::numerics
