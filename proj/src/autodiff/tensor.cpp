#include <cmath>
#include <numeric>

#include "coralvol/autodiff.hpp"

namespace coralvol::ad {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_size(shape))
    throw ShapeError("tensor of shape " + shape_str(shape) + " given " + std::to_string(data.size()) +
                     " values");
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  return shape[axis];
}

double Tensor::item() const {
  if (data.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape));
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void ParamSet::add(const std::string& name, Tensor value) {
  if (!items_.emplace(name, std::move(value)).second)
    throw ConfigError("duplicate parameter '" + name + "'");
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = items_.find(name);
  if (it == items_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
  return const_cast<ParamSet*>(this)->at(name);
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

bool ParamSet::all_finite() const {
  for (const auto& [name, t] : items_)
    if (!t.all_finite()) return false;
  return true;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (items_.size() != other.items_.size()) return false;
  for (auto a = items_.begin(), b = other.items_.begin(); a != items_.end(); ++a, ++b)
    if (a->first != b->first || a->second.shape != b->second.shape || a->second.data != b->second.data)
      return false;
  return true;
}

Bound bind(Tape& tape, const ParamSet& params) {
  Bound bound;
  for (const auto& [name, t] : params.items()) bound.emplace(name, tape.variable(t));
  return bound;
}

ParamSet gradients(const Tape& tape, const Bound& bound) {
  ParamSet out;
  for (const auto& [name, v] : bound) out.add(name, tape.grad(v));
  return out;
}

}  // namespace coralvol::ad
