#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "olvae/errors.hpp"

namespace olvae::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

// Dense row-major 64-bit tensor. Gradient storage lives on the tape, not here.
struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != shape_numel(shape))
      throw ShapeError("tensor value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) {
    std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static Tensor full(Shape s, double v) {
    std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t size() const { return values.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
};

}  // namespace olvae::ad
