#include "dpt/tensor.hpp"

namespace dpt {

std::string shape_to_string(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

int64_t shape_numel(const Shape& s) {
  if (s.empty()) throw ShapeError("tensor rank must be at least 1");
  int64_t n = 1;
  for (int64_t e : s) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_to_string(s));
    n *= e;
  }
  return n;
}

}  // namespace dpt
