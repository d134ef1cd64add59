#pragma once

#include <cstddef>

#include "error.hpp"
#include "tensor.hpp"

namespace cimm {

// The eight symmetries of the square acting on the spatial axes of a tensor.
// Index k in 0..3 rotates counter-clockwise by k quarter turns; index 4 + k
// is a horizontal (left-right) flip applied after that rotation.

inline constexpr int kDihedralCount = 8;

template <typename T>
Tensor<T> rot90_ccw(const Tensor<T>& in) {
  const Shape& s = in.shape();
  Tensor<T> out(Shape{s.n, s.c, s.w, s.h});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < s.w; ++i)
        for (std::size_t j = 0; j < s.h; ++j) out.at(n, c, i, j) = in.at(n, c, j, s.w - 1 - i);
  return out;
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& in) {
  const Shape& s = in.shape();
  Tensor<T> out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) out.at(n, c, y, x) = in.at(n, c, y, s.w - 1 - x);
  return out;
}

/// Applies symmetry `index`; odd rotations of rectangular inputs swap H and W.
template <typename T>
Tensor<T> dihedral_transform(const Tensor<T>& in, int index) {
  if (index < 0 || index >= kDihedralCount) throw ShapeError("dihedral index must be in 0..7");
  Tensor<T> out = in;
  for (int r = 0; r < index % 4; ++r) out = rot90_ccw(out);
  if (index >= 4) out = flip_horizontal(out);
  return out;
}

/// Index j with dihedral_transform(dihedral_transform(x, i), j) == x.
constexpr int dihedral_inverse(int index) { return index < 4 ? (4 - index) % 4 : index; }

template <typename T>
Tensor<T> dihedral_inverse_transform(const Tensor<T>& in, int index) {
  return dihedral_transform(in, dihedral_inverse(index));
}

/// Training augmentation: same group, restricted to square patches.
template <typename T>
Tensor<T> augment(const Tensor<T>& patch, int index) {
  if (patch.shape().h != patch.shape().w && index % 2 == 1) {
    throw ShapeError("augment: odd rotations need a square patch");
  }
  return dihedral_transform(patch, index);
}

}  // namespace cimm
