#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgacl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct NotFoundError : Error { using Error::Error; };
struct DataError : Error { using Error::Error; };
// Raised when a sampling candidate set is empty (user without history, dead-end hop).
struct ColdStartError : Error { using Error::Error; };

// Shape of a dense row-major array. Rank is 1 or 2; scalars are rank-1 {1}.
struct Shape {
  int rank = 1;
  int d0 = 0;
  int d1 = 1;

  static Shape vector(int n) { return Shape{1, n, 1}; }
  static Shape matrix(int r, int c) { return Shape{2, r, c}; }

  long size() const { return rank == 1 ? d0 : static_cast<long>(d0) * d1; }
  bool operator==(const Shape& o) const {
    return rank == o.rank && d0 == o.d0 && (rank == 1 || d1 == o.d1);
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    if (rank == 1) return "{" + std::to_string(d0) + "}";
    return "{" + std::to_string(d0) + "," + std::to_string(d1) + "}";
  }
};

struct Array {
  Shape shape{1, 0, 1};
  std::vector<double> data;

  Array() = default;
  explicit Array(Shape s) : shape(s), data(static_cast<size_t>(s.size()), 0.0) {}
  Array(Shape s, std::vector<double> d) : shape(s), data(std::move(d)) {
    if (static_cast<long>(data.size()) != shape.size())
      throw ShapeError("array data length " + std::to_string(data.size()) +
                       " does not match shape " + shape.str());
  }

  static Array zeros(int n) { return Array(Shape::vector(n)); }
  static Array zeros(int r, int c) { return Array(Shape::matrix(r, c)); }
  static Array scalar(double v) {
    Array a(Shape::vector(1));
    a.data[0] = v;
    return a;
  }
  static Array vec(std::initializer_list<double> v) {
    Array a(Shape::vector(static_cast<int>(v.size())));
    a.data.assign(v.begin(), v.end());
    return a;
  }
  static Array vec(std::vector<double> v) {
    Shape s = Shape::vector(static_cast<int>(v.size()));
    return Array(s, std::move(v));
  }

  long size() const { return static_cast<long>(data.size()); }
  bool empty() const { return data.empty(); }
  int rows() const { return shape.rank == 2 ? shape.d0 : 1; }
  int cols() const { return shape.rank == 2 ? shape.d1 : shape.d0; }

  double& operator[](size_t i) { return data[i]; }
  double operator[](size_t i) const { return data[i]; }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * shape.d1 + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * shape.d1 + c]; }
  const double* row_ptr(int r) const { return data.data() + static_cast<size_t>(r) * shape.d1; }
  double* row_ptr(int r) { return data.data() + static_cast<size_t>(r) * shape.d1; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline bool all_finite(const Array& a) {
  for (double v : a.data)
    if (!std::isfinite(v)) return false;
  return true;
}

inline void require_same_shape(const Array& a, const Array& b, const char* op) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape.str() + " vs " +
                     b.shape.str());
}

}  // namespace mgacl
