#pragma once

#include <cstddef>
#include <vector>

namespace feta {

using Vec = std::vector<double>;

// Dense row-major matrix, 64-bit throughout.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

double dot(const Vec& a, const Vec& b);
double norm2(const Vec& a);
void axpy(double a, const Vec& x, Vec& y);  // y += a*x
void scale(Vec& x, double a);

}  // namespace feta
