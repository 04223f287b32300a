// Copyright 2026 The mbias Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Reference least-squares solve for tests: forms A^T A x = A^T b and runs
// Gaussian elimination with partial pivoting. Deliberately independent of
// the library's Eigen-based solver.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mbias::testing {

using Matrix = std::vector<std::vector<double>>;

inline std::vector<double> normal_equations_solve(const Matrix& a, const std::vector<double>& b) {
  const std::size_t rows = a.size();
  const std::size_t cols = rows ? a[0].size() : 0;
  Matrix m(cols, std::vector<double>(cols + 1, 0.0));
  for (std::size_t i = 0; i < cols; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      for (std::size_t r = 0; r < rows; ++r) m[i][j] += a[r][i] * a[r][j];
    }
    for (std::size_t r = 0; r < rows; ++r) m[i][cols] += a[r][i] * b[r];
  }
  for (std::size_t c = 0; c < cols; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < cols; ++r) {
      if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
    }
    if (std::abs(m[piv][c]) < 1e-300) throw std::runtime_error("singular normal equations");
    std::swap(m[c], m[piv]);
    for (std::size_t r = 0; r < cols; ++r) {
      if (r == c) continue;
      const double f = m[r][c] / m[c][c];
      for (std::size_t k = c; k <= cols; ++k) m[r][k] -= f * m[c][k];
    }
  }
  std::vector<double> x(cols);
  for (std::size_t c = 0; c < cols; ++c) x[c] = m[c][cols] / m[c][c];
  return x;
}

}  // namespace mbias::testing
