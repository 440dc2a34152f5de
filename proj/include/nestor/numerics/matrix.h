#ifndef NESTOR_NUMERICS_MATRIX_H_
#define NESTOR_NUMERICS_MATRIX_H_

#include <Eigen/Core>

#include <string>

namespace nestor::numerics {

// Every tensor in the model is a dense row-major 2-D array. Vectors are
// 1 x n rows; sequences are L x d with one row per position.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

inline std::string shape_string(Index rows, Index cols) {
  return "[" + std::to_string(rows) + ", " + std::to_string(cols) + "]";
}

inline std::string shape_string(const Matrix& m) { return shape_string(m.rows(), m.cols()); }

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// Builds a matrix from nested initializer lists, e.g. make_matrix({{1, 2}, {3, 4}}).
Matrix make_matrix(std::initializer_list<std::initializer_list<double>> rows);

// 1 x n row vector.
Matrix make_row(std::initializer_list<double> values);

}  // namespace nestor::numerics

#endif  // NESTOR_NUMERICS_MATRIX_H_
