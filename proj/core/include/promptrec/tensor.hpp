#pragma once

#include <Eigen/Dense>

namespace promptrec {

// Parameters are held in double precision. Single-precision training rounds
// every tensor to float after each optimizer step, so checkpoints (float32
// payloads) reproduce the in-memory state exactly.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline void round_to_float(Matrix& m) {
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    m.data()[k] = static_cast<double>(static_cast<float>(m.data()[k]));
  }
}

}  // namespace promptrec
