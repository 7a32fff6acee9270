#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace loopshift {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rows are frames (or frame-latents), columns are channels.
using Matrix = MatrixT<double>;

// Integer class label standing in for a text prompt.
struct ConditionId {
    std::uint32_t value = 0;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

} // namespace loopshift
