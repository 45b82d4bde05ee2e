#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace dtq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Stable mesh point identifier. Ids are assigned in insertion order and are
/// never reused within a run, so they index ever-growing per-point arrays.
using PointId = std::int32_t;

} // namespace dtq
