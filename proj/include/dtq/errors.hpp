#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dtq {

/// Bad user input: unknown config key, out-of-range parameter, malformed
/// problem name. CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Unknown builtin problem name, or a request for an exact solution that the
/// problem does not carry.
class NotFoundError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Diffusion produced a transition covariance that is not SPD.
class InvalidKernelError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Geometric input unusable: affinely dependent point set, zero-volume
/// simplex where a proper one is required.
class DegenerateGeometryError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// The alpha shape kept no simplices; callers treat every point as boundary.
class EmptyShapeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Reference vector sums to zero, so the p-weighted norm is undefined.
class DegenerateReferenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Density removal emptied the mesh; the run cannot continue. CLI maps this
/// (and ResourceLimitError) to exit code 3.
class MeshCollapseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A requested allocation or grid is beyond the configured memory budget.
class ResourceLimitError : public std::runtime_error {
public:
  ResourceLimitError(const std::string& what, std::size_t estimated_bytes)
      : std::runtime_error(what), estimated_bytes(estimated_bytes) {}
  std::size_t estimated_bytes;
};

} // namespace dtq
