#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cvsync/geometry.hpp"
#include "cvsync/mesh.hpp"
#include "cvsync/sha256.hpp"

namespace cvsync {

/// The replicated object every peer holds a copy of.
struct ModelState {
  ModelTransform transform;
  std::optional<SlicePlane> slice;
  std::vector<AnnotationMarker> annotations;
  Sha256Digest model_hash{};
  std::uint64_t applied_seq = 0;

  bool operator==(const ModelState&) const = default;
};

}  // namespace cvsync
