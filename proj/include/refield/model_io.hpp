#pragma once

#include "refield/geometry.hpp"

#include <filesystem>

namespace refield {

/// Binary morphable model file.
///
/// Layout (little-endian):
///   char[4]  "RFMM"
///   uint32   N, m_i, m_e, triangle_count, landmark_count
///   float32  mean[3N]
///   float32  id_basis[3N * m_i]   (column-major)
///   float32  exp_basis[3N * m_e]  (column-major)
///   float32  triangles[3 * triangle_count]
///   float32  uv[2N]
///   float32  landmark_indices[landmark_count]
///   float32  contour_flags[landmark_count]  (0 or 1)
void save_model(const std::filesystem::path& path, const MorphableModel& model);
MorphableModel load_model(const std::filesystem::path& path);

} // namespace refield
