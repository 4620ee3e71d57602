#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "painforge/synth/au.hpp"
#include "painforge/synth/demographics.hpp"

namespace painforge {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

double dot(const Vec3& a, const Vec3& b);
Vec3 cross(const Vec3& a, const Vec3& b);
double norm(const Vec3& v);

using Face = std::array<std::uint32_t, 3>;

inline constexpr std::size_t kNumShapeParams = 8;

/// Face surface in head-height units (y spans about [-0.5, 0.5], +z toward the
/// viewer), with identity parameters and one blendshape per action unit.
struct FaceMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<double> shape_params;
  std::array<std::vector<Vec3>, kNumAus> au_basis;
  /// Template surface coordinates in [-1, 1]^2 per vertex; texture lookups use
  /// these so appearance moves with the surface under rigging.
  std::vector<std::array<double, 2>> surface_uv;
  double wrinkle_amplitude = 0.0;
  /// Per-vertex furrow strength from active AUs (empty on a neutral mesh).
  std::vector<double> expression_crease;
};

/// The canonical procedural template: a half-ellipsoid face on a 45x45 grid
/// with nose, brow ridge, eye sockets and lips, mirror-symmetric in x.
struct FaceTemplate {
  static constexpr std::size_t kGrid = 45;

  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<std::array<double, 2>> surface_uv;
  /// Identity deformation modes, kNumShapeParams displacement fields.
  std::vector<std::vector<Vec3>> shape_modes;
  /// Blendshapes at full intensity (AU value == kAuMax).
  std::array<std::vector<Vec3>, kNumAus> au_basis;
  /// Per-vertex region membership weight in [0, 1] for each AU; zero outside
  /// the region.
  std::array<std::vector<double>, kNumAus> region_weight;
  std::size_t nose_tip = 0;

  static const FaceTemplate& get();
};

/// Template deformed by explicit shape parameters (size kNumShapeParams).
FaceMesh make_mesh(const std::vector<double>& shape_params, double wrinkle_amplitude);

/// Deterministic identity mesh from the profile's seed; the age group sets the
/// wrinkle amplitude and gender shifts the jaw-width mode.
FaceMesh make_identity_mesh(const DemographicProfile& profile);

/// vertices + sum_k (au_k / au_k_max) * au_basis_k. Faces are unchanged.
/// Also accumulates (au_k / au_k_max) * region weight into expression_crease.
FaceMesh apply_au_rig(const FaceMesh& mesh, const AUVector& au);

/// Dataset-wide heatmap normalizer: sum over AUs of the largest basis
/// displacement norm.
double max_displacement();

/// Vertex indices whose region weight for `au` is nonzero.
std::vector<std::uint32_t> region_vertices(Au au);

}  // namespace painforge
