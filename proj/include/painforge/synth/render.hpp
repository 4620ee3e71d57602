#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "painforge/synth/demographics.hpp"
#include "painforge/synth/mesh.hpp"

namespace painforge {

/// Row-major H x W x C image.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;

  double& at(std::size_t r, std::size_t c, std::size_t ch = 0) { return pixels[(r * width + c) * channels + ch]; }
  double at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
    return pixels[(r * width + c) * channels + ch];
  }
};

/// Half-extent of the orthographic view window in head-height units.
inline constexpr double kViewHalfExtent = 0.6;

/// Per-pixel nearest-surface hit of an orthographic camera looking down -z
/// after rotating the mesh by `yaw` degrees about the vertical axis.
struct Raster {
  std::size_t size = 0;
  std::vector<std::int32_t> triangle;  // -1 for background
  std::vector<std::array<double, 3>> barycentric;
  std::vector<double> depth;           // camera-space z of the hit
  std::vector<Vec3> rotated;           // mesh vertices in camera space
};

/// Throws GeometryError for an empty mesh and ParameterError for |yaw| > 90.
Raster rasterize(const FaceMesh& mesh, double yaw_degrees, std::size_t resolution);

/// Depth normalized so nearer surfaces are brighter, in (0, 1]; background 0.
Image render_depth(const FaceMesh& mesh, double yaw_degrees, std::size_t resolution);

struct RenderOptions {
  /// Replaces the procedural albedo everywhere when set.
  std::optional<std::array<double, 3>> albedo_override;
};

/// Lambertian shading under one fixed directional light with a procedural
/// skin albedo keyed to ethnicity, identity seed and wrinkle amplitude.
Image render_rgb(const FaceMesh& mesh, const DemographicProfile& profile, double yaw_degrees,
                 std::size_t resolution, const RenderOptions& options = {});

/// Per-vertex displacement norms between two meshes of identical topology.
std::vector<double> displacement_magnitudes(const FaceMesh& neutral, const FaceMesh& rigged);

/// Displacement norms splatted through the rigged mesh's raster, divided by
/// max_displacement() and clamped to [0, 1].
Image render_heatmap(const FaceMesh& neutral, const FaceMesh& rigged, double yaw_degrees, std::size_t resolution);

/// Pixels whose visible triangle touches a flagged vertex.
std::vector<bool> project_vertex_support(const Raster& raster, const FaceMesh& mesh,
                                         const std::vector<bool>& vertex_flags);

/// Square dilation of a pixel mask by `radius` pixels.
std::vector<bool> dilate(const std::vector<bool>& mask, std::size_t size, std::size_t radius);

}  // namespace painforge
