#include "painforge/synth/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "painforge/core/errors.hpp"
#include "painforge/core/random.hpp"

namespace painforge {
namespace {

constexpr double kDepthOffset = 0.6;
constexpr double kDepthRange = 1.2;
constexpr double kAmbient = 0.3;
constexpr double kCreaseDepth = 0.35;

double pixel_center(std::size_t index, std::size_t size) {
  return -kViewHalfExtent + (static_cast<double>(index) + 0.5) * (2.0 * kViewHalfExtent / static_cast<double>(size));
}

double to_pixel(double coord, std::size_t size) {
  return (coord + kViewHalfExtent) / (2.0 * kViewHalfExtent) * static_cast<double>(size) - 0.5;
}

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

std::vector<Vec3> vertex_normals(const std::vector<Vec3>& vertices, const std::vector<Face>& faces) {
  std::vector<Vec3> normals(vertices.size());
  for (const auto& f : faces) {
    const Vec3 n = cross(vertices[f[1]] - vertices[f[0]], vertices[f[2]] - vertices[f[0]]);
    for (auto v : f) normals[v] = normals[v] + n;
  }
  for (auto& n : normals) {
    const double len = norm(n);
    if (len > 0.0) n = n * (1.0 / len);
  }
  return normals;
}

std::array<double, 3> base_skin_tone(Ethnicity e) {
  switch (e) {
    case Ethnicity::Latino:
      return {0.78, 0.60, 0.48};
    case Ethnicity::White:
      return {0.88, 0.72, 0.63};
    case Ethnicity::SouthAsian:
      return {0.66, 0.48, 0.36};
    case Ethnicity::Black:
      return {0.45, 0.31, 0.23};
    case Ethnicity::MiddleEastern:
      return {0.76, 0.58, 0.45};
    case Ethnicity::EastAsian:
      return {0.86, 0.70, 0.56};
  }
  return {0.7, 0.55, 0.45};
}

double in_ellipse(double dx, double dy, double rx, double ry) {
  const double d2 = dx * dx / (rx * rx) + dy * dy / (ry * ry);
  return d2 < 1.0 ? 1.0 - d2 : 0.0;
}

// Surface albedo at template coordinates (u, v).
std::array<double, 3> albedo_at(double u, double v, const std::array<double, 3>& skin, double wrinkle, double crease,
                                Gender gender) {
  const double x = 0.36 * u;
  const double y = 0.5 * v;
  const double ax = std::abs(x);
  std::array<double, 3> c = skin;
  auto scale_all = [&](double s) {
    for (auto& ch : c) ch *= s;
  };

  const double brow = in_ellipse(ax - 0.14, y - 0.215, 0.10, 0.018);
  if (brow > 0.0) scale_all(1.0 - 0.55 * std::min(1.0, 3.0 * brow));
  const double eye = in_ellipse(ax - 0.15, y - 0.09, 0.05, 0.018);
  if (eye > 0.0) scale_all(1.0 - 0.7 * std::min(1.0, 3.0 * eye));
  const double lip = in_ellipse(x, y + 0.24, 0.08, 0.02);
  if (lip > 0.0) {
    c[0] *= 1.0 + 0.1 * lip;
    c[1] *= 1.0 - 0.3 * lip;
    c[2] *= 1.0 - 0.3 * lip;
  }
  // forehead lines and crow's feet scale with the wrinkle amplitude
  const double forehead = y > 0.27 ? std::min(1.0, (y - 0.27) / 0.05) : 0.0;
  const double crows = in_ellipse(ax - 0.25, y - 0.09, 0.04, 0.05);
  const double lines = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * y / 0.025);
  scale_all(1.0 - 0.3 * wrinkle * lines * std::max(forehead, crows));
  if (crease > 0.0) {
    const double furrow = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (y + 0.6 * ax) / 0.03);
    scale_all(1.0 - kCreaseDepth * std::min(1.0, crease) * (0.4 + 0.6 * furrow));
  }
  if (gender == Gender::Man && y < -0.15) scale_all(0.92);
  for (auto& ch : c) ch = std::clamp(ch, 0.0, 1.0);
  return c;
}

void check_topology(const FaceMesh& a, const FaceMesh& b) {
  if (a.vertices.size() != b.vertices.size() || a.faces != b.faces) {
    throw GeometryError("meshes do not share topology (" + std::to_string(a.vertices.size()) + " vs " +
                        std::to_string(b.vertices.size()) + " vertices)");
  }
}

}  // namespace

Raster rasterize(const FaceMesh& mesh, double yaw_degrees, std::size_t resolution) {
  if (mesh.vertices.empty() || mesh.faces.empty()) throw GeometryError("cannot render an empty mesh");
  if (!(std::abs(yaw_degrees) <= 90.0)) {
    throw ParameterError("camera yaw " + std::to_string(yaw_degrees) + " outside [-90, 90]");
  }
  if (resolution == 0) throw ParameterError("resolution must be positive");
  for (const auto& f : mesh.faces)
    for (auto v : f)
      if (v >= mesh.vertices.size()) throw GeometryError("face index out of range");

  const double yaw = yaw_degrees * std::numbers::pi / 180.0;
  const double cy = std::cos(yaw);
  const double sy = std::sin(yaw);
  Raster r;
  r.size = resolution;
  r.rotated.reserve(mesh.vertices.size());
  for (const auto& p : mesh.vertices) r.rotated.push_back({p.x * cy + p.z * sy, p.y, -p.x * sy + p.z * cy});

  const std::size_t npix = resolution * resolution;
  r.triangle.assign(npix, -1);
  r.barycentric.assign(npix, {0.0, 0.0, 0.0});
  r.depth.assign(npix, -std::numeric_limits<double>::infinity());

  const auto last = static_cast<double>(resolution - 1);
  for (std::size_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const auto& f = mesh.faces[fi];
    const Vec3& p0 = r.rotated[f[0]];
    const Vec3& p1 = r.rotated[f[1]];
    const Vec3& p2 = r.rotated[f[2]];
    const double area = edge(p0.x, p0.y, p1.x, p1.y, p2.x, p2.y);
    if (std::abs(area) < 1e-14) continue;

    // pixel bounds: column from x, row from -y
    const double cmin = std::ceil(to_pixel(std::min({p0.x, p1.x, p2.x}), resolution));
    const double cmax = std::floor(to_pixel(std::max({p0.x, p1.x, p2.x}), resolution));
    const double rmin = std::ceil(to_pixel(-std::max({p0.y, p1.y, p2.y}), resolution));
    const double rmax = std::floor(to_pixel(-std::min({p0.y, p1.y, p2.y}), resolution));
    if (cmax < 0 || rmax < 0 || cmin > last || rmin > last) continue;
    const auto c0 = static_cast<std::size_t>(std::max(0.0, cmin));
    const auto c1 = static_cast<std::size_t>(std::min(last, cmax));
    const auto r0 = static_cast<std::size_t>(std::max(0.0, rmin));
    const auto r1 = static_cast<std::size_t>(std::min(last, rmax));

    for (std::size_t row = r0; row <= r1; ++row) {
      const double py = -pixel_center(row, resolution);
      for (std::size_t col = c0; col <= c1; ++col) {
        const double px = pixel_center(col, resolution);
        const double b0 = edge(p1.x, p1.y, p2.x, p2.y, px, py) / area;
        const double b1 = edge(p2.x, p2.y, p0.x, p0.y, px, py) / area;
        const double b2 = edge(p0.x, p0.y, p1.x, p1.y, px, py) / area;
        if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0) continue;
        const double z = b0 * p0.z + b1 * p1.z + b2 * p2.z;
        const std::size_t pix = row * resolution + col;
        if (z > r.depth[pix]) {
          r.depth[pix] = z;
          r.triangle[pix] = static_cast<std::int32_t>(fi);
          r.barycentric[pix] = {b0, b1, b2};
        }
      }
    }
  }
  return r;
}

Image render_depth(const FaceMesh& mesh, double yaw_degrees, std::size_t resolution) {
  const Raster r = rasterize(mesh, yaw_degrees, resolution);
  Image img{resolution, resolution, 1, std::vector<double>(resolution * resolution, 0.0)};
  for (std::size_t pix = 0; pix < img.pixels.size(); ++pix) {
    if (r.triangle[pix] < 0) continue;
    img.pixels[pix] = std::clamp((r.depth[pix] + kDepthOffset) / kDepthRange, 1e-6, 1.0);
  }
  return img;
}

Image render_rgb(const FaceMesh& mesh, const DemographicProfile& profile, double yaw_degrees,
                 std::size_t resolution, const RenderOptions& options) {
  const Raster r = rasterize(mesh, yaw_degrees, resolution);
  const auto normals = vertex_normals(r.rotated, mesh.faces);
  if (mesh.surface_uv.size() != mesh.vertices.size()) throw GeometryError("mesh lacks surface coordinates");

  auto skin = base_skin_tone(profile.ethnicity);
  Rng rng(derive_seed(profile.identity_seed, 0xa1b3d0));
  const double brightness = rng.uniform(0.92, 1.08);
  for (auto& ch : skin) ch = std::clamp(ch * brightness + rng.uniform(-0.03, 0.03), 0.0, 1.0);

  const Vec3 light = Vec3{0.25, 0.35, 1.0} * (1.0 / norm(Vec3{0.25, 0.35, 1.0}));
  Image img{resolution, resolution, 3, std::vector<double>(resolution * resolution * 3, 0.0)};
  for (std::size_t pix = 0; pix < r.triangle.size(); ++pix) {
    if (r.triangle[pix] < 0) continue;
    const auto& f = mesh.faces[static_cast<std::size_t>(r.triangle[pix])];
    const auto& b = r.barycentric[pix];
    Vec3 n = normals[f[0]] * b[0] + normals[f[1]] * b[1] + normals[f[2]] * b[2];
    const double len = norm(n);
    if (len > 0.0) n = n * (1.0 / len);
    const double shade = kAmbient + (1.0 - kAmbient) * std::max(0.0, dot(n, light));
    std::array<double, 3> albedo;
    if (options.albedo_override) {
      albedo = *options.albedo_override;
    } else {
      double u = 0.0, v = 0.0, crease = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        u += b[i] * mesh.surface_uv[f[i]][0];
        v += b[i] * mesh.surface_uv[f[i]][1];
        if (!mesh.expression_crease.empty()) crease += b[i] * mesh.expression_crease[f[i]];
      }
      albedo = albedo_at(u, v, skin, mesh.wrinkle_amplitude, crease, profile.gender);
    }
    for (std::size_t ch = 0; ch < 3; ++ch) img.pixels[pix * 3 + ch] = std::clamp(albedo[ch] * shade, 0.0, 1.0);
  }
  return img;
}

std::vector<double> displacement_magnitudes(const FaceMesh& neutral, const FaceMesh& rigged) {
  check_topology(neutral, rigged);
  std::vector<double> m(neutral.vertices.size());
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = norm(rigged.vertices[k] - neutral.vertices[k]);
  return m;
}

Image render_heatmap(const FaceMesh& neutral, const FaceMesh& rigged, double yaw_degrees, std::size_t resolution) {
  const auto magnitude = displacement_magnitudes(neutral, rigged);
  const Raster r = rasterize(rigged, yaw_degrees, resolution);
  const double inv_norm = 1.0 / max_displacement();
  Image img{resolution, resolution, 1, std::vector<double>(resolution * resolution, 0.0)};
  for (std::size_t pix = 0; pix < img.pixels.size(); ++pix) {
    if (r.triangle[pix] < 0) continue;
    const auto& f = rigged.faces[static_cast<std::size_t>(r.triangle[pix])];
    const auto& b = r.barycentric[pix];
    const double value = b[0] * magnitude[f[0]] + b[1] * magnitude[f[1]] + b[2] * magnitude[f[2]];
    img.pixels[pix] = std::clamp(value * inv_norm, 0.0, 1.0);
  }
  return img;
}

std::vector<bool> project_vertex_support(const Raster& raster, const FaceMesh& mesh,
                                         const std::vector<bool>& vertex_flags) {
  std::vector<bool> mask(raster.triangle.size(), false);
  for (std::size_t pix = 0; pix < mask.size(); ++pix) {
    if (raster.triangle[pix] < 0) continue;
    const auto& f = mesh.faces[static_cast<std::size_t>(raster.triangle[pix])];
    mask[pix] = vertex_flags[f[0]] || vertex_flags[f[1]] || vertex_flags[f[2]];
  }
  return mask;
}

std::vector<bool> dilate(const std::vector<bool>& mask, std::size_t size, std::size_t radius) {
  std::vector<bool> out(mask.size(), false);
  const auto n = static_cast<std::ptrdiff_t>(size);
  const auto rad = static_cast<std::ptrdiff_t>(radius);
  for (std::ptrdiff_t r = 0; r < n; ++r)
    for (std::ptrdiff_t c = 0; c < n; ++c) {
      if (!mask[static_cast<std::size_t>(r * n + c)]) continue;
      for (std::ptrdiff_t dr = -rad; dr <= rad; ++dr)
        for (std::ptrdiff_t dc = -rad; dc <= rad; ++dc) {
          const auto rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < n && cc >= 0 && cc < n) out[static_cast<std::size_t>(rr * n + cc)] = true;
        }
    }
  return out;
}

}  // namespace painforge
