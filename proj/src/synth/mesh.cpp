#include "painforge/synth/mesh.hpp"

#include <algorithm>
#include <cmath>

#include "painforge/core/errors.hpp"
#include "painforge/core/random.hpp"

namespace painforge {

double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

namespace {

constexpr double kHalfWidth = 0.36;
constexpr double kHalfHeight = 0.5;
constexpr double kDepth = 0.26;

double gauss2(double dx, double dy, double sx, double sy) {
  return std::exp(-0.5 * (dx * dx / (sx * sx) + dy * dy / (sy * sy)));
}

// Anatomical region of one AU: an ellipse in template (x, y), mirrored to both
// sides unless centered on the midline, with a fixed displacement direction
// (x component flips with the side).
struct Region {
  double cx, cy, rx, ry;
  Vec3 direction;
  double amplitude;
};

// Disjoint by construction; ordered like Au.
constexpr std::array<Region, kNumAus> kRegions{{
    {0.14, 0.205, 0.11, 0.045, {-0.35, -1.0, -0.25}, 0.030},  // AU4 brow lowerer
    {0.19, -0.030, 0.075, 0.045, {0.2, 1.0, 0.5}, 0.025},     // AU6 cheek raiser
    {0.15, 0.062, 0.065, 0.022, {0.0, 1.0, 0.2}, 0.018},      // AU7 lid tightener (lower lid)
    {0.0, 0.055, 0.05, 0.055, {0.0, 0.5, 0.8}, 0.020},        // AU9 nose wrinkler (nose root)
    {0.0, -0.175, 0.11, 0.035, {0.0, 1.0, 0.3}, 0.025},       // AU10 upper lip raiser
    {0.15, 0.115, 0.065, 0.028, {0.0, -1.0, 0.15}, 0.022},    // AU43 eye closure (upper lid)
}};

// Bump weight (1 - d^2)^2 inside the ellipse, 0 outside.
double region_weight_at(const Region& r, double x, double y) {
  const double dx = (r.cx == 0.0 ? x : std::abs(x) - r.cx) / r.rx;
  const double dy = (y - r.cy) / r.ry;
  const double d2 = dx * dx + dy * dy;
  if (d2 >= 1.0) return 0.0;
  return (1.0 - d2) * (1.0 - d2);
}

Vec3 region_direction(const Region& r, double x) {
  Vec3 d = r.direction;
  if (x < 0.0) d.x = -d.x;
  return d * (1.0 / norm(d));
}

FaceTemplate build_template() {
  constexpr std::size_t n = FaceTemplate::kGrid;
  constexpr std::size_t center = n / 2;
  FaceTemplate t;
  t.vertices.reserve(n * n);
  t.surface_uv.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      // Mirror-exact grid coordinates: column j and n-1-j map to +-a.
      const double a = (static_cast<double>(j) - static_cast<double>(center)) / static_cast<double>(center);
      const double b = (static_cast<double>(center) - static_cast<double>(i)) / static_cast<double>(center);
      // square -> disk
      const double u = a * std::sqrt(1.0 - 0.5 * b * b);
      const double v = b * std::sqrt(1.0 - 0.5 * a * a);
      const double x = kHalfWidth * u;
      const double y = kHalfHeight * v;
      const double r2 = u * u + v * v;
      const double ax = std::abs(x);
      double z = kDepth * std::sqrt(std::max(0.0, 1.0 - r2));
      z += 0.085 * gauss2(x, y + 0.04, 0.028, 0.06);          // nose
      z -= 0.025 * gauss2(ax - 0.15, y - 0.10, 0.035, 0.035);  // eye sockets
      z += 0.012 * gauss2(x, y - 0.19, 0.2, 0.025);           // brow ridge
      z += 0.015 * gauss2(x, y + 0.24, 0.07, 0.02);           // lips
      z += 0.010 * gauss2(ax - 0.18, y + 0.05, 0.05, 0.05);   // cheekbones
      t.vertices.push_back({x, y, z});
      t.surface_uv.push_back({u, v});
    }
  }

  auto idx = [](std::size_t i, std::size_t j) { return static_cast<std::uint32_t>(i * n + j); };
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = 0; j + 1 < n; ++j) {
      const auto a = idx(i, j), b = idx(i, j + 1), c = idx(i + 1, j), d = idx(i + 1, j + 1);
      // Diagonals mirror across the midline so the mesh is exactly symmetric.
      if (j < center) {
        t.faces.push_back({a, c, d});
        t.faces.push_back({a, d, b});
      } else {
        t.faces.push_back({a, c, b});
        t.faces.push_back({b, c, d});
      }
    }
  }

  t.nose_tip = 0;
  for (std::size_t k = 1; k < t.vertices.size(); ++k)
    if (t.vertices[k].z > t.vertices[t.nose_tip].z) t.nose_tip = k;

  t.shape_modes.assign(kNumShapeParams, std::vector<Vec3>(t.vertices.size()));
  for (std::size_t k = 0; k < t.vertices.size(); ++k) {
    const auto [u, v] = t.surface_uv[k];
    const double x = t.vertices[k].x;
    const double y = t.vertices[k].y;
    const double ax = std::abs(x);
    const double lower = std::max(0.0, -v);
    t.shape_modes[0][k] = {0.04 * u, 0.0, 0.0};                                  // face width
    t.shape_modes[1][k] = {0.0, 0.04 * v, 0.0};                                  // face height
    t.shape_modes[2][k] = {0.0, 0.0, 0.025 * gauss2(x, y + 0.04, 0.028, 0.06)};  // nose prominence
    t.shape_modes[3][k] = {0.04 * u * lower, 0.0, 0.0};                          // jaw width
    t.shape_modes[4][k] = {0.0, 0.0, 0.04 * std::max(0.0, 1.0 - u * u - v * v)};  // facial depth
    t.shape_modes[5][k] = {0.0, 0.0, 0.012 * gauss2(x, y - 0.19, 0.2, 0.025)};   // brow ridge
    t.shape_modes[6][k] = {0.0, 0.0, 0.015 * gauss2(ax - 0.18, y + 0.05, 0.05, 0.05)};  // cheeks
    t.shape_modes[7][k] = {0.0, -0.03 * lower * lower, 0.0};                     // chin length
  }

  for (std::size_t a = 0; a < kNumAus; ++a) {
    const Region& r = kRegions[a];
    t.region_weight[a].resize(t.vertices.size());
    t.au_basis[a].resize(t.vertices.size());
    for (std::size_t k = 0; k < t.vertices.size(); ++k) {
      const double x = t.vertices[k].x;
      const double w = region_weight_at(r, x, t.vertices[k].y);
      t.region_weight[a][k] = w;
      t.au_basis[a][k] = w == 0.0 ? Vec3{} : region_direction(r, x) * (r.amplitude * w);
    }
  }
  return t;
}

}  // namespace

const FaceTemplate& FaceTemplate::get() {
  static const FaceTemplate instance = build_template();
  return instance;
}

FaceMesh make_mesh(const std::vector<double>& shape_params, double wrinkle_amplitude) {
  if (shape_params.size() != kNumShapeParams) {
    throw ParameterError("expected " + std::to_string(kNumShapeParams) + " shape parameters");
  }
  const auto& t = FaceTemplate::get();
  FaceMesh mesh;
  mesh.vertices = t.vertices;
  for (std::size_t m = 0; m < kNumShapeParams; ++m) {
    const double s = shape_params[m];
    if (s == 0.0) continue;
    for (std::size_t k = 0; k < mesh.vertices.size(); ++k) mesh.vertices[k] = mesh.vertices[k] + t.shape_modes[m][k] * s;
  }
  mesh.faces = t.faces;
  mesh.shape_params = shape_params;
  mesh.au_basis = t.au_basis;
  mesh.surface_uv = t.surface_uv;
  mesh.wrinkle_amplitude = wrinkle_amplitude;
  return mesh;
}

FaceMesh make_identity_mesh(const DemographicProfile& profile) {
  Rng rng(derive_seed(profile.identity_seed, 0x5a9e));
  std::vector<double> params(kNumShapeParams);
  for (auto& p : params) p = rng.truncated_normal(1.0);
  params[3] += profile.gender == Gender::Man ? 0.5 : -0.5;
  const double base = profile.age_group == AgeGroup::Elderly ? 0.7 : 0.15;
  const double wrinkle = base + rng.uniform(-0.1, 0.1);
  return make_mesh(params, wrinkle);
}

FaceMesh apply_au_rig(const FaceMesh& mesh, const AUVector& au) {
  au.validate();
  FaceMesh out = mesh;
  const auto& weights = FaceTemplate::get().region_weight;
  for (std::size_t a = 0; a < kNumAus; ++a) {
    const double s = au.values[a] / kAuMax[a];
    if (s == 0.0) continue;
    const auto& basis = mesh.au_basis[a];
    for (std::size_t k = 0; k < out.vertices.size(); ++k) out.vertices[k] = out.vertices[k] + basis[k] * s;
    if (out.expression_crease.empty()) out.expression_crease.assign(out.vertices.size(), 0.0);
    for (std::size_t k = 0; k < out.vertices.size(); ++k) out.expression_crease[k] += s * weights[a][k];
  }
  return out;
}

double max_displacement() {
  static const double value = [] {
    const auto& t = FaceTemplate::get();
    double total = 0.0;
    for (const auto& basis : t.au_basis) {
      double mx = 0.0;
      for (const auto& d : basis) mx = std::max(mx, norm(d));
      total += mx;
    }
    return total;
  }();
  return value;
}

std::vector<std::uint32_t> region_vertices(Au au) {
  const auto& w = FaceTemplate::get().region_weight[static_cast<std::size_t>(au)];
  std::vector<std::uint32_t> out;
  for (std::size_t k = 0; k < w.size(); ++k)
    if (w[k] > 0.0) out.push_back(static_cast<std::uint32_t>(k));
  return out;
}

}  // namespace painforge
