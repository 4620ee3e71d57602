#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "painforge/core/errors.hpp"
#include "painforge/core/hash.hpp"
#include "painforge/synth/au.hpp"
#include "painforge/synth/dataset.hpp"
#include "painforge/synth/demographics.hpp"
#include "painforge/synth/manifest.hpp"
#include "painforge/synth/mesh.hpp"
#include "painforge/synth/render.hpp"
#include "painforge/tensor/tensor_io.hpp"
#include "support.hpp"

using namespace painforge;
namespace fs = std::filesystem;
using painforge::testing::ScratchDir;

namespace {

AUVector au_of(std::array<double, 6> v) { return AUVector{v}; }

std::vector<bool> region_flags(std::initializer_list<Au> aus) {
  std::vector<bool> flags(FaceTemplate::get().vertices.size(), false);
  for (auto au : aus)
    for (auto v : region_vertices(au)) flags[v] = true;
  return flags;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files[fs::relative(entry.path(), dir).string()] = read_file(entry.path());
  }
  return files;
}

}  // namespace

TEST_CASE("pspi_score examples") {
  CHECK(pspi_score(au_of({0, 0, 0, 0, 0, 0})) == 0);
  CHECK(pspi_score(au_of({2, 3, 1, 0, 2, 1})) == 8);
  CHECK(pspi_score(au_of({5, 5, 5, 5, 5, 1})) == 16);
  // continuous intensities are rounded to FACS codes first
  CHECK(pspi_score(au_of({1.4, 2.6, 0, 0, 0, 0})) == 4);
}

TEST_CASE("pspi_score matches brute force over every integer configuration") {
  std::size_t n = 0;
  for (int a4 = 0; a4 <= 5; ++a4)
    for (int a6 = 0; a6 <= 5; ++a6)
      for (int a7 = 0; a7 <= 5; ++a7)
        for (int a9 = 0; a9 <= 5; ++a9)
          for (int a10 = 0; a10 <= 5; ++a10)
            for (int a43 = 0; a43 <= 1; ++a43) {
              const int expected = a4 + (a6 > a7 ? a6 : a7) + (a9 > a10 ? a9 : a10) + a43;
              REQUIRE(pspi_score(au_of({double(a4), double(a6), double(a7), double(a9), double(a10), double(a43)})) ==
                      expected);
              ++n;
            }
  CHECK(n == 15552);
  std::size_t total = 0;
  for (auto c : pspi_config_counts()) {
    CHECK(c > 0);
    total += c;
  }
  CHECK(total == 15552);
}

TEST_CASE("AUVector range validation") {
  CHECK_NOTHROW(au_of({5, 0, 0, 0, 0, 1}).validate());
  CHECK_THROWS_AS(au_of({5.5, 0, 0, 0, 0, 0}).validate(), ParameterError);
  CHECK_THROWS_AS(au_of({0, -1, 0, 0, 0, 0}).validate(), ParameterError);
  CHECK_THROWS_AS(au_of({0, 0, 0, 0, 0, 0.5}).validate(), ParameterError);
}

TEST_CASE("sample_au_config examples") {
  CHECK(sample_au_config(0, 123).is_zero());
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto au = sample_au_config(16, s);
    CHECK(au[Au::AU4] == 5);
    CHECK(au[Au::AU43] == 1);
    CHECK(std::max(au[Au::AU6], au[Au::AU7]) == 5);
    CHECK(std::max(au[Au::AU9], au[Au::AU10]) == 5);
  }
  std::set<std::array<double, 6>> distinct;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto au = sample_au_config(8, s * 7919 + 1);
    REQUIRE(pspi_score(au) == 8);
    distinct.insert(au.values);
  }
  CHECK(distinct.size() > 100);
  CHECK_THROWS_AS(sample_au_config(17, 0), ParameterError);
  CHECK_THROWS_AS(sample_au_config(-1, 0), ParameterError);
}

TEST_CASE("template mesh is well formed") {
  const auto& t = FaceTemplate::get();
  CHECK(t.vertices.size() == 45 * 45);
  for (const auto& f : t.faces) {
    for (auto v : f) REQUIRE(v < t.vertices.size());
    const double area = norm(cross(t.vertices[f[1]] - t.vertices[f[0]], t.vertices[f[2]] - t.vertices[f[0]]));
    REQUIRE(area > 1e-10);
  }
  // mirror symmetry: vertex (i, j) mirrors (i, n-1-j)
  const std::size_t n = FaceTemplate::kGrid;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto& a = t.vertices[i * n + j];
      const auto& b = t.vertices[i * n + (n - 1 - j)];
      REQUIRE(a.x == -b.x);
      REQUIRE(a.y == b.y);
      REQUIRE(a.z == b.z);
    }
  // AU regions are pairwise disjoint
  for (std::size_t a = 0; a < kNumAus; ++a) {
    CHECK(!region_vertices(static_cast<Au>(a)).empty());
    for (std::size_t b = a + 1; b < kNumAus; ++b)
      for (std::size_t k = 0; k < t.vertices.size(); ++k)
        REQUIRE(!(t.region_weight[a][k] > 0 && t.region_weight[b][k] > 0));
  }
}

TEST_CASE("make_identity_mesh determinism and variation") {
  DemographicProfile p{AgeGroup::Young, Ethnicity::White, Gender::Woman, 1234};
  const auto m1 = make_identity_mesh(p);
  const auto m2 = make_identity_mesh(p);
  CHECK(m1.vertices == m2.vertices);

  auto q = p;
  q.identity_seed = 99;
  const auto m3 = make_identity_mesh(q);
  std::size_t differing = 0;
  for (std::size_t k = 0; k < m1.vertices.size(); ++k) {
    differing += m1.vertices[k].x != m3.vertices[k].x;
    differing += m1.vertices[k].y != m3.vertices[k].y;
    differing += m1.vertices[k].z != m3.vertices[k].z;
  }
  CHECK(static_cast<double>(differing) >= 0.01 * 3.0 * static_cast<double>(m1.vertices.size()));

  const auto zero = make_mesh(std::vector<double>(kNumShapeParams, 0.0), 0.0);
  CHECK(zero.vertices == FaceTemplate::get().vertices);

  auto old = p;
  old.age_group = AgeGroup::Elderly;
  CHECK(make_identity_mesh(old).wrinkle_amplitude > m1.wrinkle_amplitude);
}

TEST_CASE("apply_au_rig identity, locality, additivity and linearity") {
  const auto mesh = make_identity_mesh({AgeGroup::Young, Ethnicity::Black, Gender::Man, 7});
  CHECK(apply_au_rig(mesh, AUVector{}).vertices == mesh.vertices);
  CHECK(apply_au_rig(mesh, AUVector{}).faces == mesh.faces);

  const auto brow = apply_au_rig(mesh, au_of({5, 0, 0, 0, 0, 0}));
  const auto flags = region_flags({Au::AU4});
  std::size_t moved = 0;
  for (std::size_t k = 0; k < mesh.vertices.size(); ++k) {
    if (brow.vertices[k] != mesh.vertices[k]) {
      ++moved;
      REQUIRE(flags[k]);
    }
  }
  CHECK(moved > 10);

  const auto a = au_of({2, 0, 3, 0, 0, 1});
  const auto b = au_of({0, 4, 0, 1, 5, 0});
  auto ab = a;
  for (std::size_t k = 0; k < kNumAus; ++k) ab.values[k] += b.values[k];
  const auto ra = apply_au_rig(mesh, a), rb = apply_au_rig(mesh, b), rab = apply_au_rig(mesh, ab);
  for (std::size_t k = 0; k < mesh.vertices.size(); ++k) {
    const Vec3 lhs = ra.vertices[k] + rb.vertices[k] - mesh.vertices[k] * 2.0;
    const Vec3 rhs = rab.vertices[k] - mesh.vertices[k];
    REQUIRE(norm(lhs - rhs) < 1e-12);
  }

  const auto full = au_of({3, 2, 5, 1, 4, 1});
  const auto rfull = apply_au_rig(mesh, full);
  for (double alpha : {0.0, 0.25, 0.5, 1.0}) {
    auto scaled = full;
    for (std::size_t k = 0; k < 5; ++k) scaled.values[k] *= alpha;
    scaled.values[5] = alpha == 1.0 ? 1.0 : 0.0;
    if (alpha != 1.0) continue;  // AU43 is binary; graded check below
    const auto rs = apply_au_rig(mesh, scaled);
    for (std::size_t k = 0; k < mesh.vertices.size(); ++k)
      REQUIRE(norm((rs.vertices[k] - mesh.vertices[k]) - (rfull.vertices[k] - mesh.vertices[k]) * alpha) < 1e-12);
  }
  const auto graded = au_of({3, 2, 5, 1, 4, 0});
  const auto rg = apply_au_rig(mesh, graded);
  for (double alpha : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0}) {
    auto scaled = graded;
    for (auto& v : scaled.values) v *= alpha;
    const auto rs = apply_au_rig(mesh, scaled);
    for (std::size_t k = 0; k < mesh.vertices.size(); ++k)
      REQUIRE(norm((rs.vertices[k] - mesh.vertices[k]) - (rg.vertices[k] - mesh.vertices[k]) * alpha) < 1e-12);
  }

  CHECK_THROWS_AS(apply_au_rig(mesh, au_of({6, 0, 0, 0, 0, 0})), ParameterError);
}

TEST_CASE("render_depth: nose tip, symmetry, errors") {
  const auto tmpl = make_mesh(std::vector<double>(kNumShapeParams, 0.0), 0.0);
  const std::size_t res = 64;
  const auto depth = render_depth(tmpl, 0.0, res);
  const auto max_it = std::max_element(depth.pixels.begin(), depth.pixels.end());
  const auto max_pix = static_cast<std::size_t>(max_it - depth.pixels.begin());
  const auto& tip = tmpl.vertices[FaceTemplate::get().nose_tip];
  const double tip_col = (tip.x + kViewHalfExtent) / (2 * kViewHalfExtent) * res - 0.5;
  const double tip_row = (kViewHalfExtent - tip.y) / (2 * kViewHalfExtent) * res - 0.5;
  CHECK(std::abs(static_cast<double>(max_pix % res) - tip_col) <= 1.0);
  CHECK(std::abs(static_cast<double>(max_pix / res) - tip_row) <= 1.0);

  for (std::size_t r = 0; r < res; ++r)
    for (std::size_t c = 0; c < res; ++c) REQUIRE(std::abs(depth.at(r, c) - depth.at(r, res - 1 - c)) < 1e-9);

  for (double v : depth.pixels) REQUIRE((v >= 0.0 && v <= 1.0));
  CHECK(depth.at(0, 0) == 0.0);

  FaceMesh empty;
  CHECK_THROWS_AS(render_depth(empty, 0.0, res), GeometryError);
  CHECK_THROWS_AS(render_depth(tmpl, 91.0, res), ParameterError);
  CHECK_NOTHROW(render_depth(tmpl, -90.0, res));
}

TEST_CASE("render_rgb: determinism, locality, albedo override") {
  const DemographicProfile p{AgeGroup::Elderly, Ethnicity::SouthAsian, Gender::Woman, 42};
  const auto mesh = make_identity_mesh(p);
  const std::size_t res = 64;
  const auto img1 = render_rgb(mesh, p, 30.0, res);
  const auto img2 = render_rgb(mesh, p, 30.0, res);
  CHECK(img1.pixels == img2.pixels);

  for (const auto& au : {au_of({5, 0, 0, 0, 0, 0}), au_of({0, 3, 0, 0, 4, 1}), au_of({2, 0, 5, 5, 0, 0})}) {
    const auto rigged = apply_au_rig(mesh, au);
    std::vector<bool> flags(mesh.vertices.size(), false);
    for (std::size_t a = 0; a < kNumAus; ++a)
      if (au.values[a] != 0)
        for (auto v : region_vertices(static_cast<Au>(a))) flags[v] = true;
    for (double yaw : {0.0, -30.0}) {
      const auto n_img = render_rgb(mesh, p, yaw, res);
      const auto r_img = render_rgb(rigged, p, yaw, res);
      auto support = project_vertex_support(rasterize(mesh, yaw, res), mesh, flags);
      const auto support_r = project_vertex_support(rasterize(rigged, yaw, res), rigged, flags);
      for (std::size_t i = 0; i < support.size(); ++i) support[i] = support[i] || support_r[i];
      const auto allowed = dilate(support, res, 2);
      std::size_t changed = 0;
      for (std::size_t pix = 0; pix < res * res; ++pix) {
        bool diff = false;
        for (std::size_t ch = 0; ch < 3; ++ch) diff = diff || n_img.pixels[pix * 3 + ch] != r_img.pixels[pix * 3 + ch];
        if (diff) {
          ++changed;
          REQUIRE(allowed[pix]);
        }
      }
      CHECK(changed > 0);
    }
  }

  RenderOptions black;
  black.albedo_override = std::array<double, 3>{0, 0, 0};
  const auto dark = render_rgb(mesh, p, 0.0, res, black);
  for (double v : dark.pixels) REQUIRE(v == 0.0);
}

TEST_CASE("render_heatmap behaviour") {
  const DemographicProfile p{AgeGroup::Young, Ethnicity::EastAsian, Gender::Man, 5};
  const auto mesh = make_identity_mesh(p);
  const std::size_t res = 64;
  const auto zero = render_heatmap(mesh, mesh, 0.0, res);
  for (double v : zero.pixels) REQUIRE(v == 0.0);

  const auto r1 = apply_au_rig(mesh, au_of({1, 0, 0, 0, 0, 0}));
  const auto r2 = apply_au_rig(mesh, au_of({2, 0, 0, 0, 0, 0}));
  const auto h1 = render_heatmap(mesh, r1, 0.0, res);
  const auto allowed = dilate(project_vertex_support(rasterize(r1, 0.0, res), r1, region_flags({Au::AU4})), res, 0);
  std::size_t nonzero = 0;
  for (std::size_t pix = 0; pix < h1.pixels.size(); ++pix) {
    if (h1.pixels[pix] > 0.0) {
      ++nonzero;
      REQUIRE(allowed[pix]);
    }
  }
  CHECK(nonzero > 5);

  // Linearity of the rig: per-vertex magnitudes double exactly (to rounding).
  const auto m1 = displacement_magnitudes(mesh, r1);
  const auto m2 = displacement_magnitudes(mesh, r2);
  for (std::size_t k = 0; k < m1.size(); ++k) REQUIRE(std::abs(m2[k] - 2.0 * m1[k]) <= 1e-12);
  // Pixel values follow up to the small shift of the rigged raster.
  const auto h2 = render_heatmap(mesh, r2, 0.0, res);
  double s1 = 0, s2 = 0;
  for (std::size_t pix = 0; pix < h1.pixels.size(); ++pix) {
    s1 += h1.pixels[pix];
    s2 += h2.pixels[pix];
  }
  CHECK(s2 / s1 == doctest::Approx(2.0).epsilon(0.05));

  // Face order does not matter.
  auto shuffled = r2;
  Rng rng(3);
  rng.shuffle(shuffled.faces);
  auto neutral_shuffled = mesh;
  neutral_shuffled.faces = shuffled.faces;
  const auto hs = render_heatmap(neutral_shuffled, shuffled, 0.0, res);
  for (std::size_t pix = 0; pix < h2.pixels.size(); ++pix) REQUIRE(std::abs(hs.pixels[pix] - h2.pixels[pix]) < 1e-12);

  auto broken = mesh;
  broken.vertices.pop_back();
  CHECK_THROWS_AS(render_heatmap(mesh, broken, 0.0, res), GeometryError);

  for (double v : render_heatmap(mesh, apply_au_rig(mesh, au_of({5, 5, 5, 5, 5, 1})), 0.0, res).pixels)
    REQUIRE((v >= 0.0 && v <= 1.0));
}

TEST_CASE("sample_demographics marginals") {
  const auto ref = DemographicConfig::reference();
  CHECK(ref.total() == 2500);
  const auto profiles = sample_demographics(ref, 1);
  CHECK(profiles.size() == 2500);
  const auto t = tally(profiles);
  CHECK(t.age == std::array<std::size_t, 2>{1563, 937});
  CHECK(t.ethnicity == std::array<std::size_t, 6>{646, 460, 469, 82, 585, 258});
  CHECK(t.gender == std::array<std::size_t, 2>{1723, 777});

  const auto other = sample_demographics(ref, 2);
  CHECK(tally(other) == t);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < profiles.size(); ++i)
    differ += profiles[i].age_group != other[i].age_group || profiles[i].ethnicity != other[i].ethnicity ||
              profiles[i].gender != other[i].gender;
  CHECK(differ > 0);

  DemographicConfig small;
  small.age = {6, 4};
  small.ethnicity = {2, 2, 2, 2, 1, 1};
  small.gender = {5, 5};
  const auto sp = sample_demographics(small, 9);
  CHECK(std::count_if(sp.begin(), sp.end(), [](auto& p) { return p.age_group == AgeGroup::Young; }) == 6);

  auto bad = ref;
  bad.gender = {1700, 700};
  CHECK_THROWS_AS(sample_demographics(bad, 0), ConfigError);

  for (std::size_t n : {1, 7, 100, 256, 1000}) CHECK(DemographicConfig::scaled_reference(n).total() == n);
}

TEST_CASE("manifest line round trip and errors") {
  ManifestRow row;
  row.identity_id = 3;
  row.view_id = 1;
  row.camera_yaw = -30.0;
  row.rgb_path = "identities/00003/expr0_v1.p3dt";
  row.heatmap_path = "identities/00003/expr0_heatmap.p3dt";
  row.au = au_of({2, 3, 1, 0, 2, 1});
  row.pspi = 8;
  row.ethnicity = Ethnicity::MiddleEastern;
  row.gender = Gender::Woman;
  row.split_subject_id = 3;
  row.expression_id = 0;
  CHECK(parse_manifest_line(manifest_line(row), 1) == row);
  CHECK_THROWS_AS(parse_manifest_line("{\"identity_id\": 1}", 4), DataError);
  CHECK_THROWS_AS(parse_manifest_line("not json", 2), DataError);
}

TEST_CASE("build_dataset: counts, invariants, determinism, resume") {
  ScratchDir scratch("dataset");
  DatasetSpec spec;
  spec.identities = 1;
  spec.expressions_per_identity = 1;
  spec.yaws = default_yaws(1);
  spec.resolution = 32;
  spec.seed = 5;
  const auto tiny = build_dataset(spec, scratch.path() / "tiny", false, 1);
  CHECK(tiny.frames == 2);
  CHECK(tiny.heatmaps == 1);
  CHECK(read_manifest(tiny.manifest_path).rows.size() == 2);

  spec.identities = 6;
  spec.expressions_per_identity = 3;
  spec.yaws = default_yaws(3);
  const fs::path a = scratch.path() / "a";
  const auto built = build_dataset(spec, a, false, 2);
  CHECK(built.frames == 6 * 4 * 3);
  CHECK(built.heatmaps == 18);
  const auto manifest = read_manifest(built.manifest_path);
  CHECK(manifest.rows.size() == built.frames);
  std::set<std::string> heatmaps;
  for (const auto& row : manifest.rows) {
    REQUIRE(row.pspi == pspi_score(row.au));
    const auto rgb = read_tensor_file(manifest.resolve(row.rgb_path));
    CHECK(rgb.shape == Shape{32, 32, 3});
    if (row.heatmap_path) {
      heatmaps.insert(*row.heatmap_path);
      const auto heat = read_tensor_file(manifest.resolve(*row.heatmap_path));
      const bool all_zero = std::all_of(heat.values.begin(), heat.values.end(), [](double v) { return v == 0.0; });
      REQUIRE(all_zero == row.au.is_zero());
    } else {
      CHECK(row.is_neutral());
      CHECK(row.au.is_zero());
    }
  }
  CHECK(heatmaps.size() == 18);

  // same seed, different worker count: byte-identical
  const fs::path b = scratch.path() / "b";
  build_dataset(spec, b, false, 1);
  CHECK(snapshot(a) == snapshot(b));

  // interrupted build: drop two identities' outputs, resume regenerates them
  const auto before = snapshot(a);
  fs::remove_all(a / "identities" / "00002");
  fs::remove(a / "identities" / "00004" / "rows.jsonl");
  const auto resumed = build_dataset(spec, a, true, 1);
  CHECK(resumed.identities_built == 2);
  CHECK(resumed.identities_skipped == 4);
  CHECK(snapshot(a) == before);
  const auto again = build_dataset(spec, a, true, 1);
  CHECK(again.identities_built == 0);
  CHECK(again.manifest_hash == built.manifest_hash);

  auto changed = spec;
  changed.seed = 6;
  CHECK_THROWS_AS(build_dataset(changed, a, true, 1), ConfigError);

  auto bad = spec;
  bad.pspi_distribution[0] += 0.5;
  CHECK_THROWS_AS(build_dataset(bad, scratch.path() / "bad", false, 1), ConfigError);

  const fs::path blocker = scratch.path() / "file";
  write_file_atomic(blocker, "x");
  CHECK_THROWS_AS(build_dataset(spec, blocker / "sub", false, 1), IoError);
}
