#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "ifsdf/errors.hpp"
#include "ifsdf/geom.hpp"
#include "oracles.hpp"

using namespace ifsdf;
using geom::PointCloud;

TEST_CASE("normalize: axis-aligned pair") {
  PointCloud cloud({{0, 0, 0}, {2, 0, 0}});
  auto [out, t] = geom::normalize(cloud);
  CHECK(out.point(0) == Vec3{-0.5, 0, 0});
  CHECK(out.point(1) == Vec3{0.5, 0, 0});
  CHECK(t.center == Vec3{1, 0, 0});
  CHECK(t.scale == doctest::Approx(2.0));
}

TEST_CASE("normalize: degenerate and invalid inputs") {
  CHECK_THROWS_AS(geom::normalize(PointCloud({{1, 1, 1}, {1, 1, 1}})), InputError);
  CHECK_THROWS_AS(geom::normalize(PointCloud(std::vector<Vec3>{})), InputError);
  std::vector<Vec3> bad = {{0, 0, 0}, {std::nan(""), 0, 0}};
  CHECK_THROWS_AS(PointCloud{bad}, InputError);
}

TEST_CASE("normalize: round trip within 1e-6 relative") {
  const auto pts = oracles::random_cloud(100, 7, 3.0);
  std::vector<Vec3> shifted = pts;
  for (Vec3& p : shifted) p += Vec3{10, -4, 2.5};
  PointCloud cloud(shifted);
  auto [out, t] = geom::normalize(cloud);
  for (int a = 0; a < 3; ++a) {
    CHECK(out.bounds().lo[a] >= -0.5 - 1e-12);
    CHECK(out.bounds().hi[a] <= 0.5 + 1e-12);
  }
  for (int i = 0; i < cloud.count(); ++i) {
    const Vec3 back = t.invert(out.point(i));
    CHECK(norm(back - shifted[i]) <= 1e-6 * std::max(1.0, norm(shifted[i])));
  }
}

TEST_CASE("knn: 1d distances and tie-breaking") {
  PointCloud cloud({{0, 0, 0}, {1, 0, 0}, {3, 0, 0}});
  CHECK(geom::knn(cloud, {0.9, 0, 0}, 2) == std::vector<int>{1, 0});
  CHECK(geom::knn(cloud, {0.9, 0, 0}, 3) == std::vector<int>{1, 0, 2});
  CHECK_THROWS_AS(geom::knn(cloud, {0, 0, 0}, 4), InputError);

  // Equidistant points resolve to the lower index.
  PointCloud ties({{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}});
  CHECK(geom::knn(ties, {0, 0, 0}, 2) == std::vector<int>{0, 1});
}

TEST_CASE("knn: matches brute force on random instances") {
  Rng rng(11);
  for (int trial = 0; trial < 6; ++trial) {
    const int n = 50 + static_cast<int>(rng.below(1950));
    const auto pts = oracles::random_cloud(n, 100 + trial);
    PointCloud cloud(pts);
    for (int qi = 0; qi < 100; ++qi) {
      const Vec3 q{rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)};
      const int k = 1 + static_cast<int>(rng.below(16));
      CHECK(geom::knn(cloud, q, k) == oracles::brute_knn(pts, q, k));
    }
  }
}

TEST_CASE("knn: duplicate coordinates keep index order") {
  std::vector<Vec3> pts(8, Vec3{0.25, 0.25, 0.25});
  pts.push_back({0.5, 0, 0});
  PointCloud cloud(pts);
  CHECK(geom::knn(cloud, {0.25, 0.25, 0.25}, 3) == std::vector<int>{0, 1, 2});
}

TEST_CASE("radius search matches a linear scan") {
  const auto pts = oracles::random_cloud(400, 21);
  PointCloud cloud(pts);
  Rng rng(22);
  for (int t = 0; t < 20; ++t) {
    const Vec3 q{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    const double r = rng.uniform(0.01, 0.3);
    std::vector<int> want;
    for (int i = 0; i < cloud.count(); ++i)
      if (norm(pts[i] - q) <= r) want.push_back(i);
    CHECK(cloud.index().radius_search(q, r) == want);
  }
}

TEST_CASE("sample_queries: empty and deterministic") {
  PointCloud cloud(oracles::sphere_cloud(200, 0.5, 3));
  const auto empty = geom::sample_queries(cloud, 0, 10, 8, 1);
  CHECK(empty.size() == 0);

  const auto a = geom::sample_queries(cloud, 5, 10, 8, 12345);
  const auto b = geom::sample_queries(cloud, 5, 10, 8, 12345);
  CHECK(a.queries.size() == 200 * 5);
  REQUIRE(a.queries.size() == b.queries.size());
  for (std::size_t i = 0; i < a.queries.size(); ++i) CHECK(a.queries[i] == b.queries[i]);
  CHECK(a.nn_index == b.nn_index);
  CHECK(a.neighbor_indices == b.neighbor_indices);

  const auto c = geom::sample_queries(cloud, 5, 10, 8, 54321);
  CHECK(c.queries[0] != a.queries[0]);
}

TEST_CASE("sample_queries: sigma equals the knn-oracle distance") {
  const auto pts = oracles::random_cloud(300, 5);
  PointCloud cloud(pts);
  const int sigma_k = 25;
  const auto sigmas = geom::query_sigmas(cloud, sigma_k);
  for (int i = 0; i < cloud.count(); i += 17) {
    const auto order = oracles::brute_knn(pts, pts[i], sigma_k + 1);
    CHECK(sigmas[i] == doctest::Approx(norm(pts[order[sigma_k]] - pts[i])).epsilon(1e-12));
  }
}

TEST_CASE("sample_queries: nn cache is exact and neighborhoods contain it") {
  const auto pts = oracles::random_cloud(500, 9);
  PointCloud cloud(pts);
  const auto batch = geom::sample_queries(cloud, 2, 20, 12, 77);
  for (int i = 0; i < batch.size(); i += 13) {
    CHECK(batch.nn_index[i] == oracles::brute_knn(pts, batch.queries[i], 1)[0]);
    const int* nb = batch.neighbors(i);
    bool has_nn = false;
    for (int j = 0; j < batch.k; ++j) has_nn |= nb[j] == batch.nn_index[i];
    CHECK(has_nn);
  }
}

TEST_CASE("xyz io round trip with comments") {
  const char* path = "test_geom_points.xyz";
  {
    std::FILE* fp = std::fopen(path, "w");
    std::fputs("# comment line\n1 2 3\n4,5,6\n\n7\t8\t9  # trailing\n", fp);
    std::fclose(fp);
  }
  const auto pts = geom::read_xyz(path);
  REQUIRE(pts.size() == 3);
  CHECK(pts[1] == Vec3{4, 5, 6});
  CHECK(pts[2] == Vec3{7, 8, 9});
  geom::write_xyz(path, pts);
  CHECK(geom::read_xyz(path) == pts);
  CHECK_THROWS_AS(geom::read_xyz("does_not_exist.xyz"), InputError);
  std::remove(path);
}
