#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "adnet/rng.hpp"
#include "adnet/supervoxel.hpp"

using namespace adnet;

namespace {

Volume make_volume(std::array<int, 3> dims, std::vector<float> data,
                   std::array<double, 3> spacing = {1, 1, 1}) {
  Volume v;
  v.dims = dims;
  v.spacing = spacing;
  v.data = std::move(data);
  return v;
}

Volume random_volume(std::array<int, 3> dims, uint64_t seed,
                     std::array<double, 3> spacing = {1, 1, 1}) {
  Volume v;
  v.dims = dims;
  v.spacing = spacing;
  auto rng = make_rng(seed);
  std::uniform_real_distribution<float> dist(0.f, 1.f);
  v.data.resize(size_t(v.num_voxels()));
  for (auto& x : v.data) x = dist(rng);
  return v;
}

int count_labels(const LabelVolume& lv) {
  uint32_t mx = 0;
  for (uint32_t l : lv.labels) mx = std::max(mx, l);
  return int(mx);
}

// ---------------------------------------------------------------------------
// Reference implementation, written independently of the engine: explicit
// 26-neighbor pair enumeration, rankless union-find, the same predicate.
// ---------------------------------------------------------------------------

struct OracleEdge {
  int64_t a, b;
  float w;
};

double oracle_factor(int dz, int dy, int dx, const std::array<double, 3>& sp) {
  if (dz == 0) return 1.0;
  const double pz = dz * sp[0], py = dy * sp[1], px = dx * sp[2];
  const double phys = std::sqrt(pz * pz + py * py + px * px);
  const double inplane = std::sqrt(py * py + px * px);
  if (inplane > 0.0) return phys / inplane;
  return phys / (0.5 * (sp[1] + sp[2]));
}

std::vector<OracleEdge> oracle_edges(const Volume& v) {
  std::vector<OracleEdge> edges;
  const int D = v.dims[0], H = v.dims[1], W = v.dims[2];
  for (int z = 0; z < D; ++z)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int dz = -1; dz <= 1; ++dz)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              if (dz == 0 && dy == 0 && dx == 0) continue;
              const int zz = z + dz, yy = y + dy, xx = x + dx;
              if (zz < 0 || zz >= D || yy < 0 || yy >= H || xx < 0 || xx >= W)
                continue;
              const int64_t a = v.index(z, y, x), b = v.index(zz, yy, xx);
              if (a >= b) continue;  // one edge per unordered pair
              const float diff = std::abs(v.data[size_t(a)] - v.data[size_t(b)]);
              edges.push_back(
                  {a, b, float(double(diff) * oracle_factor(dz, dy, dx, v.spacing))});
            }
  std::sort(edges.begin(), edges.end(), [](const OracleEdge& l, const OracleEdge& r) {
    if (l.w != r.w) return l.w < r.w;
    if (l.a != r.a) return l.a < r.a;
    return l.b < r.b;
  });
  return edges;
}

struct OracleForest {
  std::vector<int64_t> parent;
  std::vector<int64_t> size;
  std::vector<float> internal;

  explicit OracleForest(int64_t n)
      : parent(size_t(n)), size(size_t(n), 1), internal(size_t(n), 0.f) {
    std::iota(parent.begin(), parent.end(), int64_t{0});
  }
  int64_t find(int64_t x) {
    while (parent[size_t(x)] != x) x = parent[size_t(x)];
    return x;
  }
  void unite(int64_t ra, int64_t rb, float w) {
    parent[size_t(rb)] = ra;
    size[size_t(ra)] += size[size_t(rb)];
    internal[size_t(ra)] = w;
  }
};

LabelVolume oracle_supervoxels(const Volume& v, const SupervoxelParams& p) {
  auto edges = oracle_edges(v);
  OracleForest f(v.num_voxels());
  for (const auto& e : edges) {
    const int64_t ra = f.find(e.a), rb = f.find(e.b);
    if (ra == rb) continue;
    const double ta = double(f.internal[size_t(ra)]) + p.scale_k / double(f.size[size_t(ra)]);
    const double tb = double(f.internal[size_t(rb)]) + p.scale_k / double(f.size[size_t(rb)]);
    if (double(e.w) <= ta && double(e.w) <= tb) f.unite(ra, rb, e.w);
  }
  if (p.rho > 1) {
    for (const auto& e : edges) {
      const int64_t ra = f.find(e.a), rb = f.find(e.b);
      if (ra == rb) continue;
      if (f.size[size_t(ra)] < p.rho || f.size[size_t(rb)] < p.rho)
        f.unite(ra, rb, e.w);
    }
  }
  LabelVolume lv;
  lv.dims = v.dims;
  lv.labels.resize(size_t(v.num_voxels()));
  std::map<int64_t, uint32_t> relabel;
  uint32_t next = 1;
  for (int64_t i = 0; i < v.num_voxels(); ++i) {
    auto [it, inserted] = relabel.try_emplace(f.find(i), next);
    if (inserted) ++next;
    lv.labels[size_t(i)] = it->second;
  }
  return lv;
}

// 26-connected flood fill: every label must form a single component.
void check_labels_connected(const LabelVolume& lv) {
  const int D = lv.dims[0], H = lv.dims[1], W = lv.dims[2];
  std::vector<char> seen(size_t(lv.num_voxels()), 0);
  int components = 0;
  std::vector<int64_t> stack;
  for (int64_t s = 0; s < lv.num_voxels(); ++s) {
    if (seen[size_t(s)]) continue;
    ++components;
    const uint32_t lab = lv.labels[size_t(s)];
    seen[size_t(s)] = 1;
    stack.assign(1, s);
    while (!stack.empty()) {
      const int64_t cur = stack.back();
      stack.pop_back();
      const int z = int(cur / (int64_t(H) * W));
      const int y = int(cur / W % H);
      const int x = int(cur % W);
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int zz = z + dz, yy = y + dy, xx = x + dx;
            if (zz < 0 || zz >= D || yy < 0 || yy >= H || xx < 0 || xx >= W)
              continue;
            const int64_t n = lv.index(zz, yy, xx);
            if (!seen[size_t(n)] && lv.labels[size_t(n)] == lab) {
              seen[size_t(n)] = 1;
              stack.push_back(n);
            }
          }
    }
  }
  CHECK(components == count_labels(lv));
}

void check_partition_invariants(const LabelVolume& lv, int64_t rho) {
  const int L = count_labels(lv);
  REQUIRE(L >= 1);
  std::vector<int64_t> counts(size_t(L) + 1, 0);
  uint32_t max_seen = 0;
  for (uint32_t l : lv.labels) {
    REQUIRE(l >= 1);
    REQUIRE(l <= uint32_t(L));
    // labels are assigned in first-appearance order
    CHECK(l <= max_seen + 1);
    max_seen = std::max(max_seen, l);
    ++counts[l];
  }
  const int64_t floor_size = std::min<int64_t>(rho, lv.num_voxels());
  for (int l = 1; l <= L; ++l) CHECK(counts[size_t(l)] >= floor_size);
  check_labels_connected(lv);
}

}  // namespace

TEST_CASE("parameter validation") {
  SupervoxelParams p;
  p.validate();
  p.rho = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.rho = 1;
  p.scale_k = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.scale_k = 1;
  p.presmooth_sigma = -1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("edge counts") {
  CHECK(build_adjacency_edges(make_volume({1, 1, 1}, {0.f})).empty());
  // 2x2x2: every voxel pair is a 26-neighbor pair
  Volume v = random_volume({2, 2, 2}, 1);
  CHECK(build_adjacency_edges(v).size() == 28);
}

TEST_CASE("anisotropy scales only edges that cross slices") {
  // dims (2,1,2), spacing (3,1,1), intensities 0,1,2,4
  Volume v = make_volume({2, 1, 2}, {0.f, 1.f, 2.f, 4.f}, {3, 1, 1});
  auto edges = build_adjacency_edges(v);
  REQUIRE(edges.size() == 6);
  auto weight_of = [&](int64_t a, int64_t b) {
    for (const auto& e : edges)
      if (e.a == a && e.b == b) return e.w;
    REQUIRE(false);
    return 0.f;
  };
  const float rt10 = float(std::sqrt(10.0));
  CHECK(weight_of(0, 1) == 1.0f);          // in-plane, unscaled
  CHECK(weight_of(2, 3) == 2.0f);          // in-plane, unscaled
  CHECK(weight_of(0, 2) == 6.0f);          // pure z: |0-2| * 3/1
  CHECK(weight_of(1, 3) == 9.0f);          // pure z: |1-4| * 3/1
  CHECK(weight_of(0, 3) == doctest::Approx(4 * rt10).epsilon(1e-6));
  CHECK(weight_of(1, 2) == doctest::Approx(rt10).epsilon(1e-6));
}

TEST_CASE("isotropic spacing leaves pure-z edges unscaled") {
  Volume v = make_volume({2, 1, 1}, {0.f, 0.5f});
  auto edges = build_adjacency_edges(v);
  REQUIRE(edges.size() == 1);
  CHECK(edges[0].w == 0.5f);

  Volume aniso = make_volume({2, 1, 1}, {0.f, 0.5f}, {3, 1, 1});
  CHECK(build_adjacency_edges(aniso)[0].w == 1.5f);
}

TEST_CASE("segment_graph merges a constant volume into one component") {
  Volume v = make_volume({2, 2, 2}, std::vector<float>(8, 0.7f));
  auto edges = build_adjacency_edges(v);
  SupervoxelParams p;
  auto ds = segment_graph(edges, v.num_voxels(), p);
  CHECK(ds.num_components() == 1);
}

TEST_CASE("no edges means all singletons") {
  std::vector<Edge> edges;
  SupervoxelParams p;
  auto ds = segment_graph(edges, 5, p);
  CHECK(ds.num_components() == 5);
}

TEST_CASE("merge threshold is inclusive") {
  SupervoxelParams p;  // scale_k = 1
  {
    Volume v = make_volume({1, 1, 2}, {0.f, 1.f});
    auto edges = build_adjacency_edges(v);
    auto ds = segment_graph(edges, 2, p);  // w = 1 <= 0 + 1/1
    CHECK(ds.num_components() == 1);
  }
  {
    Volume v = make_volume({1, 1, 2}, {0.f, 1.5f});
    auto edges = build_adjacency_edges(v);
    auto ds = segment_graph(edges, 2, p);  // w = 1.5 > 1
    CHECK(ds.num_components() == 2);
  }
}

TEST_CASE("contrast step splits two blocks") {
  Volume v = make_volume({1, 1, 4}, {0.f, 0.f, 10.f, 10.f});
  SupervoxelParams p;
  auto lv = generate_supervoxels(v, p);
  CHECK(lv.labels == std::vector<uint32_t>{1, 1, 2, 2});
}

TEST_CASE("min size pass absorbs small components") {
  // 4x4x4, a 2x2x2 corner at intensity 5 against background 0:
  // sizes 8 and 56 before the floor is applied.
  Volume v = make_volume({4, 4, 4}, std::vector<float>(64, 0.f));
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) v.at(z, y, x) = 5.f;

  SupervoxelParams p;
  p.scale_k = 0.5;
  auto lv = generate_supervoxels(v, p);
  REQUIRE(count_labels(lv) == 2);
  int64_t n1 = std::count(lv.labels.begin(), lv.labels.end(), 1u);
  int64_t n2 = std::count(lv.labels.begin(), lv.labels.end(), 2u);
  // label 1 appears first in scan order: that is the corner block
  CHECK(n1 == 8);
  CHECK(n2 == 56);
  CHECK(lv.at(0, 0, 0) == 1);
  CHECK(lv.at(3, 3, 3) == 2);

  p.rho = 10;
  auto merged = generate_supervoxels(v, p);
  CHECK(count_labels(merged) == 1);

  p.rho = 1000;  // >= volume size: always one component
  CHECK(count_labels(generate_supervoxels(random_volume({4, 4, 4}, 3), p)) == 1);
}

TEST_CASE("engine matches the reference implementation on small volumes") {
  auto rng = make_rng(2024);
  std::uniform_int_distribution<int> dim_dist(1, 4);
  std::uniform_real_distribution<double> sp_dist(0.5, 3.0);
  const double ks[] = {0.3, 1.0, 3.0};
  const int64_t rhos[] = {1, 2, 5};
  for (int trial = 0; trial < 100; ++trial) {
    std::array<int, 3> dims{dim_dist(rng), dim_dist(rng), dim_dist(rng)};
    std::array<double, 3> spacing{sp_dist(rng), sp_dist(rng), sp_dist(rng)};
    Volume v = random_volume(dims, 9000 + uint64_t(trial), spacing);
    SupervoxelParams p;
    p.scale_k = ks[trial % 3];
    p.rho = rhos[trial % 3];
    auto got = generate_supervoxels(v, p);
    auto want = oracle_supervoxels(v, p);
    REQUIRE(got.labels == want.labels);
  }
}

TEST_CASE("partition invariants hold on random volumes") {
  for (uint64_t seed : {100u, 101u, 102u}) {
    Volume v = random_volume({6, 10, 10}, seed);
    SupervoxelParams p;
    p.rho = 20;
    p.scale_k = 2.0;
    auto lv = generate_supervoxels(v, p);
    check_partition_invariants(lv, p.rho);
  }
}

TEST_CASE("supervoxel count is monotone in the size floor") {
  Volume v = random_volume({8, 16, 16}, 77);
  SupervoxelParams p;
  p.scale_k = 0.5;
  int prev = 1 << 30;
  for (int64_t rho : {10, 50, 200, 1000}) {
    p.rho = rho;
    const int L = count_labels(generate_supervoxels(v, p));
    CHECK(L <= prev);
    prev = L;
  }
  CHECK(prev == 1);  // rho >= volume size
}

TEST_CASE("generation is deterministic") {
  Volume v = random_volume({5, 9, 9}, 123);
  SupervoxelParams p;
  p.rho = 15;
  auto a = generate_supervoxels(v, p);
  auto b = generate_supervoxels(v, p);
  CHECK(a.labels == b.labels);
}

TEST_CASE("z spacing stops weak cross-slice merges") {
  // Two constant slices 0.05 apart. Isotropic spacing merges them
  // (0.05 <= k/16); stretching z scales every cross edge past the bound.
  Volume v = make_volume({2, 4, 4}, std::vector<float>(32, 0.f));
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) v.at(1, y, x) = 0.05f;

  SupervoxelParams p;  // scale_k = 1
  CHECK(count_labels(generate_supervoxels(v, p)) == 1);

  v.spacing = {3, 1, 1};
  auto lv = generate_supervoxels(v, p);
  CHECK(count_labels(lv) == 2);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      CHECK(lv.at(0, y, x) == 1);
      CHECK(lv.at(1, y, x) == 2);
    }
}

TEST_CASE("presmoothing is strictly in-plane") {
  Volume v = make_volume({2, 8, 8}, std::vector<float>(128, 0.f));
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) v.at(1, y, x) = 1.f;
  Volume s = presmooth_inplane(v, 2.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      CHECK(s.at(0, y, x) == doctest::Approx(0.0).epsilon(1e-6));
      CHECK(s.at(1, y, x) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("presmoothing reduces in-plane variance") {
  Volume v = random_volume({1, 16, 16}, 5);
  Volume s = presmooth_inplane(v, 1.5);
  auto variance = [](const std::vector<float>& d) {
    double mean = std::accumulate(d.begin(), d.end(), 0.0) / double(d.size());
    double acc = 0;
    for (float x : d) acc += (x - mean) * (x - mean);
    return acc / double(d.size());
  };
  CHECK(variance(s.data) < variance(v.data));
  CHECK(presmooth_inplane(v, 0.0).data == v.data);
}

TEST_CASE("constant volume yields a single supervoxel") {
  Volume v = make_volume({3, 5, 5}, std::vector<float>(75, 2.f));
  SupervoxelParams p;
  auto lv = generate_supervoxels(v, p);
  CHECK(count_labels(lv) == 1);
  for (uint32_t l : lv.labels) CHECK(l == 1);
}
