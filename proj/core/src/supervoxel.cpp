#include "adnet/supervoxel.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace adnet {

void SupervoxelParams::validate() const {
  if (rho < 1) throw ConfigError("supervoxel: rho must be >= 1");
  if (scale_k <= 0) throw ConfigError("supervoxel: scale_k must be > 0");
  if (presmooth_sigma < 0)
    throw ConfigError("supervoxel: presmooth_sigma must be >= 0");
}

// ---------------------------------------------------------------------------
// union-find
// ---------------------------------------------------------------------------

DisjointSet::DisjointSet(int64_t n)
    : parent_(size_t(n)),
      rank_(size_t(n), 0),
      size_(size_t(n), 1),
      int_diff_(size_t(n), 0.0f),
      components_(n) {
  for (int64_t i = 0; i < n; ++i) parent_[size_t(i)] = i;
}

int64_t DisjointSet::find(int64_t x) {
  while (parent_[size_t(x)] != x) {
    parent_[size_t(x)] = parent_[size_t(parent_[size_t(x)])];  // path halving
    x = parent_[size_t(x)];
  }
  return x;
}

void DisjointSet::merge(int64_t ra, int64_t rb, float edge_weight) {
  if (rank_[size_t(ra)] < rank_[size_t(rb)]) std::swap(ra, rb);
  parent_[size_t(rb)] = ra;
  size_[size_t(ra)] += size_[size_t(rb)];
  int_diff_[size_t(ra)] = edge_weight;
  if (rank_[size_t(ra)] == rank_[size_t(rb)]) ++rank_[size_t(ra)];
  --components_;
}

// ---------------------------------------------------------------------------
// edge construction
// ---------------------------------------------------------------------------

namespace {

// The 13 lexicographically positive offsets of the 26-neighborhood; using
// only one direction per axis pair guarantees a < b for every edge.
struct Offset {
  int dz, dy, dx;
};

constexpr Offset kOffsets[13] = {
    {0, 0, 1}, {0, 1, -1}, {0, 1, 0}, {0, 1, 1},
    {1, -1, -1}, {1, -1, 0}, {1, -1, 1},
    {1, 0, -1}, {1, 0, 0}, {1, 0, 1},
    {1, 1, -1}, {1, 1, 0}, {1, 1, 1},
};

double anisotropy_factor(const Offset& o, const std::array<double, 3>& sp) {
  if (o.dz == 0) return 1.0;
  const double pz = o.dz * sp[0], py = o.dy * sp[1], px = o.dx * sp[2];
  const double phys = std::sqrt(pz * pz + py * py + px * px);
  const double inplane = std::sqrt(py * py + px * px);
  if (inplane > 0) return phys / inplane;
  // Pure-z offset: the in-plane length is zero, so normalize by the mean
  // in-plane voxel pitch instead.
  return phys / (0.5 * (sp[1] + sp[2]));
}

}  // namespace

std::vector<Edge> build_adjacency_edges(const Volume& v) {
  const int D = v.dims[0], H = v.dims[1], W = v.dims[2];
  double factor[13];
  for (int k = 0; k < 13; ++k) factor[k] = anisotropy_factor(kOffsets[k], v.spacing);

  std::vector<Edge> edges;
  edges.reserve(size_t(v.num_voxels()) * 13);
  for (int z = 0; z < D; ++z)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int64_t a = v.index(z, y, x);
        const float ia = v.data[size_t(a)];
        for (int k = 0; k < 13; ++k) {
          const int zz = z + kOffsets[k].dz;
          const int yy = y + kOffsets[k].dy;
          const int xx = x + kOffsets[k].dx;
          if (zz >= D || yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
          const int64_t b = v.index(zz, yy, xx);
          const float diff = std::abs(ia - v.data[size_t(b)]);
          edges.push_back({a, b, float(double(diff) * factor[k])});
        }
      }
  return edges;
}

void sort_edges(std::vector<Edge>& edges) {
  std::sort(edges.begin(), edges.end(), [](const Edge& l, const Edge& r) {
    if (l.w != r.w) return l.w < r.w;
    if (l.a != r.a) return l.a < r.a;
    return l.b < r.b;
  });
}

// ---------------------------------------------------------------------------
// segmentation passes
// ---------------------------------------------------------------------------

DisjointSet segment_graph(std::vector<Edge>& edges, int64_t num_voxels,
                          const SupervoxelParams& params) {
  params.validate();
  sort_edges(edges);
  DisjointSet ds(num_voxels);
  for (const Edge& e : edges) {
    const int64_t ra = ds.find(e.a), rb = ds.find(e.b);
    if (ra == rb) continue;
    const double ta = ds.internal_diff(ra) + params.scale_k / double(ds.size(ra));
    const double tb = ds.internal_diff(rb) + params.scale_k / double(ds.size(rb));
    if (double(e.w) <= ta && double(e.w) <= tb) ds.merge(ra, rb, e.w);
  }
  return ds;
}

void enforce_min_size(DisjointSet& ds, const std::vector<Edge>& sorted_edges,
                      int64_t rho) {
  if (rho <= 1) return;
  for (const Edge& e : sorted_edges) {
    const int64_t ra = ds.find(e.a), rb = ds.find(e.b);
    if (ra == rb) continue;
    if (ds.size(ra) < rho || ds.size(rb) < rho) ds.merge(ra, rb, e.w);
  }
}

// ---------------------------------------------------------------------------
// presmoothing
// ---------------------------------------------------------------------------

Volume presmooth_inplane(const Volume& v, double sigma) {
  if (sigma <= 0) return v;
  const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(size_t(2 * radius + 1));
  double norm = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[size_t(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    norm += kernel[size_t(i + radius)];
  }
  for (double& k : kernel) k /= norm;

  const int D = v.dims[0], H = v.dims[1], W = v.dims[2];
  Volume tmp = v, out = v;
  // y pass then x pass, replicated borders.
  for (int z = 0; z < D; ++z)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int yy = std::clamp(y + i, 0, H - 1);
          acc += kernel[size_t(i + radius)] * v.at(z, yy, x);
        }
        tmp.at(z, y, x) = float(acc);
      }
  for (int z = 0; z < D; ++z)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int xx = std::clamp(x + i, 0, W - 1);
          acc += kernel[size_t(i + radius)] * tmp.at(z, y, xx);
        }
        out.at(z, y, x) = float(acc);
      }
  return out;
}

// ---------------------------------------------------------------------------
// full pipeline
// ---------------------------------------------------------------------------

LabelVolume generate_supervoxels(const Volume& v, const SupervoxelParams& params) {
  params.validate();
  v.validate();
  const Volume smoothed = presmooth_inplane(v, params.presmooth_sigma);
  std::vector<Edge> edges = build_adjacency_edges(smoothed);
  DisjointSet ds = segment_graph(edges, v.num_voxels(), params);
  enforce_min_size(ds, edges, params.rho);

  LabelVolume lv;
  lv.dims = v.dims;
  lv.labels.resize(size_t(v.num_voxels()));
  std::unordered_map<int64_t, uint32_t> relabel;
  relabel.reserve(64);
  uint32_t next = 1;
  for (int64_t i = 0; i < v.num_voxels(); ++i) {
    const int64_t root = ds.find(i);
    auto [it, inserted] = relabel.try_emplace(root, next);
    if (inserted) ++next;
    lv.labels[size_t(i)] = it->second;
  }
  return lv;
}

}  // namespace adnet
