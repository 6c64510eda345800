#pragma once

#include <cstdint>
#include <vector>

#include "adnet/volume.hpp"

namespace adnet {

// Undirected 26-neighborhood edge between two voxels, a < b.
struct Edge {
  int64_t a = 0;
  int64_t b = 0;
  float w = 0.0f;
};

struct SupervoxelParams {
  int64_t rho = 1;              // minimum component size in voxels
  double scale_k = 1.0;         // merge-scale constant of the graph predicate
  double presmooth_sigma = 0.0; // in-plane Gaussian presmoothing, voxels

  void validate() const;  // throws ConfigError
};

// Union-find over voxels with per-component size and internal-difference
// tracking. Internal difference of a component is the weight of the edge
// that last merged it.
class DisjointSet {
public:
  explicit DisjointSet(int64_t n);

  int64_t find(int64_t x);
  // Merges the components rooted at ra and rb (ra != rb) and records
  // edge_weight as the merged component's internal difference.
  void merge(int64_t ra, int64_t rb, float edge_weight);

  int64_t size(int64_t root) const { return size_[size_t(root)]; }
  float internal_diff(int64_t root) const { return int_diff_[size_t(root)]; }
  int64_t num_components() const { return components_; }
  int64_t num_elements() const { return int64_t(parent_.size()); }

private:
  std::vector<int64_t> parent_;
  std::vector<int32_t> rank_;
  std::vector<int64_t> size_;
  std::vector<float> int_diff_;
  int64_t components_;
};

// One edge per unordered 26-neighbor pair; base weight |I(p) - I(q)|.
// Edges whose offset has a nonzero z-component are scaled by the anisotropy
// factor: physical length of the offset divided by the physical length of
// the same offset with z zeroed (pure-z offsets divide by the mean in-plane
// spacing). In-plane edges are unscaled.
std::vector<Edge> build_adjacency_edges(const Volume& v);

// Sorts by (weight, min endpoint, max endpoint); the deterministic order
// both graph passes rely on.
void sort_edges(std::vector<Edge>& edges);

// Felzenszwalb merge pass: edges in sorted order, components joined when
// w <= min(int_diff + scale_k/size) over both sides.
DisjointSet segment_graph(std::vector<Edge>& edges, int64_t num_voxels,
                          const SupervoxelParams& params);

// Second pass in the same edge order merging any pair where either side is
// smaller than rho. Afterwards every component has >= min(rho, N) voxels.
void enforce_min_size(DisjointSet& ds, const std::vector<Edge>& sorted_edges,
                      int64_t rho);

// Per-slice separable Gaussian blur with replicated borders; sigma 0 is a
// copy. Never smooths across z.
Volume presmooth_inplane(const Volume& v, double sigma);

// Full pipeline: presmooth, build edges, segment, enforce min size, then
// relabel components densely 1..L in order of first voxel appearance.
LabelVolume generate_supervoxels(const Volume& v, const SupervoxelParams& params);

}  // namespace adnet
