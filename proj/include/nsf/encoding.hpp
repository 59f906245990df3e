#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "nsf/graph.hpp"
#include "nsf/rng.hpp"
#include "nsf/tensor.hpp"

namespace nsf {

// Canonical plane-coordinate domain: [-kDomainMargin, 1 + kDomainMargin].
// Plane coordinates can leave [0,1] under camera motion, so the grids cover
// slightly more than one frame; coordinates outside are clamped.
inline constexpr double kDomainMargin = 0.1;

struct EncodingParams {
  int base_resolution = 4;      // B
  double per_level_scale = 1.61;  // S
  int levels = 6;               // L
  int features_per_level = 4;   // F
  int log2_table_size = 12;     // T

  int64_t table_size() const { return int64_t(1) << log2_table_size; }
  int feature_dim() const { return levels * features_per_level; }
  int level_resolution(int level) const {
    return static_cast<int>(std::floor(base_resolution * std::pow(per_level_scale, level)));
  }

  void validate() const {
    if (base_resolution < 1 || levels < 1 || features_per_level < 1 || per_level_scale <= 1.0)
      throw std::invalid_argument("encoding: invalid params");
    const int64_t v0 = static_cast<int64_t>(base_resolution + 1) * (base_resolution + 1);
    if (table_size() < v0)
      throw std::invalid_argument("encoding: table of 2^" + std::to_string(log2_table_size) +
                                  " entries smaller than level-0 vertex count " + std::to_string(v0));
  }
};

template <typename R>
struct HashGrid {
  EncodingParams params;
  std::vector<Tensor<R>> tables;  // per level, [2^T, F]
};

template <typename R>
HashGrid<R> hash_grid_init(const EncodingParams& params, uint64_t seed) {
  params.validate();
  HashGrid<R> grid;
  grid.params = params;
  Rng rng(seed);
  for (int l = 0; l < params.levels; ++l) {
    Tensor<R> t = Tensor<R>::zeros({params.table_size(), params.features_per_level});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<R>(rng.uniform(-1e-4, 1e-4));
    t.requires_grad = true;
    grid.tables.push_back(std::move(t));
  }
  return grid;
}

// Spatial hash for vertex (x,y): coordinates times primes {1, 2654435761},
// XOR-combined, modulo 2^T. Levels whose vertex grid fits in the table are
// indexed directly instead.
inline uint32_t grid_hash(uint32_t x, uint32_t y, int64_t table_size) {
  return (x ^ (y * 2654435761u)) & static_cast<uint32_t>(table_size - 1);
}

// Coarse-to-fine schedule: level i is active when
//   i/levels < 0.4 + 0.6*sin((pi/2) * epoch/max_epoch),
// which is monotone in epoch and activates every level at epoch == max_epoch.
inline int coarse_mask(int64_t epoch, int64_t max_epoch, int levels) {
  if (levels < 1) throw std::invalid_argument("coarse_mask: levels must be >= 1");
  if (epoch < 0 || epoch > max_epoch)
    throw std::invalid_argument("coarse_mask: epoch " + std::to_string(epoch) +
                                " outside [0, " + std::to_string(max_epoch) + "]");
  const double ratio = max_epoch == 0 ? 1.0 : static_cast<double>(epoch) / static_cast<double>(max_epoch);
  const double threshold = 0.4 + 0.6 * std::sin(1.5707963267948966 * ratio);
  int active = 0;
  for (int i = 0; i < levels; ++i)
    if (static_cast<double>(i) / levels < threshold) ++active;
  return active;
}

// Clamp a [N] coordinate node to [lo, hi] with exact subgradients
// (1 inside, 0 outside), built from the relu primitive.
template <typename R>
typename Graph<R>::Id clamp_node(Graph<R>& g, typename Graph<R>::Id x, R lo, R hi) {
  auto lo_clamped = g.add_scalar(g.relu(g.add_scalar(x, -lo)), lo);        // max(x, lo)
  return g.rsub_scalar(hi, g.relu(g.rsub_scalar(hi, lo_clamped)));        // min(., hi)
}

// Multiresolution hash encoding of (u,v): per active level, bilinear
// interpolation of the four surrounding vertex features; masked levels
// contribute exact zeros. Differentiable w.r.t. the tables and the
// coordinates. `table_ids` are graph ids of the per-level tables.
template <typename R>
typename Graph<R>::Id hash_encode(Graph<R>& g, const EncodingParams& params,
                                  const std::vector<typename Graph<R>::Id>& table_ids,
                                  typename Graph<R>::Id u, typename Graph<R>::Id v,
                                  int active_levels) {
  using Id = typename Graph<R>::Id;
  if (active_levels < 0 || active_levels > params.levels)
    throw std::invalid_argument("hash_encode: active_levels " + std::to_string(active_levels) +
                                " outside [0, " + std::to_string(params.levels) + "]");
  if (static_cast<int>(table_ids.size()) != params.levels)
    throw std::invalid_argument("hash_encode: expected one table per level");
  const int64_t N = g.value(u).shape[0];
  const int64_t F = params.features_per_level;
  const R m = static_cast<R>(kDomainMargin);

  const Id uc = clamp_node(g, u, -m, R(1) + m);
  const Id vc = clamp_node(g, v, -m, R(1) + m);

  std::vector<Id> level_feats;
  level_feats.reserve(static_cast<size_t>(params.levels));
  for (int l = 0; l < params.levels; ++l) {
    if (l >= active_levels) {
      level_feats.push_back(g.constant(Tensor<R>::zeros({N, F})));
      continue;
    }
    const int res = params.level_resolution(l);
    const R scale = static_cast<R>(res) / (R(1) + R(2) * m);
    const Id ug = g.mul_scalar(g.add_scalar(uc, m), scale);
    const Id vg = g.mul_scalar(g.add_scalar(vc, m), scale);

    const R* ugv = g.value(ug).data();
    const R* vgv = g.value(vg).data();
    const bool dense = static_cast<int64_t>(res + 1) * (res + 1) <= params.table_size();

    Tensor<R> cu = Tensor<R>::zeros({N});
    Tensor<R> cv = Tensor<R>::zeros({N});
    auto i00 = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(N));
    auto i10 = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(N));
    auto i01 = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(N));
    auto i11 = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(N));
    for (int64_t n = 0; n < N; ++n) {
      int x = static_cast<int>(std::floor(ugv[n]));
      int y = static_cast<int>(std::floor(vgv[n]));
      x = std::clamp(x, 0, res - 1);
      y = std::clamp(y, 0, res - 1);
      cu[n] = static_cast<R>(x);
      cv[n] = static_cast<R>(y);
      const auto slot = [&](int gx, int gy) -> int32_t {
        if (dense) return static_cast<int32_t>(gy * (res + 1) + gx);
        return static_cast<int32_t>(grid_hash(static_cast<uint32_t>(gx),
                                              static_cast<uint32_t>(gy), params.table_size()));
      };
      (*i00)[static_cast<size_t>(n)] = slot(x, y);
      (*i10)[static_cast<size_t>(n)] = slot(x + 1, y);
      (*i01)[static_cast<size_t>(n)] = slot(x, y + 1);
      (*i11)[static_cast<size_t>(n)] = slot(x + 1, y + 1);
    }
    const Id fu = g.sub(ug, g.constant(std::move(cu)));
    const Id fv = g.sub(vg, g.constant(std::move(cv)));
    const Id f00 = g.gather_rows(table_ids[static_cast<size_t>(l)], i00);
    const Id f10 = g.gather_rows(table_ids[static_cast<size_t>(l)], i10);
    const Id f01 = g.gather_rows(table_ids[static_cast<size_t>(l)], i01);
    const Id f11 = g.gather_rows(table_ids[static_cast<size_t>(l)], i11);
    const Id bottom = g.lerp(f00, f10, fu);
    const Id top = g.lerp(f01, f11, fu);
    level_feats.push_back(g.lerp(bottom, top, fv));
  }
  return g.concat_cols(level_feats);
}

}  // namespace nsf
