#include "cfpanel/measure.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>

#include "cfpanel/dataio.hpp"
#include "cfpanel/error.hpp"
#include "cfpanel/numeric.hpp"

namespace cfpanel {

std::string to_string(GridStrategy s) {
  return s == GridStrategy::kPaperTuples ? "paper-tuples" : "full-product";
}

GridStrategy parse_grid_strategy(const std::string& name) {
  if (name == "paper-tuples") return GridStrategy::kPaperTuples;
  if (name == "full-product") return GridStrategy::kFullProduct;
  throw InputError("unknown grid strategy '" + name + "' (valid: paper-tuples, full-product)");
}

namespace {

bool lex_less(std::span<const double> a, std::span<const double> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

PointSet dedup_sorted(const PointSet& points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lex_less(points[a], points[b]); });
  PointSet out(points.dim());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto p = points[order[i]];
    if (out.size() > 0 && std::equal(p.begin(), p.end(), out[out.size() - 1].begin())) continue;
    out.push_back(p);
  }
  return out;
}

std::vector<double> axis_values(const PointSet& points, std::size_t axis) {
  std::vector<double> v(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) v[i] = points[i][axis];
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

double half_min_gap(const std::vector<double>& sorted_unique) {
  if (sorted_unique.size() < 2) return 1.0;
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < sorted_unique.size(); ++i) gap = std::min(gap, sorted_unique[i] - sorted_unique[i - 1]);
  return gap / 2.0;
}

PointSet cartesian(const std::vector<std::vector<double>>& axes) {
  PointSet out(axes.size());
  std::vector<std::size_t> idx(axes.size(), 0);
  std::vector<double> p(axes.size());
  while (true) {
    for (std::size_t k = 0; k < axes.size(); ++k) p[k] = axes[k][idx[k]];
    out.push_back(p);
    std::size_t k = axes.size();
    while (k > 0) {
      --k;
      if (++idx[k] < axes[k].size()) break;
      idx[k] = 0;
      if (k == 0) return out;
    }
  }
}

}  // namespace

JumpGrid build_grid(const ValidatedData& data, GridStrategy strategy, std::size_t max_atoms) {
  const std::size_t d = data.dim;
  JumpGrid grid;
  grid.strategy = strategy;
  grid.dim = d;
  PointSet z1 = dedup_sorted(data.first_wave());
  PointSet z2_all = data.stayers_z2();
  for (std::size_t i = 0; i < data.refreshment.rows.size(); ++i) z2_all.push_back(data.refreshment.rows[i]);
  PointSet z2 = dedup_sorted(z2_all);

  std::vector<std::vector<double>> axes1(d), axes2(d);
  for (std::size_t k = 0; k < d; ++k) {
    axes1[k] = axis_values(z1, k);
    axes2[k] = axis_values(z2, k);
  }
  if (strategy == GridStrategy::kFullProduct && d > 1) {
    double n1 = 1.0, n2 = 1.0;
    for (std::size_t k = 0; k < d; ++k) {
      n1 *= static_cast<double>(axes1[k].size());
      n2 *= static_cast<double>(axes2[k].size());
    }
    if (n1 * n2 > static_cast<double>(max_atoms)) {
      throw InputError("full-product grid would have " + format_double(n1 * n2) + " atoms (limit " +
                       std::to_string(max_atoms) + ")");
    }
    z1 = cartesian(axes1);
    z2 = cartesian(axes2);
  }
  if (static_cast<double>(z1.size()) * static_cast<double>(z2.size()) > static_cast<double>(max_atoms)) {
    throw InputError("jump grid would have " + std::to_string(z1.size() * z2.size()) + " atoms (limit " +
                     std::to_string(max_atoms) + ")");
  }
  grid.h.resize(2 * d);
  for (std::size_t k = 0; k < d; ++k) {
    grid.h[k] = half_min_gap(axes1[k]);
    grid.h[d + k] = half_min_gap(axes2[k]);
  }
  grid.z1_atoms = std::move(z1);
  grid.z2_atoms = std::move(z2);
  return grid;
}

JumpGrid scale_h(JumpGrid grid, double factor) {
  if (!(factor > 0.0 && factor <= 1.0)) throw InputError("h scale factor must lie in (0, 1]");
  for (double& h : grid.h) h *= factor;
  return grid;
}

SignedMeasure::SignedMeasure(std::size_t dim, std::vector<double> coords, std::vector<double> weights)
    : dim_(dim), coords_(std::move(coords)), weights_(std::move(weights)) {
  if (dim_ == 0 || coords_.size() != weights_.size() * dim_) throw InputError("measure coordinate buffer mismatch");
  CompensatedSum total, negative;
  for (double w : weights_) {
    total.add(w);
    if (w < 0.0) negative.add(w);
  }
  total_mass_ = total.value();
  negative_mass_ = negative.value();
}

SignedMeasure SignedMeasure::uniform(const PointSet& points) {
  if (points.empty()) throw InputError("uniform measure of an empty sample");
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lex_less(points[a], points[b]); });
  std::vector<double> coords;
  std::vector<std::size_t> counts;
  const std::size_t dim = points.dim();
  for (std::size_t i : order) {
    const auto p = points[i];
    if (!counts.empty() && std::equal(p.begin(), p.end(), coords.end() - static_cast<std::ptrdiff_t>(dim))) {
      ++counts.back();
      continue;
    }
    coords.insert(coords.end(), p.begin(), p.end());
    counts.push_back(1);
  }
  std::vector<double> weights(counts.size());
  const double n = static_cast<double>(points.size());
  for (std::size_t i = 0; i < counts.size(); ++i) weights[i] = static_cast<double>(counts[i]) / n;
  SignedMeasure mu(dim, std::move(coords), std::move(weights));
  mu.diagnostics.grid_atoms = mu.size();
  return mu;
}

namespace {

// Per-corner data for one block (z1 or z2): whether any stayer lies below
// the corner, the additive attrition component there, and the stayer set.
struct BlockCorners {
  std::size_t patterns = 0;  // 2^d
  std::size_t words = 0;     // bitset words per corner
  std::vector<std::uint8_t> active;
  std::vector<double> k;
  std::vector<std::uint64_t> bits;
};

// corner = atom + h (bit clear) or atom - h (bit set), per coordinate.
void corner_point(std::span<const double> atom, std::span<const double> h, std::size_t pattern,
                  std::span<double> out) {
  for (std::size_t j = 0; j < atom.size(); ++j) out[j] = ((pattern >> j) & 1U) ? atom[j] - h[j] : atom[j] + h[j];
}

BlockCorners block_corners(const PointSet& atoms, std::span<const double> h, const Ecdf& full,
                           const PointSet& stayers, double p, double k_offset, const LinkFunction& link,
                           std::size_t& clamp_events) {
  const std::size_t d = atoms.dim();
  BlockCorners bc;
  bc.patterns = std::size_t{1} << d;
  bc.words = (stayers.size() + 63) / 64;
  const std::size_t corners = atoms.size() * bc.patterns;
  bc.active.assign(corners, 0);
  bc.k.assign(corners, 0.0);
  bc.bits.assign(corners * bc.words, 0);
  const double n_full = static_cast<double>(full.size());
  const double n_stay = static_cast<double>(stayers.size());
  std::vector<double> c(d);
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    for (std::size_t s = 0; s < bc.patterns; ++s) {
      const std::size_t idx = a * bc.patterns + s;
      corner_point(atoms[a], h, s, c);
      std::uint64_t* bits = bc.bits.data() + idx * bc.words;
      std::size_t stay_count = 0;
      for (std::size_t j = 0; j < stayers.size(); ++j) {
        if (dominated(stayers[j], c)) {
          bits[j / 64] |= std::uint64_t{1} << (j % 64);
          ++stay_count;
        }
      }
      if (stay_count == 0) continue;
      const double Fw_block = static_cast<double>(stay_count) / n_stay;
      const double F_block = static_cast<double>(full.count(c)) / n_full;
      // F == 0 with stayers below is possible only in the refreshment block.
      const double ratio = F_block > 0.0 ? p * Fw_block / F_block : std::numeric_limits<double>::infinity();
      bc.active[idx] = 1;
      bc.k[idx] = link.inverse(link.clamp(ratio, clamp_events)) - k_offset;
    }
  }
  return bc;
}

}  // namespace

SignedMeasure jump_masses(const CorrectedCdf& f, const JumpGrid& grid, const JumpOptions& opts) {
  const std::size_t d = grid.dim;
  if (d != f.dim()) throw InputError("grid and corrected CDF dimensions differ");
  const LinkFunction& link = f.link();
  const double p = f.p_hat();
  const PointSet& stay1 = f.f1w().points();
  const PointSet& stay2 = f.f2w().points();
  const std::size_t n2 = stay1.size();
  const std::span<const double> h1(grid.h.data(), d);
  const std::span<const double> h2(grid.h.data() + d, d);

  std::size_t clamp_events = 0;
  const double k0 = link.inverse(link.clamp(p, clamp_events));
  const BlockCorners c1 = block_corners(grid.z1_atoms, h1, f.f1(), stay1, p, 0.0, link, clamp_events);
  const BlockCorners c2 = block_corners(grid.z2_atoms, h2, f.f2(), stay2, p, k0, link, clamp_events);

  const std::size_t na = grid.z1_atoms.size();
  const std::size_t nb = grid.z2_atoms.size();
  const std::size_t patterns = c1.patterns;
  const std::size_t words = c1.words;
  const double scale = p / static_cast<double>(n2);
  std::vector<double> raw(na * nb, 0.0);

#pragma omp parallel for schedule(dynamic, 8) num_threads(std::max(1, opts.threads))
  for (std::size_t a = 0; a < na; ++a) {
    for (std::size_t b = 0; b < nb; ++b) {
      double w = 0.0;
      for (std::size_t s1 = 0; s1 < patterns; ++s1) {
        const std::size_t i1 = a * patterns + s1;
        if (!c1.active[i1]) continue;
        const std::uint64_t* bits1 = c1.bits.data() + i1 * words;
        double inner = 0.0;
        for (std::size_t s2 = 0; s2 < patterns; ++s2) {
          const std::size_t i2 = b * patterns + s2;
          if (!c2.active[i2]) continue;
          const std::uint64_t* bits2 = c2.bits.data() + i2 * words;
          std::size_t joint = 0;
          for (std::size_t q = 0; q < words; ++q) joint += static_cast<std::size_t>(std::popcount(bits1[q] & bits2[q]));
          if (joint == 0) continue;
          const double value = scale * static_cast<double>(joint) / link.forward(c1.k[i1] + c2.k[i2]);
          inner += (std::popcount(s2) & 1) ? -value : value;
        }
        w += (std::popcount(s1) & 1) ? -inner : inner;
      }
      raw[a * nb + b] = w;
    }
  }

  MeasureDiagnostics diag;
  diag.grid_atoms = na * nb;
  diag.clamp_events = clamp_events;
  CompensatedSum dropped;
  std::vector<double> coords;
  std::vector<double> weights;
  coords.reserve(raw.size() * 2 * d);
  weights.reserve(raw.size());
  for (std::size_t a = 0; a < na; ++a) {
    const auto za = grid.z1_atoms[a];
    for (std::size_t b = 0; b < nb; ++b) {
      const double w = raw[a * nb + b];
      if (std::abs(w) < opts.drop_threshold) {
        if (w != 0.0) {
          ++diag.dropped_atoms;
          dropped.add(w);
        }
        continue;
      }
      const auto zb = grid.z2_atoms[b];
      coords.insert(coords.end(), za.begin(), za.end());
      coords.insert(coords.end(), zb.begin(), zb.end());
      weights.push_back(w);
    }
  }
  diag.dropped_mass = dropped.value();

  // F-hat just above the componentwise top corner of the grid.
  std::vector<double> top1(d), top2(d);
  for (std::size_t k = 0; k < d; ++k) {
    top1[k] = -std::numeric_limits<double>::infinity();
    top2[k] = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < na; ++a) top1[k] = std::max(top1[k], grid.z1_atoms[a][k]);
    for (std::size_t b = 0; b < nb; ++b) top2[k] = std::max(top2[k], grid.z2_atoms[b][k]);
    top1[k] += h1[k];
    top2[k] += h2[k];
  }
  diag.top_corner_value = eval_corrected_extended(f, top1, top2);

  SignedMeasure mu(2 * d, std::move(coords), std::move(weights));
  mu.diagnostics = diag;
  return mu;
}

SignedMeasure ecdf_jump_masses(const Ecdf& ecdf, const PointSet& grid_points, std::span<const double> h) {
  const std::size_t m = ecdf.dim();
  if (grid_points.dim() != m || h.size() != m) throw InputError("grid, ECDF and h dimensions differ");
  const std::size_t patterns = std::size_t{1} << m;
  std::vector<double> coords;
  std::vector<double> weights;
  std::vector<double> c(m);
  const double n = static_cast<double>(ecdf.size());
  for (std::size_t i = 0; i < grid_points.size(); ++i) {
    std::int64_t total = 0;
    for (std::size_t s = 0; s < patterns; ++s) {
      corner_point(grid_points[i], h, s, c);
      const auto cnt = static_cast<std::int64_t>(ecdf.count(c));
      total += (std::popcount(s) & 1) ? -cnt : cnt;
    }
    coords.insert(coords.end(), grid_points[i].begin(), grid_points[i].end());
    weights.push_back(static_cast<double>(total) / n);
  }
  SignedMeasure mu(m, std::move(coords), std::move(weights));
  mu.diagnostics.grid_atoms = grid_points.size();
  return mu;
}

std::vector<double> integrate(const AtomView& mu, const AtomFunction& g, std::size_t k) {
  std::vector<CompensatedSum> acc(k);
  std::vector<double> value(k);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const auto z = mu.point(i);
    g(z, value);
    for (std::size_t j = 0; j < k; ++j) {
      if (!std::isfinite(value[j])) {
        std::string where;
        for (std::size_t q = 0; q < z.size(); ++q) where += (q ? "," : "") + format_double(z[q]);
        throw DomainError("integrand is not finite at atom " + std::to_string(i) + " (" + where + ")");
      }
      acc[j].add(mu.weights[i] * value[j]);
    }
  }
  std::vector<double> out(k);
  for (std::size_t j = 0; j < k; ++j) out[j] = acc[j].value();
  return out;
}

ProbabilityMeasure trim_and_normalize(const AtomView& mu) {
  CompensatedSum positive;
  for (double w : mu.weights) {
    if (w > 0.0) positive.add(w);
  }
  const double total = positive.value();
  if (!(total > 0.0)) throw DomainError("cannot normalize a measure with no positive weight");
  ProbabilityMeasure out;
  out.dim = mu.dim;
  out.coords.assign(mu.coords.begin(), mu.coords.end());
  out.weights.resize(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) out.weights[i] = mu.weights[i] > 0.0 ? mu.weights[i] / total : 0.0;
  return out;
}

PointSet sample_atoms(const ProbabilityMeasure& mu, std::size_t n, Rng& rng) {
  if (mu.size() == 0) throw InputError("cannot sample from an empty measure");
  std::vector<double> cumulative(mu.size());
  CompensatedSum run;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    run.add(mu.weights[i]);
    cumulative[i] = run.value();
  }
  const double total = cumulative.back();
  PointSet out(mu.dim);
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    // Skip zero-weight atoms that share a cumulative value with a successor.
    auto idx = static_cast<std::size_t>(it - cumulative.begin());
    while (mu.weights[idx] == 0.0 && idx + 1 < mu.size()) ++idx;
    out.push_back(mu.point(idx));
  }
  return out;
}

void export_measure_csv(const AtomView& mu, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write file: " + path.string());
  for (std::size_t k = 0; k < mu.dim; ++k) out << "z_" << (k + 1) << ',';
  out << "weight\n";
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (double v : mu.point(i)) out << format_double(v) << ',';
    out << format_double(mu.weights[i]) << '\n';
  }
}

}  // namespace cfpanel
