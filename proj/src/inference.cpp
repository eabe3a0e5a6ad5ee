#include "cfpanel/inference.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cfpanel/error.hpp"
#include "cfpanel/numeric.hpp"

namespace cfpanel {

ValidatedData resample(const ValidatedData& data, Rng& rng) {
  ValidatedData out;
  out.dim = data.dim;
  out.panel.dim = data.panel.dim;
  out.n1 = data.n1;
  out.nr = data.nr;
  out.panel.units.reserve(data.n1);
  for (std::size_t i = 0; i < data.n1; ++i) {
    const PanelUnit& u = data.panel.units[rng.index(data.n1)];
    out.panel.units.push_back(u);
    if (u.stays()) ++out.n2;
  }
  const PointSet& rows = data.refreshment.rows;
  out.refreshment.rows = PointSet(rows.dim());
  out.refreshment.rows.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out.refreshment.rows.push_back(rows[rng.index(rows.size())]);
  out.attrition_rate = 1.0 - static_cast<double>(out.n2) / static_cast<double>(out.n1);
  return out;
}

std::optional<std::vector<double>> bootstrap_once(const ValidatedData& data, const LinkFunction& link,
                                                  const MomentModel& model, const EstimateOptions& opts,
                                                  Rng& rng) {
  const ValidatedData star = resample(data, rng);
  if (star.n2 == 0) return std::nullopt;
  try {
    EstimateResult r = estimate_corrected(star, link, model, opts);
    if (!r.converged) return std::nullopt;
    return std::move(r.theta_hat);
  } catch (const NumericalError&) {
    return std::nullopt;
  } catch (const DomainError&) {
    return std::nullopt;
  }
}

std::vector<Interval> percentile_intervals(std::span<const std::vector<double>> replicates,
                                           std::span<const double> levels) {
  if (replicates.empty()) throw NumericalError("no bootstrap replicates to summarize");
  const std::size_t k = replicates.front().size();
  std::vector<std::vector<double>> sorted(k);
  for (std::size_t j = 0; j < k; ++j) {
    sorted[j].reserve(replicates.size());
    for (const auto& r : replicates) sorted[j].push_back(r[j]);
    std::sort(sorted[j].begin(), sorted[j].end());
  }
  std::vector<Interval> out;
  for (double level : levels) {
    if (!(level > 0.0 && level < 1.0)) throw InputError("confidence levels must lie in (0, 1)");
    const double alpha = 1.0 - level;
    Interval iv;
    for (std::size_t j = 0; j < k; ++j) {
      iv.lower.push_back(quantile_sorted(sorted[j], alpha / 2.0));
      iv.upper.push_back(quantile_sorted(sorted[j], 1.0 - alpha / 2.0));
    }
    out.push_back(std::move(iv));
  }
  return out;
}

BootstrapResult bootstrap_ci(const ValidatedData& data, const LinkFunction& link, const MomentModel& model,
                             std::size_t B, std::span<const double> levels, const EstimateOptions& opts,
                             std::uint64_t seed, int threads) {
  if (B < 100) throw InputError("bootstrap needs B >= 100");
  EstimateOptions inner = opts;
  inner.threads = 1;
  std::vector<std::optional<std::vector<double>>> draws(B);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, threads))
  for (std::size_t b = 0; b < B; ++b) {
    Rng rng = Rng::derive(seed, Stream::kBootstrap, b);
    draws[b] = bootstrap_once(data, link, model, inner, rng);
  }
  BootstrapResult result;
  result.B = B;
  result.levels.assign(levels.begin(), levels.end());
  for (auto& d : draws) {
    if (d) {
      result.replicates.push_back(std::move(*d));
    } else {
      ++result.failed_replicates;
    }
  }
  const double failed = static_cast<double>(result.failed_replicates) / static_cast<double>(B);
  if (failed > 0.5) {
    throw NumericalError(std::to_string(result.failed_replicates) + " of " + std::to_string(B) +
                         " bootstrap replicates failed");
  }
  if (failed > 0.1) {
    std::ostringstream msg;
    msg << result.failed_replicates << " of " << B << " bootstrap replicates failed";
    result.warning = msg.str();
  }
  result.intervals = percentile_intervals(result.replicates, levels);
  return result;
}

std::vector<std::pair<double, double>> warp_speed_intervals(std::span<const double> theta_hat,
                                                            std::span<const double> theta_star, double level) {
  if (theta_hat.size() != theta_star.size() || theta_hat.empty()) {
    throw InputError("warp-speed needs matched, nonempty estimate and replicate lists");
  }
  if (!(level > 0.0 && level < 1.0)) throw InputError("confidence levels must lie in (0, 1)");
  std::vector<double> dev(theta_hat.size());
  for (std::size_t s = 0; s < dev.size(); ++s) dev[s] = theta_star[s] - theta_hat[s];
  std::sort(dev.begin(), dev.end());
  const double alpha = 1.0 - level;
  const double lo = quantile_sorted(dev, alpha / 2.0);
  const double hi = quantile_sorted(dev, 1.0 - alpha / 2.0);
  std::vector<std::pair<double, double>> out(theta_hat.size());
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = {theta_hat[s] + lo, theta_hat[s] + hi};
  return out;
}

std::vector<double> warp_speed_coverage(std::span<const double> theta_hat, std::span<const double> theta_star,
                                        double theta_true, std::span<const double> levels) {
  std::vector<double> out;
  for (double level : levels) {
    const auto iv = warp_speed_intervals(theta_hat, theta_star, level);
    std::size_t hit = 0;
    for (const auto& [lo, hi] : iv) {
      if (lo <= theta_true && theta_true <= hi) ++hit;
    }
    out.push_back(static_cast<double>(hit) / static_cast<double>(iv.size()));
  }
  return out;
}

}  // namespace cfpanel
