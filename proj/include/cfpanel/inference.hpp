#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfpanel/dataio.hpp"
#include "cfpanel/estimator.hpp"
#include "cfpanel/link.hpp"
#include "cfpanel/rng.hpp"

namespace cfpanel {

// n1 panel units and, independently, nr refreshment rows drawn with
// replacement.
ValidatedData resample(const ValidatedData& data, Rng& rng);

// Corrected estimate on one resample; empty when the resample has no
// stayers or the solver fails there.
std::optional<std::vector<double>> bootstrap_once(const ValidatedData& data, const LinkFunction& link,
                                                  const MomentModel& model, const EstimateOptions& opts,
                                                  Rng& rng);

struct Interval {
  std::vector<double> lower;
  std::vector<double> upper;
};

struct BootstrapResult {
  std::vector<std::vector<double>> replicates;  // in replicate-index order
  std::vector<double> levels;
  std::vector<Interval> intervals;  // one per level
  std::size_t B = 0;
  std::size_t failed_replicates = 0;
  std::string warning;  // set when more than 10% of replicates failed
};

// Percentile intervals from B replicates. Replicate b uses the stream
// (seed, Bootstrap, b), so results do not depend on `threads`.
// Throws NumericalError when more than half of the replicates fail.
BootstrapResult bootstrap_ci(const ValidatedData& data, const LinkFunction& link, const MomentModel& model,
                             std::size_t B, std::span<const double> levels, const EstimateOptions& opts,
                             std::uint64_t seed, int threads = 1);

// Percentile interval for each level from replicate vectors.
std::vector<Interval> percentile_intervals(std::span<const std::vector<double>> replicates,
                                           std::span<const double> levels);

// Warp-speed intervals: the pooled deviations theta_star[s] - theta_hat[s]
// give quantiles q, and rep s gets [theta_hat[s] + q(a/2), theta_hat[s] + q(1 - a/2)].
std::vector<std::pair<double, double>> warp_speed_intervals(std::span<const double> theta_hat,
                                                            std::span<const double> theta_star, double level);

// Fraction of reps whose warp-speed interval contains theta_true, per level.
std::vector<double> warp_speed_coverage(std::span<const double> theta_hat, std::span<const double> theta_star,
                                        double theta_true, std::span<const double> levels);

}  // namespace cfpanel
