#include "cfpanel/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "cfpanel/error.hpp"
#include "cfpanel/inference.hpp"
#include "cfpanel/numeric.hpp"

namespace cfpanel {

std::vector<std::string> design_names() {
  return {"table1-m5", "table1-m10", "table1-m15", "table2-nu2", "table2-nu10", "table2-nu20", "fe-attrition"};
}

namespace {

Design table1(std::size_t m, double diag) {
  DiscreteDgpSpec spec;
  spec.m = m;
  spec.transition = banded_transition(m, diag);
  spec.c1 = 0.5 / static_cast<double>(m);
  spec.c2 = 0.5 / static_cast<double>(m);
  Design d;
  d.name = "table1-m" + std::to_string(m);
  d.target_attrition = 0.3;
  d.calibration = calibrate_attrition(spec, d.target_attrition);
  d.spec = spec;
  d.model = cond_prob_model(1, 1.0, 1.0);
  d.relative_bias = true;
  d.S = 1000;
  return d;
}

Design table2(double nu, std::size_t draws) {
  CopulaDgpSpec spec;
  spec.nu = nu;
  Design d;
  d.name = "table2-nu" + std::to_string(static_cast<int>(nu));
  d.target_attrition = 0.7;
  d.calibration = calibrate_attrition(spec, d.target_attrition, 1e-4, draws);
  d.spec = spec;
  d.model = product_moment_model(4, 0, 2);
  d.S = 500;
  return d;
}

Design fe_design() {
  FeDgpSpec spec;
  Design d;
  d.name = "fe-attrition";
  d.spec = spec;
  d.target_attrition = 1.0 - spec.stay_rate;
  d.calibration.stay_rate = spec.stay_rate;
  d.calibration.unclipped_rate = spec.stay_rate;
  d.model = twoway_fe_model(2, {0}, 1);
  d.target_index = 2;
  d.n1 = 2000;
  d.nr = 2000;
  d.S = 200;
  return d;
}

}  // namespace

Design named_design(const std::string& name, std::size_t calibration_draws) {
  if (name == "table1-m5") return table1(5, 0.23);
  if (name == "table1-m10") return table1(10, 0.12);
  if (name == "table1-m15") return table1(15, 0.05);
  if (name == "table2-nu2") return table2(2.0, calibration_draws);
  if (name == "table2-nu10") return table2(10.0, calibration_draws);
  if (name == "table2-nu20") return table2(20.0, calibration_draws);
  if (name == "fe-attrition") return fe_design();
  std::string valid;
  for (const auto& n : design_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw InputError("unknown design '" + name + "' (valid: " + valid + ")");
}

Metrics summarize(std::span<const double> estimates, double theta_true, bool relative) {
  Metrics m;
  if (estimates.empty()) return m;
  CompensatedSum err, sq, abs_err;
  for (double e : estimates) {
    const double d = e - theta_true;
    err.add(d);
    sq.add(d * d);
    abs_err.add(std::abs(d));
  }
  const double n = static_cast<double>(estimates.size());
  m.bias = err.value() / n;
  if (relative) m.bias /= theta_true;
  m.rmse = std::sqrt(sq.value() / n);
  m.mae = abs_err.value() / n;
  return m;
}

McReport run_mc(const McConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const Design& design = config.design;
  const std::size_t S = config.S > 0 ? config.S : design.S;
  auto sizes = config.sizes;
  if (sizes.empty()) sizes.push_back({design.n1, design.nr});
  for (double l : config.levels) {
    if (!(l > 0.0 && l < 1.0)) throw InputError("confidence levels must lie in (0, 1)");
  }
  const LinkFunction link = std::visit([](const auto& s) { return s.link; }, design.spec);

  McReport report;
  report.design = design.name;
  report.theta_true = true_theta(design.spec, &report.theta_true_se);
  report.relative_bias = design.relative_bias;
  report.S = S;
  report.seed = config.seed;
  report.levels = config.levels;

  EstimateOptions est = config.estimate;
  est.threads = 1;
  const std::size_t target = design.target_index;
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    const auto [n1, nr] = sizes[si];
    std::vector<RepOutcome> outcomes(S);
    std::size_t done = 0;
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, config.threads))
    for (std::size_t s = 0; s < S; ++s) {
      RepOutcome out;
      try {
        const std::uint64_t rep_seed =
            Rng::derive(config.seed, {static_cast<std::uint64_t>(Stream::kMonteCarlo), si, s}).next();
        const SimulatedStudy study = simulate(design.spec, n1, nr, rep_seed);
        const ValidatedData data = study.validated();
        const EstimateResult corrected = estimate_corrected(data, link, design.model, est);
        const EstimateResult naive = estimate_naive(data, design.model, est);
        Rng boot = Rng::derive(rep_seed, Stream::kBootstrap, 0);
        const auto star = bootstrap_once(data, link, design.model, est, boot);
        if (corrected.converged && naive.converged && star) {
          out.ok = true;
          out.corrected = corrected.theta_hat[target];
          out.naive = naive.theta_hat[target];
          out.replicate = (*star)[target];
          out.total_mass = corrected.total_mass;
          out.negative_mass = corrected.negative_mass;
        }
      } catch (const InputError&) {
        out.ok = false;
      } catch (const NumericalError&) {
        out.ok = false;
      } catch (const DomainError&) {
        out.ok = false;
      }
      outcomes[s] = out;
      if (config.progress) {
#pragma omp critical(progress)
        {
          ++done;
          std::fprintf(stderr, "rep=%zu/%zu\n", done, S);
        }
      }
    }

    SizeReport sr;
    sr.n1 = n1;
    sr.nr = nr;
    std::vector<double> corrected, naive, star;
    CompensatedSum mass, neg;
    sr.min_total_mass = std::numeric_limits<double>::infinity();
    sr.max_total_mass = -std::numeric_limits<double>::infinity();
    for (const auto& o : outcomes) {
      if (!o.ok) {
        ++sr.failed;
        continue;
      }
      corrected.push_back(o.corrected);
      naive.push_back(o.naive);
      star.push_back(o.replicate);
      mass.add(o.total_mass);
      neg.add(o.negative_mass);
      sr.min_total_mass = std::min(sr.min_total_mass, o.total_mass);
      sr.max_total_mass = std::max(sr.max_total_mass, o.total_mass);
    }
    sr.completed = corrected.size();
    if (sr.completed == 0) throw NumericalError("every Monte Carlo replication failed");
    sr.corrected = summarize(corrected, report.theta_true, design.relative_bias);
    sr.naive = summarize(naive, report.theta_true, design.relative_bias);
    sr.coverage = warp_speed_coverage(corrected, star, report.theta_true, config.levels);
    sr.mean_total_mass = mass.value() / static_cast<double>(sr.completed);
    sr.mean_negative_mass = neg.value() / static_cast<double>(sr.completed);
    sr.outcomes = std::move(outcomes);
    report.sizes.push_back(std::move(sr));
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "json") return ReportFormat::kJson;
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "markdown" || name == "markdown-table") return ReportFormat::kMarkdown;
  throw InputError("unknown report format '" + name + "' (valid: json, csv, markdown-table)");
}

namespace {

using nlohmann::ordered_json;

ordered_json metrics_json(const Metrics& m) {
  ordered_json j;
  j["bias"] = m.bias;
  j["rmse"] = m.rmse;
  j["mae"] = m.mae;
  return j;
}

Metrics metrics_from(const ordered_json& j) {
  return {j.at("bias").get<double>(), j.at("rmse").get<double>(), j.at("mae").get<double>()};
}

std::string level_label(double level) {
  std::ostringstream s;
  s << std::setprecision(4) << level * 100.0 << '%';
  return s.str();
}

std::string fixed3(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", x);
  return buf;
}

}  // namespace

std::string report_to_json(const McReport& r) {
  ordered_json j;
  j["design"] = r.design;
  j["theta_true"] = r.theta_true;
  j["theta_true_se"] = r.theta_true_se;
  j["relative_bias"] = r.relative_bias;
  j["S"] = r.S;
  j["seed"] = r.seed;
  j["levels"] = r.levels;
  j["sizes"] = ordered_json::array();
  for (const auto& s : r.sizes) {
    ordered_json e;
    e["n1"] = s.n1;
    e["nr"] = s.nr;
    e["completed"] = s.completed;
    e["failed"] = s.failed;
    e["corrected"] = metrics_json(s.corrected);
    e["naive"] = metrics_json(s.naive);
    e["coverage"] = s.coverage;
    e["mean_total_mass"] = s.mean_total_mass;
    e["min_total_mass"] = s.min_total_mass;
    e["max_total_mass"] = s.max_total_mass;
    e["mean_negative_mass"] = s.mean_negative_mass;
    j["sizes"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

McReport report_from_json(const std::string& text) {
  McReport r;
  try {
    const auto j = ordered_json::parse(text);
    r.design = j.at("design").get<std::string>();
    r.theta_true = j.at("theta_true").get<double>();
    r.theta_true_se = j.at("theta_true_se").get<double>();
    r.relative_bias = j.at("relative_bias").get<bool>();
    r.S = j.at("S").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.levels = j.at("levels").get<std::vector<double>>();
    for (const auto& e : j.at("sizes")) {
      SizeReport s;
      s.n1 = e.at("n1").get<std::size_t>();
      s.nr = e.at("nr").get<std::size_t>();
      s.completed = e.at("completed").get<std::size_t>();
      s.failed = e.at("failed").get<std::size_t>();
      s.corrected = metrics_from(e.at("corrected"));
      s.naive = metrics_from(e.at("naive"));
      s.coverage = e.at("coverage").get<std::vector<double>>();
      s.mean_total_mass = e.at("mean_total_mass").get<double>();
      s.min_total_mass = e.at("min_total_mass").get<double>();
      s.max_total_mass = e.at("max_total_mass").get<double>();
      s.mean_negative_mass = e.at("mean_negative_mass").get<double>();
      r.sizes.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed report JSON: ") + e.what());
  }
  return r;
}

std::string report_to_csv(const McReport& r) {
  std::ostringstream out;
  out << "design,n1,nr,estimator,completed,failed,bias,rmse,mae";
  for (double l : r.levels) out << ",coverage_" << format_double(l);
  out << '\n';
  for (const auto& s : r.sizes) {
    for (int which = 0; which < 2; ++which) {
      const Metrics& m = which == 0 ? s.corrected : s.naive;
      out << r.design << ',' << s.n1 << ',' << s.nr << ',' << (which == 0 ? "corrected" : "naive") << ','
          << s.completed << ',' << s.failed << ',' << format_double(m.bias) << ',' << format_double(m.rmse) << ','
          << format_double(m.mae);
      for (std::size_t l = 0; l < r.levels.size(); ++l) {
        out << ',';
        if (which == 0) out << format_double(s.coverage[l]);
      }
      out << '\n';
    }
  }
  return out.str();
}

std::string report_to_markdown(const McReport& r) {
  std::ostringstream out;
  out << "Design `" << r.design << "`, theta = " << format_double(r.theta_true) << ", S = " << r.S
      << (r.relative_bias ? ", bias relative to theta" : "") << "\n\n";
  out << "| metric |";
  for (const auto& s : r.sizes) out << " corrected n=" << s.n1 << " | naive n=" << s.n1 << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < r.sizes.size(); ++i) out << "---|---|";
  out << '\n';
  auto row = [&](const std::string& label, auto pick) {
    out << "| " << label << " |";
    for (const auto& s : r.sizes) out << ' ' << fixed3(pick(s.corrected)) << " | " << fixed3(pick(s.naive)) << " |";
    out << '\n';
  };
  row("bias", [](const Metrics& m) { return m.bias; });
  row("rmse", [](const Metrics& m) { return m.rmse; });
  row("mae", [](const Metrics& m) { return m.mae; });
  std::vector<std::size_t> order(r.levels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r.levels[a] > r.levels[b]; });
  for (std::size_t l : order) {
    out << "| coverage " << level_label(r.levels[l]) << " |";
    for (const auto& s : r.sizes) out << ' ' << fixed3(s.coverage[l]) << " |  |";
    out << '\n';
  }
  return out.str();
}

void emit_report(const McReport& report, ReportFormat format, const std::filesystem::path& path) {
  std::string text;
  switch (format) {
    case ReportFormat::kJson: text = report_to_json(report); break;
    case ReportFormat::kCsv: text = report_to_csv(report); break;
    case ReportFormat::kMarkdown: text = report_to_markdown(report); break;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write report: " + path.string());
  out << text;
  if (!out) throw InputError("cannot write report: " + path.string());
}

}  // namespace cfpanel
