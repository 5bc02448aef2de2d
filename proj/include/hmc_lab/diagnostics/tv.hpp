#pragma once

// Binned total-variation distance between the law of Q_n over independent
// chains and the target, for 1-D and 2-D models, and a log-linear fit of
// its decay.
//
// Cells: bins^d equal cells on [-L, L]^d plus one outside cell. L is the
// smallest half-width at which U rises by at least 14 along every axis.
// Target cell masses use tensor Gauss-Legendre quadrature per cell.

#include "hmc_lab/core.hpp"
#include "hmc_lab/kernel.hpp"
#include "hmc_lab/parallel.hpp"
#include "hmc_lab/potential.hpp"
#include "hmc_lab/quadrature.hpp"
#include "hmc_lab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hmc_lab {

enum class TvStart { point, stationary };

struct TvOptions {
  int bins = 0;                // per axis; 0 picks 40 (1-D) or 20 (2-D)
  int replications = 200;      // bootstrap draws for the noise floor
  double floor_factor = 3.0;   // fit uses TV >= floor_factor * floor
  double saturation = 0.95;    // and TV below this (initial plateau)
  TvStart start = TvStart::point;
  double half_width = 0.0;     // 0 picks L automatically
};

struct TvDecayCurve {
  std::vector<int> iterations;
  std::vector<double> tv_hat;
  std::vector<int> fit_indices;
  double noise_floor = 0.0;
  std::optional<double> rho_hat;
  double r2 = 0.0;
  std::string reason;  // why rho_hat is absent
  int bins = 0;
  int replications = 0;
  int n_chains = 0;
  double half_width = 0.0;
  std::uint64_t seed = 0;
  TvStart start = TvStart::point;
  long halted_chains = 0;
};

/// Binned target law on [-L, L]^d; the last entry is the outside cell.
struct BinnedTarget {
  int dim = 1;
  int bins = 40;
  double L = 1.0;
  std::vector<double> mass;

  std::size_t cell_of(const Vector& q) const {
    const double width = 2.0 * L / bins;
    std::size_t idx = 0;
    for (int i = 0; i < dim; ++i) {
      const double x = q[i];
      if (!(x >= -L && x < L)) return mass.size() - 1;
      const int k = std::min(bins - 1, static_cast<int>((x + L) / width));
      idx = idx * bins + static_cast<std::size_t>(k);
    }
    return idx;
  }
};

namespace detail {

inline double auto_half_width(const PotentialModel& model, double min_rise = 14.0) {
  const int d = model.dim;
  // Minimum of U sampled along the axes, so wells off the origin count.
  auto rise = [&](double L) {
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < d; ++i) {
      for (double s : {1.0, -1.0}) {
        double lowest = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= 64; ++k) {
          Vector q = Vector::Zero(d);
          q[i] = s * L * k / 64.0;
          lowest = std::min(lowest, model.u(q));
        }
        Vector q = Vector::Zero(d);
        q[i] = s * L;
        worst = std::min(worst, model.u(q) - lowest);
      }
    }
    return worst;
  };
  double L = 0.5;
  while (rise(L) < min_rise) {
    L *= 1.25;
    if (L > 1e6) throw NumericError("tv_decay: potential does not grow enough to bin");
  }
  return L;
}

// Integrates exp(-(U - u_ref)) over each cell of a grid with n cells per axis
// on [-W, W]^d, 8 Gauss-Legendre nodes per cell and axis.
inline std::vector<double> cell_integrals(const PotentialModel& model, double W, int n,
                                          double u_ref) {
  const int d = model.dim;
  const QuadratureRule base = gauss_legendre(8);
  const double width = 2.0 * W / n;
  std::vector<double> out(static_cast<std::size_t>(d == 1 ? n : n * n), 0.0);
  Vector q(d);
  for (std::size_t c = 0; c < out.size(); ++c) {
    const int ix = d == 1 ? static_cast<int>(c) : static_cast<int>(c / n);
    const int iy = d == 1 ? 0 : static_cast<int>(c % n);
    const double x0 = -W + ix * width, y0 = -W + iy * width;
    double acc = 0.0;
    for (std::size_t a = 0; a < base.size(); ++a) {
      q[0] = x0 + 0.5 * width * (base.nodes[a] + 1.0);
      if (d == 1) {
        acc += base.weights[a] * std::exp(u_ref - model.u(q));
        continue;
      }
      for (std::size_t b = 0; b < base.size(); ++b) {
        q[1] = y0 + 0.5 * width * (base.nodes[b] + 1.0);
        acc += base.weights[a] * base.weights[b] * std::exp(u_ref - model.u(q));
      }
    }
    out[c] = acc * std::pow(0.5 * width, d);
  }
  return out;
}

inline double binned_tv(const std::vector<double>& counts, double n, const std::vector<double>& p) {
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(counts[i] / n - p[i]);
  return std::min(1.0, 0.5 * tv);
}

// Draws from the target: exact for the Gaussian family, otherwise a cell
// from a fine tabulation followed by a uniform point inside the cell.
class TargetSampler {
public:
  explicit TargetSampler(const PotentialModel& model, double L) : model_(model) {
    if (model.family == Family::gaussian) return;
    const int d = model.dim;
    n_ = d == 1 ? 4000 : 400;
    W_ = 2.0 * L;
    const std::vector<double> w = cell_integrals(model, W_, n_, model.u(Vector::Zero(d)));
    cdf_.resize(w.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) cdf_[i] = (acc += w[i]);
    for (double& c : cdf_) c /= acc;
  }

  Vector draw(Stream& rng) const {
    const int d = model_.dim;
    if (cdf_.empty()) {
      // Gaussian: U(q) = sum precision_i q_i^2 / 2; recover precision from
      // the gradient at the unit vectors.
      Vector q(d);
      for (int i = 0; i < d; ++i) {
        Vector e = Vector::Zero(d);
        e[i] = 1.0;
        q[i] = rng.normal() / std::sqrt(model_.grad(e)[i]);
      }
      return q;
    }
    const double u = rng.uniform();
    const std::size_t c = static_cast<std::size_t>(
        std::lower_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
    const std::size_t cell = std::min(c, cdf_.size() - 1);
    const double width = 2.0 * W_ / n_;
    Vector q(d);
    const int ix = d == 1 ? static_cast<int>(cell) : static_cast<int>(cell / n_);
    q[0] = -W_ + (ix + rng.uniform()) * width;
    if (d == 2) q[1] = -W_ + (static_cast<int>(cell % n_) + rng.uniform()) * width;
    return q;
  }

private:
  const PotentialModel& model_;
  int n_ = 0;
  double W_ = 0.0;
  std::vector<double> cdf_;
};

}  // namespace detail

inline BinnedTarget binned_target(const PotentialModel& model, int bins, double L) {
  const int d = model.dim;
  const double u_ref = model.u(Vector::Zero(d));
  // The normalizer integrates over a box at least twice as wide on which U
  // rises by 40, with cells no wider than the inner ones.
  const std::vector<double> inner = detail::cell_integrals(model, L, bins, u_ref);
  const double W = std::max(2.0 * L, detail::auto_half_width(model, 40.0));
  const int n_wide = static_cast<int>(std::ceil(bins * W / L));
  const std::vector<double> wide = detail::cell_integrals(model, W, n_wide, u_ref);
  double z = 0.0;
  for (double w : wide) z += w;
  if (!(z > 0.0) || !std::isfinite(z)) throw NumericError("tv_decay: target normalizer is not finite");
  BinnedTarget t;
  t.dim = d;
  t.bins = bins;
  t.L = L;
  double inside = 0.0;
  for (double w : inner) {
    t.mass.push_back(w / z);
    inside += w / z;
  }
  t.mass.push_back(std::max(0.0, 1.0 - inside));
  return t;
}

/// Mean binned TV of n_chains exact target draws (multinomial on the cells).
inline double tv_noise_floor(const BinnedTarget& target, int n_chains, int replications,
                             std::uint64_t seed) {
  std::vector<double> cdf(target.mass.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < cdf.size(); ++i) cdf[i] = (acc += target.mass[i]);
  Stream rng = split(derive_seed(seed, 0xF100), 0);
  double total = 0.0;
  std::vector<double> counts(cdf.size());
  for (int r = 0; r < replications; ++r) {
    std::fill(counts.begin(), counts.end(), 0.0);
    for (int k = 0; k < n_chains; ++k) {
      const double u = rng.uniform() * acc;
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      counts[std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1)] += 1.0;
    }
    total += detail::binned_tv(counts, n_chains, target.mass);
  }
  return total / replications;
}

inline TvDecayCurve tv_decay(const PotentialModel& model, const KernelSpec& spec, const Vector& q0,
                             std::vector<int> iterations, int n_chains, std::uint64_t seed,
                             TvOptions opt = {}, Parallelism par = {}) {
  const int d = model.dim;
  if (d != 1 && d != 2) throw ConfigError("tv_decay: only 1-D and 2-D models are supported");
  if (n_chains < 1000) throw ConfigError("tv_decay.n_chains must be >= 1000");
  if (q0.size() != d) throw ConfigError("tv_decay: q0 dimension mismatch");
  if (iterations.empty()) throw ConfigError("tv_decay.iterations must be nonempty");
  std::sort(iterations.begin(), iterations.end());
  iterations.erase(std::unique(iterations.begin(), iterations.end()), iterations.end());
  if (iterations.front() < 0) throw ConfigError("tv_decay.iterations must be >= 0");
  if (opt.replications < 10) throw ConfigError("tv_decay.replications must be >= 10");
  validate(spec);

  const int bins = opt.bins > 0 ? opt.bins : (d == 1 ? 40 : 20);
  const double L = opt.half_width > 0.0 ? opt.half_width : detail::auto_half_width(model);
  const BinnedTarget target = binned_target(model, bins, L);

  TvDecayCurve out;
  out.iterations = iterations;
  out.bins = bins;
  out.replications = opt.replications;
  out.n_chains = n_chains;
  out.half_width = L;
  out.seed = seed;
  out.start = opt.start;
  out.noise_floor = tv_noise_floor(target, n_chains, opt.replications, seed);

  std::optional<detail::TargetSampler> sampler;
  if (opt.start == TvStart::stationary) sampler.emplace(model, L);

  // cells[j][k]: cell of chain k at checkpoint j (SIZE_MAX once halted).
  const std::size_t n_check = iterations.size();
  const std::uint64_t chain_root = derive_seed(seed, 0xC4A1);
  const ChunkPlan plan{static_cast<std::size_t>(n_chains), 50};
  struct Part {
    std::vector<std::vector<std::size_t>> cells;  // per checkpoint
    long halted = 0;
  };
  auto parts = map_chunks(plan.count(), par, [&](std::size_t c) {
    Part part;
    part.cells.assign(n_check, {});
    for (std::size_t k = plan.begin(c); k < plan.end(c); ++k) {
      Stream rng = split(chain_root, k);
      Vector q = sampler ? sampler->draw(rng) : q0;
      int n = 0;
      bool halted = false;
      for (std::size_t j = 0; j < n_check; ++j) {
        while (!halted && n < iterations[j]) {
          try {
            q = kernel_step(model, q, spec, rng).q;
          } catch (const NumericError&) {
            halted = true;
          }
          ++n;
        }
        part.cells[j].push_back(halted ? SIZE_MAX : target.cell_of(q));
      }
      part.halted += halted ? 1 : 0;
    }
    return part;
  });

  std::vector<std::vector<double>> counts(n_check, std::vector<double>(target.mass.size(), 0.0));
  std::vector<double> alive(n_check, 0.0);
  for (const auto& part : parts) {
    out.halted_chains += part.halted;
    for (std::size_t j = 0; j < n_check; ++j) {
      for (std::size_t cell : part.cells[j]) {
        if (cell == SIZE_MAX) continue;
        counts[j][cell] += 1.0;
        alive[j] += 1.0;
      }
    }
  }
  for (std::size_t j = 0; j < n_check; ++j)
    out.tv_hat.push_back(alive[j] > 0 ? detail::binned_tv(counts[j], alive[j], target.mass) : 1.0);

  // Log-linear fit above the noise floor and below the saturation plateau.
  std::vector<double> x, y;
  for (std::size_t j = 0; j < n_check; ++j) {
    const double tv = out.tv_hat[j];
    if (tv >= opt.floor_factor * out.noise_floor && tv < opt.saturation && tv > 0.0) {
      out.fit_indices.push_back(static_cast<int>(j));
      x.push_back(iterations[j]);
      y.push_back(std::log(tv));
    }
  }
  if (x.size() < 3) {
    out.reason = "fewer than 3 checkpoints above " + format_double(opt.floor_factor) +
                 "x the noise floor";
    return out;
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) {
    out.reason = "fit points share one iteration";
    return out;
  }
  const double slope = sxy / sxx;
  out.rho_hat = std::exp(slope);
  out.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return out;
}

}  // namespace hmc_lab
