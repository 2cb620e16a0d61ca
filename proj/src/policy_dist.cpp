#include "halop/policy_dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace halop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

void require_scale(GaussianParams p) {
  if (!(p.scale > 0.0) || !std::isfinite(p.scale)) throw std::invalid_argument("gaussian scale must be positive");
  if (!std::isfinite(p.mean)) throw std::invalid_argument("gaussian mean must be finite");
}

double log_sum_exp(std::span<const double> xs) {
  double hi = -kInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == -kInf) return -kInf;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

DiscreteDist from_log_weights(std::vector<double> log_w) {
  const double z = log_sum_exp(log_w);
  DiscreteDist d;
  d.log_probs.resize(log_w.size());
  d.probs.resize(log_w.size());
  for (std::size_t k = 0; k < log_w.size(); ++k) {
    d.log_probs[k] = log_w[k] - z;
    d.probs[k] = std::exp(d.log_probs[k]);
  }
  return d;
}

double log_normal_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

// log Q(x) = log(1 - Phi(x)); asymptotic series once erfc underflows.
double log_upper_tail(double x) {
  if (x < 30.0) return std::log(0.5 * std::erfc(x / M_SQRT2));
  const double r = 1.0 / (x * x);
  return log_normal_pdf(x) - std::log(x) + std::log1p(-r + 3.0 * r * r - 15.0 * r * r * r);
}

// Outer sampling bounds of the edge cells reach this many scales past the mean.
constexpr double kTailScales = 6.0;

// Subtracts the probability-weighted mean gradient, turning gradients of
// unnormalized log weights into gradients of normalized log-probabilities.
void center(std::vector<ParamGrad>& g, const DiscreteDist& d) {
  ParamGrad mean;
  for (std::size_t k = 0; k < g.size(); ++k) {
    mean.d_mean += d.probs[k] * g[k].d_mean;
    mean.d_scale += d.probs[k] * g[k].d_scale;
  }
  for (auto& x : g) {
    x.d_mean -= mean.d_mean;
    x.d_scale -= mean.d_scale;
  }
}

}  // namespace

LocationGrid::LocationGrid(std::vector<double> points) : points_(std::move(points)) {
  if (points_.size() < 2) throw std::invalid_argument("location grid needs at least two points");
  for (std::size_t k = 0; k < points_.size(); ++k) {
    if (!std::isfinite(points_[k])) throw std::invalid_argument("location grid points must be finite");
    if (k > 0 && !(points_[k] > points_[k - 1])) throw std::invalid_argument("location grid must be strictly increasing");
  }
}

double LocationGrid::lower_mid(std::size_t k) const {
  return k == 0 ? -kInf : 0.5 * (points_[k - 1] + points_[k]);
}

double LocationGrid::upper_mid(std::size_t k) const {
  return k + 1 == points_.size() ? kInf : 0.5 * (points_[k] + points_[k + 1]);
}

double LocationGrid::clipped_lower(std::size_t k) const {
  return k == 0 ? points_[0] - 0.5 * (points_[1] - points_[0]) : lower_mid(k);
}

double LocationGrid::clipped_upper(std::size_t k) const {
  const std::size_t m = points_.size();
  return k + 1 == m ? points_[m - 1] + 0.5 * (points_[m - 1] - points_[m - 2]) : upper_mid(k);
}

std::size_t LocationGrid::nearest(double x) const {
  // First location whose upper midpoint exceeds x.
  std::size_t lo = 0;
  std::size_t hi = points_.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (x < 0.5 * (points_[mid] + points_[mid + 1])) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

double normal_pdf(double x) { return std::exp(log_normal_pdf(x)); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / M_SQRT2); }

double log_normal_interval(double a, double b) {
  if (!(a < b)) return -kInf;
  if (a >= 0.0) {
    // Upper tail: Q(a) - Q(b).
    const double la = log_upper_tail(a);
    return la + std::log1p(-std::exp(log_upper_tail(b) - la));
  }
  if (b <= 0.0) {
    const double lb = log_upper_tail(-b);
    return lb + std::log1p(-std::exp(log_upper_tail(-a) - lb));
  }
  const double left = normal_cdf(a);                // Phi(a), small side
  const double right = 0.5 * std::erfc(b / M_SQRT2);  // Q(b)
  return std::log1p(-(left + right));
}

CellSamples draw_cell_samples(std::size_t cells, std::size_t per_cell, Rng& rng) {
  if (per_cell == 0) throw std::invalid_argument("need at least one sample per cell");
  CellSamples s;
  s.per_cell = per_cell;
  s.uniforms.resize(cells * per_cell);
  // Jittered strata: draw j of a cell lies in [j/n, (j+1)/n).
  const double n = static_cast<double>(per_cell);
  for (std::size_t i = 0; i < s.uniforms.size(); ++i) {
    s.uniforms[i] = (static_cast<double>(i % per_cell) + rng.uniform()) / n;
  }
  return s;
}

DiscreteDist disc_gaussian_exact(const LocationGrid& grid, GaussianParams p) {
  return evaluate(DiscreteFamily::Exact, grid, p).dist;
}

DiscreteDist disc_gaussian_sampled(const LocationGrid& grid, GaussianParams p, const CellSamples& samples) {
  return evaluate(DiscreteFamily::Sampled, grid, p, &samples).dist;
}

DiscreteDist disc_gaussian_sampled(const LocationGrid& grid, GaussianParams p, std::size_t n_samples, Rng& rng) {
  const auto samples = draw_cell_samples(grid.size(), n_samples, rng);
  return disc_gaussian_sampled(grid, p, samples);
}

DiscreteDist gsoftmax(const LocationGrid& grid, GaussianParams p) {
  return evaluate(DiscreteFamily::GSoftmax, grid, p).dist;
}

DiscreteDist softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of no logits");
  return from_log_weights(std::vector<double>(logits.begin(), logits.end()));
}

std::size_t sample(const DiscreteDist& dist, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    if (dist.probs[k] <= 0.0) continue;
    last_nonzero = k;
    cum += dist.probs[k];
    if (u < cum) return k;
  }
  return last_nonzero;
}

std::size_t argmax(const DiscreteDist& dist) {
  return static_cast<std::size_t>(std::distance(dist.probs.begin(), std::max_element(dist.probs.begin(), dist.probs.end())));
}

double log_prob(const DiscreteDist& dist, std::size_t index) {
  if (index >= dist.size()) throw std::out_of_range("log_prob index");
  if (dist.probs[index] <= 0.0 && !std::isfinite(dist.log_probs[index])) return -kInf;
  return dist.log_probs[index];
}

double entropy(const DiscreteDist& dist) {
  double h = 0.0;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    if (dist.probs[k] > 0.0) h -= dist.probs[k] * dist.log_probs[k];
  }
  return h;
}

ParamGrad DiscreteEval::grad_entropy() const {
  ParamGrad g;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    if (dist.probs[k] <= 0.0) continue;
    const double w = -dist.probs[k] * dist.log_probs[k];
    g.d_mean += w * d_log_probs[k].d_mean;
    g.d_scale += w * d_log_probs[k].d_scale;
  }
  return g;
}

DiscreteEval evaluate(DiscreteFamily family, const LocationGrid& grid, GaussianParams p, const CellSamples* samples) {
  require_scale(p);
  const std::size_t m = grid.size();
  const double mu = p.mean;
  const double sigma = p.scale;
  std::vector<double> log_w(m);
  std::vector<ParamGrad> g(m);

  switch (family) {
    case DiscreteFamily::GSoftmax: {
      for (std::size_t k = 0; k < m; ++k) {
        const double d = grid[k] - mu;
        log_w[k] = -d * d / (2.0 * sigma * sigma);
        g[k] = {d / (sigma * sigma), d * d / (sigma * sigma * sigma)};
      }
      break;
    }
    case DiscreteFamily::Sampled: {
      if (samples == nullptr) throw std::invalid_argument("sampled discretization needs cell samples");
      const std::size_t n = samples->per_cell;
      if (n == 0 || samples->uniforms.size() != m * n) throw std::invalid_argument("cell samples do not match the grid");
      std::vector<double> lz(n);
      for (std::size_t k = 0; k < m; ++k) {
        // The edge cells are clipped at half a neighbour gap past the outer
        // location, widened when needed to reach kTailScales scales past the
        // mean. (d_lo, d_hi) are the bound derivatives along (mu, sigma).
        double lo = grid.clipped_lower(k);
        double hi = grid.clipped_upper(k);
        ParamGrad d_lo;
        ParamGrad d_hi;
        if (k == 0 && mu - kTailScales * sigma < lo) {
          lo = mu - kTailScales * sigma;
          d_lo = {1.0, -kTailScales};
        }
        if (k + 1 == m && mu + kTailScales * sigma > hi) {
          hi = mu + kTailScales * sigma;
          d_hi = {1.0, kTailScales};
        }
        const double width = hi - lo;
        std::vector<double> z(n);
        for (std::size_t j = 0; j < n; ++j) {
          const double x = lo + samples->uniforms[k * n + j] * width;
          z[j] = (x - mu) / sigma;
          lz[j] = -0.5 * z[j] * z[j];
        }
        const double lse = log_sum_exp(lz);
        // The 1/(n sigma sqrt(2 pi)) factor is common to every cell and
        // cancels in the normalization, so it is left out here.
        log_w[k] = std::log(width) + lse;
        ParamGrad gk{(d_hi.d_mean - d_lo.d_mean) / width, (d_hi.d_scale - d_lo.d_scale) / width};
        for (std::size_t j = 0; j < n; ++j) {
          const double w = std::exp(lz[j] - lse);
          const double u = samples->uniforms[k * n + j];
          // x = (1 - u) lo + u hi, z = (x - mu) / sigma
          const double dx_mu = (1.0 - u) * d_lo.d_mean + u * d_hi.d_mean;
          const double dx_sigma = (1.0 - u) * d_lo.d_scale + u * d_hi.d_scale;
          gk.d_mean -= w * z[j] * (dx_mu - 1.0) / sigma;
          gk.d_scale -= w * z[j] * (dx_sigma - z[j]) / sigma;
        }
        g[k] = gk;
      }
      break;
    }
    case DiscreteFamily::Exact: {
      for (std::size_t k = 0; k < m; ++k) {
        const double a = (grid.lower_mid(k) - mu) / sigma;
        const double b = (grid.upper_mid(k) - mu) / sigma;
        const double lp = log_normal_interval(a, b);
        log_w[k] = lp;
        // d/dmu [Phi(b) - Phi(a)] = (phi(a) - phi(b)) / sigma
        // d/dsigma [Phi(b) - Phi(a)] = (a phi(a) - b phi(b)) / sigma
        auto ratio = [&](double x) {
          return std::isfinite(x) && std::isfinite(lp) ? std::exp(log_normal_pdf(x) - lp) : 0.0;
        };
        const double ra = ratio(a);
        const double rb = ratio(b);
        const double aa = std::isfinite(a) ? a : 0.0;
        const double bb = std::isfinite(b) ? b : 0.0;
        g[k] = {(ra - rb) / sigma, (aa * ra - bb * rb) / sigma};
      }
      break;
    }
  }

  DiscreteEval out;
  out.dist = from_log_weights(std::move(log_w));
  if (family != DiscreteFamily::Exact) center(g, out.dist);
  out.d_log_probs = std::move(g);
  return out;
}

ParamGrad grad_log_prob(DiscreteFamily family, const LocationGrid& grid, GaussianParams p, std::size_t index,
                        const CellSamples* samples) {
  auto ev = evaluate(family, grid, p, samples);
  if (index >= ev.dist.size()) throw std::out_of_range("grad_log_prob index");
  return ev.d_log_probs[index];
}

std::vector<double> grad_log_prob_logits(const DiscreteDist& dist, std::size_t index) {
  std::vector<double> g(dist.size());
  for (std::size_t j = 0; j < dist.size(); ++j) g[j] = (j == index ? 1.0 : 0.0) - dist.probs[j];
  return g;
}

std::vector<double> grad_entropy_logits(const DiscreteDist& dist) {
  const double h = entropy(dist);
  std::vector<double> g(dist.size());
  for (std::size_t j = 0; j < dist.size(); ++j) {
    g[j] = dist.probs[j] > 0.0 ? -dist.probs[j] * (dist.log_probs[j] + h) : 0.0;
  }
  return g;
}

double gaussian_log_prob(double x, GaussianParams p) {
  require_scale(p);
  const double z = (x - p.mean) / p.scale;
  return -0.5 * z * z - std::log(p.scale) - kLogSqrt2Pi;
}

double gaussian_entropy(GaussianParams p) {
  require_scale(p);
  return 0.5 + kLogSqrt2Pi + std::log(p.scale);
}

ParamGrad gaussian_grad_log_prob(double x, GaussianParams p) {
  require_scale(p);
  const double z = (x - p.mean) / p.scale;
  return {z / p.scale, (z * z - 1.0) / p.scale};
}

ParamGrad gaussian_grad_entropy(GaussianParams p) {
  require_scale(p);
  return {0.0, 1.0 / p.scale};
}

}  // namespace halop
