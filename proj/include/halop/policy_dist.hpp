#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "halop/rng.hpp"

namespace halop {

struct GaussianParams {
  double mean = 0.0;
  double scale = 1.0;  // > 0
};

// Strictly increasing candidate actions a*_1 < ... < a*_m, m >= 2.
class LocationGrid {
public:
  explicit LocationGrid(std::vector<double> points);

  std::size_t size() const noexcept { return points_.size(); }
  double operator[](std::size_t k) const { return points_[k]; }
  const std::vector<double>& points() const noexcept { return points_; }

  // Cell boundaries at neighbour midpoints. The outer edges are infinite for
  // the exact discretization; the clipped variants stop half a neighbour gap
  // past the outer locations.
  double lower_mid(std::size_t k) const;  // -inf for k == 0
  double upper_mid(std::size_t k) const;  // +inf for k == m-1
  double clipped_lower(std::size_t k) const;
  double clipped_upper(std::size_t k) const;

  // Index of the location nearest to x (cells split at midpoints).
  std::size_t nearest(double x) const;

private:
  std::vector<double> points_;
};

struct DiscreteDist {
  std::vector<double> probs;
  std::vector<double> log_probs;

  std::size_t size() const noexcept { return probs.size(); }
};

double normal_pdf(double x);
double normal_cdf(double x);
// log(Phi(b) - Phi(a)) for a < b, accurate in both tails.
double log_normal_interval(double a, double b);

// Frozen uniform draws for the sampled estimator, `per_cell` per location.
// Draws are stratified: draw j of a cell is uniform on [j/n, (j+1)/n), so each
// is marginally uniform over the cell.
struct CellSamples {
  std::size_t per_cell = 0;
  std::vector<double> uniforms;  // m * per_cell values in [0, 1)
};

CellSamples draw_cell_samples(std::size_t cells, std::size_t per_cell, Rng& rng);

// Probability of each cell under N(mean, scale), from the normal CDF.
DiscreteDist disc_gaussian_exact(const LocationGrid& grid, GaussianParams p);

// Averaged Gaussian density over uniform draws in each cell, times the cell
// width, renormalized to sum to one. Edge cells span the clipped bound or six
// scales past the mean, whichever is wider.
DiscreteDist disc_gaussian_sampled(const LocationGrid& grid, GaussianParams p, const CellSamples& samples);
DiscreteDist disc_gaussian_sampled(const LocationGrid& grid, GaussianParams p, std::size_t n_samples, Rng& rng);

// Softmax over logits -(a_k - mean)^2 / (2 scale^2).
DiscreteDist gsoftmax(const LocationGrid& grid, GaussianParams p);

DiscreteDist softmax(std::span<const double> logits);

// Inverse-CDF draw from a single uniform. Returns a 0-based index.
std::size_t sample(const DiscreteDist& dist, Rng& rng);
std::size_t argmax(const DiscreteDist& dist);

// -inf for a zero-probability index.
double log_prob(const DiscreteDist& dist, std::size_t index);
double entropy(const DiscreteDist& dist);

struct ParamGrad {
  double d_mean = 0.0;
  double d_scale = 0.0;
};

enum class DiscreteFamily { Exact, Sampled, GSoftmax };

// A discretized policy evaluated at (mean, scale), with the Jacobian of every
// log-probability with respect to the two parameters.
struct DiscreteEval {
  DiscreteDist dist;
  std::vector<ParamGrad> d_log_probs;

  ParamGrad grad_log_prob(std::size_t index) const { return d_log_probs[index]; }
  // Gradient of the entropy: -sum_k d_k ln d_k * d ln d_k.
  ParamGrad grad_entropy() const;
};

// `samples` is required for the sampled family and ignored otherwise.
DiscreteEval evaluate(DiscreteFamily family, const LocationGrid& grid, GaussianParams p,
                      const CellSamples* samples = nullptr);

ParamGrad grad_log_prob(DiscreteFamily family, const LocationGrid& grid, GaussianParams p, std::size_t index,
                        const CellSamples* samples = nullptr);

// d ln softmax(l)_index / d l_j = [j == index] - d_j
std::vector<double> grad_log_prob_logits(const DiscreteDist& dist, std::size_t index);
// d H / d l_j = -d_j (ln d_j + H)
std::vector<double> grad_entropy_logits(const DiscreteDist& dist);

// Continuous Gaussian policy.
double gaussian_log_prob(double x, GaussianParams p);
double gaussian_entropy(GaussianParams p);
ParamGrad gaussian_grad_log_prob(double x, GaussianParams p);
ParamGrad gaussian_grad_entropy(GaussianParams p);

}  // namespace halop
