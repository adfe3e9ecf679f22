#pragma once

#include <span>
#include <string>
#include <vector>

namespace audit {

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

// Natural log of the gamma function, Lanczos approximation, x > 0.
double log_gamma(double x);

// Regularized incomplete gamma P(a, x) and Q(a, x) = 1 - P(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Chi-square survival function Q(k/2, x/2); series branch for x < k + 1,
// continued fraction otherwise. Absolute error well under 1e-10.
double chi2_sf(double x, int k);

// Standard normal survival function.
double normal_sf(double z);

// Standard normal quantile, Wichura's AS241 rational approximation
// (absolute error far below 1e-9). p must lie strictly in (0, 1).
double normal_quantile(double p);

// ---------------------------------------------------------------------------
// Ranks
// ---------------------------------------------------------------------------

struct RankedData {
  std::vector<double> ranks;  // mid-ranks, aligned with input order
  double tie_sum = 0.0;       // sum of (t^3 - t) over tie groups
};

RankedData midranks(std::span<const double> values);

// Holm step-down adjustment. Returns adjusted p-values aligned with input.
std::vector<double> holm_adjust(std::span<const double> raw_p);

// Spearman rank correlation via mid-ranks; 0 when either side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Omnibus and post-hoc tests
// ---------------------------------------------------------------------------

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int df = 0;
  std::string method;
};

// Kruskal-Wallis H with mid-ranks and tie correction; all-tied input yields
// H = 0, p = 1. Requires >= 2 non-empty groups.
TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

// Friedman test over a complete n_blocks x k_treatments matrix, within-block
// mid-ranks, Conover tie-corrected statistic. Throws IncompleteBlocks on
// ragged input; requires n >= 2 and k >= 2.
TestResult friedman(const std::vector<std::vector<double>>& blocks);

struct PairwiseComparison {
  std::string group_a;
  std::string group_b;
  double z = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  bool significant = false;
};

struct PairwiseMatrix {
  double alpha = 0.05;
  std::vector<PairwiseComparison> pairs;  // ordered (a, b), a before b

  int significant_count() const;
};

// Dunn z-tests on pooled mid-ranks with tie correction, two-sided normal
// p-values, Holm adjustment across all pairs.
PairwiseMatrix pairwise_dunn(const std::vector<std::vector<double>>& groups,
                             const std::vector<std::string>& names,
                             double alpha);

// ---------------------------------------------------------------------------
// Crossed random-intercept model, y = mu + u_provider + v_item + e
// ---------------------------------------------------------------------------

struct MixedObservation {
  std::string provider;
  std::string item;
  double score = 0.0;
};

struct VarianceComponents {
  double sigma2_provider = 0.0;
  double sigma2_item = 0.0;
  double sigma2_residual = 0.0;
  double mu_hat = 0.0;
  double icc = 0.0;
  bool converged = false;
  int n_iterations = 0;
};

struct FitOptions {
  double rel_tolerance = 1e-8;
  int max_iterations = 10000;
};

// EM for REML with independent Gaussian random intercepts for provider and
// item. Initialization comes from method-of-moments estimates floored at
// 1e-4; each E-step solves the mixed-model equations (a symmetric
// positive-definite system of size n_providers + n_items + 1). Stops when the
// max relative change across the three variances drops below rel_tolerance.
// Throws DesignDisconnected for disconnected provider/item designs.
VarianceComponents fit_mixedlm(std::span<const MixedObservation> rows,
                               const FitOptions& options = {});

// Fallback for single-provider matrices: fits y = mu + v_item + e and
// reports sigma2_provider fixed at 0.
VarianceComponents fit_item_only(std::span<const MixedObservation> rows,
                                 const FitOptions& options = {});

// sigma2_provider / (sigma2_provider + sigma2_item + sigma2_residual).
// Throws ZeroTotalVariance when the denominator is zero.
double icc(const VarianceComponents& vc);

// Boundary likelihood-ratio test for sigma2_provider = 0: ML deviance
// difference between the full model and the item-only model, p-value from
// the mixture 0.5*chi2_0 + 0.5*chi2_1.
TestResult lrt_provider(std::span<const MixedObservation> rows,
                        const FitOptions& options = {});

}  // namespace audit
