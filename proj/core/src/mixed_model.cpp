#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "audit/errors.hpp"
#include "audit/stats.hpp"

namespace audit {

namespace {

constexpr double kVarianceFloor = 1e-12;  // guards lambda = resid / sigma2
constexpr double kInitFloor = 1e-4;
constexpr double kTwoPi = 6.283185307179586476925286766559;

// Dense symmetric matrix, row-major, full storage. Sizes here are
// 1 + n_providers + n_items, so O(n^3) operations with fixed summation
// order are both fast enough and bit-stable.
class SymMatrix {
 public:
  explicit SymMatrix(int n) : n_(n), a_(std::size_t(n) * std::size_t(n), 0.0) {}

  double& at(int r, int c) { return a_[std::size_t(r) * std::size_t(n_) + std::size_t(c)]; }
  double at(int r, int c) const {
    return a_[std::size_t(r) * std::size_t(n_) + std::size_t(c)];
  }
  int size() const { return n_; }

  // In-place Cholesky, lower triangle. Throws on loss of positive
  // definiteness.
  void cholesky() {
    for (int j = 0; j < n_; ++j) {
      double diag = at(j, j);
      for (int k = 0; k < j; ++k) {
        diag -= at(j, k) * at(j, k);
      }
      if (!(diag > 0.0)) {
        throw Error("mixed-model equations are not positive definite");
      }
      const double root = std::sqrt(diag);
      at(j, j) = root;
      for (int i = j + 1; i < n_; ++i) {
        double v = at(i, j);
        for (int k = 0; k < j; ++k) {
          v -= at(i, k) * at(j, k);
        }
        at(i, j) = v / root;
      }
    }
  }

  // Solve L L' x = b given the Cholesky factor in the lower triangle.
  std::vector<double> solve(std::vector<double> b) const {
    for (int i = 0; i < n_; ++i) {
      double v = b[std::size_t(i)];
      for (int k = 0; k < i; ++k) {
        v -= at(i, k) * b[std::size_t(k)];
      }
      b[std::size_t(i)] = v / at(i, i);
    }
    for (int i = n_ - 1; i >= 0; --i) {
      double v = b[std::size_t(i)];
      for (int k = i + 1; k < n_; ++k) {
        v -= at(k, i) * b[std::size_t(k)];
      }
      b[std::size_t(i)] = v / at(i, i);
    }
    return b;
  }

  // Diagonal of (L L')^{-1} given the Cholesky factor.
  std::vector<double> inverse_diagonal() const {
    std::vector<double> diag(std::size_t(n_), 0.0);
    std::vector<double> col(std::size_t(n_), 0.0);
    for (int j = 0; j < n_; ++j) {
      // Forward-substitute column j of L^{-1}.
      for (int i = j; i < n_; ++i) {
        double v = i == j ? 1.0 : 0.0;
        for (int k = j; k < i; ++k) {
          v -= at(i, k) * col[std::size_t(k)];
        }
        col[std::size_t(i)] = v / at(i, i);
      }
      double sum = 0.0;
      for (int i = j; i < n_; ++i) {
        sum += col[std::size_t(i)] * col[std::size_t(i)];
      }
      diag[std::size_t(j)] = sum;
    }
    return diag;
  }

  double log_det_from_cholesky() const {
    double acc = 0.0;
    for (int i = 0; i < n_; ++i) {
      acc += std::log(at(i, i));
    }
    return 2.0 * acc;
  }

 private:
  int n_;
  std::vector<double> a_;
};

struct FactorData {
  int n_levels = 0;
  std::vector<double> counts;
  std::vector<double> sums;
};

// Sufficient statistics for y = mu + sum_f u_f + e with one or two crossed
// random factors. The data enter the EM iteration only through these.
struct Design {
  double n = 0.0;
  double sum = 0.0;
  double sumsq = 0.0;
  std::vector<FactorData> factors;
  std::vector<double> cross;  // factor0 x factor1 cell counts, row-major

  int q() const {
    int total = 0;
    for (const auto& f : factors) {
      total += f.n_levels;
    }
    return total;
  }
  int dim() const { return 1 + q(); }
  double total_ss() const { return sumsq - sum * sum / n; }
};

struct EmFit {
  std::vector<double> sigma2;
  double sigma2_resid = 0.0;
  double mu = 0.0;
  bool converged = false;
  int iterations = 0;
  double ml_deviance = std::numeric_limits<double>::quiet_NaN();
};

SymMatrix base_matrix(const Design& d) {
  SymMatrix m(d.dim());
  m.at(0, 0) = d.n;
  int offset = 1;
  std::vector<int> offsets;
  for (const auto& f : d.factors) {
    offsets.push_back(offset);
    for (int l = 0; l < f.n_levels; ++l) {
      m.at(0, offset + l) = f.counts[std::size_t(l)];
      m.at(offset + l, 0) = f.counts[std::size_t(l)];
      m.at(offset + l, offset + l) = f.counts[std::size_t(l)];
    }
    offset += f.n_levels;
  }
  if (d.factors.size() == 2) {
    const int p = d.factors[0].n_levels;
    const int i = d.factors[1].n_levels;
    for (int a = 0; a < p; ++a) {
      for (int b = 0; b < i; ++b) {
        const double c = d.cross[std::size_t(a) * std::size_t(i) + std::size_t(b)];
        m.at(offsets[0] + a, offsets[1] + b) = c;
        m.at(offsets[1] + b, offsets[0] + a) = c;
      }
    }
  }
  return m;
}

std::vector<double> rhs_vector(const Design& d) {
  std::vector<double> r;
  r.reserve(std::size_t(d.dim()));
  r.push_back(d.sum);
  for (const auto& f : d.factors) {
    r.insert(r.end(), f.sums.begin(), f.sums.end());
  }
  return r;
}

// Method-of-moments starting values: sequential ANOVA-style estimates using
// the balanced-design expectation coefficients with average cell counts.
// Exact Henderson ANOVA on balanced data, a serviceable start elsewhere.
std::vector<double> mom_start(const Design& d, double* resid_out) {
  const double m = d.sum / d.n;
  const double ss_total = d.total_ss();
  double ss_between_total = 0.0;
  std::vector<double> ss_between;
  std::vector<double> coeff;
  for (const auto& f : d.factors) {
    double ss = 0.0;
    double sq_counts = 0.0;
    for (int l = 0; l < f.n_levels; ++l) {
      const double c = f.counts[std::size_t(l)];
      const double mean = f.sums[std::size_t(l)] / c;
      ss += c * (mean - m) * (mean - m);
      sq_counts += c * c;
    }
    ss_between.push_back(ss);
    ss_between_total += ss;
    coeff.push_back((d.n - sq_counts / d.n) / double(f.n_levels - 1));
  }
  double df_res = d.n - 1.0;
  for (const auto& f : d.factors) {
    df_res -= double(f.n_levels - 1);
  }
  const double resid =
      std::max((ss_total - ss_between_total) / std::max(df_res, 1.0),
               kInitFloor);
  if (resid_out != nullptr) {
    *resid_out = resid;
  }
  std::vector<double> start;
  for (std::size_t f = 0; f < d.factors.size(); ++f) {
    const double ms = ss_between[f] / double(d.factors[f].n_levels - 1);
    start.push_back(std::max((ms - resid) / coeff[f], kInitFloor));
  }
  return start;
}

// ML deviance, -2 log L, at the given variances using the Woodbury and
// Sylvester identities on the random-effects block.
double ml_deviance_at(const Design& d, const std::vector<double>& sigma2,
                      double resid, double beta) {
  const int q = d.q();
  SymMatrix full = base_matrix(d);
  SymMatrix zz(q);
  for (int r = 0; r < q; ++r) {
    for (int c = 0; c < q; ++c) {
      zz.at(r, c) = full.at(r + 1, c + 1);
    }
  }
  std::vector<double> lambdas;
  double logdet_g_terms = 0.0;
  int offset = 0;
  for (std::size_t f = 0; f < d.factors.size(); ++f) {
    const double s = std::max(sigma2[f], kVarianceFloor);
    const double lambda = resid / s;
    for (int l = 0; l < d.factors[f].n_levels; ++l) {
      zz.at(offset + l, offset + l) += lambda;
    }
    logdet_g_terms += double(d.factors[f].n_levels) * std::log(s);
    offset += d.factors[f].n_levels;
  }
  zz.cholesky();

  std::vector<double> zr;
  zr.reserve(std::size_t(q));
  for (const auto& f : d.factors) {
    for (int l = 0; l < f.n_levels; ++l) {
      zr.push_back(f.sums[std::size_t(l)] - beta * f.counts[std::size_t(l)]);
    }
  }
  const std::vector<double> u = zz.solve(zr);
  double zru = 0.0;
  for (int j = 0; j < q; ++j) {
    zru += zr[std::size_t(j)] * u[std::size_t(j)];
  }
  const double rr = d.sumsq - 2.0 * beta * d.sum + beta * beta * d.n;
  const double quad = (rr - zru) / resid;
  const double log_det_v = (d.n - double(q)) * std::log(resid) +
                           logdet_g_terms + zz.log_det_from_cholesky();
  return d.n * std::log(kTwoPi) + log_det_v + quad;
}

EmFit em_fit(const Design& d, bool reml, const FitOptions& options) {
  EmFit fit;
  fit.sigma2.assign(d.factors.size(), 0.0);

  // Degenerate zero-variance input: everything collapses to the mean.
  if (d.total_ss() <= 1e-12 * std::max(1.0, d.sumsq)) {
    fit.mu = d.sum / d.n;
    fit.converged = true;
    return fit;
  }

  double resid = 0.0;
  std::vector<double> sigma2 = mom_start(d, &resid);

  const SymMatrix m0 = base_matrix(d);
  const std::vector<double> rhs = rhs_vector(d);
  const int dim = d.dim();
  const int q = d.q();

  std::vector<int> offsets;
  {
    int offset = 1;
    for (const auto& f : d.factors) {
      offsets.push_back(offset);
      offset += f.n_levels;
    }
  }

  std::vector<double> gamma;
  double prev_deviance = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    std::vector<double> lambdas(d.factors.size());
    for (std::size_t f = 0; f < d.factors.size(); ++f) {
      lambdas[f] = resid / std::max(sigma2[f], kVarianceFloor);
    }

    SymMatrix m = m0;
    for (std::size_t f = 0; f < d.factors.size(); ++f) {
      for (int l = 0; l < d.factors[f].n_levels; ++l) {
        m.at(offsets[f] + l, offsets[f] + l) += lambdas[f];
      }
    }
    m.cholesky();
    gamma = m.solve(rhs);

    // Trace corrections: REML uses the full-system inverse, ML conditions
    // on beta and uses the random-effects block alone.
    std::vector<double> diag_inv;
    if (reml) {
      diag_inv = m.inverse_diagonal();
    } else {
      SymMatrix zz(q);
      for (int r = 0; r < q; ++r) {
        for (int c = 0; c < q; ++c) {
          zz.at(r, c) = m0.at(r + 1, c + 1);
        }
      }
      int offset = 0;
      for (std::size_t f = 0; f < d.factors.size(); ++f) {
        for (int l = 0; l < d.factors[f].n_levels; ++l) {
          zz.at(offset + l, offset + l) += lambdas[f];
        }
        offset += d.factors[f].n_levels;
      }
      zz.cholesky();
      diag_inv = zz.inverse_diagonal();
      diag_inv.insert(diag_inv.begin(), 0.0);  // align with full indexing
    }

    double gamma_dot_rhs = 0.0;
    for (int j = 0; j < dim; ++j) {
      gamma_dot_rhs += gamma[std::size_t(j)] * rhs[std::size_t(j)];
    }

    double penalty = 0.0;
    std::vector<double> uu(d.factors.size(), 0.0);
    std::vector<double> traces(d.factors.size(), 0.0);
    for (std::size_t f = 0; f < d.factors.size(); ++f) {
      for (int l = 0; l < d.factors[f].n_levels; ++l) {
        const double g = gamma[std::size_t(offsets[f] + l)];
        uu[f] += g * g;
        traces[f] += diag_inv[std::size_t(offsets[f] + l)];
      }
      penalty += lambdas[f] * uu[f];
    }
    const double ess = d.sumsq - gamma_dot_rhs - penalty;

    double trace_weighted = 0.0;
    for (std::size_t f = 0; f < d.factors.size(); ++f) {
      trace_weighted += lambdas[f] * traces[f];
    }
    const double effective_dim = reml ? double(dim) : double(q);

    double max_rel = 0.0;
    std::vector<double> sigma2_new(d.factors.size());
    for (std::size_t f = 0; f < d.factors.size(); ++f) {
      sigma2_new[f] =
          (uu[f] + resid * traces[f]) / double(d.factors[f].n_levels);
      max_rel = std::max(max_rel, std::fabs(sigma2_new[f] - sigma2[f]) /
                                      std::max(sigma2[f], kVarianceFloor));
    }
    const double resid_new =
        (ess + resid * (effective_dim - trace_weighted)) / d.n;
    max_rel = std::max(max_rel, std::fabs(resid_new - resid) /
                                    std::max(resid, kVarianceFloor));

    sigma2 = sigma2_new;
    resid = std::max(resid_new, 0.0);

    if (max_rel < options.rel_tolerance) {
      fit.converged = true;
      ++iter;
      break;
    }
    if (!reml) {
      // The ML fits feed a deviance difference; once the objective stalls,
      // further parameter creep toward a boundary cannot change it.
      const double dev = ml_deviance_at(d, sigma2, resid, gamma[0]);
      if (std::fabs(prev_deviance - dev) < 1e-10 && iter >= 10) {
        fit.converged = true;
        ++iter;
        break;
      }
      prev_deviance = dev;
    }
  }

  fit.iterations = iter;
  fit.sigma2 = sigma2;
  fit.sigma2_resid = resid;
  fit.mu = gamma.empty() ? d.sum / d.n : gamma[0];
  if (!reml) {
    fit.ml_deviance = ml_deviance_at(d, sigma2, resid, fit.mu);
  }
  return fit;
}

struct CellStats {
  double count = 0.0;
  double sum = 0.0;
  double sumsq = 0.0;
};

struct Indexed {
  std::vector<std::string> providers;  // sorted unique
  std::vector<std::string> items;     // sorted unique
  std::map<std::pair<int, int>, CellStats> cells;
};

int index_of(const std::vector<std::string>& sorted, const std::string& key) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), key);
  return int(it - sorted.begin());
}

Indexed index_rows(std::span<const MixedObservation> rows) {
  Indexed idx;
  for (const auto& row : rows) {
    idx.providers.push_back(row.provider);
    idx.items.push_back(row.item);
  }
  std::sort(idx.providers.begin(), idx.providers.end());
  idx.providers.erase(std::unique(idx.providers.begin(), idx.providers.end()),
                      idx.providers.end());
  std::sort(idx.items.begin(), idx.items.end());
  idx.items.erase(std::unique(idx.items.begin(), idx.items.end()),
                  idx.items.end());
  for (const auto& row : rows) {
    CellStats& cell = idx.cells[{index_of(idx.providers, row.provider),
                                 index_of(idx.items, row.item)}];
    cell.count += 1.0;
    cell.sum += row.score;
    cell.sumsq += row.score * row.score;
  }
  return idx;
}

void check_connected(const Indexed& idx) {
  const int p = int(idx.providers.size());
  const int i = int(idx.items.size());
  std::vector<int> parent(std::size_t(p + i));
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](int x) {
    while (parent[std::size_t(x)] != x) {
      parent[std::size_t(x)] = parent[std::size_t(parent[std::size_t(x)])];
      x = parent[std::size_t(x)];
    }
    return x;
  };
  for (const auto& [key, cell] : idx.cells) {
    const int a = find(key.first);
    const int b = find(p + key.second);
    if (a != b) {
      parent[std::size_t(a)] = b;
    }
  }
  const int root = find(0);
  for (int node = 1; node < p + i; ++node) {
    if (find(node) != root) {
      throw DesignDisconnected(
          "provider/item incidence graph is disconnected; variance "
          "components are not jointly identifiable");
    }
  }
}

// Builds the two-factor design (provider, item) from indexed cells in
// sorted cell order, so results are independent of input row order.
Design build_design(const Indexed& idx, bool include_provider) {
  Design d;
  FactorData provider;
  provider.n_levels = int(idx.providers.size());
  provider.counts.assign(idx.providers.size(), 0.0);
  provider.sums.assign(idx.providers.size(), 0.0);
  FactorData item;
  item.n_levels = int(idx.items.size());
  item.counts.assign(idx.items.size(), 0.0);
  item.sums.assign(idx.items.size(), 0.0);
  if (include_provider) {
    d.cross.assign(idx.providers.size() * idx.items.size(), 0.0);
  }
  for (const auto& [key, cell] : idx.cells) {
    d.n += cell.count;
    d.sum += cell.sum;
    d.sumsq += cell.sumsq;
    provider.counts[std::size_t(key.first)] += cell.count;
    provider.sums[std::size_t(key.first)] += cell.sum;
    item.counts[std::size_t(key.second)] += cell.count;
    item.sums[std::size_t(key.second)] += cell.sum;
    if (include_provider) {
      d.cross[std::size_t(key.first) * idx.items.size() +
              std::size_t(key.second)] += cell.count;
    }
  }
  if (include_provider) {
    d.factors.push_back(std::move(provider));
  }
  d.factors.push_back(std::move(item));
  return d;
}

Indexed validated_index(std::span<const MixedObservation> rows) {
  if (rows.empty()) {
    throw ValidationError("fit requires a non-empty score matrix");
  }
  Indexed idx = index_rows(rows);
  if (idx.providers.size() < 2) {
    throw ValidationError("fit requires at least 2 providers");
  }
  if (idx.items.size() < 2) {
    throw ValidationError("fit requires at least 2 items");
  }
  check_connected(idx);
  return idx;
}

}  // namespace

VarianceComponents fit_mixedlm(std::span<const MixedObservation> rows,
                               const FitOptions& options) {
  const Indexed idx = validated_index(rows);
  const Design d = build_design(idx, true);
  const EmFit fit = em_fit(d, /*reml=*/true, options);

  VarianceComponents vc;
  vc.sigma2_provider = fit.sigma2[0];
  vc.sigma2_item = fit.sigma2[1];
  vc.sigma2_residual = fit.sigma2_resid;
  vc.mu_hat = fit.mu;
  vc.converged = fit.converged;
  vc.n_iterations = fit.iterations;
  const double total =
      vc.sigma2_provider + vc.sigma2_item + vc.sigma2_residual;
  vc.icc = total > 0.0 ? vc.sigma2_provider / total : 0.0;
  return vc;
}

VarianceComponents fit_item_only(std::span<const MixedObservation> rows,
                                 const FitOptions& options) {
  if (rows.empty()) {
    throw ValidationError("fit requires a non-empty score matrix");
  }
  Indexed idx = index_rows(rows);
  if (idx.items.size() < 2) {
    throw ValidationError("fit requires at least 2 items");
  }
  const Design d = build_design(idx, false);
  const EmFit fit = em_fit(d, /*reml=*/true, options);

  VarianceComponents vc;
  vc.sigma2_provider = 0.0;
  vc.sigma2_item = fit.sigma2[0];
  vc.sigma2_residual = fit.sigma2_resid;
  vc.mu_hat = fit.mu;
  vc.converged = fit.converged;
  vc.n_iterations = fit.iterations;
  vc.icc = 0.0;
  return vc;
}

TestResult lrt_provider(std::span<const MixedObservation> rows,
                        const FitOptions& options) {
  const Indexed idx = validated_index(rows);
  TestResult result;
  result.method = "lrt_provider";
  result.df = 1;

  const Design full_design = build_design(idx, true);
  if (full_design.total_ss() <=
      1e-12 * std::max(1.0, full_design.sumsq)) {
    result.statistic = 0.0;
    result.p_value = 1.0;
    return result;
  }

  const EmFit full = em_fit(full_design, /*reml=*/false, options);
  const EmFit null = em_fit(build_design(idx, false), /*reml=*/false, options);
  const double deviance_diff = null.ml_deviance - full.ml_deviance;
  result.statistic = std::max(deviance_diff, 0.0);
  // Boundary mixture 0.5 * chi2_0 + 0.5 * chi2_1.
  result.p_value =
      deviance_diff > 0.0 ? 0.5 * chi2_sf(deviance_diff, 1) : 1.0;
  return result;
}

}  // namespace audit
