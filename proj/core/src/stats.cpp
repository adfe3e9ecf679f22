#include "audit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "audit/errors.hpp"

namespace audit {

RankedData midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });

  RankedData out;
  out.ranks.resize(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) {
      ++j;
    }
    const double tied = double(j - i + 1);
    // positions i..j (0-based) share the mid-rank of 1-based ranks i+1..j+1
    const double rank = (double(i + 1) + double(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) {
      out.ranks[idx[k]] = rank;
    }
    if (tied > 1.0) {
      out.tie_sum += tied * tied * tied - tied;
    }
    i = j + 1;
  }
  return out;
}

std::vector<double> holm_adjust(std::span<const double> raw_p) {
  const std::size_t m = raw_p.size();
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return raw_p[a] < raw_p[b];
  });
  std::vector<double> adjusted(m, 1.0);
  double running = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double scaled = double(m - i) * raw_p[idx[i]];
    running = std::max(running, scaled);
    adjusted[idx[i]] = std::min(1.0, running);
  }
  return adjusted;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw Error("spearman requires two equally sized samples of size >= 2");
  }
  const std::vector<double> ra = midranks(a).ranks;
  const std::vector<double> rb = midranks(b).ranks;
  const double n = double(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = ra[i] - ma;
    const double db = rb[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) {
    return 0.0;
  }
  return sab / std::sqrt(saa * sbb);
}

namespace {

struct PooledRanks {
  std::vector<double> group_mean_rank;
  std::vector<std::size_t> group_size;
  double total_n = 0.0;
  double tie_sum = 0.0;
  bool all_tied = false;
};

PooledRanks pool_and_rank(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) {
    throw Error("at least 2 groups required");
  }
  std::vector<double> pooled;
  for (const auto& g : groups) {
    if (g.empty()) {
      throw Error("groups must be non-empty");
    }
    pooled.insert(pooled.end(), g.begin(), g.end());
  }
  const RankedData ranked = midranks(pooled);

  PooledRanks out;
  out.total_n = double(pooled.size());
  out.tie_sum = ranked.tie_sum;
  out.all_tied =
      std::all_of(pooled.begin(), pooled.end(),
                  [&](double v) { return v == pooled.front(); });
  std::size_t offset = 0;
  for (const auto& g : groups) {
    double sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      sum += ranked.ranks[offset + i];
    }
    out.group_mean_rank.push_back(sum / double(g.size()));
    out.group_size.push_back(g.size());
    offset += g.size();
  }
  return out;
}

}  // namespace

TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  const PooledRanks pooled = pool_and_rank(groups);
  const int k = int(groups.size());
  TestResult result;
  result.method = "kruskal_wallis";
  result.df = k - 1;
  if (pooled.all_tied) {
    result.statistic = 0.0;
    result.p_value = 1.0;
    return result;
  }
  const double n = pooled.total_n;
  double h = 0.0;
  for (std::size_t g = 0; g < pooled.group_mean_rank.size(); ++g) {
    const double dev = pooled.group_mean_rank[g] - (n + 1.0) / 2.0;
    h += double(pooled.group_size[g]) * dev * dev;
  }
  h *= 12.0 / (n * (n + 1.0));
  const double correction = 1.0 - pooled.tie_sum / (n * n * n - n);
  if (correction <= 0.0) {
    result.statistic = 0.0;
    result.p_value = 1.0;
    return result;
  }
  result.statistic = h / correction;
  result.p_value = chi2_sf(result.statistic, result.df);
  return result;
}

TestResult friedman(const std::vector<std::vector<double>>& blocks) {
  const std::size_t n = blocks.size();
  if (n < 2) {
    throw IncompleteBlocks("friedman requires at least 2 blocks");
  }
  const std::size_t k = blocks.front().size();
  if (k < 2) {
    throw IncompleteBlocks("friedman requires at least 2 treatments");
  }
  for (const auto& row : blocks) {
    if (row.size() != k) {
      throw IncompleteBlocks("friedman requires a complete blocks matrix");
    }
  }

  std::vector<double> column_rank_sum(k, 0.0);
  double sum_sq_ranks = 0.0;  // A = sum of all squared within-block ranks
  for (const auto& row : blocks) {
    const RankedData ranked = midranks(row);
    for (std::size_t j = 0; j < k; ++j) {
      column_rank_sum[j] += ranked.ranks[j];
      sum_sq_ranks += ranked.ranks[j] * ranked.ranks[j];
    }
  }

  TestResult result;
  result.method = "friedman";
  result.df = int(k) - 1;

  const double nd = double(n);
  const double kd = double(k);
  const double mean_rank_sum = nd * (kd + 1.0) / 2.0;
  double s = 0.0;
  for (double rj : column_rank_sum) {
    const double dev = rj - mean_rank_sum;
    s += dev * dev;
  }
  // Conover's tie-corrected form; reduces to the classic
  // 12/(nk(k+1)) * sum Rj^2 - 3n(k+1) when there are no ties.
  const double denom = sum_sq_ranks - nd * kd * (kd + 1.0) * (kd + 1.0) / 4.0;
  if (denom <= 1e-12) {
    result.statistic = 0.0;
    result.p_value = 1.0;
    return result;
  }
  result.statistic = (kd - 1.0) * s / denom;
  result.p_value = chi2_sf(result.statistic, result.df);
  return result;
}

int PairwiseMatrix::significant_count() const {
  return int(std::count_if(pairs.begin(), pairs.end(),
                           [](const PairwiseComparison& c) {
                             return c.significant;
                           }));
}

PairwiseMatrix pairwise_dunn(const std::vector<std::vector<double>>& groups,
                             const std::vector<std::string>& names,
                             double alpha) {
  if (names.size() != groups.size()) {
    throw Error("pairwise_dunn: one name per group required");
  }
  const PooledRanks pooled = pool_and_rank(groups);
  const double n = pooled.total_n;
  const double tie_term = pooled.tie_sum / (12.0 * (n - 1.0));
  const double base_var = n * (n + 1.0) / 12.0 - tie_term;

  PairwiseMatrix matrix;
  matrix.alpha = alpha;
  std::vector<double> raw;
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      PairwiseComparison cmp;
      cmp.group_a = names[a];
      cmp.group_b = names[b];
      const double var =
          base_var * (1.0 / double(pooled.group_size[a]) +
                      1.0 / double(pooled.group_size[b]));
      if (var <= 0.0) {
        cmp.z = 0.0;
        cmp.p_raw = 1.0;
      } else {
        cmp.z = (pooled.group_mean_rank[a] - pooled.group_mean_rank[b]) /
                std::sqrt(var);
        cmp.p_raw = std::min(1.0, 2.0 * normal_sf(std::fabs(cmp.z)));
      }
      raw.push_back(cmp.p_raw);
      matrix.pairs.push_back(std::move(cmp));
    }
  }
  const std::vector<double> adjusted = holm_adjust(raw);
  for (std::size_t i = 0; i < matrix.pairs.size(); ++i) {
    matrix.pairs[i].p_adjusted = adjusted[i];
    matrix.pairs[i].significant = adjusted[i] < alpha;
  }
  return matrix;
}

double icc(const VarianceComponents& vc) {
  const double total =
      vc.sigma2_provider + vc.sigma2_item + vc.sigma2_residual;
  if (!(total > 0.0)) {
    throw ZeroTotalVariance("icc undefined: total variance is zero");
  }
  return vc.sigma2_provider / total;
}

}  // namespace audit
