#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "mq/common.hpp"
#include "mq/kernel.hpp"

namespace mq {

// Row-stochastic N x N matrix on uniform bins of (0,1): the brute-force
// counterpart of a level kernel. Requires grid-aligned breakpoints so that
// the discretization is exact, not an approximation.
class BinKernel {
 public:
  BinKernel(int n, std::vector<double> entries) : n_(n), a_(std::move(entries)) {
    if (static_cast<int>(a_.size()) != n_ * n_) throw BadSpec("bin kernel size mismatch");
    for (int i = 0; i < n_; ++i) {
      double s = 0;
      for (int j = 0; j < n_; ++j) s += at(i, j);
      if (std::fabs(s - 1.0) > 1e-12) throw BadSpec("bin kernel rows must sum to 1");
    }
  }

  static BinKernel identity(int n) {
    std::vector<double> e(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) e[static_cast<std::size_t>(i) * n + i] = 1.0;
    return BinKernel(n, std::move(e));
  }

  int bins() const { return n_; }
  double at(int i, int j) const { return a_[static_cast<std::size_t>(i) * n_ + j]; }
  double& at(int i, int j) { return a_[static_cast<std::size_t>(i) * n_ + j]; }

  bool row_is_identity(int i) const {
    for (int j = 0; j < n_; ++j)
      if (a_[static_cast<std::size_t>(i) * n_ + j] != (i == j ? 1.0 : 0.0)) return false;
    return true;
  }

  // Matrix product, with two shortcuts that leave the arithmetic unchanged:
  // identity rows copy the other factor's row, and bit-identical rows are
  // computed once (block-averaging kernels repeat rows).
  friend BinKernel matmul(const BinKernel& A, const BinKernel& B) {
    if (A.n_ != B.n_) throw GridMisaligned("bin counts differ");
    int n = A.n_;
    std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
    std::vector<int> rep(n, -1);
    for (int i = 0; i < n; ++i) {
      const double* arow = &A.a_[static_cast<std::size_t>(i) * n];
      double* crow = &out[static_cast<std::size_t>(i) * n];
      if (A.row_is_identity(i)) {
        std::memcpy(crow, &B.a_[static_cast<std::size_t>(i) * n], sizeof(double) * n);
        continue;
      }
      int src = -1;
      for (int p = 0; p < i; ++p) {
        if (rep[p] >= 0 &&
            std::memcmp(arow, &A.a_[static_cast<std::size_t>(p) * n], sizeof(double) * n) == 0) {
          src = p;
          break;
        }
      }
      if (src >= 0) {
        std::memcpy(crow, &out[static_cast<std::size_t>(src) * n], sizeof(double) * n);
        continue;
      }
      rep[i] = i;
      for (int k = 0; k < n; ++k) {
        double av = arow[k];
        if (av == 0.0) continue;
        const double* brow = &B.a_[static_cast<std::size_t>(k) * n];
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    return BinKernel(n, std::move(out));
  }

  BinKernel transpose() const {
    std::vector<double> out(static_cast<std::size_t>(n_) * n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) out[static_cast<std::size_t>(j) * n_ + i] = at(i, j);
    return BinKernel(n_, std::move(out));
  }

  // theta (row vector of bin masses) . K
  std::vector<double> apply(const std::vector<double>& theta) const {
    std::vector<double> out(n_, 0.0);
    for (int i = 0; i < n_; ++i) {
      if (theta[i] == 0.0) continue;
      for (int j = 0; j < n_; ++j) out[j] += theta[i] * at(i, j);
    }
    return out;
  }

  // CDF of Joint(lambda_N, K) at corners (i/N, j/N), 0 <= i,j <= N.
  std::vector<std::vector<double>> corner_cdf() const {
    std::vector<std::vector<double>> F(n_ + 1, std::vector<double>(n_ + 1, 0.0));
    for (int i = 1; i <= n_; ++i)
      for (int j = 1; j <= n_; ++j)
        F[i][j] = F[i - 1][j] + F[i][j - 1] - F[i - 1][j - 1] + at(i - 1, j - 1) / n_;
    return F;
  }

 private:
  int n_;
  std::vector<double> a_;
};

inline int aligned_bin(double x, int n) {
  double t = x * n;
  double r = std::round(t);
  if (std::fabs(t - r) > 1e-9 * n) throw GridMisaligned("breakpoint off the bin grid");
  return static_cast<int>(r);
}

inline BinKernel oracle_kernel(const AtomicLevelSet& A, int n) {
  auto K = BinKernel::identity(n);
  for (auto& [lo, hi] : A.intervals) {
    int b0 = aligned_bin(lo, n), b1 = aligned_bin(hi, n);
    if (b1 <= b0) continue;
    double v = 1.0 / (b1 - b0);
    for (int i = b0; i < b1; ++i)
      for (int j = 0; j < n; ++j) K.at(i, j) = (j >= b0 && j < b1) ? v : 0.0;
  }
  return K;
}

inline BinKernel oracle_kernel(const LevelKernel& k, int n) {
  std::vector<double> e(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    double mid = (i + 0.5) / n;
    // the source cell must not straddle a kernel breakpoint
    for (double b : k.grid()) {
      if (b > double(i) / n + 1e-9 / n && b < double(i + 1) / n - 1e-9 / n)
        throw GridMisaligned("kernel breakpoint inside a bin");
    }
    e[static_cast<std::size_t>(i) * n + i] = k.ident_at(mid);
    for (std::size_t j = 0; j < k.target_count(); ++j) {
      double c = k.coef_at(j, mid);
      if (c == 0.0) continue;
      const auto& t = k.target(j);
      for (double b : t.breaks())
        if (std::fabs(b * n - std::round(b * n)) > 1e-9 * n)
          throw GridMisaligned("target breakpoint off the bin grid");
      for (int l = 0; l < n; ++l) {
        double m = t.cdf(double(l + 1) / n) - t.cdf(double(l) / n);
        e[static_cast<std::size_t>(i) * n + l] += c * m;
      }
    }
  }
  return BinKernel(n, std::move(e));
}

// Max |F_exact - F_oracle| over the oracle's diagonal band and the exact
// coupling's structural corners (both CDFs are block-structured, so these
// points realize the supremum).
inline double oracle_compare(const LevelCoupling& exact, const BinKernel& bin) {
  int n = bin.bins();
  CouplingEval e(exact.kernel);
  for (double b : e.axis())
    if (std::fabs(b * n - std::round(b * n)) > 1e-9 * n)
      throw GridMisaligned("exact coupling breakpoint off the bin grid");
  auto F = bin.corner_cdf();
  double worst = 0;
  for (double ub : e.axis())
    for (double vb : e.axis()) {
      int i = aligned_bin(ub, n), j = aligned_bin(vb, n);
      worst = std::max(worst, std::fabs(e.cdf(ub, vb) - F[i][j]));
    }
  for (int i = 0; i <= n; ++i) {
    double u = double(i) / n;
    for (int dj = -1; dj <= 1; ++dj) {
      int j = i + dj;
      if (j < 0 || j > n) continue;
      worst = std::max(worst, std::fabs(e.cdf(u, double(j) / n) - F[i][j]));
    }
  }
  return worst;
}

}  // namespace mq
