#include "einopt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "einopt/executor.hpp"

namespace einopt {

double invert_matrix(std::vector<double>& a, int64_t n, double max_condition) {
  if (static_cast<int64_t>(a.size()) != n * n)
    throw std::invalid_argument("invert_matrix: size mismatch");
  const size_t un = static_cast<size_t>(n);
  std::vector<double> inv(un * un, 0.0);
  for (size_t i = 0; i < un; ++i) inv[i * un + i] = 1.0;

  double max_pivot = 0.0, min_pivot = 0.0;
  for (size_t col = 0; col < un; ++col) {
    size_t piv = col;
    double best = std::fabs(a[col * un + col]);
    for (size_t r = col + 1; r < un; ++r) {
      double v = std::fabs(a[r * un + col]);
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (best == 0.0) throw SingularMatrixError("matrix is singular (zero pivot)");
    if (piv != col) {
      for (size_t c = 0; c < un; ++c) {
        std::swap(a[piv * un + c], a[col * un + c]);
        std::swap(inv[piv * un + c], inv[col * un + c]);
      }
    }
    if (col == 0) {
      max_pivot = min_pivot = best;
    } else {
      max_pivot = std::max(max_pivot, best);
      min_pivot = std::min(min_pivot, best);
    }
    double cond = max_pivot / min_pivot;
    if (cond > max_condition)
      throw SingularMatrixError("matrix is numerically singular (condition estimate " +
                                std::to_string(cond) + ")");
    double d = a[col * un + col];
    for (size_t c = 0; c < un; ++c) {
      a[col * un + c] /= d;
      inv[col * un + c] /= d;
    }
    for (size_t r = 0; r < un; ++r) {
      if (r == col) continue;
      double f = a[r * un + col];
      if (f == 0.0) continue;
      for (size_t c = 0; c < un; ++c) {
        a[r * un + c] -= f * a[col * un + c];
        inv[r * un + c] -= f * inv[col * un + c];
      }
    }
  }
  a = std::move(inv);
  return min_pivot == 0.0 ? 0.0 : max_pivot / min_pivot;
}

void jacobi_eigh(const std::vector<double>& a_in, int64_t n,
                 std::vector<double>& eigenvalues,
                 std::vector<double>& eigenvectors_row_major) {
  if (static_cast<int64_t>(a_in.size()) != n * n)
    throw std::invalid_argument("jacobi_eigh: size mismatch");
  const size_t un = static_cast<size_t>(n);
  std::vector<double> a = a_in;
  std::vector<double> v(un * un, 0.0);  // columns are eigenvectors during sweeps
  for (size_t i = 0; i < un; ++i) v[i * un + i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (size_t p = 0; p < un; ++p)
      for (size_t q = p + 1; q < un; ++q) off += a[p * un + q] * a[p * un + q];
    if (off < 1e-28) break;
    for (size_t p = 0; p + 1 < un; ++p) {
      for (size_t q = p + 1; q < un; ++q) {
        double apq = a[p * un + q];
        if (std::fabs(apq) < 1e-300) continue;
        double app = a[p * un + p], aqq = a[q * un + q];
        double theta = (aqq - app) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (size_t k = 0; k < un; ++k) {
          double akp = a[k * un + p], akq = a[k * un + q];
          a[k * un + p] = c * akp - s * akq;
          a[k * un + q] = s * akp + c * akq;
        }
        for (size_t k = 0; k < un; ++k) {
          double apk = a[p * un + k], aqk = a[q * un + k];
          a[p * un + k] = c * apk - s * aqk;
          a[q * un + k] = s * apk + c * aqk;
        }
        for (size_t k = 0; k < un; ++k) {
          double vkp = v[k * un + p], vkq = v[k * un + q];
          v[k * un + p] = c * vkp - s * vkq;
          v[k * un + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<size_t> order(un);
  for (size_t i = 0; i < un; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
    double ex = a[x * un + x], ey = a[y * un + y];
    if (ex != ey) return ex < ey;
    return x < y;
  });

  eigenvalues.assign(un, 0.0);
  eigenvectors_row_major.assign(un * un, 0.0);
  for (size_t k = 0; k < un; ++k) {
    size_t col = order[k];
    eigenvalues[k] = a[col * un + col];
    // sign fix: largest-magnitude entry positive, ties by lowest index
    size_t arg = 0;
    double mag = 0.0;
    for (size_t i = 0; i < un; ++i) {
      double m = std::fabs(v[i * un + col]);
      if (m > mag + 1e-15) {
        mag = m;
        arg = i;
      }
    }
    double sgn = v[arg * un + col] < 0.0 ? -1.0 : 1.0;
    for (size_t i = 0; i < un; ++i)
      eigenvectors_row_major[k * un + i] = sgn * v[i * un + col];
  }
}

namespace {

double dot(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

}  // namespace

LanczosResult lanczos_smallest(
    const std::function<void(const std::vector<double>&, std::vector<double>&)>& matvec,
    int64_t n, int max_iters, double tol, int max_restarts) {
  const size_t un = static_cast<size_t>(n);
  LanczosResult result;
  result.eigenvector.assign(un, 0.0);

  for (int restart = 0; restart <= max_restarts; ++restart) {
    // deterministic start vector, different per restart
    std::vector<double> q(un);
    {
      uint64_t state = 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(restart + 1);
      for (size_t i = 0; i < un; ++i) {
        state += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z ^= z >> 31;
        q[i] = 2.0 * (static_cast<double>(z >> 11) / 9007199254740992.0) - 1.0;
      }
      double nrm = std::sqrt(dot(q, q));
      for (auto& x : q) x /= nrm;
    }

    std::vector<std::vector<double>> basis;
    std::vector<double> alpha, beta;
    std::vector<double> w(un);
    bool breakdown = false;
    double prev_eval = 0.0;

    int iters = std::min<int>(max_iters, static_cast<int>(un));
    for (int j = 0; j < iters; ++j) {
      basis.push_back(q);
      matvec(q, w);
      double a_j = dot(w, q);
      alpha.push_back(a_j);
      for (size_t i = 0; i < un; ++i)
        w[i] -= a_j * q[i] + (j > 0 ? beta[static_cast<size_t>(j) - 1] * basis[static_cast<size_t>(j) - 1][i] : 0.0);
      // full reorthogonalization keeps the basis usable past convergence
      for (const auto& b : basis) {
        double c = dot(w, b);
        for (size_t i = 0; i < un; ++i) w[i] -= c * b[i];
      }
      double b_j = std::sqrt(dot(w, w));

      // Rayleigh-Ritz on the tridiagonal matrix
      size_t m = alpha.size();
      std::vector<double> tmat(m * m, 0.0);
      for (size_t i = 0; i < m; ++i) {
        tmat[i * m + i] = alpha[i];
        if (i + 1 < m) {
          tmat[i * m + i + 1] = beta[i];
          tmat[(i + 1) * m + i] = beta[i];
        }
      }
      std::vector<double> evals, evecs;
      jacobi_eigh(tmat, static_cast<int64_t>(m), evals, evecs);
      double cur = evals[0];

      bool stagnant = j > 2 && std::fabs(cur - prev_eval) <=
                                   tol * std::max(1.0, std::fabs(cur));
      prev_eval = cur;

      if (b_j < 1e-13 || stagnant || j + 1 == iters) {
        result.eigenvalue = cur;
        std::fill(result.eigenvector.begin(), result.eigenvector.end(), 0.0);
        for (size_t k = 0; k < m; ++k)
          for (size_t i = 0; i < un; ++i)
            result.eigenvector[i] += evecs[k] * basis[k][i];
        double nrm = std::sqrt(dot(result.eigenvector, result.eigenvector));
        if (nrm < 1e-13) {
          breakdown = true;
          break;
        }
        for (auto& x : result.eigenvector) x /= nrm;
        result.converged = stagnant || b_j < 1e-13;
        return result;
      }

      beta.push_back(b_j);
      for (size_t i = 0; i < un; ++i) q[i] = w[i] / b_j;
    }
    if (!breakdown) break;
  }
  return result;
}

}  // namespace einopt
