#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "usagewatch/errors.hpp"

namespace usagewatch {

// Columns whose in-window standard deviation falls below this are treated as
// constant and excluded from fitting.
inline constexpr double kDegenerateScale = 1e-12;

// A window with every retained column centred and scaled to unit sample
// variance (divisor w-1). Degenerate columns are recorded, not standardized.
struct StandardizedWindow {
  Eigen::MatrixXd values;                // w x q, retained columns only
  Eigen::VectorXd means;                 // length q
  Eigen::VectorXd scales;                // length q, all > 0
  std::vector<int> retained;             // original column indices, ascending
  std::vector<int> dropped_degenerate;   // original column indices, ascending
};

inline StandardizedWindow standardize(const Eigen::MatrixXd& window) {
  const Eigen::Index w = window.rows();
  const Eigen::Index n = window.cols();
  if (w < 2) throw ParameterError("standardize: need at least 2 rows");

  std::vector<int> retained;
  std::vector<int> dropped;
  Eigen::VectorXd means(n), scales(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const double mean = window.col(c).mean();
    const double var =
        (window.col(c).array() - mean).square().sum() / static_cast<double>(w - 1);
    const double scale = std::sqrt(var);
    means(c) = mean;
    scales(c) = scale;
    if (scale < kDegenerateScale) {
      dropped.push_back(static_cast<int>(c));
    } else {
      retained.push_back(static_cast<int>(c));
    }
  }
  if (retained.size() < 2) {
    throw DegenerateWindowError("standardize: fewer than 2 non-constant columns in window");
  }

  StandardizedWindow out;
  const auto q = static_cast<Eigen::Index>(retained.size());
  out.values.resize(w, q);
  out.means.resize(q);
  out.scales.resize(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    const auto c = retained[static_cast<std::size_t>(i)];
    out.means(i) = means(c);
    out.scales(i) = scales(c);
    out.values.col(i) = (window.col(c).array() - means(c)) / scales(c);
  }
  out.retained = std::move(retained);
  out.dropped_degenerate = std::move(dropped);
  return out;
}

// Orthonormal components of a fitted window, ordered by decreasing
// eigenvalue. p is the normal-subspace size; everything past it spans the
// anomalous subspace.
struct PrincipalBasis {
  Eigen::MatrixXd components;   // q x q, column i holds component i
  Eigen::VectorXd eigenvalues;  // non-increasing, >= 0
  int p = 0;                    // set by select_components

  Eigen::Index dimension() const { return components.rows(); }
  Eigen::Index count() const { return components.cols(); }
};

// Eigendecomposition of the window's sample correlation matrix. Component
// signs are canonicalized (first non-zero coordinate positive) and exact
// eigenvalue ties are ordered lexicographically, so output is reproducible.
inline PrincipalBasis fit_components(const StandardizedWindow& std_win) {
  const Eigen::Index w = std_win.values.rows();
  const Eigen::Index q = std_win.values.cols();
  if (w <= q) {
    throw FeasibilityError("fit_components: window length " + std::to_string(w) +
                           " must exceed column count " + std::to_string(q));
  }

  const Eigen::MatrixXd corr =
      (std_win.values.transpose() * std_win.values) / static_cast<double>(w - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(corr);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigendecomposition failed on a " + std::to_string(q) + "x" +
                       std::to_string(q) + " correlation matrix");
  }

  PrincipalBasis basis;
  basis.components.resize(q, q);
  basis.eigenvalues.resize(q);

  // Eigen returns ascending eigenvalues; flip and canonicalize.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(q));
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());

  Eigen::MatrixXd vectors(q, q);
  Eigen::VectorXd values(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(i)];
    values(i) = std::max(solver.eigenvalues()(src), 0.0);
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    for (Eigen::Index r = 0; r < q; ++r) {
      if (std::abs(v(r)) > kDegenerateScale) {
        if (v(r) < 0.0) v = -v;
        break;
      }
    }
    vectors.col(i) = v;
  }

  // Stable order on exact ties keeps runs reproducible across platforms.
  std::vector<Eigen::Index> rank(static_cast<std::size_t>(q));
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (values(a) != values(b)) return values(a) > values(b);
    return std::lexicographical_compare(vectors.col(a).data(), vectors.col(a).data() + q,
                                        vectors.col(b).data(), vectors.col(b).data() + q);
  });
  for (Eigen::Index i = 0; i < q; ++i) {
    const Eigen::Index src = rank[static_cast<std::size_t>(i)];
    basis.eigenvalues(i) = values(src);
    basis.components.col(i) = vectors.col(src);
  }
  return basis;
}

// How many leading components model the normal subspace.
struct ComponentPolicy {
  enum class Kind { kFixed, kKaiser };
  Kind kind = Kind::kFixed;
  int k = 12;

  static ComponentPolicy fixed(int k) {
    if (k <= 0) throw ParameterError("component count must be positive");
    return {Kind::kFixed, k};
  }
  static ComponentPolicy kaiser() { return {Kind::kKaiser, 0}; }
};

// Sets p from the policy; Kaiser keeps components with eigenvalue > 1. p is
// clamped to q-1 so a residual subspace always remains.
inline PrincipalBasis select_components(PrincipalBasis basis, const ComponentPolicy& policy,
                                        bool* clamped = nullptr) {
  const auto q = static_cast<int>(basis.count());
  if (q < 2) throw ParameterError("select_components: need at least 2 components");

  int p = 0;
  if (policy.kind == ComponentPolicy::Kind::kFixed) {
    if (policy.k <= 0) throw ParameterError("component count must be positive");
    p = policy.k;
  } else {
    for (Eigen::Index i = 0; i < basis.eigenvalues.size(); ++i) {
      if (basis.eigenvalues(i) > 1.0) ++p;
    }
    p = std::max(p, 1);
  }

  bool was_clamped = false;
  if (p > q - 1) {
    p = q - 1;
    was_clamped = true;
  }
  if (clamped) *clamped = was_clamped;
  basis.p = p;
  return basis;
}

// Component of a standardized observation outside the normal subspace:
// r = x - sum_{i<=p} (x . w_i) w_i.
inline Eigen::VectorXd residual_vector(const PrincipalBasis& basis,
                                       const Eigen::VectorXd& std_row) {
  if (std_row.size() != basis.dimension()) {
    throw ShapeError("residual_vector: row has " + std::to_string(std_row.size()) +
                     " entries, basis expects " + std::to_string(basis.dimension()));
  }
  if (basis.p < 1 || basis.p > basis.count()) {
    throw ParameterError("residual_vector: basis has no selected subspace");
  }
  const auto leading = basis.components.leftCols(basis.p);
  return std_row - leading * (leading.transpose() * std_row);
}

}  // namespace usagewatch
