#include "resfeat/matching.hpp"

#include <cmath>
#include <limits>

#include "resfeat/error.hpp"

namespace resfeat {

RowMatrix<double> pairwise_sq_distances(const RowMatrix<float>& a, const RowMatrix<float>& b) {
  if (a.rows() > 0 && b.rows() > 0 && a.cols() != b.cols()) {
    throw DimensionError("match: descriptor dims differ (" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()) + ")");
  }
  const RowMatrix<double> ad = a.cast<double>();
  const RowMatrix<double> bd = b.cast<double>();
  RowMatrix<double> d(a.rows(), b.rows());
  for (Index i = 0; i < ad.rows(); ++i) {
    for (Index j = 0; j < bd.rows(); ++j) d(i, j) = (ad.row(i) - bd.row(j)).squaredNorm();
  }
  return d;
}

std::vector<Match> match_descriptors(const RowMatrix<float>& a, const RowMatrix<float>& b,
                                     const MatchOptions& options) {
  std::vector<Match> out;
  if (a.rows() == 0 || b.rows() == 0) return out;
  const RowMatrix<double> d = pairwise_sq_distances(a, b);

  std::vector<Index> best_for_b;
  if (options.mutual) {
    best_for_b.assign(static_cast<std::size_t>(b.rows()), 0);
    for (Index j = 0; j < b.rows(); ++j) {
      Index best = 0;
      for (Index i = 1; i < a.rows(); ++i) {
        if (d(i, j) < d(best, j)) best = i;
      }
      best_for_b[static_cast<std::size_t>(j)] = best;
    }
  }

  for (Index i = 0; i < a.rows(); ++i) {
    Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    double second_d = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < b.rows(); ++j) {
      const double v = d(i, j);
      if (v < best_d) {
        second_d = best_d;
        best_d = v;
        best = j;
      } else if (v < second_d) {
        second_d = v;
      }
    }
    Match m;
    m.index_a = i;
    m.index_b = best;
    m.distance = std::sqrt(best_d);
    const bool has_second = b.rows() > 1;
    if (has_second) {
      const double second = std::sqrt(second_d);
      m.ratio = second > 0.0 ? m.distance / second : 1.0;
    }
    if (options.ratio_test) {
      if (has_second) {
        if (!(m.ratio < options.ratio_threshold)) continue;
      } else if (options.reject_single_neighbor) {
        continue;
      }
    }
    if (options.mutual && best_for_b[static_cast<std::size_t>(best)] != i) continue;
    out.push_back(m);
  }
  return out;
}

}  // namespace resfeat
