#pragma once

#include <vector>

#include "resfeat/tensor.hpp"

namespace resfeat {

struct Match {
  Index index_a = 0;
  Index index_b = 0;
  double distance = 0.0;
  double ratio = 0.0;  // best / second best; 0 without a second neighbour
};

struct MatchOptions {
  double ratio_threshold = 0.94;
  bool mutual = true;
  /// With a single candidate in b there is no ratio; such matches pass unless this is set.
  bool reject_single_neighbor = false;
  /// Disables the ratio test entirely.
  bool ratio_test = true;
};

/// Nearest/second-nearest search over rows of `b` for every row of `a` by
/// Euclidean distance (ties go to the lower index). A match survives when
/// best < ratio_threshold * second (ratio test) and, if mutual, a is also b's
/// nearest neighbour in `a`. Output is ordered by index_a.
std::vector<Match> match_descriptors(const RowMatrix<float>& a, const RowMatrix<float>& b,
                                     const MatchOptions& options = {});

/// Squared Euclidean distances accumulated in double, one pair at a time.
RowMatrix<double> pairwise_sq_distances(const RowMatrix<float>& a, const RowMatrix<float>& b);

}  // namespace resfeat
