// SPDX-License-Identifier: Apache-2.0
/**
 * @file   baselines.hpp
 * @brief  Multiple linear regression and random forest calibrators.
 *
 * Both baselines see each window flattened to a row of M*K inputs and
 * predict the window's target.
 */
#pragma once

#include <cstdint>
#include <vector>

#include "senscal/dataio/frame.hpp"
#include "senscal/dataio/windows.hpp"

namespace senscal::calibrate {

struct Design {
  dataio::Matrix x;
  std::vector<double> y;
};

/// Rows are windows, columns run time-major over (t, k). `y` is empty when
/// the windows carry no targets.
Design flatten_windows(const dataio::WindowSet &ws);

struct MlrModel {
  std::vector<double> coef;
  double intercept = 0.0;
  bool ridge_fallback = false;
};

inline constexpr double kRidgeLambda = 1e-8;

/// Ordinary least squares with intercept via a column-pivoted QR of the
/// centred design. Rank-deficient designs fall back to ridge with
/// kRidgeLambda.
MlrModel mlr_fit(const dataio::Matrix &x, const std::vector<double> &y);
std::vector<double> mlr_predict(const MlrModel &model, const dataio::Matrix &x);

struct RfParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 16;
  std::size_t min_leaf = 5;
  /// Features tried per split; 0 selects ceil(p / 3).
  std::size_t max_features = 0;
  bool bootstrap = true;
  std::uint64_t seed = 42;
  std::size_t jobs = 1;

  void validate() const;
};

struct TreeNode {
  int feature = -1; // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;
  double predict(const double *row) const;
  std::size_t depth() const;
};

struct RfModel {
  std::size_t n_features = 0;
  std::vector<RegressionTree> trees;
};

/// CART trees split by variance reduction; samples go left when
/// value <= threshold. Tree t draws from its own seeded substream, so the
/// result does not depend on `jobs`.
RfModel rf_fit(const dataio::Matrix &x, const std::vector<double> &y,
               const RfParams &params);
std::vector<double> rf_predict(const RfModel &model, const dataio::Matrix &x);

} // namespace senscal::calibrate
