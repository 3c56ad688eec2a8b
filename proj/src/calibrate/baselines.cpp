// SPDX-License-Identifier: Apache-2.0
#include "senscal/calibrate/baselines.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include <Eigen/Dense>

#include "senscal/error.hpp"
#include "senscal/numcore/rng.hpp"

namespace senscal::calibrate {

Design flatten_windows(const dataio::WindowSet &ws) {
  Design d;
  d.x.rows = ws.count();
  d.x.cols = ws.M * ws.K;
  d.x.values = ws.data;
  if (ws.targets)
    d.y = *ws.targets;
  return d;
}

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_design(const dataio::Matrix &x, const std::vector<double> &y) {
  if (x.rows == 0 || x.cols == 0)
    throw DataError("empty design matrix");
  if (x.values.size() != x.rows * x.cols)
    throw DimensionError("design matrix storage does not match its shape");
  if (y.size() != x.rows)
    throw DimensionError(std::to_string(y.size()) + " targets for " +
                         std::to_string(x.rows) + " rows");
}

} // namespace

MlrModel mlr_fit(const dataio::Matrix &x, const std::vector<double> &y) {
  check_design(x, y);
  const auto n = static_cast<Eigen::Index>(x.rows);
  const auto p = static_cast<Eigen::Index>(x.cols);
  Eigen::Map<const RowMatrix> X(x.values.data(), n, p);
  Eigen::Map<const Eigen::VectorXd> Y(y.data(), n);

  const Eigen::RowVectorXd x_mean = X.colwise().mean();
  const double y_mean = Y.mean();
  const Eigen::MatrixXd Xc = X.rowwise() - x_mean;
  const Eigen::VectorXd Yc = Y.array() - y_mean;

  MlrModel model;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xc);
  Eigen::VectorXd beta;
  if (qr.rank() == p) {
    beta = qr.solve(Yc);
  } else {
    model.ridge_fallback = true;
    Eigen::MatrixXd gram = Xc.transpose() * Xc;
    gram.diagonal().array() += kRidgeLambda;
    beta = gram.ldlt().solve(Xc.transpose() * Yc);
  }
  if (!beta.allFinite())
    throw NumericError("linear regression produced non-finite coefficients");
  model.coef.assign(beta.data(), beta.data() + p);
  model.intercept = y_mean - x_mean.dot(beta);
  return model;
}

std::vector<double> mlr_predict(const MlrModel &model,
                                const dataio::Matrix &x) {
  if (x.cols != model.coef.size())
    throw DimensionError("linear model expects " +
                         std::to_string(model.coef.size()) + " features, got " +
                         std::to_string(x.cols));
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double *row = x.values.data() + i * x.cols;
    double acc = model.intercept;
    for (std::size_t j = 0; j < x.cols; ++j)
      acc += model.coef[j] * row[j];
    out[i] = acc;
  }
  return out;
}

void RfParams::validate() const {
  if (n_trees == 0)
    throw ParameterError("random forest needs at least one tree");
  if (min_leaf == 0)
    throw ParameterError("random forest min_leaf must be positive");
}

double RegressionTree::predict(const double *row) const {
  int i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const TreeNode &n = nodes[static_cast<std::size_t>(i)];
    i = row[n.feature] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

std::size_t RegressionTree::depth() const {
  if (nodes.empty())
    return 0;
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  std::size_t n_left = 0;
};

class TreeBuilder {
public:
  TreeBuilder(const dataio::Matrix &x, const std::vector<double> &y,
              const RfParams &params, std::size_t mtry, numcore::Rng &rng)
      : x_(x), y_(y), params_(params), mtry_(mtry), rng_(rng) {}

  RegressionTree build(std::vector<std::size_t> samples) {
    RegressionTree tree;
    tree.nodes.emplace_back();
    grow(tree, 0, samples.begin(), samples.end(), 0);
    return tree;
  }

private:
  using It = std::vector<std::size_t>::iterator;

  double feature(std::size_t row, std::size_t j) const {
    return x_.values[row * x_.cols + j];
  }

  void grow(RegressionTree &tree, std::size_t node, It begin, It end,
            std::size_t depth) {
    const auto n = static_cast<std::size_t>(end - begin);
    double sum = 0.0;
    for (It it = begin; it != end; ++it)
      sum += y_[*it];
    tree.nodes[node].value = sum / static_cast<double>(n);
    if (depth >= params_.max_depth || n < 2 * params_.min_leaf)
      return;

    const Split split = best_split(begin, end, sum);
    if (split.feature < 0)
      return;
    const auto f = static_cast<std::size_t>(split.feature);
    It mid = std::stable_partition(begin, end, [&](std::size_t r) {
      return feature(r, f) <= split.threshold;
    });
    const auto left = tree.nodes.size();
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    tree.nodes[node].feature = split.feature;
    tree.nodes[node].threshold = split.threshold;
    tree.nodes[node].left = static_cast<int>(left);
    tree.nodes[node].right = static_cast<int>(left + 1);
    grow(tree, left, begin, mid, depth + 1);
    grow(tree, left + 1, mid, end, depth + 1);
  }

  Split best_split(It begin, It end, double total) {
    const std::size_t p = x_.cols;
    std::vector<std::size_t> features(p);
    std::iota(features.begin(), features.end(), 0);
    for (std::size_t i = 0; i + 1 < p; ++i)
      std::swap(features[i], features[i + rng_.uniform_index(p - i)]);

    Split best;
    for (std::size_t k = 0; k < p; ++k) {
      // Beyond the sampled subset only when it held no valid split.
      if (k >= mtry_ && best.feature >= 0)
        break;
      consider(features[k], begin, end, total, best);
    }
    return best;
  }

  void consider(std::size_t j, It begin, It end, double total, Split &best) {
    const auto n = static_cast<std::size_t>(end - begin);
    pairs_.resize(n);
    std::size_t i = 0;
    for (It it = begin; it != end; ++it, ++i)
      pairs_[i] = {feature(*it, j), y_[*it]};
    std::sort(pairs_.begin(), pairs_.end(),
              [](const auto &a, const auto &b) { return a.first < b.first; });
    if (pairs_.front().first == pairs_.back().first)
      return;
    const double parent = total * total / static_cast<double>(n);
    double left_sum = 0.0;
    const std::size_t min_leaf = params_.min_leaf;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      left_sum += pairs_[k].second;
      const std::size_t n_left = k + 1;
      if (n_left < min_leaf)
        continue;
      if (n - n_left < min_leaf)
        break;
      if (pairs_[k].first == pairs_[k + 1].first)
        continue;
      const double right_sum = total - left_sum;
      const double gain = left_sum * left_sum / static_cast<double>(n_left) +
                          right_sum * right_sum /
                              static_cast<double>(n - n_left) -
                          parent;
      if (gain > 0.0 && (best.feature < 0 || gain > best.gain)) {
        best.feature = static_cast<int>(j);
        best.threshold = 0.5 * (pairs_[k].first + pairs_[k + 1].first);
        // Midpoint can round onto the upper value for adjacent doubles.
        if (best.threshold >= pairs_[k + 1].first)
          best.threshold = pairs_[k].first;
        best.gain = gain;
        best.n_left = n_left;
      }
    }
  }

  const dataio::Matrix &x_;
  const std::vector<double> &y_;
  const RfParams &params_;
  std::size_t mtry_;
  numcore::Rng &rng_;
  std::vector<std::pair<double, double>> pairs_;
};

} // namespace

RfModel rf_fit(const dataio::Matrix &x, const std::vector<double> &y,
               const RfParams &params) {
  params.validate();
  check_design(x, y);
  const std::size_t p = x.cols;
  const std::size_t mtry =
      params.max_features == 0 ? (p + 2) / 3 : std::min(params.max_features, p);

  RfModel model;
  model.n_features = p;
  model.trees.resize(params.n_trees);

  auto fit_tree = [&](std::size_t t) {
    numcore::Rng rng = numcore::Rng::substream(params.seed, "rf-tree", t);
    std::vector<std::size_t> samples(x.rows);
    if (params.bootstrap) {
      for (auto &s : samples)
        s = rng.uniform_index(x.rows);
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    TreeBuilder builder(x, y, params, mtry, rng);
    model.trees[t] = builder.build(std::move(samples));
  };

  const std::size_t jobs =
      std::max<std::size_t>(1, std::min(params.jobs, params.n_trees));
  if (jobs == 1) {
    for (std::size_t t = 0; t < params.n_trees; ++t)
      fit_tree(t);
    return model;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  for (std::size_t w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      for (std::size_t t = next++; t < params.n_trees; t = next++) {
        try {
          fit_tree(t);
        } catch (...) {
          if (!failed.exchange(true))
            failure = std::current_exception();
          return;
        }
      }
    });
  for (auto &w : workers)
    w.join();
  if (failure)
    std::rethrow_exception(failure);
  return model;
}

std::vector<double> rf_predict(const RfModel &model, const dataio::Matrix &x) {
  if (x.cols != model.n_features)
    throw DimensionError("random forest expects " +
                         std::to_string(model.n_features) + " features, got " +
                         std::to_string(x.cols));
  if (model.trees.empty())
    throw ContractError("random forest has no trees");
  std::vector<double> out(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double *row = x.values.data() + i * x.cols;
    double acc = 0.0;
    for (const auto &tree : model.trees)
      acc += tree.predict(row);
    out[i] = acc / static_cast<double>(model.trees.size());
  }
  return out;
}

} // namespace senscal::calibrate
