#include "ssls/clustering.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "ssls/inference.hpp"
#include "ssls/rng.hpp"

namespace ssls {

namespace {

struct Run {
  Matrix centroids;
  std::vector<int> labels;  // 0-based
  double inertia = std::numeric_limits<double>::infinity();
  std::vector<double> path;
  bool ok = false;
};

double assign_all(const Matrix& x, const Matrix& centroids, std::vector<int>& labels,
                  Vector& dist) {
  const Index n = x.rows();
  double inertia = 0.0;
  for (Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < centroids.rows(); ++c) {
      const double d2 = (x.row(i) - centroids.row(c)).squaredNorm();
      if (d2 < best_d) {
        best_d = d2;
        best = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    dist(i) = best_d;
    inertia += best_d;
  }
  return inertia;
}

Matrix seed_plus_plus(const Matrix& x, int k, Rng& rng) {
  const Index n = x.rows();
  Matrix centroids(k, x.cols());
  centroids.row(0) = x.row(static_cast<Index>(rng.index(static_cast<std::uint64_t>(n))));
  Vector d2 = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    if (!(total > 0.0)) {
      throw Error(ErrorKind::ClusteringDegenerate, "fewer distinct points than clusters");
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    Index pick = n - 1;
    for (Index i = 0; i < n; ++i) {
      acc += d2(i);
      if (acc > target && d2(i) > 0.0) {
        pick = i;
        break;
      }
    }
    while (d2(pick) == 0.0 && pick > 0) --pick;
    centroids.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }
  return centroids;
}

Run lloyd(const Matrix& x, int k, int max_iter, Rng rng) {
  Run run;
  const Index n = x.rows();
  run.centroids = seed_plus_plus(x, k, rng);
  run.labels.assign(static_cast<std::size_t>(n), 0);
  Vector dist(n);
  run.inertia = assign_all(x, run.centroids, run.labels, dist);
  run.path.push_back(run.inertia);

  std::vector<int> next(static_cast<std::size_t>(n));
  for (int iter = 0; iter < max_iter; ++iter) {
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      const auto c = run.labels[static_cast<std::size_t>(i)];
      sums.row(c) += x.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        run.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
    // Empty clusters are re-seeded at the point farthest from its centroid.
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Index far = 0;
      double far_d = -1.0;
      for (Index i = 0; i < n; ++i) {
        const double d2 =
            (x.row(i) - run.centroids.row(run.labels[static_cast<std::size_t>(i)])).squaredNorm();
        if (d2 > far_d) {
          far_d = d2;
          far = i;
        }
      }
      --counts[static_cast<std::size_t>(run.labels[static_cast<std::size_t>(far)])];
      run.labels[static_cast<std::size_t>(far)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      run.centroids.row(c) = x.row(far);
    }

    const double inertia = assign_all(x, run.centroids, next, dist);
    run.path.push_back(inertia);
    run.inertia = inertia;
    if (next == run.labels) break;
    run.labels.swap(next);
  }
  std::vector<Index> final_counts(static_cast<std::size_t>(k), 0);
  for (int l : run.labels) ++final_counts[static_cast<std::size_t>(l)];
  run.ok = std::all_of(final_counts.begin(), final_counts.end(), [](Index c) { return c > 0; });
  return run;
}

}  // namespace

int FittedClusterer::assign_row(const RowRef& row) const {
  Eigen::RowVectorXd z = row;
  if (center.size() == z.size()) z = (z - center).cwiseQuotient(scale);
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index c = 0; c < centroids.rows(); ++c) {
    const double d2 = (z - centroids.row(c)).squaredNorm();
    if (d2 < best_d) {
      best_d = d2;
      best = static_cast<int>(c);
    }
  }
  return best + 1;
}

std::vector<int> FittedClusterer::assign(const Matrix& x) const {
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = assign_row(x.row(i));
  return out;
}

Matrix FittedClusterer::raw_centroids() const {
  if (center.size() != centroids.cols()) return centroids;
  Matrix out = centroids;
  for (Index c = 0; c < out.rows(); ++c) {
    out.row(c) = centroids.row(c).cwiseProduct(scale) + center;
  }
  return out;
}

FittedClusterer fit_kmeans(const Matrix& x, const KMeansSpec& spec) {
  if (spec.n_clusters < 2) throw Error(ErrorKind::InvalidArgument, "k-means needs G >= 2");
  if (spec.max_iter < 1 || spec.n_restarts < 1 || spec.min_group_size < 1) {
    throw Error(ErrorKind::InvalidArgument, "k-means: bad max_iter, n_restarts or min_group_size");
  }
  if (x.rows() < spec.n_clusters) {
    throw Error(ErrorKind::TooFewSamples, "k-means: fewer rows than clusters");
  }
  if (!x.allFinite()) throw Error(ErrorKind::NonFinite, "k-means: non-finite covariates");

  FittedClusterer out;
  Matrix work = x;
  if (spec.standardize) {
    out.center = x.colwise().mean();
    out.scale.resize(x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
      const double var = x.rows() > 1 ? (x.col(j).array() - out.center(j)).square().sum() /
                                            static_cast<double>(x.rows() - 1)
                                      : 0.0;
      out.scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    for (Index i = 0; i < x.rows(); ++i) {
      work.row(i) = (x.row(i) - out.center).cwiseQuotient(out.scale);
    }
  }

  const Rng base = Rng(spec.seed).split(0xC1u);
  Run best;
  for (int r = 0; r < spec.n_restarts; ++r) {
    Run run = lloyd(work, spec.n_clusters, spec.max_iter, base.split(static_cast<std::uint64_t>(r)));
    if (run.ok && run.inertia < best.inertia) best = std::move(run);
  }
  if (!best.ok) {
    throw Error(ErrorKind::ClusteringDegenerate, "k-means could not populate every cluster");
  }
  out.centroids = std::move(best.centroids);
  out.inertia = best.inertia;
  out.inertia_path = std::move(best.path);
  out.train_labels.reserve(best.labels.size());
  for (int l : best.labels) out.train_labels.push_back(l + 1);
  return out;
}

FittedClusterer relabel_by_centroid_norm(const FittedClusterer& fc) {
  const int k = fc.n_clusters();
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  // Norms in covariate units; standardized centroids of symmetric clusters tie.
  const Matrix raw = fc.raw_centroids();
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return raw.row(a).squaredNorm() < raw.row(b).squaredNorm();
  });
  std::vector<int> new_label(static_cast<std::size_t>(k));
  FittedClusterer out = fc;
  for (int pos = 0; pos < k; ++pos) {
    out.centroids.row(pos) = fc.centroids.row(order[static_cast<std::size_t>(pos)]);
    new_label[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = pos + 1;
  }
  for (auto& l : out.train_labels) l = new_label[static_cast<std::size_t>(l - 1)];
  return out;
}

Grouping gate_grouping(const FittedClusterer& fc, const Dataset& d, const KMeansSpec& spec) {
  const FittedClusterer ordered = relabel_by_centroid_norm(fc);
  Grouping g;
  g.n_groups = ordered.n_clusters();
  g.source = GroupingSource::Fitted;
  g.labels = ordered.assign(d.x);

  const auto counts = g.counts();
  std::vector<int> treated(counts.size(), 0);
  for (std::size_t i = 0; i < g.labels.size(); ++i) {
    if (d.a(static_cast<Index>(i)) == 1.0) ++treated[static_cast<std::size_t>(g.labels[i] - 1)];
  }
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const auto group = static_cast<long>(k + 1);
    if (counts[k] < spec.min_group_size) {
      throw Error(ErrorKind::GroupTooSmall,
                  "group " + std::to_string(group) + " has " + std::to_string(counts[k]) +
                      " members, minimum is " + std::to_string(spec.min_group_size),
                  -1, -1, group);
    }
    if (treated[k] == 0 || treated[k] == counts[k]) {
      throw Error(ErrorKind::OneArmOnly,
                  "group " + std::to_string(group) + " contains a single treatment arm", -1, -1,
                  group);
    }
  }
  return g;
}

Index default_min_group_size(double z_tilde, double alpha, double power) {
  return power_min_n(z_tilde, alpha, power);
}

}  // namespace ssls
