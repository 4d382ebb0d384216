#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "consensus/errors.hpp"
#include "consensus/linalg.hpp"

namespace consensus {

/// Threshold below which a Laplacian eigenvalue is treated as zero.
inline constexpr double kZeroEigenTol = 1e-9;

/// Undirected communication graph with a nonnegative (possibly weighted)
/// adjacency matrix.
class Graph {
 public:
  Graph() = default;

  explicit Graph(Matrix adjacency) : adjacency_(std::move(adjacency)) {
    validate();
  }

  static Graph from_edges(std::size_t n,
                          const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                          double weight = 1.0) {
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "graph needs at least one node");
    Matrix a = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const auto& [i, j] : edges) {
      if (i >= n || j >= n) {
        throw Error(ErrorKind::InvalidArgument,
                    "edge (" + std::to_string(i) + "," + std::to_string(j) + ") out of range");
      }
      if (i == j) throw Error(ErrorKind::InvalidArgument, "self loops are not allowed");
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = weight;
      a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = weight;
    }
    return Graph(std::move(a));
  }

  static Graph path(std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
    return from_edges(n, edges);
  }

  static Graph ring(std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
    if (n > 2) edges.emplace_back(n - 1, 0);
    return from_edges(n, edges);
  }

  static Graph complete(std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
    return from_edges(n, edges);
  }

  std::size_t n_nodes() const { return static_cast<std::size_t>(adjacency_.rows()); }
  const Matrix& adjacency() const { return adjacency_; }

 private:
  void validate() const {
    if (adjacency_.rows() == 0 || adjacency_.rows() != adjacency_.cols())
      throw Error(ErrorKind::InvalidArgument, "adjacency must be square and non-empty");
    if (!adjacency_.allFinite() || adjacency_.minCoeff() < 0.0)
      throw Error(ErrorKind::InvalidArgument, "adjacency entries must be finite and nonnegative");
    if (adjacency_.diagonal().cwiseAbs().maxCoeff() != 0.0)
      throw Error(ErrorKind::InvalidArgument, "adjacency diagonal must be zero");
    if (!linalg::is_symmetric(adjacency_, 1e-12))
      throw Error(ErrorKind::NonSymmetric, "undirected graph needs a symmetric adjacency");
  }

  Matrix adjacency_;
};

/// Followers on an undirected graph plus an external leader (node 0 in the
/// combined numbering) that sends to the followers listed in leader_links.
class LeaderFollowerGraph {
 public:
  LeaderFollowerGraph() = default;

  LeaderFollowerGraph(Graph followers, Vector leader_links)
      : followers_(std::move(followers)), leader_links_(std::move(leader_links)) {
    if (static_cast<std::size_t>(leader_links_.size()) != followers_.n_nodes())
      throw Error(ErrorKind::InvalidArgument, "leader_links length must equal follower count");
    if (!leader_links_.allFinite() || leader_links_.minCoeff() < 0.0)
      throw Error(ErrorKind::InvalidArgument, "leader links must be nonnegative");
  }

  static LeaderFollowerGraph from_edges(
      std::size_t n_followers,
      const std::vector<std::pair<std::size_t, std::size_t>>& follower_edges,
      const std::vector<std::size_t>& linked_to_leader) {
    Vector links = Vector::Zero(static_cast<Eigen::Index>(n_followers));
    for (std::size_t i : linked_to_leader) {
      if (i >= n_followers) throw Error(ErrorKind::InvalidArgument, "leader link out of range");
      links(static_cast<Eigen::Index>(i)) = 1.0;
    }
    return {Graph::from_edges(n_followers, follower_edges), links};
  }

  std::size_t n_followers() const { return followers_.n_nodes(); }
  const Graph& followers() const { return followers_; }
  const Vector& leader_links() const { return leader_links_; }

 private:
  Graph followers_;
  Vector leader_links_;
};

struct LaplacianSpectrum {
  Vector eigenvalues;  // ascending
  double lambda2 = 0.0;
  double lambda_max = 0.0;
};

/// Blocks of the leader-rooted Laplacian [[0, 0], [L2, L1]].
struct PinnedLaplacian {
  Matrix l1;
  Vector l2;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

inline Matrix laplacian(const Graph& g) {
  const Matrix& a = g.adjacency();
  Matrix l = -a;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double degree = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (j != i) degree += a(i, j);
    l(i, i) = degree;
  }
  return l;
}

inline LaplacianSpectrum spectrum(const Matrix& l) {
  if (l.rows() == 0 || l.rows() != l.cols())
    throw Error(ErrorKind::InvalidArgument, "Laplacian must be square and non-empty");
  if (!linalg::is_symmetric(l, 1e-9))
    throw Error(ErrorKind::NonSymmetric,
                "Laplacian asymmetry " + std::to_string(linalg::asymmetry(l)));
  LaplacianSpectrum s;
  s.eigenvalues = linalg::sym_eigenvalues(l);
  s.lambda_max = s.eigenvalues(s.eigenvalues.size() - 1);
  s.lambda2 = s.eigenvalues.size() > 1 ? s.eigenvalues(1) : 0.0;
  if (std::abs(s.lambda2) <= kZeroEigenTol) s.lambda2 = 0.0;
  return s;
}

inline LaplacianSpectrum spectrum(const Graph& g) { return spectrum(laplacian(g)); }

namespace detail {

inline std::vector<bool> reachable_from(const Matrix& adjacency, Eigen::Index start) {
  std::vector<bool> seen(static_cast<std::size_t>(adjacency.rows()), false);
  std::queue<Eigen::Index> frontier;
  seen[static_cast<std::size_t>(start)] = true;
  frontier.push(start);
  while (!frontier.empty()) {
    const Eigen::Index i = frontier.front();
    frontier.pop();
    for (Eigen::Index j = 0; j < adjacency.cols(); ++j) {
      if (adjacency(i, j) > 0.0 && !seen[static_cast<std::size_t>(j)]) {
        seen[static_cast<std::size_t>(j)] = true;
        frontier.push(j);
      }
    }
  }
  return seen;
}

}  // namespace detail

/// Single connected component, decided by breadth-first traversal.
inline bool is_connected(const Graph& g) {
  const auto seen = detail::reachable_from(g.adjacency(), 0);
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

/// Every follower reachable from the leader through the combined graph.
inline bool leader_reaches_all(const LeaderFollowerGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.n_followers());
  Matrix combined = Matrix::Zero(n + 1, n + 1);
  combined.bottomRightCorner(n, n) = g.followers().adjacency();
  combined.block(0, 1, 1, n) = g.leader_links().transpose();
  const auto seen = detail::reachable_from(combined, 0);
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

inline PinnedLaplacian leader_follower_partition(const LeaderFollowerGraph& g) {
  if (!leader_reaches_all(g))
    throw Error(ErrorKind::AssumptionViolated,
                "graph has no spanning tree rooted at the leader");
  PinnedLaplacian out;
  out.l1 = laplacian(g.followers());
  out.l1.diagonal() += g.leader_links();
  out.l2 = -g.leader_links();
  const Vector ev = linalg::sym_eigenvalues(out.l1);
  out.lambda_min = ev.minCoeff();
  out.lambda_max = ev.maxCoeff();
  if (out.lambda_min <= kZeroEigenTol)
    throw Error(ErrorKind::AssumptionViolated, "pinned Laplacian block is not positive definite");
  return out;
}

/// M = I - (1/N) 1 1^T.
inline Matrix centering_projector(std::size_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "N must be at least 1");
  const auto size = static_cast<Eigen::Index>(n);
  return Matrix::Identity(size, size) -
         Matrix::Constant(size, size, 1.0 / static_cast<double>(n));
}

}  // namespace consensus
