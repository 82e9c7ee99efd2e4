#include <algorithm>
#include <cmath>

#include "bilevel/errors.hpp"
#include "bilevel/polytope.hpp"

namespace bilevel {

namespace {

double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

void push_unique(std::vector<Eigen::VectorXd>& out, const Eigen::VectorXd& v, double tol) {
  for (const auto& u : out)
    if ((u - v).lpNorm<Eigen::Infinity>() <= tol) return;
  out.push_back(v);
}

std::vector<Eigen::VectorXd> basic_solutions(const Eigen::MatrixXd& M, const Eigen::VectorXd& b,
                                             std::size_t budget) {
  const int N = static_cast<int>(M.cols());
  std::vector<Eigen::VectorXd> out;
  const double scale = b.size() ? 1.0 + b.lpNorm<Eigen::Infinity>() : 1.0;

  // Keep a maximal set of independent rows.
  std::vector<int> keep;
  Eigen::MatrixXd acc(0, N);
  int rank = 0;
  for (int i = 0; i < M.rows(); ++i) {
    Eigen::MatrixXd next(acc.rows() + 1, N);
    next << acc, M.row(i);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(next);
    lu.setThreshold(1e-10);
    if (lu.rank() > rank) {
      acc = next;
      rank = static_cast<int>(lu.rank());
      keep.push_back(i);
    }
  }
  auto feasible = [&](const Eigen::VectorXd& w) {
    return (M * w - b).lpNorm<Eigen::Infinity>() <= 1e-8 * scale;
  };
  if (rank == 0) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(N);
    if (feasible(w)) out.push_back(w);
    return out;
  }
  if (binom(N, rank) > static_cast<double>(budget))
    throw BudgetError("vertex enumeration needs C(" + std::to_string(N) + "," +
                      std::to_string(rank) + ") bases");
  Eigen::VectorXd bs(rank);
  for (int i = 0; i < rank; ++i) bs(i) = b(keep[i]);

  std::vector<int> pick(rank);
  for (int i = 0; i < rank; ++i) pick[i] = i;
  Eigen::MatrixXd B(rank, rank);
  for (;;) {
    for (int c = 0; c < rank; ++c) B.col(c) = acc.col(pick[c]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
    lu.setThreshold(1e-10);
    if (lu.isInvertible()) {
      Eigen::VectorXd wb = lu.solve(bs);
      if (wb.minCoeff() >= -1e-9 * scale) {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(N);
        for (int c = 0; c < rank; ++c) w(pick[c]) = std::max(wb(c), 0.0);
        if (feasible(w)) push_unique(out, w, 1e-9 * scale);
      }
    }
    int i = rank;
    while (i > 0 && pick[i - 1] == N - rank + i - 1) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (int k = i; k < rank; ++k) pick[k] = pick[k - 1] + 1;
  }
  return out;
}

}  // namespace

Vertices enumerate_vertices(const Eigen::MatrixXd& M, const Eigen::VectorXd& b, std::size_t budget) {
  Vertices v;
  v.points = basic_solutions(M, b, budget);
  if (v.points.empty()) return v;
  const int N = static_cast<int>(M.cols());
  Eigen::MatrixXd Mr(M.rows() + 1, N);
  Mr << M, Eigen::RowVectorXd::Ones(N);
  Eigen::VectorXd br = Eigen::VectorXd::Zero(M.rows() + 1);
  br(M.rows()) = 1.0;
  v.rays = basic_solutions(Mr, br, budget);
  return v;
}

Polytope project_polyhedron(const Eigen::MatrixXd& M, const Eigen::VectorXd& b,
                            const Eigen::MatrixXd& L, std::size_t budget) {
  const int d = static_cast<int>(L.rows());
  Vertices raw = enumerate_vertices(M, b, budget);
  if (raw.points.empty()) return Polytope::empty(d);
  std::vector<Vec> pts, rays;
  for (const auto& w : raw.points) {
    Eigen::VectorXd p = L * w;
    pts.emplace_back(p.data(), p.data() + d);
  }
  for (const auto& w : raw.rays) {
    Eigen::VectorXd p = L * w;
    if (p.lpNorm<Eigen::Infinity>() <= 1e-12) continue;
    rays.emplace_back(p.data(), p.data() + d);
  }
  return hull(d, pts, rays).reduced();
}

}  // namespace bilevel
