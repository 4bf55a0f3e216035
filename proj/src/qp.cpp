#include "htmpc/qp.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace htmpc {
namespace qp {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::MaxIter: return "max_iter";
  }
  return "unknown";
}

namespace {

constexpr double kPivotTol = 1e-10;

// ---------------------------------------------------------------------------
// Dense two-phase tableau simplex on standard form min c'z, Az = b, z >= 0.
// Returns z or a non-optimal status. Bland's rule throughout.
// ---------------------------------------------------------------------------
struct StandardLp {
  Mat A;
  Vec b;
  Vec c;
};

struct SimplexOutcome {
  Vec z;
  SolveStatus status = SolveStatus::MaxIter;
  int iterations = 0;
};

class Tableau {
 public:
  Tableau(const Mat& A, const Vec& b) : rows_(static_cast<int>(A.rows())) {
    body_ = A;
    rhs_ = b;
    basis_.assign(rows_, -1);
  }

  int rows() const { return rows_; }
  int cols() const { return static_cast<int>(body_.cols()); }

  void append_columns(const Mat& extra) {
    Mat next(rows_, cols() + extra.cols());
    next << body_, extra;
    body_ = std::move(next);
  }

  void pivot(int row, int col) {
    const double p = body_(row, col);
    body_.row(row) /= p;
    rhs_(row) /= p;
    for (int r = 0; r < rows_; ++r) {
      if (r == row) continue;
      const double f = body_(r, col);
      if (f != 0.0) {
        body_.row(r) -= f * body_.row(row);
        rhs_(r) -= f * rhs_(row);
      }
    }
    basis_[row] = col;
  }

  // One simplex phase on objective c (allowed_cols marks columns that may
  // enter). Returns false when the problem is unbounded in this phase.
  bool run(const Vec& c, const std::vector<bool>& allowed, int max_iter,
           int* iters_out) {
    for (int it = 0; it < max_iter; ++it) {
      // Reduced costs r = c - c_B' * body (body is already B^{-1}A).
      Vec cb(rows_);
      for (int r = 0; r < rows_; ++r) cb(r) = c(basis_[r]);
      Vec reduced = c - body_.transpose() * cb;

      int entering = -1;
      for (int j = 0; j < cols(); ++j) {  // Bland: lowest index
        if (allowed[j] && reduced(j) < -kPivotTol) {
          entering = j;
          break;
        }
      }
      if (entering < 0) {
        *iters_out += it;
        return true;  // optimal for this phase
      }

      int leaving = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int r = 0; r < rows_; ++r) {
        const double a = body_(r, entering);
        if (a > kPivotTol) {
          const double ratio = rhs_(r) / a;
          if (ratio < best_ratio - kPivotTol ||
              (std::abs(ratio - best_ratio) <= kPivotTol &&
               (leaving < 0 || basis_[r] < basis_[leaving]))) {
            best_ratio = ratio;
            leaving = r;
          }
        }
      }
      if (leaving < 0) {
        *iters_out += it;
        return false;  // unbounded ray
      }
      pivot(leaving, entering);
    }
    *iters_out += max_iter;
    return true;  // cap reached; caller inspects optimality separately
  }

  double objective(const Vec& c) const {
    double v = 0.0;
    for (int r = 0; r < rows_; ++r) v += c(basis_[r]) * rhs_(r);
    return v;
  }

  Vec solution(int n) const {
    Vec z = Vec::Zero(n);
    for (int r = 0; r < rows_; ++r) {
      if (basis_[r] < n) z(basis_[r]) = rhs_(r);
    }
    return z;
  }

  const std::vector<int>& basis() const { return basis_; }
  double body(int r, int c) const { return body_(r, c); }
  void set_basis(int row, int col) { basis_[row] = col; }

 private:
  Mat body_;
  Vec rhs_;
  std::vector<int> basis_;
  int rows_;
};

SimplexOutcome simplex_standard(const StandardLp& lp) {
  const int m = static_cast<int>(lp.A.rows());
  const int n = static_cast<int>(lp.A.cols());
  SimplexOutcome out;

  Mat A = lp.A;
  Vec b = lp.b;
  for (int r = 0; r < m; ++r) {
    if (b(r) < 0.0) {
      A.row(r) = -A.row(r);
      b(r) = -b(r);
    }
  }

  Tableau tab(A, b);
  tab.append_columns(Mat::Identity(m, m));  // artificials
  for (int r = 0; r < m; ++r) tab.set_basis(r, n + r);

  const int total = n + m;
  Vec phase1_cost = Vec::Zero(total);
  phase1_cost.tail(m).setOnes();
  std::vector<bool> allow_all(total, true);

  const int cap = 2000 + 50 * total;
  if (!tab.run(phase1_cost, allow_all, cap, &out.iterations)) {
    out.status = SolveStatus::Infeasible;  // phase 1 cannot be unbounded
    return out;
  }
  if (tab.objective(phase1_cost) > 1e-8) {
    out.status = SolveStatus::Infeasible;
    return out;
  }
  // Pivot any zero-level artificials out of the basis where possible.
  for (int r = 0; r < m; ++r) {
    if (tab.basis()[r] >= n) {
      for (int j = 0; j < n; ++j) {
        if (std::abs(tab.body(r, j)) > 1e-8) {
          tab.pivot(r, j);
          break;
        }
      }
    }
  }

  Vec phase2_cost = Vec::Zero(total);
  phase2_cost.head(n) = lp.c;
  std::vector<bool> allow(total, true);
  for (int j = n; j < total; ++j) allow[j] = false;  // artificials stay out

  if (!tab.run(phase2_cost, allow, cap, &out.iterations)) {
    out.status = SolveStatus::Unbounded;
    return out;
  }
  out.z = tab.solution(n);
  out.status = SolveStatus::Optimal;
  return out;
}

}  // namespace

Result solve_lp(const Vec& c, const Mat& A_in, const Vec& b_in, const Mat& A_eq,
                const Vec& b_eq) {
  const int n = static_cast<int>(c.size());
  const int mi = static_cast<int>(A_in.rows());
  const int me = static_cast<int>(A_eq.rows());
  if ((mi > 0 && A_in.cols() != n) || (me > 0 && A_eq.cols() != n)) {
    throw std::invalid_argument("solve_lp: dimension mismatch");
  }

  // Standard form over z = (x+, x-, s): free x split, slacks on inequalities.
  StandardLp lp;
  lp.A.setZero(mi + me, 2 * n + mi);
  lp.b.setZero(mi + me);
  if (mi > 0) {
    lp.A.block(0, 0, mi, n) = A_in;
    lp.A.block(0, n, mi, n) = -A_in;
    lp.A.block(0, 2 * n, mi, mi) = Mat::Identity(mi, mi);
    lp.b.head(mi) = b_in;
  }
  if (me > 0) {
    lp.A.block(mi, 0, me, n) = A_eq;
    lp.A.block(mi, n, me, n) = -A_eq;
    lp.b.tail(me) = b_eq;
  }
  lp.c.setZero(2 * n + mi);
  lp.c.head(n) = -c;          // maximize c'x
  lp.c.segment(n, n) = c;

  SimplexOutcome sim = simplex_standard(lp);
  Result res;
  res.status = sim.status;
  res.iterations = sim.iterations;
  if (sim.status == SolveStatus::Optimal) {
    res.x = sim.z.head(n) - sim.z.segment(n, n);
    res.objective = c.dot(res.x);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Active-set QP.
// ---------------------------------------------------------------------------
namespace {

struct NullSpaceStep {
  Vec p;             // step direction (zero when stationary)
  bool is_ray;       // true when the objective decreases along p forever
  bool stationary;   // true when p ~ 0
};

// Step for min 0.5(x+p)'H(x+p) + g'(x+p) subject to Act p = 0.
NullSpaceStep equality_step(const Mat& H, const Vec& grad, const Mat& act,
                            double tol) {
  const int n = static_cast<int>(grad.size());
  NullSpaceStep out{Vec::Zero(n), false, true};

  Mat Z;
  if (act.rows() == 0) {
    Z = Mat::Identity(n, n);
  } else {
    Eigen::JacobiSVD<Mat> svd(act, Eigen::ComputeFullV);
    const Vec sv = svd.singularValues();
    const double thresh =
        1e-12 * std::max(1.0, sv.size() > 0 ? sv(0) : 0.0);
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i) {
      if (sv(i) > thresh) ++rank;
    }
    if (rank == n) return out;  // fully pinned
    Z = svd.matrixV().rightCols(n - rank);
  }

  const Mat Hz = Z.transpose() * H * Z;
  const Vec gz = Z.transpose() * grad;
  const int d = static_cast<int>(Hz.rows());

  Eigen::SelfAdjointEigenSolver<Mat> es(Hz);
  const Vec lam = es.eigenvalues();
  const Mat U = es.eigenvectors();
  const double lam_tol = 1e-10 * std::max(1.0, lam.cwiseAbs().maxCoeff());

  // Zero-curvature descent ray has priority: it must be chased to a blocking
  // constraint before the curved subspace matters.
  for (int i = 0; i < d; ++i) {
    if (lam(i) <= lam_tol) {
      const double slope = U.col(i).dot(gz);
      if (std::abs(slope) > tol) {
        Vec dir = -((slope > 0.0) ? 1.0 : -1.0) * (Z * U.col(i));
        out.p = dir;
        out.is_ray = true;
        out.stationary = false;
        return out;
      }
    }
  }

  Vec v = Vec::Zero(d);
  for (int i = 0; i < d; ++i) {
    if (lam(i) > lam_tol) v(i) = -U.col(i).dot(gz) / lam(i);
  }
  Vec p = Z * (U * v);
  if (p.norm() > tol * (1.0 + 1.0)) {
    out.p = p;
    out.stationary = false;
  }
  return out;
}

}  // namespace

Result solve(const QuadProgram& prog, double tol,
             const std::optional<Vec>& feasible_start) {
  const int n = prog.num_vars();
  const int me = static_cast<int>(prog.A_eq.rows());
  const int mi = static_cast<int>(prog.A_in.rows());
  if (prog.H.rows() != n || prog.H.cols() != n) {
    throw std::invalid_argument("qp::solve: H dimension mismatch");
  }
  if ((me > 0 && prog.A_eq.cols() != n) || (mi > 0 && prog.A_in.cols() != n)) {
    throw std::invalid_argument("qp::solve: constraint dimension mismatch");
  }
  if ((prog.H - prog.H.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * std::max(1.0, prog.H.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("qp::solve: H must be symmetric");
  }
  {
    Eigen::SelfAdjointEigenSolver<Mat> es(prog.H);
    if (es.eigenvalues().minCoeff() < -1e-8) {
      throw std::invalid_argument("qp::solve: H has a negative eigenvalue");
    }
  }

  Result res;
  const double feas_tol = std::max(tol, 1e-9);

  // Feasible start: caller-provided, else equality least squares, else a
  // phase-1 LP (min t s.t. A_in x - t <= b_in, t >= -1).
  Vec x;
  bool have_start = false;
  if (feasible_start) {
    x = *feasible_start;
    const bool eq_ok =
        me == 0 || (prog.A_eq * x - prog.b_eq).cwiseAbs().maxCoeff() <= feas_tol;
    const bool in_ok =
        mi == 0 || ((prog.A_in * x - prog.b_in).maxCoeff() <= feas_tol);
    have_start = eq_ok && in_ok;
  }
  if (!have_start) {
    x = me > 0 ? Vec(prog.A_eq.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV)
                         .solve(prog.b_eq))
               : Vec(Vec::Zero(n));
    if (me > 0 && (prog.A_eq * x - prog.b_eq).cwiseAbs().maxCoeff() >
                      feas_tol * (1.0 + prog.b_eq.cwiseAbs().maxCoeff())) {
      res.status = SolveStatus::Infeasible;
      return res;
    }
    if (mi > 0 && (prog.A_in * x - prog.b_in).maxCoeff() > feas_tol) {
      Vec c1 = Vec::Zero(n + 1);
      c1(n) = -1.0;  // maximize -t
      Mat Ain1(mi + 1, n + 1);
      Ain1.setZero();
      Ain1.block(0, 0, mi, n) = prog.A_in;
      Ain1.block(0, n, mi, 1).setConstant(-1.0);
      Ain1(mi, n) = -1.0;  // t >= -1
      Vec bin1(mi + 1);
      bin1.head(mi) = prog.b_in;
      bin1(mi) = 1.0;
      Mat Aeq1;
      Vec beq1;
      if (me > 0) {
        Aeq1.setZero(me, n + 1);
        Aeq1.block(0, 0, me, n) = prog.A_eq;
        beq1 = prog.b_eq;
      }
      Result ph1 = solve_lp(c1, Ain1, bin1, Aeq1, beq1);
      if (ph1.status != SolveStatus::Optimal || ph1.x(n) > feas_tol) {
        res.status = SolveStatus::Infeasible;
        return res;
      }
      x = ph1.x.head(n);
    }
  }

  // Active-set iterations.
  std::vector<int> working;  // active inequality indices, sorted
  const int max_iter = 200 + 40 * (n + mi);
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;

    Mat act(me + static_cast<int>(working.size()), n);
    if (me > 0) act.topRows(me) = prog.A_eq;
    for (size_t k = 0; k < working.size(); ++k) {
      act.row(me + static_cast<int>(k)) = prog.A_in.row(working[k]);
    }

    const Vec grad = prog.H * x + prog.g;
    NullSpaceStep step = equality_step(prog.H, grad, act, tol);

    if (step.stationary) {
      // Multipliers: act' * mult = -grad, least squares; inequality rows need
      // mult >= 0.
      if (working.empty()) {
        res.x = x;
        res.status = SolveStatus::Optimal;
        res.objective = 0.5 * x.dot(prog.H * x) + prog.g.dot(x);
        return res;
      }
      Vec mult = act.transpose()
                     .jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV)
                     .solve(-grad);
      int drop = -1;
      double most_negative = -std::max(tol, 1e-9);
      for (size_t k = 0; k < working.size(); ++k) {
        const double lam = mult(me + static_cast<int>(k));
        if (lam < most_negative) {
          most_negative = lam;
          drop = static_cast<int>(k);
        }
      }
      if (drop < 0) {
        res.x = x;
        res.status = SolveStatus::Optimal;
        res.objective = 0.5 * x.dot(prog.H * x) + prog.g.dot(x);
        return res;
      }
      working.erase(working.begin() + drop);
      continue;
    }

    // Ratio test against inactive inequalities.
    double alpha = step.is_ray ? std::numeric_limits<double>::infinity() : 1.0;
    int blocking = -1;
    for (int j = 0; j < mi; ++j) {
      if (std::binary_search(working.begin(), working.end(), j)) continue;
      const double aj_p = prog.A_in.row(j).dot(step.p);
      if (aj_p > kPivotTol * (1.0 + prog.A_in.row(j).norm() * step.p.norm())) {
        const double slack = prog.b_in(j) - prog.A_in.row(j).dot(x);
        const double a = std::max(0.0, slack) / aj_p;
        if (a < alpha - 1e-14) {
          alpha = a;
          blocking = j;
        }
      }
    }
    if (step.is_ray && blocking < 0) {
      res.status = SolveStatus::Unbounded;
      res.x = x;
      return res;
    }
    x += alpha * step.p;
    if (blocking >= 0) {
      working.insert(
          std::lower_bound(working.begin(), working.end(), blocking), blocking);
    }
  }

  res.x = x;
  res.status = SolveStatus::MaxIter;
  res.objective = 0.5 * x.dot(prog.H * x) + prog.g.dot(x);
  return res;
}

}  // namespace qp
}  // namespace htmpc
