#include "htmpc/sets.hpp"

#include <cmath>
#include <stdexcept>

namespace htmpc {
namespace sets {

namespace {

void check_dim(int a, int b, const char* who) {
  if (a != b) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

}  // namespace

Ball Ball::origin(int dim, double radius) {
  if (radius < 0.0) throw std::invalid_argument("Ball: negative radius");
  return Ball{Vec::Zero(dim), radius};
}

Box Box::centered(const Vec& center, const Vec& half_width) {
  if (center.size() != half_width.size() || (half_width.array() < 0.0).any()) {
    throw std::invalid_argument("Box::centered: bad half widths");
  }
  return Box{center - half_width, center + half_width};
}

Box Box::symmetric(const Vec& half_width) {
  return centered(Vec::Zero(half_width.size()), half_width);
}

Box Box::point(const Vec& p) { return Box{p, p}; }

Box Box::translated(const Vec& offset) const {
  check_dim(dim(), static_cast<int>(offset.size()), "Box::translated");
  return Box{lower + offset, upper + offset};
}

Box bounding_box(const Ball& b) {
  return Box{b.center.array() - b.radius, b.center.array() + b.radius};
}

Box minkowski_sum(const Box& a, const Box& b) {
  check_dim(a.dim(), b.dim(), "minkowski_sum");
  return Box{a.lower + b.lower, a.upper + b.upper};
}

Box minkowski_sum(const Box& a, const Ball& b) {
  return minkowski_sum(a, bounding_box(b));
}

Box pontryagin_diff(const Box& a, const Box& b) {
  check_dim(a.dim(), b.dim(), "pontryagin_diff");
  Box out{a.lower - b.lower, a.upper - b.upper};
  if ((out.lower.array() > out.upper.array() + 1e-12).any()) {
    throw std::runtime_error("pontryagin_diff: empty result (budget infeasible)");
  }
  // Clamp roundoff-thin intervals.
  out.upper = out.upper.cwiseMax(out.lower);
  return out;
}

Box pontryagin_diff(const Box& a, const Ball& b) {
  return pontryagin_diff(a, bounding_box(b));
}

bool contains(const Box& s, const Vec& x, double tol) {
  check_dim(s.dim(), static_cast<int>(x.size()), "contains(Box)");
  return (x.array() >= s.lower.array() - tol).all() &&
         (x.array() <= s.upper.array() + tol).all();
}

bool contains(const Ball& s, const Vec& x, double tol) {
  check_dim(s.dim(), static_cast<int>(x.size()), "contains(Ball)");
  return (x - s.center).norm() <= s.radius + tol;
}

bool contains(const Ellipsoid& s, const Vec& x, double tol) {
  check_dim(s.dim(), static_cast<int>(x.size()), "contains(Ellipsoid)");
  Vec d = x - s.center;
  return d.dot(s.shape * d) <= s.level + tol;
}

bool contains(const ConvexSet& s, const Vec& x, double tol) {
  return std::visit([&](const auto& set) { return contains(set, x, tol); }, s);
}

double distance_to_box(const Box& s, const Vec& x) {
  check_dim(s.dim(), static_cast<int>(x.size()), "distance_to_box");
  Vec excess = (s.lower - x).cwiseMax(x - s.upper).cwiseMax(0.0);
  return excess.norm();
}

Vec box_bound(const Ball& w) {
  return w.center.cwiseAbs().array() + w.radius;
}

Vec box_bound(const Box& w) {
  return w.lower.cwiseAbs().cwiseMax(w.upper.cwiseAbs());
}

namespace {

Box mrpi_outer_impl(const Mat& F, const Vec& g, double eps) {
  if (F.rows() != F.cols()) throw std::invalid_argument("mrpi_outer: F must be square");
  check_dim(static_cast<int>(F.rows()), static_cast<int>(g.size()), "mrpi_outer");
  if (eps <= 0.0) throw std::invalid_argument("mrpi_outer: eps must be positive");
  constexpr int kCap = 10000;

  const Mat absF = F.cwiseAbs();
  const double alpha_target = eps / (1.0 + eps);
  if ((g.array() == 0.0).all()) {
    return Box::point(Vec::Zero(g.size()));
  }

  Vec sum = Vec::Zero(g.size());
  Vec term = g;  // |F|^j g
  double alpha = 0.0;
  bool found = false;
  for (int s = 0; s < kCap; ++s) {
    sum += term;
    term = absF * term;  // now |F|^{s+1} g
    // alpha test against the support directions of W: |F|^{s+1} g <= alpha g.
    double worst = 0.0;
    for (int i = 0; i < g.size(); ++i) {
      if (g(i) > 0.0) {
        worst = std::max(worst, term(i) / g(i));
      } else if (term(i) > 0.0) {
        worst = 1.0;  // cannot scale into a degenerate direction
      }
    }
    if (worst <= alpha_target) {
      alpha = worst;
      found = true;
      break;
    }
  }
  if (!found) {
    throw std::runtime_error(
        "mrpi_outer: truncation cap exceeded (|F| spectral radius too close to one)");
  }
  Vec radius = sum / (1.0 - alpha);
  return Box::symmetric(radius);
}

}  // namespace

Box mrpi_outer(const Mat& F, const Ball& W, double eps) {
  return mrpi_outer_impl(F, box_bound(W), eps);
}

Box mrpi_outer(const Mat& F, const Box& W, double eps) {
  return mrpi_outer_impl(F, box_bound(W), eps);
}

}  // namespace sets
}  // namespace htmpc
