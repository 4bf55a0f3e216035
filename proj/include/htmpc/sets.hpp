#pragma once

#include <variant>

#include "htmpc/linalg.hpp"

namespace htmpc {
namespace sets {

/// Euclidean ball { x : ||x - center|| <= radius }.
struct Ball {
  Vec center;
  double radius = 0.0;

  static Ball origin(int dim, double radius);
  int dim() const { return static_cast<int>(center.size()); }
};

/// Axis-aligned box { x : lower <= x <= upper } (componentwise).
struct Box {
  Vec lower;
  Vec upper;

  static Box centered(const Vec& center, const Vec& half_width);
  static Box symmetric(const Vec& half_width);  // centered at the origin
  static Box point(const Vec& p);               // degenerate box {p}
  int dim() const { return static_cast<int>(lower.size()); }
  Vec center() const { return 0.5 * (lower + upper); }
  Vec half_width() const { return 0.5 * (upper - lower); }
  Box translated(const Vec& offset) const;
};

/// { x : (x - center)' shape (x - center) <= level }, shape symmetric PD.
struct Ellipsoid {
  Vec center;
  Mat shape;
  double level = 1.0;

  int dim() const { return static_cast<int>(center.size()); }
};

using ConvexSet = std::variant<Box, Ball, Ellipsoid>;

/// Smallest box containing a ball.
Box bounding_box(const Ball& b);

/// Tightest box containing A + B. Exact for boxes; a ball operand is replaced
/// by its circumscribing box first.
Box minkowski_sum(const Box& a, const Box& b);
Box minkowski_sum(const Box& a, const Ball& b);

/// Box A - B (componentwise interval shrink). A ball subtrahend is handled via
/// its circumscribing box, which over-shrinks and is therefore valid for
/// constraint tightening. Throws std::runtime_error when the result is empty.
Box pontryagin_diff(const Box& a, const Box& b);
Box pontryagin_diff(const Box& a, const Ball& b);

/// Membership with absolute tolerance 1e-9 on the boundary.
bool contains(const Box& s, const Vec& x, double tol = 1e-9);
bool contains(const Ball& s, const Vec& x, double tol = 1e-9);
bool contains(const Ellipsoid& s, const Vec& x, double tol = 1e-9);
bool contains(const ConvexSet& s, const Vec& x, double tol = 1e-9);

/// Euclidean distance from x to the box (0 inside).
double distance_to_box(const Box& s, const Vec& x);

/// Componentwise bound vector g with |w_i| <= g_i for all w in W.
Vec box_bound(const Ball& w);
Vec box_bound(const Box& w);

/// Outer box approximation of the minimal robust positively invariant set of
/// e+ = F e + w, w in W. Truncated-power-sum construction on |F|: find s with
/// |F|^s g <= alpha g componentwise (alpha <= eps/(1+eps)), return the box of
/// radius (1-alpha)^{-1} sum_{j<s} |F|^j g, g the bound vector of W. The
/// returned box Z satisfies F Z + W subset of Z exactly. Throws
/// std::runtime_error when s exceeds the cap (spectral radius of |F| too close
/// to or above one).
Box mrpi_outer(const Mat& F, const Ball& W, double eps);
Box mrpi_outer(const Mat& F, const Box& W, double eps);

}  // namespace sets
}  // namespace htmpc
