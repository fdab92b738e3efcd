"""Brute-force shattering checks for halfspaces, Euclidean balls and their unions.

Concepts are open sets: a point on a boundary is labeled negative, as with
the usual h(x) = 1[w.x + b > 0]. A finite positive set P and negative set N
are then realized by a halfspace iff some (w, b) satisfies w.x + b >= 1 on P
and <= 0 on N (rescale any separator by its smallest positive value). For
homogeneous halfspaces this matters: negatives may sit on the hyperplane.
Balls reduce to the same problem after the paraboloid lift
x -> (x, |x|^2), with the coefficient of the lifted coordinate kept
non-negative (zero is the limit of ever larger balls, i.e. a halfspace).
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

MAX_POINTS = 12
MAX_UNION_POINTS = 10
MAX_ELL = 3


class BudgetExceeded(ValueError):
    """The point set is too large for exhaustive labeling enumeration."""


@dataclass(frozen=True)
class PointSet:
    points: tuple

    def __post_init__(self):
        arr = np.array(self.points, dtype=np.float64, ndmin=2)
        if len({tuple(p) for p in arr.tolist()}) != arr.shape[0]:
            raise ValueError("points must be distinct")
        object.__setattr__(self, "points", tuple(tuple(p) for p in arr.tolist()))

    @property
    def array(self):
        return np.array(self.points, dtype=np.float64, ndmin=2)

    @property
    def dim(self):
        return len(self.points[0])

    def __len__(self):
        return len(self.points)

    def in_general_position(self, tol=1e-9):
        """No k+1 points (k <= d) lie on a common (k-1)-dimensional affine flat."""
        x = self.array
        d = x.shape[1]
        for k in range(2, min(d + 1, len(x)) + 1):
            for idx in itertools.combinations(range(len(x)), k):
                diffs = x[list(idx[1:])] - x[idx[0]]
                if np.linalg.matrix_rank(diffs, tol=tol) < k - 1:
                    return False
        return True

    def scaled(self, factor):
        return PointSet(tuple(tuple(factor * v for v in p) for p in self.points))


def _feasible(a_ub, b_ub, bounds):
    res = linprog(np.zeros(a_ub.shape[1]), A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    return res.x if res.status == 0 else None


def halfspace_separable(pos, neg, homogeneous=False, tol=1e-7):
    """Is there an open (homogeneous) halfspace containing ``pos`` and not ``neg``?"""
    pos = np.array(pos, dtype=np.float64).reshape(-1, _dim(pos, neg))
    neg = np.array(neg, dtype=np.float64).reshape(-1, pos.shape[1])
    d = pos.shape[1]
    # rows: -(w.x + b) <= -1 for pos; (w.x + b) <= 0 for neg
    ones_p, ones_n = np.ones((len(pos), 1)), np.ones((len(neg), 1))
    a = np.vstack([-np.hstack([pos, ones_p]), np.hstack([neg, ones_n])])
    if homogeneous:
        a = a[:, :d]
    rhs = np.concatenate([-np.ones(len(pos)), np.zeros(len(neg))])
    sol = _feasible(a, rhs, [(None, None)] * a.shape[1])
    if sol is None:
        return False
    w, b = sol[:d], (0.0 if homogeneous else sol[d])
    # positives carry a unit margin, so tol only absorbs solver slack on the boundary
    return bool(np.all(pos @ w + b > 0.5) and np.all(neg @ w + b <= tol))


def ball_separable_lift(pos, neg):
    """Ball containing ``pos`` and excluding ``neg``, via the paraboloid lift."""
    d = _dim(pos, neg)
    pos = np.array(pos, dtype=np.float64).reshape(-1, d)
    neg = np.array(neg, dtype=np.float64).reshape(-1, d)
    if len(pos) == 0 or len(neg) == 0:
        return True

    def lift(x):
        return np.hstack([x, (x * x).sum(axis=1, keepdims=True), np.ones((len(x), 1))])

    # f(x) = u.x + a|x|^2 + b;  f <= -1 inside (pos), f >= 1 outside (neg), a >= 0
    a = np.vstack([lift(pos), -lift(neg)])
    bounds = [(None, None)] * d + [(0, None), (None, None)]
    sol = _feasible(a, -np.ones(a.shape[0]), bounds)
    if sol is None:
        return False
    f_pos, f_neg = lift(pos) @ sol, lift(neg) @ sol
    return bool(np.all(f_pos < 0) and np.all(f_neg > 0))


def ball_separable_direct(pos, neg, tol=1e-12):
    """Planar ball separability by maximizing the radius gap over candidate centers.

    For a center c, a separating disk exists iff
    gap(c) = min_neg |x - c|^2 - max_pos |x - c|^2 > 0.
    gap is concave piecewise linear in c; its supremum is either attained at an
    intersection of two perpendicular bisectors of point pairs, or unbounded,
    which happens exactly when a halfplane separates the sets (probed with one
    direction per arc between critical angles).
    """
    pos = np.array(pos, dtype=np.float64).reshape(-1, 2)
    neg = np.array(neg, dtype=np.float64).reshape(-1, 2)
    if len(pos) == 0 or len(neg) == 0:
        return True
    pts = np.vstack([pos, neg])
    scale = 1.0 + float(np.abs(pts).max()) ** 2

    def gap(c):
        dn = ((neg - c) ** 2).sum(axis=1).min()
        dp = ((pos - c) ** 2).sum(axis=1).max()
        return dn - dp

    # bisector of (a, b): 2 c.(b - a) = |b|^2 - |a|^2
    lines = []
    for i, j in itertools.combinations(range(len(pts)), 2):
        lines.append((2.0 * (pts[j] - pts[i]), pts[j] @ pts[j] - pts[i] @ pts[i]))
    for (n1, r1), (n2, r2) in itertools.combinations(lines, 2):
        m = np.vstack([n1, n2])
        if abs(np.linalg.det(m)) < 1e-12:
            continue
        c = np.linalg.solve(m, np.array([r1, r2]))
        if gap(c) > tol * scale:
            return True

    angles = []
    for i, j in itertools.combinations(range(len(pts)), 2):
        dx, dy = pts[j] - pts[i]
        base = np.arctan2(dy, dx)
        angles += [(base + np.pi / 2) % (2 * np.pi), (base - np.pi / 2) % (2 * np.pi)]
    angles = sorted(set(angles))
    mids = [(a + b) / 2 for a, b in zip(angles, angles[1:] + [angles[0] + 2 * np.pi])]
    for t in mids:
        u = np.array([np.cos(t), np.sin(t)])
        if (pos @ u).min() > (neg @ u).max():
            return True
    return False


def _dim(pos, neg):
    for s in (pos, neg):
        arr = np.asarray(s, dtype=np.float64)
        if arr.size:
            return arr.reshape(len(arr), -1).shape[1]
    raise ValueError("both sets are empty")


def labelings(n):
    """All 2^n boolean labelings, as tuples."""
    return itertools.product((False, True), repeat=n)


def _split(x, labels):
    mask = np.array(labels, dtype=bool)
    return x[mask], x[~mask]


def _check_budget(ps, limit):
    if len(ps) > limit:
        raise BudgetExceeded(f"{len(ps)} points exceed the brute-force budget of {limit}")


def shatter_check_halfspaces(ps, homogeneous=False):
    """True iff every labeling of ``ps`` is realized by a (homogeneous) halfspace."""
    _check_budget(ps, MAX_POINTS)
    x = ps.array
    return all(halfspace_separable(*_split(x, lab), homogeneous=homogeneous) for lab in labelings(len(ps)))


def shatter_check_balls(ps, method="lift"):
    """True iff every labeling of ``ps`` is realized by a Euclidean ball."""
    _check_budget(ps, MAX_POINTS)
    if method == "direct" and ps.dim != 2:
        raise ValueError("the direct ball decider is planar only")
    decide = ball_separable_lift if method == "lift" else ball_separable_direct
    x = ps.array
    return all(decide(*_split(x, lab)) for lab in labelings(len(ps)))


BASES = ("homogeneous_halfspaces", "halfspaces", "balls")


def _base_decider(base):
    if base == "homogeneous_halfspaces":
        return lambda p, n: halfspace_separable(p, n, homogeneous=True)
    if base == "halfspaces":
        return lambda p, n: halfspace_separable(p, n)
    if base == "balls":
        return ball_separable_lift
    raise ValueError(f"unknown base class {base!r}; choose from {BASES}")


def union_realizable(x, labels, ell, base):
    """Can the positives be split into <= ell groups, each base-separable from all negatives?"""
    decide = _base_decider(base)
    labels = np.array(labels, dtype=bool)
    neg = x[~labels]
    cache = {}

    def separable(group):
        if group not in cache:
            cache[group] = decide(x[list(group)], neg)
        return cache[group]

    def cover(remaining, k):
        if not remaining:
            return True
        if k == 0:
            return False
        first, rest = remaining[0], remaining[1:]
        # largest groups first; the group holding ``first`` is chosen exhaustively
        for size in range(len(rest), -1, -1):
            for others in itertools.combinations(rest, size):
                group = (first,) + others
                if separable(group) and cover(tuple(i for i in rest if i not in others), k - 1):
                    return True
        return False

    return cover(tuple(np.flatnonzero(labels).tolist()), ell)


def shatter_check_unions(ps, ell, base="homogeneous_halfspaces"):
    """True iff every labeling is realized by a union of at most ``ell`` base concepts."""
    _check_budget(ps, MAX_UNION_POINTS)
    if not 1 <= ell <= MAX_ELL:
        raise BudgetExceeded(f"ell must lie in [1, {MAX_ELL}]")
    x = ps.array
    return all(union_realizable(x, lab, ell, base) for lab in labelings(len(ps)))


def orthant_construction(d=2, dilation=1.0):
    """d points near the positive diagonal and d near the negative one, for the 2-fold union checks.

    Positive-side points are (2, 1, ..., 1) with the 2 cycled through the
    coordinates; negative-side points are their exact reflections through the
    origin. The reflection is what lets a single homogeneous halfspace isolate
    one point: its partner pair sits on the boundary.
    """
    pos = [tuple(2.0 if j == i else 1.0 for j in range(d)) for i in range(d)]
    neg = [tuple(-v for v in p) for p in pos]
    return PointSet(tuple(pos + neg)).scaled(dilation)


@dataclass(frozen=True)
class ClaimResult:
    name: str
    expected: bool
    observed: bool

    @property
    def passed(self):
        return self.expected == self.observed


def claim_suite():
    """Concrete instances behind the halfspace/ball shattering statements."""
    tri = PointSet(((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)))
    square = PointSet(((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)))
    pair = PointSet(((1.0, 0.1), (1.0, -0.1)))
    pair_reflected = PointSet(pair.points + ((-1.0, -0.1), (-1.0, 0.1)))
    ortho = orthant_construction(2)
    dilated = orthant_construction(2, dilation=100.0)
    out = [
        ClaimResult("halfspaces shatter 3 generic points in R^2", True, shatter_check_halfspaces(tri)),
        ClaimResult("halfspaces shatter square corners in R^2", False, shatter_check_halfspaces(square)),
        ClaimResult("homogeneous halfspaces shatter {(1,.1),(1,-.1)}", True, shatter_check_halfspaces(pair, True)),
        ClaimResult("homogeneous halfspaces shatter pair plus reflections", False,
                    shatter_check_halfspaces(pair_reflected, True)),
        ClaimResult("balls shatter 3 generic points in R^2", True, shatter_check_balls(tri)),
        ClaimResult("balls shatter square corners in R^2", False, shatter_check_balls(square)),
        ClaimResult("2-fold unions of homogeneous halfspaces shatter 2d points (d=2)", True,
                    shatter_check_unions(ortho, 2, "homogeneous_halfspaces")),
        ClaimResult("single homogeneous halfspaces shatter the same 2d points", False,
                    shatter_check_unions(ortho, 1, "homogeneous_halfspaces")),
        ClaimResult("2-fold unions of general halfspaces shatter the same 2d points", True,
                    shatter_check_unions(ortho, 2, "halfspaces")),
        ClaimResult("2-fold unions of balls shatter the dilated 2d points", True,
                    shatter_check_unions(dilated, 2, "balls")),
    ]
    return out


def homogeneous_dimension_report(dims=(2, 3)):
    """Empirical shattering of d and d+1 generic points by homogeneous halfspaces.

    Rows are (d, n_points, shattered). Generic points are the standard basis
    plus (for d + 1 points) the all-ones vector scaled to avoid symmetry.
    """
    rows = []
    for d in dims:
        basis = [tuple(float(i == j) for j in range(d)) for i in range(d)]
        extra = tuple(-(1.0 + 0.5 * j) for j in range(d))
        for pts in (basis, basis + [extra]):
            rows.append((d, len(pts), shatter_check_halfspaces(PointSet(tuple(pts)), homogeneous=True)))
    return rows
