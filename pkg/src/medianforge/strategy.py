"""Manipulability analysis: skewness, achievable set, best responses, bounds.

Reported strategic gains are empirical: the optimizers search over strategic
votes, so every gain is a lower bound on the true worst case over all votes
and preference placements.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import AtVoterPoint, DegenerateDimension, MajorityAttack, NotSPD
from .linalg import check_spd, extreme_eigenvalues
from .profiles import VoterProfile, WeightedProfile, affine_dimension, uniform_profile
from .solvers import (
    DEFAULT_TOL_GRAD,
    MedianResult,
    _solve_gm_raw,
    geometric_median,
    loss_gradient,
    loss_hessian,
    loss_third_deriv,
    min_norm_subgradient,
)

__all__ = [
    "SkewnessReport",
    "skewness",
    "numeric_skewness",
    "hessian_at_median",
    "AchievableSet",
    "achievable_contains",
    "boundary_point",
    "StrategyReport",
    "best_response",
    "ConditionReport",
    "condition_checker",
    "byzantine_bound",
    "hull_distance",
    "NoShoeReport",
    "no_shoe_check",
]


# -- skewness functional ------------------------------------------------------


@dataclass(frozen=True)
class SkewnessReport:
    """Skewness value with the eigenvalue-ratio bounds that bracket it."""

    value: float
    lambda_min: float
    lambda_max: float
    lower_bound: float
    upper_bound: float
    certified: bool


def skewness(s) -> SkewnessReport:
    """Worst-case angle penalty sup ||x|| ||Sx|| / (x^T S x) - 1 over x != 0.

    Closed form: in eigencoordinates the squared objective is a ratio of the
    second to squared first moment of the eigenvalues under weights x_i^2 on
    the simplex. For a fixed first moment the second moment is maximized by
    a two-point mixture of the extreme eigenvalues, so the supremum is
    (lmin + lmax) / (2 sqrt(lmin lmax)) - 1 in every dimension.
    """
    a = check_spd(s)
    lam_min, lam_max = extreme_eigenvalues(a)
    if lam_min <= 0.0:
        raise NotSPD("matrix is not positive definite")
    ratio = lam_max / lam_min
    # the closed form coincides with the lower bound, which is attained
    value = float((1.0 + ratio) / (2.0 * np.sqrt(ratio)) - 1.0)
    return SkewnessReport(
        value=value,
        lambda_min=lam_min,
        lambda_max=lam_max,
        lower_bound=value,
        upper_bound=float(ratio - 1.0),
        certified=True,
    )


def numeric_skewness(s, starts: int = 64, iters: int = 400, seed: int = 0) -> float:
    """Sphere oracle: multi-start projected-gradient ascent of ||Sx||/(x^T S x).

    Independent of the closed form; used to cross-validate it.
    """
    a = check_spd(s)
    d = a.shape[0]
    rng = np.random.default_rng(seed)

    def objective(x):
        sx = a @ x
        return np.linalg.norm(x) * np.linalg.norm(sx) / (x @ sx)

    def ascend(x):
        x = x / np.linalg.norm(x)
        step = 0.5
        f = objective(x)
        for _ in range(iters):
            sx = a @ x
            nsx = np.linalg.norm(sx)
            quad = x @ sx
            # gradient of log f on the unit sphere
            grad = (a @ sx) / nsx**2 - 2.0 * sx / quad + x
            grad -= (grad @ x) * x
            if np.linalg.norm(grad) < 1e-14:
                break
            cand = x + step * grad
            cand /= np.linalg.norm(cand)
            fc = objective(cand)
            if fc > f:
                x, f = cand, fc
                step = min(step * 1.3, 4.0)
            else:
                step *= 0.5
                if step < 1e-16:
                    break
        return f

    best = 0.0
    inits = [rng.standard_normal(d) for _ in range(starts)]
    inits.extend(np.eye(d))
    for x0 in inits:
        if np.linalg.norm(x0) == 0.0:
            continue
        best = max(best, ascend(x0))
    return float(best - 1.0)


# -- achievable set -----------------------------------------------------------


@dataclass(frozen=True)
class AchievableSet:
    """Points a single strategic voter can turn into the geometric median.

    Membership: the honest-loss gradient (minimum-norm subgradient on voter
    points) has Euclidean norm at most 1/V.
    """

    honest: VoterProfile

    @property
    def radius_rule(self) -> float:
        return 1.0 / self.honest.count


def achievable_contains(achievable: AchievableSet, z, atol: float = 1e-9) -> bool:
    """Membership test with a small absolute slack: medians computed to a
    gradient tolerance sit within that tolerance of the boundary."""
    wp = achievable.honest.weighted()
    g = min_norm_subgradient(wp, np.asarray(z, dtype=float))
    return bool(np.linalg.norm(g) <= achievable.radius_rule + atol)


def boundary_point(honest_wp: WeightedProfile, center, direction, level: float,
                   t_max: float = None) -> np.ndarray:
    """Point along center + t * direction where the loss-gradient norm hits level.

    Brent root finding on the ray parameter; assumes the gradient norm is
    below the level at the center.
    """
    center = np.asarray(center, dtype=float)
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)

    def excess(t):
        return np.linalg.norm(min_norm_subgradient(honest_wp, center + t * u)) - level

    if t_max is None:
        spread = float(np.max(np.linalg.norm(honest_wp.voters - center, axis=1)))
        t_max = max(2.0 * spread, 1.0)
    lo, hi = 0.0, t_max
    f_hi = excess(hi)
    grow = 0
    while f_hi <= 0.0 and grow < 60:
        lo, hi = hi, hi * 2.0
        f_hi = excess(hi)
        grow += 1
    if f_hi <= 0.0:
        raise RuntimeError("could not bracket the achievable-set boundary")
    root = optimize.brentq(excess, lo, hi, xtol=1e-15 * max(1.0, hi), rtol=8.9e-16)
    # land on the inside of the level set
    t = root
    for _ in range(60):
        if excess(t) <= 0.0:
            break
        t = lo + (t - lo) * (1.0 - 1e-12)
    return center + t * u


# -- best response ------------------------------------------------------------


@dataclass(frozen=True)
class StrategyReport:
    """Outcome of a strategic-vote search under a chosen preference norm.

    gain_alpha is empirical (a lower bound on the worst case): it compares
    the truthful result against the best strategic vote found.
    """

    theta0: np.ndarray
    truthful_median: np.ndarray
    strategic_vote: np.ndarray
    manipulated_median: np.ndarray
    truthful_dist: float
    strategic_dist: float
    gain_alpha: float
    preference_norm: np.ndarray
    exact_capture: bool = False
    candidates: dict = field(default_factory=dict)


def _pref_dist(x, y, s):
    return float(np.linalg.norm(s @ (np.asarray(x) - np.asarray(y))))


def _median_with_vote(honest_voters: np.ndarray, vote: np.ndarray,
                      tol_grad: float = DEFAULT_TOL_GRAD, init=None) -> MedianResult:
    pts = np.vstack([honest_voters, vote[None, :]])
    return geometric_median(uniform_profile(pts), tol_grad, init=init)


def _projection_response(theta0, honest_wp, s, g_honest, radius, rng):
    """Minimize ||z - theta0||_S subject to ||grad L_honest(z)||_2 <= radius.

    Exterior penalty with continuation in mu, multi-started from the honest
    median and from boundary crossings of rays toward (and around) theta0.
    At finite voter counts the constraint set can be nonconvex, so each
    candidate is pulled back onto the boundary and polished by sliding along
    it in the direction that shrinks the skewed distance.
    """
    d = theta0.size
    ss = s @ s

    def constraint_excess(z):
        return np.linalg.norm(min_norm_subgradient(honest_wp, z)) - radius

    def penalized(z, mu):
        try:
            grad_l = loss_gradient(honest_wp, z)
            h = loss_hessian(honest_wp, z)
        except AtVoterPoint:
            return np.inf, np.zeros(d)
        n = np.linalg.norm(grad_l)
        diff = z - theta0
        dist = np.linalg.norm(s @ diff)
        val = dist + mu * max(0.0, n - radius) ** 2
        grad = ss @ diff / dist if dist > 1e-300 else np.zeros(d)
        if n > radius:
            grad = grad + mu * 2.0 * (n - radius) * (h @ grad_l) / n
        return val, grad

    def pull_inside(z):
        if constraint_excess(z) <= 0.0:
            return z
        lo, hi = 0.0, 1.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if constraint_excess(g_honest + mid * (z - g_honest)) <= 0.0:
                lo = mid
            else:
                hi = mid
        return g_honest + lo * (z - g_honest)

    def slide(z, iters=25):
        # descend the skewed distance along the constraint boundary
        dist = _pref_dist(z, theta0, s)
        step = 0.5
        for _ in range(iters):
            try:
                grad_l = loss_gradient(honest_wp, z)
                normal = loss_hessian(honest_wp, z) @ grad_l
            except AtVoterPoint:
                break
            nn = np.linalg.norm(normal)
            if nn == 0.0 or dist == 0.0:
                break
            normal /= nn
            dgrad = ss @ (z - theta0) / dist
            tangent = dgrad - (dgrad @ normal) * normal
            tn = np.linalg.norm(tangent)
            if tn <= 1e-14:
                break
            improved = False
            while step > 1e-12:
                cand = z - step * dist * tangent / tn
                try:
                    cand = boundary_point(honest_wp, g_honest, cand - g_honest, radius)
                except RuntimeError:
                    break
                cand_dist = _pref_dist(cand, theta0, s)
                if cand_dist < dist:
                    z, dist = cand, cand_dist
                    step = min(step * 1.5, 1.0)
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
        return z

    if constraint_excess(theta0) <= 0.0:
        return theta0.copy()

    starts = [g_honest]
    base_dir = theta0 - g_honest
    base_norm = np.linalg.norm(base_dir)
    directions = []
    if base_norm > 1e-300:
        directions.append(base_dir / base_norm)
        for _ in range(3):
            bump = directions[0] + 0.6 * rng.standard_normal(d)
            directions.append(bump / np.linalg.norm(bump))
    for u in directions:
        try:
            starts.append(boundary_point(honest_wp, g_honest, u, radius))
        except RuntimeError:
            continue

    best = None
    for x0 in starts:
        z = x0.copy()
        for mu in (1e2, 1e5, 1e8):
            res = optimize.minimize(
                lambda v: penalized(v, mu),
                z,
                jac=True,
                method="L-BFGS-B",
                options={"maxiter": 150, "ftol": 1e-16, "gtol": 1e-12},
            )
            z = res.x
        z = slide(pull_inside(z))
        z = pull_inside(z)
        d_here = _pref_dist(z, theta0, s)
        if best is None or d_here < best[1]:
            best = (z, d_here)
    return best[0]


def _blackbox_response(theta0, honest_voters, s, seeds, restarts, rng, scale,
                       g_honest, tol_grad):
    """Nelder-Mead simplex search over the strategic vote itself.

    Median solves are warm-started from the previous evaluation; the median
    moves only within a small neighborhood as the vote varies, so each
    evaluation takes a handful of Newton steps.
    """
    d = theta0.size
    v1 = honest_voters.shape[0] + 1
    stacked = np.vstack([honest_voters, np.zeros((1, d))])
    weights = np.full(v1, 1.0 / v1)
    warm = {"z": g_honest.copy()}
    # the winning vote is re-solved at full precision by the caller
    search_tol = max(tol_grad, 1e-8)

    def objective(vote):
        stacked[-1] = vote
        z, _, _ = _solve_gm_raw(stacked, weights, search_tol, init=warm["z"])
        warm["z"] = z
        return _pref_dist(z, theta0, s)

    starts = list(seeds)
    while len(starts) < restarts:
        base = seeds[len(starts) % len(seeds)]
        starts.append(base + 0.05 * scale * rng.standard_normal(d))
    best_vote, best_val = None, np.inf
    for x0 in starts[:restarts]:
        res = optimize.minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "maxfev": 80 * d,
                "xatol": 1e-10 * scale,
                "fatol": 1e-12,
                "adaptive": True,
            },
        )
        if res.fun < best_val:
            best_vote, best_val = res.x, res.fun
    return best_vote


def best_response(theta0, honest: VoterProfile, s=None, restarts: int = 5,
                  seed: int = 0, tol_grad: float = DEFAULT_TOL_GRAD,
                  extra_votes=None) -> StrategyReport:
    """Search for the strategic vote minimizing the skewed distance of the
    manipulated median to theta0, via two cross-checked paths.

    Path (a) projects theta0 onto the achievable set (valid strategic votes
    are fixed points of the median); path (b) runs derivative-free search
    over the vote evaluating the true median. extra_votes are evaluated as
    additional candidates and seed the search. The best candidate wins;
    ties break lexicographically on the vote.
    """
    theta0 = np.asarray(theta0, dtype=float)
    if affine_dimension(honest.voters) < 2:
        raise DegenerateDimension("best response needs an honest profile of dimension >= 2")
    s_mat = np.eye(theta0.size) if s is None else check_spd(s, "preference matrix")
    honest_wp = honest.weighted()
    v_count = honest.count
    radius = 1.0 / v_count
    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.max(np.abs(honest.voters))))

    g_honest = geometric_median(honest_wp, tol_grad).point
    truthful = _median_with_vote(honest.voters, theta0, tol_grad, init=g_honest)
    truthful_dist = _pref_dist(truthful.point, theta0, s_mat)

    candidates: dict[str, tuple[np.ndarray, np.ndarray, float]] = {}
    candidates["truthful"] = (theta0, truthful.point, truthful_dist)

    achievable = AchievableSet(honest)
    exact_capture = achievable_contains(achievable, theta0)

    extra_seeds = []
    for i, vote in enumerate(extra_votes or []):
        vote = np.asarray(vote, dtype=float)
        med = _median_with_vote(honest.voters, vote, tol_grad, init=g_honest)
        candidates[f"extra_{i}"] = (vote, med.point, _pref_dist(med.point, theta0, s_mat))
        extra_seeds.append(vote)

    rng_proj = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    proj_vote = _projection_response(theta0, honest_wp, s_mat, g_honest, radius, rng_proj)
    proj_median = _median_with_vote(honest.voters, proj_vote, tol_grad, init=g_honest)
    candidates["projection"] = (
        proj_vote,
        proj_median.point,
        _pref_dist(proj_median.point, theta0, s_mat),
    )

    nm_seeds = extra_seeds + [theta0, proj_vote, g_honest]
    nm_vote = _blackbox_response(theta0, honest.voters, s_mat, nm_seeds, restarts, rng,
                                 scale, g_honest, tol_grad)
    nm_median = _median_with_vote(honest.voters, nm_vote, tol_grad, init=g_honest)
    candidates["blackbox"] = (
        nm_vote,
        nm_median.point,
        _pref_dist(nm_median.point, theta0, s_mat),
    )

    def rank(item):
        vote, _, dist = item[1]
        return (dist, tuple(vote))

    _, (vote, median, dist) = min(candidates.items(), key=rank)
    if dist == 0.0:
        gain = np.inf if truthful_dist > 0.0 else 0.0
    else:
        gain = truthful_dist / dist - 1.0
    return StrategyReport(
        theta0=theta0,
        truthful_median=truthful.point,
        strategic_vote=vote,
        manipulated_median=median,
        truthful_dist=truthful_dist,
        strategic_dist=dist,
        gain_alpha=float(gain),
        preference_norm=s_mat,
        exact_capture=exact_capture,
        candidates={k: {"vote": v[0], "median": v[1], "dist": v[2]}
                    for k, v in candidates.items()},
    )


# -- curvature condition checker ----------------------------------------------


@dataclass(frozen=True)
class ConditionReport:
    """Sampled evaluation of the four sufficient conditions for bounded gain.

    Conditions: (1) smoothness, no voter within 2*beta of the median;
    (2) the achievable set fits in the beta ball, checked on a direction
    shell; (3) convexity of the squared gradient norm on the ball; (4) the
    sampled-Hessian skewness bound alpha.
    """

    beta: float
    smooth_ok: bool
    min_voter_distance: float
    containment_ok: bool
    min_shell_slope: float
    convexity_ok: bool
    min_curvature_eig: float
    skew_ok: bool
    alpha: float
    worst_points: dict

    @property
    def all_ok(self) -> bool:
        return self.smooth_ok and self.containment_ok and self.convexity_ok and self.skew_ok


def condition_checker(honest: VoterProfile, beta: float, seed: int = 0,
                      shell_dirs_per_dim: int = 64, ball_samples: int = 256,
                      tol_grad: float = DEFAULT_TOL_GRAD) -> ConditionReport:
    if not beta > 0.0:
        raise ValueError("beta must be positive")
    wp = honest.weighted()
    d = honest.dim
    v_count = honest.count
    rng = np.random.default_rng(seed)
    g = geometric_median(wp, tol_grad).point

    dists = np.linalg.norm(honest.voters - g, axis=1)
    min_dist = float(dists.min())
    smooth_ok = min_dist > 2.0 * beta

    worst: dict[str, np.ndarray] = {}

    def sphere(n):
        x = rng.standard_normal((n, d))
        return x / np.linalg.norm(x, axis=1, keepdims=True)

    min_slope = np.inf
    if smooth_ok:
        for u in sphere(shell_dirs_per_dim * d):
            slope = float(u @ loss_gradient(wp, g + beta * u))
            if slope < min_slope:
                min_slope = slope
                worst["containment"] = g + beta * u
        containment_ok = min_slope > 1.0 / v_count
    else:
        containment_ok = False
        min_slope = np.nan

    min_curv = np.inf
    max_skew = 0.0
    convexity_ok = skew_ok = False
    if smooth_ok:
        directions = sphere(ball_samples)
        radii = beta * rng.random(ball_samples) ** (1.0 / d)
        convexity_ok = True
        skew_ok = True
        try:
            for u, r in zip(directions, radii):
                z = g + r * u
                grad = loss_gradient(wp, z)
                hess = loss_hessian(wp, z)
                third = loss_third_deriv(wp, z)
                m = hess @ hess + third @ grad
                eig = float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])
                if eig < min_curv:
                    min_curv = eig
                    worst["curvature"] = z
                try:
                    sk = skewness(hess).value
                except NotSPD:
                    skew_ok = False
                    worst["skew"] = z
                    continue
                if sk > max_skew:
                    max_skew = sk
                    worst["skew"] = z
        except AtVoterPoint:
            # a voter inside the sampling ball contradicts condition 1
            smooth_ok = False
            convexity_ok = False
            skew_ok = False
        if min_curv <= 0.0:
            convexity_ok = False

    return ConditionReport(
        beta=beta,
        smooth_ok=smooth_ok,
        min_voter_distance=min_dist,
        containment_ok=containment_ok,
        min_shell_slope=float(min_slope),
        convexity_ok=convexity_ok,
        min_curvature_eig=float(min_curv) if np.isfinite(min_curv) else np.nan,
        skew_ok=skew_ok,
        alpha=float(max_skew),
        worst_points=worst,
    )


# -- resilience and impossibility ----------------------------------------------


def hessian_at_median(profile: VoterProfile, tol: float = DEFAULT_TOL_GRAD) -> np.ndarray:
    """Loss Hessian at the computed geometric median (finite-voter estimate
    of the limiting Hessian)."""
    if affine_dimension(profile.voters) < 2:
        raise DegenerateDimension("Hessian estimate needs a profile of dimension >= 2")
    wp = profile.weighted()
    g = geometric_median(wp, tol).point
    h = loss_hessian(wp, g)
    return check_spd(h, "Hessian at the median")


def byzantine_bound(truthful: VoterProfile, num_strategic: int,
                    tol_grad: float = DEFAULT_TOL_GRAD) -> float:
    """Radius of the ball around the truthful median that no coalition of
    num_strategic extra voters can push the geometric median out of:
    (1 - (S/T)^2)^(-1/2) * max_t ||theta_t - Gm(truthful)||.
    """
    if num_strategic < 0:
        raise ValueError("num_strategic must be nonnegative")
    t_count = truthful.count
    if num_strategic >= t_count:
        raise MajorityAttack(
            f"{num_strategic} strategic vs {t_count} truthful voters: bound is vacuous"
        )
    g = geometric_median(truthful.weighted(), tol_grad).point
    delta = float(np.max(np.linalg.norm(truthful.voters - g, axis=1)))
    rho = num_strategic / t_count
    return delta / float(np.sqrt(1.0 - rho * rho))


def hull_distance(points, z, max_iter: int = 20000) -> float:
    """Euclidean distance from z to the convex hull of the points.

    A feasibility linear program (minimal largest coordinate residual of a
    convex combination) supplies the starting weights; Frank-Wolfe steps with
    away moves then minimize the exact Euclidean residual over the simplex.
    """
    pts = np.asarray(points, dtype=float)
    z = np.asarray(z, dtype=float)
    v_count, d = pts.shape
    c = np.zeros(v_count + 1)
    c[-1] = 1.0
    a_ub = np.zeros((2 * d, v_count + 1))
    b_ub = np.zeros(2 * d)
    a_ub[:d, :v_count] = pts.T
    a_ub[:d, -1] = -1.0
    b_ub[:d] = z
    a_ub[d:, :v_count] = -pts.T
    a_ub[d:, -1] = -1.0
    b_ub[d:] = -z
    a_eq = np.zeros((1, v_count + 1))
    a_eq[0, :v_count] = 1.0
    res = optimize.linprog(
        c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
        bounds=[(0, None)] * v_count + [(0, None)], method="highs",
    )
    if not res.success:
        raise RuntimeError(f"hull distance LP failed: {res.message}")
    lam = np.maximum(res.x[:v_count], 0.0)
    lam /= lam.sum()

    scale2 = max(1.0, float(np.max(np.abs(pts))) ** 2)
    for _ in range(max_iter):
        residual = pts.T @ lam - z
        grad = pts @ residual  # gradient wrt lam of 0.5 ||residual||^2
        toward = int(np.argmin(grad))
        support = lam > 0.0
        away_candidates = np.where(support)[0]
        away = int(away_candidates[np.argmax(grad[away_candidates])])
        fw_gap = float(lam @ grad - grad[toward])
        if fw_gap <= 1e-16 * scale2:
            break
        if grad[away] - lam @ grad > fw_gap:
            # away step: shift mass off the worst support atom
            direction = lam.copy()
            direction[away] -= 1.0
            gamma_max = lam[away] / (1.0 - lam[away]) if lam[away] < 1.0 else 1.0
            dvec = pts.T @ direction
        else:
            direction = -lam.copy()
            direction[toward] += 1.0
            gamma_max = 1.0
            dvec = pts[toward] - pts.T @ lam
        denom = float(dvec @ dvec)
        if denom <= 0.0:
            break
        gamma = min(max(-float(residual @ dvec) / denom, 0.0), gamma_max)
        if gamma <= 0.0:
            break
        lam = lam + gamma * direction
        lam = np.maximum(lam, 0.0)
        lam /= lam.sum()
    return float(np.linalg.norm(pts.T @ lam - z))


@dataclass(frozen=True)
class NoShoeReport:
    """Residual skewness when the aggregate is tuned for one voter's norm."""

    incompatible: bool
    skew_value: float
    report: SkewnessReport


def no_shoe_check(s_v, s_w, tol: float = 1e-9) -> NoShoeReport:
    """Tune the limiting Hessian to voter v (H proportional to Sv^2 is the
    unique choice zeroing their skewness) and report voter w's leftover
    skewness Skew(Sw^-1 Sv^2 Sw^-1); positive iff Sv, Sw are not proportional.
    """
    a = check_spd(s_v, "first preference matrix")
    b = check_spd(s_w, "second preference matrix")
    b_inv = np.linalg.inv(b)
    m = b_inv @ a @ a @ b_inv
    rep = skewness(0.5 * (m + m.T))
    return NoShoeReport(incompatible=rep.value > tol, skew_value=rep.value, report=rep)
