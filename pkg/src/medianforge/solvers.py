"""Aggregation operators: average, coordinate-wise median, geometric median.

The geometric-median solver runs a Vardi-Zhang-corrected Weiszfeld iteration
(safe at voter-point collisions) and hands over to damped Newton once the
gradient is small, so the terminal gradient norm can be driven to ~1e-10 and
converted into an additive distance certificate via the local Hessian.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AtVoterPoint, SolverFailure, ZeroVector
from .linalg import check_spd
from .profiles import WeightedProfile, affine_dimension

__all__ = [
    "MedianResult",
    "average",
    "coordinatewise_median",
    "loss_eval",
    "loss_gradient",
    "loss_hessian",
    "loss_third_deriv",
    "min_norm_subgradient",
    "geometric_median",
    "skewed_geometric_median",
    "skewed_loss_eval",
    "skewed_loss_gradient",
    "skewed_loss_hessian",
]

VOTER_POINT_RTOL = 1e-14
DEFAULT_TOL_GRAD = 1e-10
MAX_ITERATIONS = 20000


@dataclass(frozen=True)
class MedianResult:
    """Aggregate point plus its optimality certificate.

    additive_bound certifies ||point - exact minimizer||_2 <= bound whenever
    the local Hessian is computable and positive definite; +inf otherwise.
    For skewed solves, grad_norm and additive_bound live in the skewed
    geometry of the solve.
    """

    point: np.ndarray
    loss: float
    grad_norm: float
    additive_bound: float
    iterations: int
    degenerate: bool = False


def _profile_scale(voters: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(voters))))


def _scale_of(profile: WeightedProfile) -> float:
    s = getattr(profile, "scale", None)
    return s if s is not None else _profile_scale(profile.voters)


def average(profile: WeightedProfile) -> np.ndarray:
    """Weighted arithmetic mean."""
    return profile.weights @ profile.voters


def coordinatewise_median(profile: WeightedProfile) -> np.ndarray:
    """Per-coordinate weighted lower median.

    The lower median is the smallest value whose cumulative weight reaches
    1/2; for an even number of equal weights this picks the lower of the two
    middle values rather than their midpoint.
    """
    voters, weights = profile.voters, profile.weights
    out = np.empty(profile.dim)
    for j in range(profile.dim):
        order = np.argsort(voters[:, j], kind="stable")
        cum = np.cumsum(weights[order])
        idx = int(np.searchsorted(cum, 0.5 - 1e-12))
        out[j] = voters[order[idx], j]
    return out


def _coincident_mask(dists: np.ndarray, scale: float) -> np.ndarray:
    return dists <= VOTER_POINT_RTOL * scale


def _row_dists(voters, z):
    diffs = z - voters
    return diffs, np.sqrt(np.einsum("ij,ij->i", diffs, diffs))


def _grad_raw(voters, weights, scale, z):
    diffs, dists = _row_dists(voters, z)
    if dists.min() <= VOTER_POINT_RTOL * scale:
        raise AtVoterPoint("evaluation point coincides with a voter's point")
    return (weights / dists) @ diffs


def _hessian_raw(voters, weights, scale, z):
    diffs, dists = _row_dists(voters, z)
    if dists.min() <= VOTER_POINT_RTOL * scale:
        raise AtVoterPoint("evaluation point coincides with a voter's point")
    c = weights / dists
    h = np.eye(voters.shape[1]) * c.sum()
    h -= diffs.T @ (diffs * (c / dists**2)[:, None])
    return h


def _min_norm_subgradient_raw(voters, weights, scale, z):
    diffs, dists = _row_dists(voters, z)
    if dists.min() > VOTER_POINT_RTOL * scale:
        return (weights / dists) @ diffs
    mask = _coincident_mask(dists, scale)
    w0 = float(weights[mask].sum())
    rest = ~mask
    if not np.any(rest):
        return np.zeros(voters.shape[1])
    g = (weights[rest] / dists[rest]) @ diffs[rest]
    gn = np.linalg.norm(g)
    if gn <= w0:
        return np.zeros(voters.shape[1])
    return g * ((gn - w0) / gn)


def loss_eval(profile: WeightedProfile, z) -> float:
    """Weighted average of Euclidean distances to the voters."""
    z = np.asarray(z, dtype=float)
    return float(profile.weights @ np.linalg.norm(z - profile.voters, axis=1))


def loss_gradient(profile: WeightedProfile, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return _grad_raw(profile.voters, profile.weights, _scale_of(profile), z)


def loss_hessian(profile: WeightedProfile, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return _hessian_raw(profile.voters, profile.weights, _scale_of(profile), z)


def loss_third_deriv(profile: WeightedProfile, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    diffs = z - profile.voters
    dists = np.linalg.norm(diffs, axis=1)
    if np.any(_coincident_mask(dists, _scale_of(profile))):
        raise AtVoterPoint("evaluation point coincides with a voter's point")
    u = diffs / dists[:, None]
    c = profile.weights / dists**2
    t = 3.0 * np.einsum("v,vi,vj,vk->ijk", c, u, u, u)
    cu = (c[:, None] * u).sum(axis=0)
    eye = np.eye(profile.dim)
    t -= np.einsum("ij,k->ijk", eye, cu)
    t -= np.einsum("ik,j->ijk", eye, cu)
    t -= np.einsum("jk,i->ijk", eye, cu)
    return t


def min_norm_subgradient(profile: WeightedProfile, z) -> np.ndarray:
    """Minimum-norm element of the loss subdifferential.

    Away from voter points this is the gradient. On a voter point, the
    coincident voters contribute a ball of radius equal to their weight, and
    the minimum-norm selection shrinks the remaining pull accordingly.
    """
    z = np.asarray(z, dtype=float)
    return _min_norm_subgradient_raw(
        profile.voters, profile.weights, _scale_of(profile), z
    )


def _weiszfeld_step(voters, weights, y, scale):
    diffs = voters - y
    dists = np.linalg.norm(diffs, axis=1)
    mask = dists <= VOTER_POINT_RTOL * scale
    if not np.any(mask):
        c = weights / dists
        return (c @ voters) / c.sum()
    # Vardi-Zhang correction: treat the collided point as an anchor and move
    # only if the residual pull of the other voters exceeds its weight.
    w0 = float(weights[mask].sum())
    rest = ~mask
    if not np.any(rest):
        return y
    c = weights[rest] / dists[rest]
    pull = c @ diffs[rest]
    pull_norm = np.linalg.norm(pull)
    if pull_norm <= w0:
        return y
    t = (c @ voters[rest]) / c.sum()
    gamma = min(1.0, w0 / pull_norm)
    return (1.0 - gamma) * t + gamma * y


def _certify(profile: WeightedProfile, z, grad_norm, tol_grad, iterations, degenerate,
             hessian_fn) -> MedianResult:
    try:
        h = hessian_fn(z)
        lam_min = float(np.linalg.eigvalsh(h)[0])
        bound = tol_grad / lam_min if lam_min > 0.0 else np.inf
    except (AtVoterPoint, ZeroVector, np.linalg.LinAlgError):
        bound = np.inf
    return MedianResult(
        point=z,
        loss=loss_eval(profile, z),
        grad_norm=float(grad_norm),
        additive_bound=float(bound),
        iterations=iterations,
        degenerate=degenerate,
    )


def _minimize_distance_sum(voters, scale, init, step, subgrad, hess, tol_grad):
    """Weiszfeld-style iterations with Newton refinement.

    Returns (point, grad_norm, iterations). `step` is the fixed-point update,
    `subgrad` the minimum-norm subgradient, `hess` the loss Hessian.
    """
    z = init.astype(float).copy()
    newton_from = max(tol_grad, 1e-3)
    iterations = 0
    g = subgrad(z)
    gn = np.linalg.norm(g)

    def snap_to_voter(y):
        # The minimizer may sit exactly on a voter point, which smooth
        # iterations only approach asymptotically; test the nearest one.
        j = int(np.argmin(np.linalg.norm(voters - y, axis=1)))
        candidate = voters[j]
        gn_c = np.linalg.norm(subgrad(candidate))
        return (candidate.copy(), gn_c) if gn_c <= tol_grad else None

    while gn > tol_grad and iterations < MAX_ITERATIONS:
        if np.min(np.linalg.norm(voters - z, axis=1)) <= 1e-5 * scale:
            snapped = snap_to_voter(z)
            if snapped is not None:
                z, gn = snapped
                iterations += 1
                break
        if gn <= newton_from:
            z_new = None
            try:
                h = hess(z)
                direction = np.linalg.solve(h, g)
                # Backtrack on the gradient norm; quadratic tail convergence.
                t = 1.0
                for _ in range(40):
                    cand = z - t * direction
                    gc = subgrad(cand)
                    if np.linalg.norm(gc) < gn:
                        z_new, g, gn = cand, gc, np.linalg.norm(gc)
                        break
                    t *= 0.5
            except (AtVoterPoint, ZeroVector, np.linalg.LinAlgError):
                z_new = None
            if z_new is not None:
                z = z_new
                iterations += 1
                continue
        z = step(z)
        g = subgrad(z)
        gn = np.linalg.norm(g)
        iterations += 1
    if gn > tol_grad:
        raise SolverFailure(
            f"geometric-median solve stalled at gradient norm {gn:.3e} (tol {tol_grad:.1e})"
        )
    return z, gn, iterations


def _solve_gm_raw(voters, weights, tol_grad, init=None):
    """Core solve on raw arrays; returns (point, grad_norm, iterations)."""
    scale = _profile_scale(voters)
    if init is None:
        init = weights @ voters
    return _minimize_distance_sum(
        voters,
        scale,
        np.asarray(init, dtype=float),
        lambda p: _weiszfeld_step(voters, weights, p, scale),
        lambda p: _min_norm_subgradient_raw(voters, weights, scale, p),
        lambda p: _hessian_raw(voters, weights, scale, p),
        tol_grad,
    )


def geometric_median(profile: WeightedProfile, tol_grad: float = DEFAULT_TOL_GRAD,
                     init=None) -> MedianResult:
    """Geometric median with an additive-error certificate.

    Starts from the coordinate-wise median (or `init` when given) and stops
    once the minimum-norm subgradient has Euclidean norm <= tol_grad. If the
    profile spans an affine space of dimension <= 1 the minimizer may be
    non-unique; a valid minimizer is still returned, flagged degenerate.
    """
    if not tol_grad > 0.0:
        raise ValueError("tol_grad must be positive")
    voters, weights = profile.voters, profile.weights
    degenerate = affine_dimension(voters) <= 1
    if init is None:
        init = coordinatewise_median(profile)
    z, gn, iterations = _solve_gm_raw(voters, weights, tol_grad, init)
    return _certify(profile, z, gn, tol_grad, iterations, degenerate,
                    lambda p: loss_hessian(profile, p))


# -- skewed geometry ---------------------------------------------------------


def skewed_loss_eval(profile: WeightedProfile, sigma: np.ndarray, z) -> float:
    z = np.asarray(z, dtype=float)
    diffs = (z - profile.voters) @ sigma.T
    return float(profile.weights @ np.linalg.norm(diffs, axis=1))


def skewed_loss_gradient(profile: WeightedProfile, sigma: np.ndarray, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    sdiffs = (z - profile.voters) @ sigma.T
    dists = np.linalg.norm(sdiffs, axis=1)
    if np.any(dists <= VOTER_POINT_RTOL * _scale_of(profile)):
        raise AtVoterPoint("evaluation point coincides with a voter's point")
    return sigma.T @ ((profile.weights / dists) @ sdiffs)


def skewed_loss_hessian(profile: WeightedProfile, sigma: np.ndarray, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    sdiffs = (z - profile.voters) @ sigma.T
    dists = np.linalg.norm(sdiffs, axis=1)
    if np.any(dists <= VOTER_POINT_RTOL * _scale_of(profile)):
        raise AtVoterPoint("evaluation point coincides with a voter's point")
    c = profile.weights / dists
    inner = np.eye(profile.dim) * c.sum()
    inner -= sdiffs.T @ (sdiffs * (c / dists**2)[:, None])
    return sigma.T @ inner @ sigma


def _skewed_min_norm_subgradient(profile, sigma, z):
    z = np.asarray(z, dtype=float)
    sdiffs = (z - profile.voters) @ sigma.T
    dists = np.linalg.norm(sdiffs, axis=1)
    mask = dists <= VOTER_POINT_RTOL * _scale_of(profile)
    if not np.any(mask):
        return sigma.T @ ((profile.weights / dists) @ sdiffs)
    # Work in the transformed space, where each voter exerts a Euclidean
    # unit force: the subdifferential there is a ball of radius w0.
    w0 = float(profile.weights[mask].sum())
    rest = ~mask
    if not np.any(rest):
        return np.zeros(profile.dim)
    g = (profile.weights[rest] / dists[rest]) @ sdiffs[rest]
    gn = np.linalg.norm(g)
    if gn <= w0:
        return np.zeros(profile.dim)
    return sigma.T @ (g * ((gn - w0) / gn))


def skewed_geometric_median(
    profile: WeightedProfile, sigma, tol_grad: float = DEFAULT_TOL_GRAD
) -> MedianResult:
    """Minimizer of the weighted average of skewed distances ||z - voter||_S.

    Solved directly in the original coordinates (skewed Weiszfeld step plus
    Newton on the skewed loss); mathematically equals applying the inverse
    skew to the plain geometric median of the skewed profile.
    """
    if not tol_grad > 0.0:
        raise ValueError("tol_grad must be positive")
    s = check_spd(sigma, "skew matrix")
    if s.shape[0] != profile.dim:
        raise ValueError("skew matrix dimension does not match the profile")
    voters, weights = profile.voters, profile.weights
    degenerate = affine_dimension(voters) <= 1
    scale = _profile_scale(voters)

    # With skewed distances the surrogate minimizer is still a weighted
    # average of the voters, so the Weiszfeld step reuses the plain update
    # with skewed distances in the denominators.
    def step(y):
        sdiffs = (voters - y) @ s.T
        dists = np.linalg.norm(sdiffs, axis=1)
        mask = dists <= VOTER_POINT_RTOL * scale
        if not np.any(mask):
            c = weights / dists
            return (c @ voters) / c.sum()
        w0 = float(weights[mask].sum())
        rest = ~mask
        if not np.any(rest):
            return y
        c = weights[rest] / dists[rest]
        pull = s.T @ (c @ sdiffs[rest])
        if np.linalg.norm(pull) <= w0:
            return y
        t = (c @ voters[rest]) / c.sum()
        gamma = min(1.0, w0 / np.linalg.norm(pull))
        return (1.0 - gamma) * t + gamma * y

    hess = lambda p: skewed_loss_hessian(profile, s, p)
    z, gn, iterations = _minimize_distance_sum(
        voters,
        scale,
        coordinatewise_median(profile),
        step,
        lambda p: _skewed_min_norm_subgradient(profile, s, p),
        hess,
        tol_grad,
    )

    result = _certify(profile, z, gn, tol_grad, iterations, degenerate, hess)
    return MedianResult(
        point=result.point,
        loss=skewed_loss_eval(profile, s, z),
        grad_norm=result.grad_norm,
        additive_bound=result.additive_bound,
        iterations=result.iterations,
        degenerate=result.degenerate,
    )
