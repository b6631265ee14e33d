"""Scenario generators and Monte Carlo experiments.

Experiments are embarrassingly parallel across trials: every trial derives
its own random stream from the experiment seed and its grid indices, so
results are identical regardless of worker count, and any single trial can
be replayed in isolation from the indices recorded in its row.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BracketFailure, MajorityAttack, MedianForgeError
from .linalg import spd_inv, spd_sqrt
from .profiles import VoterProfile, uniform_profile
from .solvers import geometric_median, loss_gradient, loss_hessian, min_norm_subgradient
from .strategy import (
    AchievableSet,
    achievable_contains,
    best_response,
    boundary_point,
    byzantine_bound,
    numeric_skewness,
    skewness,
)

__all__ = [
    "PreferenceDistribution",
    "ExperimentConfig",
    "Theorem1Instance",
    "ExperimentReport",
    "sample_profile",
    "build_theorem1_instance",
    "theorem1_experiment",
    "asymptotic_experiment",
    "convergence_diagnostics",
    "byzantine_experiment",
    "fit_isotropizing_skew",
]

DIST_KINDS = ("isotropic-gaussian", "diagonal-gaussian", "four-corner", "uniform-ball")

STRESS_GAMMAS = (1.5, 3.0, 10.0)


@dataclass(frozen=True)
class PreferenceDistribution:
    """I.i.d. sampler for voter preference vectors.

    kinds: isotropic-gaussian, diagonal-gaussian (per-axis sigmas),
    four-corner (the discrete (+-X, +-1) atoms, dim 2), uniform-ball.
    """

    kind: str
    dim: int
    sigmas: tuple = None
    corner_x: float = None
    radius: float = None

    def __post_init__(self):
        if self.kind not in DIST_KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.dim < 2:
            raise ValueError("experiments need dim >= 2")
        if self.kind == "diagonal-gaussian":
            if self.sigmas is None or len(self.sigmas) != self.dim:
                raise ValueError("diagonal-gaussian needs one sigma per dimension")
            if not all(s > 0 for s in self.sigmas):
                raise ValueError("sigmas must be positive")
            object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        if self.kind == "four-corner":
            if self.dim != 2:
                raise ValueError("four-corner lives in dimension 2")
            if self.corner_x is None or not self.corner_x > 0:
                raise ValueError("four-corner needs a positive corner abscissa")
        if self.kind == "uniform-ball" and (self.radius is None or not self.radius > 0):
            raise ValueError("uniform-ball needs a positive radius")

    @property
    def smooth(self) -> bool:
        """True when the density is continuous (everything but four-corner)."""
        return self.kind != "four-corner"


@dataclass(frozen=True)
class ExperimentConfig:
    distribution: PreferenceDistribution
    V_grid: tuple
    trials: int
    seed: int
    epsilon: float = 0.1
    delta: float = 0.05

    def __post_init__(self):
        grid = tuple(int(v) for v in self.V_grid)
        if len(grid) < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("V_grid must be non-empty and strictly ascending")
        object.__setattr__(self, "V_grid", grid)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class ExperimentReport:
    kind: str
    config: dict
    rows: list
    summary: dict


def _derived_seed(base: int, *key: int) -> int:
    return int(np.random.SeedSequence(base, spawn_key=tuple(key)).generate_state(1)[0])


def _corner_atoms(x: float) -> np.ndarray:
    return np.array([[-x, -1.0], [-x, 1.0], [x, -1.0], [x, 1.0]])


def sample_profile(dist: PreferenceDistribution, v_count: int, seed: int) -> VoterProfile:
    """Draw v_count i.i.d. voters (four-corner: v_count copies of each atom)."""
    if v_count < 1:
        raise ValueError("need at least one voter")
    if dist.kind == "four-corner":
        return VoterProfile(np.repeat(_corner_atoms(dist.corner_x), v_count, axis=0))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if dist.kind == "isotropic-gaussian":
        pts = rng.standard_normal((v_count, dist.dim))
    elif dist.kind == "diagonal-gaussian":
        pts = rng.standard_normal((v_count, dist.dim)) * np.asarray(dist.sigmas)
    else:  # uniform-ball
        u = rng.standard_normal((v_count, dist.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = dist.radius * rng.random(v_count) ** (1.0 / dist.dim)
        pts = u * r[:, None]
    return VoterProfile(pts)


# -- adversarial instance ------------------------------------------------------


@dataclass(frozen=True)
class Theorem1Instance:
    """Four-corner adversarial instance with its closed-form strategic vote.

    The honest profile is v_per_corner copies of each (+-X, +-1) atom. g_v is
    the truthful median of theta0 joined with the honest profile; the
    strategic vote mirrors theta0 across the tangent plane of the achievable
    ellipsoid, landing strictly inside it.
    """

    corner_x: float
    v_per_corner: int
    alpha_v: float
    g_v: np.ndarray
    theta0: np.ndarray
    strategic_vote: np.ndarray
    hessian: np.ndarray

    @property
    def honest_profile(self) -> VoterProfile:
        return sample_profile(
            PreferenceDistribution("four-corner", 2, corner_x=self.corner_x),
            self.v_per_corner,
            seed=0,
        )

    @property
    def truthful_dist(self) -> float:
        return float(np.linalg.norm(self.theta0 - self.g_v))


def build_theorem1_instance(x: float, v_per_corner: int) -> Theorem1Instance:
    """Construct the worst-case instance for corner abscissa x >= 8.

    The corner loss here is the plain sum of the four distances; its gradient
    norm along the ray c * (x^3, 1) is driven to 1/V by bisection on (0, 1].
    """
    if x < 8.0:
        raise ValueError("the construction needs corner abscissa >= 8")
    v = int(v_per_corner)
    if v < 1:
        raise ValueError("need at least one copy per corner")
    corners = uniform_profile(_corner_atoms(x))

    def grad_sum(z):
        return 4.0 * loss_gradient(corners, z)

    ray = np.array([x**3, 1.0])
    target = 1.0 / v

    def excess(c):
        return np.linalg.norm(grad_sum(c * ray)) - target

    if excess(1.0) <= 0.0:
        raise BracketFailure(
            f"gradient norm at the bracket end is below 1/V={target:.3e}; increase V"
        )
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if excess(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    alpha_v = lo
    g_v = alpha_v * ray
    grad_at_g = grad_sum(g_v)
    theta0 = g_v + grad_at_g / math.sqrt(v)
    hessian = 4.0 * loss_hessian(corners, np.zeros(2))
    hhg = hessian @ (hessian @ g_v)
    coeff = (g_v @ (hessian @ hhg)) / (hhg @ hhg)
    strategic_vote = theta0 - (2.0 / math.sqrt(v)) * coeff * hhg
    return Theorem1Instance(
        corner_x=float(x),
        v_per_corner=v,
        alpha_v=float(alpha_v),
        g_v=g_v,
        theta0=theta0,
        strategic_vote=strategic_vote,
        hessian=hessian,
    )


def _theorem1_task(args):
    x, v, tol = args
    inst = build_theorem1_instance(x, v)
    honest = inst.honest_profile
    achievable = achievable_contains(AchievableSet(honest), inst.strategic_vote)
    joined = uniform_profile(np.vstack([honest.voters, inst.strategic_vote[None, :]]))
    manipulated = geometric_median(joined, tol)
    strategic_dist = float(np.linalg.norm(manipulated.point - inst.theta0))
    truthful_check = geometric_median(
        uniform_profile(np.vstack([honest.voters, inst.theta0[None, :]])), tol
    )
    ratio = inst.truthful_dist / strategic_dist
    return {
        "X": x,
        "V": v,
        "alpha_V": inst.alpha_v,
        "truthful_dist": inst.truthful_dist,
        "strategic_dist": strategic_dist,
        "ratio": ratio,
        "gain_alpha": ratio - 1.0,
        "vote_achievable": bool(achievable),
        "truthful_median_err": float(np.linalg.norm(truthful_check.point - inst.g_v)),
        "truthful_median_bound": truthful_check.additive_bound,
        "limit_ratio": (1.0 + x * x) / (4.0 * x),
        "paper_gain_bound": (x * x - 8.0 * x + 1.0) / (8.0 * x),
    }


def theorem1_experiment(x: float, v_grid, tol: float = 1e-10,
                        parallel: int = 1) -> ExperimentReport:
    """Measure gains of the closed-form strategic vote across voter counts."""
    tasks = [(float(x), int(v), tol) for v in v_grid]
    rows = _run_tasks(_theorem1_task, tasks, parallel)
    summary = {
        "limit_ratio": (1.0 + x * x) / (4.0 * x),
        "final_ratio": rows[-1]["ratio"],
        "min_gain": min(r["gain_alpha"] for r in rows),
    }
    return ExperimentReport("theorem1", {"X": x, "V_grid": list(v_grid)}, rows, summary)


# -- asymptotic strategyproofness sweep ----------------------------------------


def _stress_gains(profile, pref, seed, trial_tol=1e-10):
    """Place stress preferences just outside the achievable set and measure
    the strategic gain at each; returns (rows, skew_closed, skew_numeric)."""
    wp = profile.weighted()
    v_count = profile.count
    g = geometric_median(wp, trial_tol).point
    hess = loss_hessian(wp, g)
    pref_inv = spd_inv(pref)
    bound_matrix = pref_inv @ hess @ pref_inv
    bound_matrix = 0.5 * (bound_matrix + bound_matrix.T)
    skew_closed = skewness(bound_matrix)
    skew_num = numeric_skewness(bound_matrix, starts=16, iters=200, seed=seed)

    # Worst-case direction: the skewness supremum is attained on the mixture
    # of extreme eigenvectors weighted by inverse square-root eigenvalues;
    # steer the boundary point so the outward pull aligns with it.
    w, q = np.linalg.eigh(bound_matrix)
    x_star = q[:, 0] / math.sqrt(w[0]) + q[:, -1] / math.sqrt(w[-1])
    pull_dir = np.linalg.solve(hess, pref_inv @ x_star)
    z_b = boundary_point(wp, g, pull_dir, 1.0 / v_count)
    outward = v_count * loss_gradient(wp, z_b)
    outward /= np.linalg.norm(outward)

    gains = []
    for gamma in STRESS_GAMMAS:
        theta0 = z_b + (gamma / v_count) * outward
        rep = best_response(theta0, profile, s=pref, seed=seed)
        gains.append(
            {
                "gamma": gamma,
                "gain_alpha": rep.gain_alpha,
                "truthful_dist": rep.truthful_dist,
                "strategic_dist": rep.strategic_dist,
            }
        )
    return gains, skew_closed.value, skew_num


def _asymptotic_task(args):
    (kind, dim, sigmas, corner_x, radius, v_count, trial, seed,
     pref_flat, tol) = args
    dist = PreferenceDistribution(kind, dim, sigmas=sigmas, corner_x=corner_x,
                                  radius=radius)
    trial_seed = _derived_seed(seed, 1, v_count, trial)
    row = {"V": v_count, "trial": trial, "seed": trial_seed}
    try:
        profile = sample_profile(dist, v_count, trial_seed)
        pref = np.array(pref_flat, dtype=float).reshape(dim, dim)
        gains, skew_closed, skew_num = _stress_gains(profile, pref, trial_seed, tol)
        row.update(
            {
                "skew_closed": skew_closed,
                "skew_numeric": skew_num,
                "gains": gains,
                "max_gain": max(g["gain_alpha"] for g in gains),
                "error": None,
            }
        )
    except (MedianForgeError, RuntimeError) as exc:  # recorded, never aborts the sweep
        row.update({"skew_closed": None, "skew_numeric": None, "gains": [],
                    "max_gain": None, "error": f"{type(exc).__name__}: {exc}"})
    return row


def asymptotic_experiment(config: ExperimentConfig, s=None, median_skew=None,
                          tol: float = 1e-10, parallel: int = 1) -> ExperimentReport:
    """Boundary-stress manipulation sweep against the skewness bound.

    With a median_skew matrix the aggregate is the skewed geometric median;
    the sweep then runs in the transformed space where that aggregate is the
    plain median, with the preference norm mapped accordingly (gains are
    unchanged by the mapping, and the bound matrix is orthogonally similar).
    """
    dist = config.distribution
    if dist.smooth and dist.dim < 5:
        raise ValueError("asymptotic sweeps need dim >= 5 under a smooth density")
    dim = dist.dim
    s_mat = np.eye(dim) if s is None else np.asarray(s, dtype=float)
    if median_skew is not None:
        sk = np.asarray(median_skew, dtype=float)
        sk_inv = spd_inv(sk)
        pref = spd_sqrt(sk_inv @ s_mat @ s_mat @ sk_inv)
    else:
        sk = None
        pref = s_mat

    tasks = []
    for v_count in config.V_grid:
        for trial in range(config.trials):
            tasks.append(
                (
                    dist.kind,
                    dim,
                    dist.sigmas,
                    dist.corner_x,
                    dist.radius,
                    int(v_count),
                    trial,
                    config.seed,
                    tuple(pref.ravel()),
                    tol,
                )
            )
    rows = _run_tasks(_asymptotic_task, tasks, parallel)
    if median_skew is not None:
        for row in rows:
            row["median_skew"] = True

    summary = {}
    for v_count in config.V_grid:
        sub = [r for r in rows if r["V"] == v_count and r["error"] is None]
        if not sub:
            summary[str(v_count)] = {"completed": 0}
            continue
        gains = np.array([r["max_gain"] for r in sub])
        skews = np.array([r["skew_closed"] for r in sub])
        within = gains <= skews + config.epsilon
        summary[str(v_count)] = {
            "completed": len(sub),
            "max_gain": float(gains.max()),
            "gain_quantiles": {
                "q50": float(np.quantile(gains, 0.5)),
                "q90": float(np.quantile(gains, 0.9)),
                "q100": float(gains.max()),
            },
            "mean_skew_closed": float(skews.mean()),
            "fraction_within_bound": float(within.mean()),
        }
    cfg = {
        "distribution": dist.kind,
        "dim": dim,
        "V_grid": list(config.V_grid),
        "trials": config.trials,
        "seed": config.seed,
        "epsilon": config.epsilon,
        "delta": config.delta,
        "median_skew": None if sk is None else sk.tolist(),
        "preference": s_mat.tolist(),
    }
    return ExperimentReport("asymptotic", cfg, rows, summary)


# -- finite-voter convergence diagnostics ---------------------------------------


def _convergence_task(args):
    kind, dim, sigmas, corner_x, radius, v_count, v_ref, trial, seed, tol = args
    dist = PreferenceDistribution(kind, dim, sigmas=sigmas, corner_x=corner_x,
                                  radius=radius)
    trial_seed = _derived_seed(seed, 2, v_count, trial)
    ref_seed = _derived_seed(seed, 2, 0, trial)  # shared across the V grid
    profile = sample_profile(dist, v_count, trial_seed)
    reference = sample_profile(dist, v_ref, ref_seed)
    g_v = geometric_median(profile.weighted(), tol).point
    g_ref = geometric_median(reference.weighted(), tol).point
    h_v = loss_hessian(profile.weighted(), g_v)
    h_ref = loss_hessian(reference.weighted(), g_ref)
    return {
        "V": v_count,
        "trial": trial,
        "seed": trial_seed,
        "ref_seed": ref_seed,
        "median_err": float(np.linalg.norm(g_v - g_ref)),
        "hessian_err": float(np.max(np.abs(h_v - h_ref))),
    }


def convergence_diagnostics(config: ExperimentConfig, tol: float = 1e-10,
                            parallel: int = 1) -> ExperimentReport:
    """Decay of median and Hessian estimation error against a 10x reference."""
    dist = config.distribution
    if dist.smooth and dist.dim < 5:
        raise ValueError("convergence diagnostics need dim >= 5 under a smooth density")
    v_ref = 10 * max(config.V_grid)
    tasks = [
        (dist.kind, dist.dim, dist.sigmas, dist.corner_x, dist.radius,
         int(v), v_ref, t, config.seed, tol)
        for v in config.V_grid
        for t in range(config.trials)
    ]
    rows = _run_tasks(_convergence_task, tasks, parallel)

    med_errs, hess_errs = [], []
    for v in config.V_grid:
        sub = [r for r in rows if r["V"] == v]
        med_errs.append(float(np.median([r["median_err"] for r in sub])))
        hess_errs.append(float(np.median([r["hessian_err"] for r in sub])))
    logs_v = np.log(np.asarray(config.V_grid, dtype=float))
    med_slope = float(np.polyfit(logs_v, np.log(med_errs), 1)[0])
    hess_slope = float(np.polyfit(logs_v, np.log(hess_errs), 1)[0])
    summary = {
        "V_ref": v_ref,
        "median_errors": med_errs,
        "hessian_errors": hess_errs,
        "median_error_slope": med_slope,
        "hessian_error_slope": hess_slope,
    }
    cfg = {
        "distribution": dist.kind,
        "dim": dist.dim,
        "V_grid": list(config.V_grid),
        "trials": config.trials,
        "seed": config.seed,
    }
    return ExperimentReport("convergence", cfg, rows, summary)


# -- byzantine attack trials -----------------------------------------------------


ATTACK_KINDS = ("radial-escape", "clustered", "mirrored")


def _byzantine_task(args):
    kind, dim, sigmas, corner_x, radius, v_t, v_s, trial, seed, tol = args
    dist = PreferenceDistribution(kind, dim, sigmas=sigmas, corner_x=corner_x,
                                  radius=radius)
    trial_seed = _derived_seed(seed, 3, v_t, v_s, trial)
    rng = np.random.default_rng(np.random.SeedSequence(trial_seed))
    truthful = sample_profile(dist, v_t, _derived_seed(trial_seed, 0))
    g_t = geometric_median(truthful.weighted(), tol).point
    delta = float(np.max(np.linalg.norm(truthful.voters - g_t, axis=1)))
    bound = byzantine_bound(truthful, v_s, tol)

    attack = ATTACK_KINDS[trial % len(ATTACK_KINDS)]
    if v_s == 0:
        strategic = np.empty((0, dim))
    elif attack == "radial-escape":
        u = rng.standard_normal(dim)
        u /= np.linalg.norm(u)
        strategic = np.tile(g_t + 1e3 * max(delta, 1e-9) * u, (v_s, 1))
    elif attack == "clustered":
        u = rng.standard_normal(dim)
        u /= np.linalg.norm(u)
        far = g_t + rng.uniform(10.0, 100.0) * max(delta, 1e-9) * u
        strategic = far + 0.1 * delta * rng.standard_normal((v_s, dim))
    else:  # mirrored
        picks = rng.integers(0, v_t, size=v_s)
        strategic = 2.0 * g_t - truthful.voters[picks]

    combined = uniform_profile(np.vstack([truthful.voters, strategic]))
    g_all = geometric_median(combined, tol).point
    displacement = float(np.linalg.norm(g_all - g_t))
    return {
        "V_T": v_t,
        "V_S": v_s,
        "trial": trial,
        "seed": trial_seed,
        "attack": attack if v_s > 0 else "none",
        "delta": delta,
        "bound": bound,
        "displacement": displacement,
        "within_bound": bool(displacement <= bound + 1e-9),
    }


def byzantine_experiment(truthful_dist: PreferenceDistribution, v_t: int, v_s: int,
                         trials: int, seed: int, tol: float = 1e-10,
                         parallel: int = 1) -> ExperimentReport:
    """Adversarial placement trials against the resilience ball."""
    if v_s >= v_t:
        raise MajorityAttack("strategic voters must be a strict minority")
    d = truthful_dist
    tasks = [
        (d.kind, d.dim, d.sigmas, d.corner_x, d.radius, int(v_t), int(v_s), t,
         seed, tol)
        for t in range(trials)
    ]
    rows = _run_tasks(_byzantine_task, tasks, parallel)
    displacements = np.array([r["displacement"] for r in rows])
    summary = {
        "trials": trials,
        "all_within_bound": bool(all(r["within_bound"] for r in rows)),
        "max_displacement": float(displacements.max()),
        "max_bound": float(max(r["bound"] for r in rows)),
    }
    cfg = {
        "distribution": d.kind,
        "dim": d.dim,
        "V_T": v_t,
        "V_S": v_s,
        "trials": trials,
        "seed": seed,
    }
    return ExperimentReport("byzantine", cfg, rows, summary)


# -- diagnostic search for an isotropizing skew ----------------------------------


def fit_isotropizing_skew(dist: PreferenceDistribution, samples: int = 2000,
                          seed: int = 0, tol: float = 1e-8) -> np.ndarray:
    """Diagonal skewing matrix that approximately isotropizes the skewed-loss
    Hessian of the distribution, found by direct search on a pilot sample.

    Diagnostic only; choosing an optimal skew in general is out of scope.
    """
    from scipy import optimize

    profile = sample_profile(dist, samples, seed)
    d = dist.dim

    def objective(log_s):
        scale = np.exp(log_s - log_s.mean())
        scaled = uniform_profile(profile.voters * scale)
        g = geometric_median(scaled, tol).point
        h_inner = loss_hessian(scaled, g)
        h_skewed = (scale[:, None] * h_inner) * scale[None, :]
        return skewness(h_skewed).value

    res = optimize.minimize(
        objective,
        np.zeros(d),
        method="Nelder-Mead",
        options={"maxfev": 400, "xatol": 1e-6, "fatol": 1e-10, "adaptive": True},
    )
    scale = np.exp(res.x - res.x.mean())
    return np.diag(scale)


# -- shared task runner -----------------------------------------------------------


def _run_tasks(fn, tasks, parallel):
    if parallel is None or parallel <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    workers = min(parallel, len(tasks))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=1))
