"""Control problem definitions and standing-assumption validation.

A problem bundles the coefficients (r, b, sigma), the entropy weight, the
discount rate, and the analytic constants (growth record, ellipticity bound)
that gate the solver's guarantees.  Coefficient callables are vectorized:
``x`` has shape ``(..., d)``, ``u`` has shape ``(..., L)``, and outputs
broadcast (reward ``(...)``, drift ``(..., d)``, vol ``(..., d, m)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .expr import parse_coefficient_expr

__all__ = [
    "GrowthRecord",
    "ControlProblem",
    "SmallnessReport",
    "ValidationReport",
    "ProblemValidationError",
    "builtin_problem",
    "expression_problem",
    "problem_from_dict",
    "validate_problem",
    "coefficient_tables",
]


@dataclass(frozen=True)
class GrowthRecord:
    """Constants of the growth bounds |r| <= A1(1+|x|^N), |b| <= A2(1+|x|),
    |sigma| <= A3(1+|x|), in the entrywise max norm."""

    N: float
    A1: float
    A2: float
    A3: float


@dataclass(frozen=True)
class SmallnessReport:
    """Distance of the controlled diffusion from an action-independent
    baseline: eps0 in sup norm, eps1 in the alpha-Hoelder seminorm."""

    eps0: float
    eps1: float
    cond3_satisfied: dict
    exact: bool  # True when constructed analytically by a builtin family

    def all_satisfied(self):
        return all(self.cond3_satisfied.values())


@dataclass
class ControlProblem:
    state_dim: int
    action_dim: int
    reward: object  # callable (x, u) -> (...)
    drift: object  # callable (x, u) -> (..., d)
    vol: object  # callable (x, u) -> (..., d, m)
    lam: float
    rho: float
    growth: GrowthRecord
    ellipticity_c0: float
    action_dependent_vol: bool
    sigma0: object = None  # callable x -> (..., d, d), optional baseline
    smallness_exact: tuple = None  # (eps0, eps1) when known by construction
    name: str = "custom"

    def __post_init__(self):
        if self.state_dim not in (1, 2):
            raise ValueError("state_dim must be 1 or 2")
        if self.action_dim not in (1, 2):
            raise ValueError("action_dim must be 1 or 2")
        if self.lam <= 0:
            raise ValueError("entropy weight lambda must be positive")
        if self.rho <= 0:
            raise ValueError("discount rate rho must be positive")

    def sigma_matrix(self, x, u):
        """Diffusion matrix Sigma = sigma sigma^T, shape (..., d, d)."""
        s = np.asarray(self.vol(x, u), dtype=float)
        return np.einsum("...im,...jm->...ij", s, s)

    def is_bounded(self):
        """Bounded-coefficient regime (growth exponent N == 0)."""
        return self.growth.N == 0

    def discount_threshold(self):
        """Largeness condition on rho for comparison with unbounded
        coefficients: 4(N+1)(A2 + N*A3)."""
        g = self.growth
        return 4.0 * (g.N + 1.0) * (g.A2 + g.N * g.A3)

    def growth_barrier(self, x):
        """Polynomial barrier 2*A1/rho*(1+|x|^2)^(N/2) bounding the value."""
        x = np.asarray(x, dtype=float)
        sq = np.sum(x**2, axis=-1)
        return 2.0 * self.growth.A1 / self.rho * (1.0 + sq) ** (self.growth.N / 2.0)


def _holder_bound(lip, sup, alpha):
    """Interpolation bound [f]_{0,alpha} <= Lip^alpha * (2 sup)^(1-alpha)."""
    return lip**alpha * (2.0 * sup) ** (1.0 - alpha)


def _sin_seminorm(omega, alpha):
    """sup_{0<delta<=1} 2|sin(omega*delta/2)|/delta^alpha, by dense scan."""
    delta = np.linspace(1e-6, 1.0, 20001)
    return float(np.max(2.0 * np.abs(np.sin(omega * delta / 2.0)) / delta**alpha))


def _rough_profile(depth, decay=0.5):
    """Multiscale bounded profile sum_k 2^(-decay*k) sin(2^k x), normalized
    to sup norm <= 1.  depth=0 reduces to sin(x)."""
    amps = np.array([2.0 ** (-decay * k) for k in range(depth + 1)])
    scale = float(np.sum(amps))

    def profile(x):
        out = np.zeros_like(np.asarray(x, dtype=float))
        for k, a in enumerate(amps):
            out += a * np.sin((2.0**k) * x)
        return out / scale

    lip = float(np.sum(amps * 2.0 ** np.arange(depth + 1))) / scale
    return profile, lip


def _bounded_trig(params):
    d = int(params.get("d", 1))
    L = int(params.get("L", 1))
    lam = float(params.get("lambda", params.get("lam", 1.0)))
    rho = float(params.get("rho", 10.0))
    depth = int(params.get("depth", 0))
    if depth < 0:
        raise ValueError("depth must be >= 0")
    decay = float(params.get("decay", 0.5))
    profile, lip = _rough_profile(depth, decay)

    def reward(x, u):
        base = profile(x[..., 0])
        if d == 2:
            base = base * np.cos(x[..., 1])
        act = u[..., 0] if L == 1 else 0.5 * (u[..., 0] + u[..., 1])
        return base * act

    def drift(x, u):
        comps = []
        for i in range(d):
            act = u[..., min(i, L - 1)]
            comps.append(np.cos(x[..., i]) + 0.5 * act)
        return np.stack(np.broadcast_arrays(*comps), axis=-1)

    sq2 = math.sqrt(2.0)

    def vol(x, u):
        shape = np.broadcast_shapes(x[..., 0].shape, u[..., 0].shape)
        out = np.zeros(shape + (d, d))
        for i in range(d):
            out[..., i, i] = sq2
        return out

    alpha = 0.5
    r_norm = 1.0 + _holder_bound(lip, 1.0, alpha)
    b_norm = 1.5 + _holder_bound(1.0, 1.5, alpha)
    c0 = max(1.0, r_norm, b_norm, 2.0)  # Sigma = 2I: norm 2, min eig 2 >= 1/c0
    return ControlProblem(
        state_dim=d,
        action_dim=L,
        reward=reward,
        drift=drift,
        vol=vol,
        lam=lam,
        rho=rho,
        growth=GrowthRecord(N=0, A1=1.0, A2=1.5, A3=sq2),
        ellipticity_c0=c0,
        action_dependent_vol=False,
        sigma0=lambda x: np.broadcast_to(
            2.0 * np.eye(d), np.asarray(x).shape[:-1] + (d, d)
        ),
        smallness_exact=(0.0, 0.0),
        name=f"bounded-trig(d={d},L={L},depth={depth})",
    )


def _small_diffusion(params):
    eps0 = float(params.get("eps0", 0.05))
    if eps0 < 0:
        raise ValueError("eps0 must be >= 0")
    if eps0 >= 1.0:
        raise ValueError("eps0 must be < 1 to keep the diffusion elliptic")
    omega = float(params.get("omega", 9.0))
    lam = float(params.get("lambda", params.get("lam", 1.0)))
    rho = float(params.get("rho", 16.0))
    depth = int(params.get("depth", 5))
    sigma0_level = 2.0
    profile, lip = _rough_profile(depth)

    def reward(x, u):
        return profile(x[..., 0]) * u[..., 0]

    def drift(x, u):
        return (np.cos(x[..., 0]) * 0.5 * (1.0 + u[..., 0]))[..., None]

    def sigma_scalar(x, u):
        return sigma0_level + eps0 * u[..., 0] * np.sin(omega * x[..., 0])

    def vol(x, u):
        return np.sqrt(sigma_scalar(x, u))[..., None, None]

    alpha = 0.5
    eps1 = eps0 * _sin_seminorm(omega, alpha)
    r_norm = 1.0 + _holder_bound(lip, 1.0, alpha)
    b_norm = 1.0 + _holder_bound(1.0, 1.0, alpha)
    s_norm = (sigma0_level + eps0) + eps0 * _sin_seminorm(omega, alpha)
    c0 = max(1.0, 1.0 / (sigma0_level - eps0), r_norm, b_norm, s_norm)
    return ControlProblem(
        state_dim=1,
        action_dim=1,
        reward=reward,
        drift=drift,
        vol=vol,
        lam=lam,
        rho=rho,
        growth=GrowthRecord(N=0, A1=1.0, A2=1.0, A3=math.sqrt(sigma0_level + eps0)),
        ellipticity_c0=c0,
        action_dependent_vol=eps0 > 0,
        sigma0=lambda x: np.full(np.asarray(x).shape[:-1] + (1, 1), sigma0_level),
        smallness_exact=(eps0, eps1),
        name=f"small-diffusion(eps0={eps0},omega={omega},depth={depth})",
    )


def _linear_growth(params):
    N = int(params.get("N", 2))
    if N < 1 or N % 2 != 0 and N != 1:
        # odd N>1 would need |x|^N which is not smooth; keep even powers
        if N != 1:
            raise ValueError("N must be 1 or an even integer")
    A1 = float(params.get("A1", 1.0))
    A2 = float(params.get("A2", 1.0))
    A3 = float(params.get("A3", 1.0))
    lam = float(params.get("lambda", params.get("lam", 1.0)))
    rho = float(params.get("rho", 72.0))

    def reward(x, u):
        return A1 * (np.abs(x[..., 0]) ** N + u[..., 0])

    def drift(x, u):
        return (A2 * (-x[..., 0] + 0.5 * u[..., 0]))[..., None]

    def vol(x, u):
        base = np.sqrt(1.0 + (A3 * x[..., 0]) ** 2 / 4.0)
        shape = np.broadcast_shapes(base.shape, u[..., 0].shape)
        return np.broadcast_to(base[..., None, None], shape + (1, 1)).copy()

    return ControlProblem(
        state_dim=1,
        action_dim=1,
        reward=reward,
        drift=drift,
        vol=vol,
        lam=lam,
        rho=rho,
        growth=GrowthRecord(N=N, A1=A1, A2=A2, A3=max(1.0, A3)),
        ellipticity_c0=1.0,
        action_dependent_vol=False,
        name=f"linear-growth(N={N},rho={rho})",
    )


def _lq_like(params):
    lam = float(params.get("lambda", params.get("lam", 1.0)))
    rho = float(params.get("rho", 40.0))
    sig = float(params.get("sigma", 1.0))

    def reward(x, u):
        return -0.5 * (x[..., 0] ** 2 + u[..., 0] ** 2)

    def drift(x, u):
        return (-x[..., 0] + u[..., 0])[..., None]

    def vol(x, u):
        shape = np.broadcast_shapes(x[..., 0].shape, u[..., 0].shape)
        return np.full(shape + (1, 1), sig)

    return ControlProblem(
        state_dim=1,
        action_dim=1,
        reward=reward,
        drift=drift,
        vol=vol,
        lam=lam,
        rho=rho,
        growth=GrowthRecord(N=2, A1=1.0, A2=1.0, A3=max(1.0, sig)),
        ellipticity_c0=max(1.0, 1.0 / sig**2),
        action_dependent_vol=False,
        name=f"lq-like(rho={rho})",
    )


_FAMILIES = {
    "bounded-trig": _bounded_trig,
    "small-diffusion": _small_diffusion,
    "linear-growth": _linear_growth,
    "lq-like": _lq_like,
}


def builtin_problem(family, params=None):
    """Instantiate a built-in problem family with analytic constants."""
    if family not in _FAMILIES:
        raise ValueError(
            f"unknown family {family!r}; available: {sorted(_FAMILIES)}"
        )
    return _FAMILIES[family](dict(params or {}))


def _expr_uses_action(expr):
    return any(v.startswith("u") for v in _used_vars(expr))


def _used_vars(expr):
    used = set()

    def walk(node):
        if node[0] == "var":
            used.add(node[1])
        elif node[0] in ("add", "sub", "mul", "div", "pow"):
            walk(node[1])
            walk(node[2])
        elif node[0] == "neg":
            walk(node[1])
        elif node[0] == "call":
            for a in node[2]:
                walk(a)

    walk(expr._ast)
    return used


def expression_problem(
    d,
    L,
    r_text,
    b_texts,
    sigma_texts,
    lam,
    rho,
    growth,
    ellipticity_c0,
    sigma0_texts=None,
    name="expression",
):
    """Build a problem from expression strings.

    ``b_texts`` is a list of d strings; ``sigma_texts`` a d x m nested list;
    ``sigma0_texts`` (optional) a d x d nested list depending on x only.
    """
    vars_ = [f"x{i + 1}" for i in range(d)] + [f"u{j + 1}" for j in range(L)]
    r_expr = parse_coefficient_expr(r_text, vars_)
    b_exprs = [parse_coefficient_expr(t, vars_) for t in b_texts]
    if len(b_exprs) != d:
        raise ValueError(f"drift needs {d} component expressions")
    sig_exprs = [[parse_coefficient_expr(t, vars_) for t in row] for row in sigma_texts]
    if len(sig_exprs) != d:
        raise ValueError(f"vol needs {d} rows")
    m = len(sig_exprs[0])

    def env(x, u):
        e = {f"x{i + 1}": x[..., i] for i in range(d)}
        e.update({f"u{j + 1}": u[..., j] for j in range(L)})
        return e

    def reward(x, u):
        shape = np.broadcast_shapes(x[..., 0].shape, u[..., 0].shape)
        return np.broadcast_to(np.asarray(r_expr(**env(x, u)), dtype=float), shape)

    def drift(x, u):
        shape = np.broadcast_shapes(x[..., 0].shape, u[..., 0].shape)
        cols = [
            np.broadcast_to(np.asarray(bx(**env(x, u)), dtype=float), shape)
            for bx in b_exprs
        ]
        return np.stack(cols, axis=-1)

    def vol(x, u):
        shape = np.broadcast_shapes(x[..., 0].shape, u[..., 0].shape)
        out = np.empty(shape + (d, m))
        for i in range(d):
            for j in range(m):
                out[..., i, j] = np.broadcast_to(
                    np.asarray(sig_exprs[i][j](**env(x, u)), dtype=float), shape
                )
        return out

    action_dep = any(
        _expr_uses_action(e) for row in sig_exprs for e in row
    )

    sigma0 = None
    if sigma0_texts is not None:
        xvars = [f"x{i + 1}" for i in range(d)]
        s0_exprs = [
            [parse_coefficient_expr(t, xvars) for t in row] for row in sigma0_texts
        ]

        def sigma0(x):
            shape = np.asarray(x).shape[:-1]
            e = {f"x{i + 1}": x[..., i] for i in range(d)}
            out = np.empty(shape + (d, d))
            for i in range(d):
                for j in range(d):
                    out[..., i, j] = np.broadcast_to(
                        np.asarray(s0_exprs[i][j](**e), dtype=float), shape
                    )
            return out

    return ControlProblem(
        state_dim=d,
        action_dim=L,
        reward=reward,
        drift=drift,
        vol=vol,
        lam=lam,
        rho=rho,
        growth=growth,
        ellipticity_c0=ellipticity_c0,
        action_dependent_vol=action_dep,
        sigma0=sigma0,
        name=name,
    )


def problem_from_dict(spec):
    """Build a problem from a parsed configuration mapping."""
    lam = float(spec.get("lambda", spec.get("lam", 1.0)))
    rho = float(spec.get("rho", 10.0))
    if "family" in spec:
        params = dict(spec.get("params", {}))
        params.setdefault("lambda", lam)
        params.setdefault("rho", rho)
        return builtin_problem(spec["family"], params)
    if "expressions" not in spec:
        raise ValueError("problem spec needs either 'family' or 'expressions'")
    ex = spec["expressions"]
    g = spec.get("growth", {})
    growth = GrowthRecord(
        N=float(g.get("N", 0)),
        A1=float(g.get("A1", 1.0)),
        A2=float(g.get("A2", 1.0)),
        A3=float(g.get("A3", 1.0)),
    )
    b_texts = ex["b"] if isinstance(ex["b"], list) else [ex["b"]]
    sigma_texts = ex["sigma"]
    if isinstance(sigma_texts, str):
        sigma_texts = [[sigma_texts]]
    elif sigma_texts and isinstance(sigma_texts[0], str):
        sigma_texts = [sigma_texts]
    d = len(b_texts)
    return expression_problem(
        d=d,
        L=int(spec.get("action_dim", 1)),
        r_text=ex["r"],
        b_texts=b_texts,
        sigma_texts=sigma_texts,
        lam=lam,
        rho=rho,
        growth=growth,
        ellipticity_c0=float(spec.get("ellipticity", 1.0)),
        sigma0_texts=spec.get("sigma0"),
        name=spec.get("name", "expression"),
    )


# -- validation ---------------------------------------------------------------


class ProblemValidationError(RuntimeError):
    pass


@dataclass
class CheckResult:
    status: str  # "satisfied" | "violated" | "not-applicable"
    detail: str = ""
    witness: dict = None


@dataclass
class ValidationReport:
    problem: str
    checks: dict
    smallness: SmallnessReport = None

    def violations(self):
        return [k for k, v in self.checks.items() if v.status == "violated"]

    def ok(self):
        return not self.violations()

    def lines(self):
        out = [f"validation of {self.problem}:"]
        for key in sorted(self.checks):
            res = self.checks[key]
            line = f"  {key:6s} {res.status}"
            if res.detail:
                line += f"  ({res.detail})"
            out.append(line)
        return out


def _min_eig_sym(mats):
    """Minimum eigenvalue of symmetric (..., d, d) matrices."""
    d = mats.shape[-1]
    if d == 1:
        return mats[..., 0, 0]
    a = mats[..., 0, 0]
    b = mats[..., 1, 1]
    c = mats[..., 0, 1]
    tr = a + b
    disc = np.sqrt(np.maximum((a - b) ** 2 + 4 * c**2, 0.0))
    return 0.5 * (tr - disc)


def _max_entry(arr):
    return float(np.max(np.abs(arr)))


def validate_problem(
    problem,
    alpha=0.5,
    sample_budget=4096,
    box=None,
    strict=False,
    tol=1e-9,
):
    """Check the standing assumptions by quasi-random sampling over a box.

    Reports, per assumption in {cond1, cond2, cond3, c.3, c.4}, whether it is
    satisfied, violated (with a witnessing sample), or not applicable.  Growth
    constants are taken from the problem's growth record, which also stands in
    for the regularity constant in the cond3 inequalities (the theoretical
    constant is not quantified).
    """
    if sample_budget < 1000:
        raise ValueError("sample_budget must be at least 1000")
    d, L = problem.state_dim, problem.action_dim
    if box is None:
        box = [(-2.0, 2.0)] * d
    sampler = qmc.Sobol(d=d + L, scramble=False)
    m_pow = int(math.ceil(math.log2(sample_budget)))
    pts = sampler.random_base2(m=m_pow)
    x = np.empty((pts.shape[0], d))
    for i, (lo, hi) in enumerate(box):
        x[:, i] = lo + (hi - lo) * pts[:, i]
    u = pts[:, d:]
    # keep action samples interior, matching quadrature-node usage
    u = 1e-6 + (1.0 - 2e-6) * u

    try:
        r = np.asarray(problem.reward(x, u), dtype=float)
        b = np.asarray(problem.drift(x, u), dtype=float)
        sig = np.asarray(problem.vol(x, u), dtype=float)
    except ArithmeticError as exc:
        raise ProblemValidationError(f"coefficient evaluation failed: {exc}") from exc
    Sigma = np.einsum("...im,...jm->...ij", sig, sig)

    checks = {}
    xnorm = np.linalg.norm(x, axis=-1)
    g = problem.growth

    def witness(idx):
        return {"x": x[idx].tolist(), "u": u[idx].tolist()}

    # c.3 growth bounds (entrywise max norm)
    margins = [
        (np.abs(r) - g.A1 * (1 + xnorm**g.N), "reward"),
        (np.max(np.abs(b), axis=-1) - g.A2 * (1 + xnorm), "drift"),
        (np.max(np.abs(sig), axis=(-2, -1)) - g.A3 * (1 + xnorm), "vol"),
    ]
    worst = max((float(m.max()), name, int(m.argmax())) for m, name in margins)
    if worst[0] > tol:
        checks["c.3"] = CheckResult(
            "violated",
            f"{worst[1]} bound exceeded by {worst[0]:.3e}",
            witness(worst[2]),
        )
    else:
        checks["c.3"] = CheckResult("satisfied", f"max slack {-worst[0]:.3e}")

    # c.4 discount threshold
    thr = problem.discount_threshold()
    if problem.rho >= thr - 1e-12:
        checks["c.4"] = CheckResult("satisfied", f"rho={problem.rho} >= {thr}")
    else:
        checks["c.4"] = CheckResult("violated", f"rho={problem.rho} < {thr}")

    # cond1: ellipticity plus bounded Hoelder norms, bounded regime only
    min_eig = _min_eig_sym(Sigma)
    eig_floor = 1.0 / problem.ellipticity_c0
    idx = int(np.argmin(min_eig))
    eig_ok = min_eig[idx] >= eig_floor - 1e-9
    if problem.is_bounded():
        sup_ok = (
            _max_entry(r) <= problem.ellipticity_c0 + tol
            and _max_entry(b) <= problem.ellipticity_c0 + tol
            and _max_entry(Sigma) <= problem.ellipticity_c0 + tol
        )
        if eig_ok and sup_ok:
            checks["cond1"] = CheckResult(
                "satisfied", f"min eig {min_eig[idx]:.4f} >= {eig_floor:.4f}"
            )
        else:
            detail = (
                f"min eig {min_eig[idx]:.4e} < {eig_floor:.4e}"
                if not eig_ok
                else "coefficient sup norm exceeds C0"
            )
            checks["cond1"] = CheckResult("violated", detail, witness(idx))
    else:
        if eig_ok:
            checks["cond1"] = CheckResult(
                "not-applicable", "unbounded regime (ellipticity holds)"
            )
        else:
            checks["cond1"] = CheckResult(
                "violated", f"min eig {min_eig[idx]:.4e} < {eig_floor:.4e}", witness(idx)
            )

    # cond2 / cond3 need a configured baseline diffusion
    smallness = None
    if problem.sigma0 is not None:
        Sigma0 = np.asarray(problem.sigma0(x), dtype=float)
        M = Sigma - Sigma0
        eps0_s = float(np.max(np.abs(M)))
        # Hoelder seminorm estimate on pairs with |x - y| <= 1
        rng = np.random.default_rng(0)
        # reuse sample points pairwise: random partner within distance <= 1
        delta = rng.uniform(-1, 1, size=x.shape)
        scale = np.minimum(1.0, 1.0 / np.maximum(np.linalg.norm(delta, axis=-1), 1e-12))
        y = x + delta * (scale[:, None] * rng.uniform(0.05, 1.0, size=(x.shape[0], 1)))
        for i, (lo, hi) in enumerate(box):
            y[:, i] = np.clip(y[:, i], lo, hi)
        My = np.einsum(
            "...im,...jm->...ij",
            np.asarray(problem.vol(y, u), dtype=float),
            np.asarray(problem.vol(y, u), dtype=float),
        ) - np.asarray(problem.sigma0(y), dtype=float)
        dist = np.linalg.norm(x - y, axis=-1)
        good = dist > 1e-9
        quot = np.max(np.abs(M - My), axis=(-2, -1))[good] / dist[good] ** alpha
        eps1_s = float(np.max(quot)) if quot.size else 0.0
        if problem.smallness_exact is not None:
            eps0, eps1 = problem.smallness_exact
            exact = True
        else:
            eps0, eps1 = eps0_s, eps1_s
            exact = False
        a1 = g.A1
        cond3 = {
            "rho>=A1^(2/(1-alpha))": problem.rho >= a1 ** (2.0 / (1.0 - alpha)) - 1e-12,
            "eps0*A1*rho^(alpha/2)<=1": eps0 * a1 * problem.rho ** (alpha / 2.0)
            <= 1.0 + 1e-12,
            "eps1*A1<=1": eps1 * a1 <= 1.0 + 1e-12,
        }
        smallness = SmallnessReport(
            eps0=eps0, eps1=eps1, cond3_satisfied=cond3, exact=exact
        )
        checks["cond2"] = CheckResult(
            "satisfied" if eps0 < 1.0 else "violated",
            f"eps0={eps0:.4g}, eps1={eps1:.4g}"
            + ("" if exact else " (sampled lower bounds)"),
        )
        checks["cond3"] = CheckResult(
            "satisfied" if all(cond3.values()) else "violated",
            ", ".join(f"{k}: {v}" for k, v in cond3.items()),
        )
    else:
        checks["cond2"] = CheckResult("not-applicable", "no baseline Sigma0")
        checks["cond3"] = CheckResult("not-applicable", "no baseline Sigma0")

    report = ValidationReport(problem=problem.name, checks=checks, smallness=smallness)
    if strict and not report.ok():
        raise ProblemValidationError(
            "strict validation failed: " + ", ".join(report.violations())
        )
    return report


# -- coefficient tables -------------------------------------------------------


@dataclass
class CoefficientTables:
    """Coefficients evaluated once on (grid nodes) x (action nodes).

    ``r``: (n_nodes, n_actions); ``b``: (n_nodes, n_actions, d);
    ``Sigma``: (n_nodes, n_actions, d, d), or (n_nodes, 1, d, d) when the
    diffusion does not depend on the action.
    """

    r: np.ndarray
    b: np.ndarray
    Sigma: np.ndarray
    action_dependent_vol: bool


def coefficient_tables(problem, grid, quad):
    """Evaluate r, b, Sigma on the (node, action-node) product once."""
    x = grid.nodes_flat()[:, None, :]  # (N, 1, d)
    u = quad.nodes[None, :, :]  # (1, M, L)
    N, M = grid.size, quad.size
    r = np.broadcast_to(
        np.asarray(problem.reward(x, u), dtype=float), (N, M)
    ).copy()
    b = np.broadcast_to(
        np.asarray(problem.drift(x, u), dtype=float), (N, M, problem.state_dim)
    ).copy()
    if problem.action_dependent_vol:
        Sigma = np.broadcast_to(
            problem.sigma_matrix(x, u),
            (N, M, problem.state_dim, problem.state_dim),
        ).copy()
    else:
        u0 = quad.nodes[None, :1, :]
        Sigma = np.asarray(problem.sigma_matrix(x, u0), dtype=float).reshape(
            N, 1, problem.state_dim, problem.state_dim
        )
    return CoefficientTables(
        r=r, b=b, Sigma=Sigma, action_dependent_vol=problem.action_dependent_vol
    )
