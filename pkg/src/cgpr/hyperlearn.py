"""
Hyperparameter learning by maximizing the log marginal likelihood.

For any real hyperparameter theta_i the gradient is::

    dL/dtheta_i = Tr((C^{-1} y y^H C^{-1} - C^{-1}) dC/dtheta_i)

which is real whenever dC/dtheta_i is Hermitian.  Positive parameters
(``gamma``, ``amplitude``, ``noise_var``) may be optimized on the log scale.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import NotPositiveDefinite, UnknownHyperparameter
from .gpr import fit, log_marginal_likelihood
from .kernels import Kernel, KernelKind, KernelParams, POSITIVE_PARAMS

log = logging.getLogger(__name__)

LOG_POSITIVE = "log-positive"
REAL = "unconstrained-real"
NOISE = "noise_var"
_IMAG_RTOL = 1e-10


@dataclass(frozen=True)
class HyperParameter:
    name: str
    domain: str = REAL
    initial: float = None


@dataclass(frozen=True)
class HyperSpec:
    """Ordered hyperparameters to optimize.

    Initial values are given in natural units (``gamma``, not ``log gamma``).
    ``None`` keeps the value found in the base kernel parameters.
    """

    entries: tuple

    def __post_init__(self):
        entries = tuple(e if isinstance(e, HyperParameter) else HyperParameter(*e) for e in self.entries)
        names = [e.name for e in entries]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate hyperparameter ids: {names}")
        for e in entries:
            if e.domain not in (LOG_POSITIVE, REAL):
                raise ValueError(f"{e.name}: unknown domain {e.domain!r}")
            positive = e.name in POSITIVE_PARAMS or e.name == NOISE
            if e.domain == LOG_POSITIVE and not positive:
                raise ValueError(f"{e.name} is not a positive parameter")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def default(cls, kind, dim, noise=True):
        """Every hyperparameter the kind reads, positive ones on the log scale."""
        kind = KernelKind.parse(kind)
        entries = [HyperParameter(n, LOG_POSITIVE if n in POSITIVE_PARAMS else REAL) for n in kind.reads(dim)]
        if noise:
            entries.append(HyperParameter(NOISE, LOG_POSITIVE))
        return cls(tuple(entries))

    @classmethod
    def from_dict(cls, items):
        return cls(tuple(HyperParameter(d["name"], d.get("domain", REAL), d.get("initial")) for d in items))

    def to_dict(self):
        return [{"name": e.name, "domain": e.domain, "initial": e.initial} for e in self.entries]

    @property
    def names(self):
        return [e.name for e in self.entries]

    def __len__(self):
        return len(self.entries)

    def validate(self, kind, dim):
        readable = set(KernelKind.parse(kind).reads(dim)) | {NOISE}
        for name in self.names:
            if name not in readable:
                raise UnknownHyperparameter(f"{name!r} is not a hyperparameter of {KernelKind.parse(kind).value}")


def _natural_to_coord(entry, value):
    if entry.domain == LOG_POSITIVE:
        return float(np.log(value))
    return float(value)


def pack(spec, params, noise_var):
    """Optimizer coordinates for the current values."""
    theta = []
    for e in spec.entries:
        if e.name == NOISE:
            value = noise_var
        elif e.name in POSITIVE_PARAMS:
            value = np.exp(params.get(e.name))
        else:
            value = params.get(e.name)
        theta.append(_natural_to_coord(e, value))
    return np.array(theta)


def unpack(spec, theta, params, noise_var):
    """``(params, noise_var)`` with the coordinates ``theta`` applied."""
    for e, t in zip(spec.entries, theta):
        if e.domain == LOG_POSITIVE:
            natural = float(np.exp(t))
        else:
            natural = float(t)
        if e.name == NOISE:
            noise_var = natural
        elif e.name in POSITIVE_PARAMS:
            params = params.set(e.name, np.log(natural))
        else:
            params = params.set(e.name, natural)
    return params, noise_var


def initial_values(spec, params, noise_var):
    """Apply the spec's initial values (natural units) to the base values."""
    for e in spec.entries:
        if e.initial is None:
            continue
        if e.name == NOISE:
            noise_var = float(e.initial)
        elif e.name in POSITIVE_PARAMS:
            params = params.set(e.name, np.log(e.initial))
        else:
            params = params.set(e.name, e.initial)
    return params, noise_var


def _trace_product(W, dC):
    # Tr(W dC) = sum_ij W_ij dC_ji
    terms = W * dC.T
    value = terms.sum()
    bound = _IMAG_RTOL * (1.0 + np.abs(terms).sum())
    if abs(value.imag) > bound:
        raise FloatingPointError(f"gradient trace has imaginary residue {value.imag:.3g} (> {bound:.3g})")
    return float(value.real)


def likelihood_gradient(model, spec):
    """Gradient of the log marginal likelihood in the spec's coordinates."""
    X = model.dataset.inputs
    kind = model.kernel.kind
    params = model.kernel.params
    spec.validate(kind, model.dataset.dim)
    Cinv = linalg.inverse(model.factor)
    alpha = model.alpha
    W = np.outer(alpha, alpha.conj()) - Cinv
    grad = np.empty(len(spec))
    for i, e in enumerate(spec.entries):
        if e.name == NOISE:
            # dC/d(noise_var) = I
            g = float(np.trace(W).real)
            grad[i] = g * model.noise_var if e.domain == LOG_POSITIVE else g
            continue
        g = _trace_product(W, model.kernel.gradient(X, e.name))
        if e.name in POSITIVE_PARAMS and e.domain == REAL:
            g /= getattr(params, e.name)
        grad[i] = g
    return grad


@dataclass
class OptimizeOptions:
    max_iter: int = 200
    grad_tol: float = 1e-6
    seed: int = 0
    restarts: int = 4
    initial_step: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 60
    max_move: float = 2.0
    scan_points: int = 96

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class OptimizeReport:
    params: KernelParams
    noise_var: float
    log_likelihood: float
    iterations: int
    grad_norm: float
    converged: bool
    trace: list = field(default_factory=list)
    restart: int = 0
    restarts: list = field(default_factory=list)

    def to_dict(self):
        mu = self.params.mu_array
        return {
            "gamma": self.params.gamma,
            "mu_re": mu.real.tolist(),
            "mu_im": mu.imag.tolist(),
            "v_r": self.params.v_r,
            "v_rj": self.params.v_rj,
            "amplitude": self.params.amplitude,
            "noise_var": self.noise_var,
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "converged": self.converged,
            "restart": self.restart,
        }


class _Objective:
    """Log marginal likelihood and gradient as functions of the coordinates."""

    def __init__(self, dataset, kind, spec, params, noise_var):
        self.dataset = dataset
        self.kind = KernelKind.parse(kind)
        self.spec = spec
        self.params = params
        self.noise_var = noise_var

    def model(self, theta):
        params, noise_var = unpack(self.spec, theta, self.params, self.noise_var)
        try:
            return fit(self.dataset, Kernel(self.kind, params), noise_var)
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(str(exc), params={"kernel": params, "noise_var": noise_var}) from None

    def value(self, theta):
        try:
            with np.errstate(over="raise", divide="raise", invalid="raise"):
                params, noise_var = unpack(self.spec, theta, self.params, self.noise_var)
            return log_marginal_likelihood(fit(self.dataset, Kernel(self.kind, params), noise_var))
        except (NotPositiveDefinite, FloatingPointError, ValueError):
            return -np.inf

    def value_and_grad(self, theta):
        model = self.model(theta)
        return log_marginal_likelihood(model), likelihood_gradient(model, self.spec)


def gradient_ascent(objective, theta0, options):
    """Steepest ascent with Armijo backtracking.

    The first trial step is ``options.initial_step``; later iterations try
    the Barzilai-Borwein step from the last two iterates.  Trial moves are
    capped at ``options.max_move`` per coordinate, and each trial is halved
    until ``L(theta + t g) >= L(theta) + c t |g|^2``, so accepted steps never
    decrease the likelihood.

    Returns
    -------
    theta, L, grad, iterations, converged, trace
    """
    theta = np.asarray(theta0, dtype=float)
    L, g = objective.value_and_grad(theta)
    trace = [(0, L)]
    gnorm = float(np.linalg.norm(g))
    step = options.initial_step
    it = 0
    while it < options.max_iter:
        if gnorm <= options.grad_tol:
            return theta, L, g, it, True, trace
        gmax = float(np.max(np.abs(g)))
        step = min(step, options.max_move / gmax)
        for _ in range(options.max_backtracks):
            cand = theta + step * g
            Lc = objective.value(cand)
            if np.isfinite(Lc) and Lc >= L + options.armijo * step * gnorm**2:
                break
            step *= options.shrink
        else:
            # no ascent step down to machine resolution: stationary to working precision
            return theta, L, g, it, False, trace
        L_new, g_new = objective.value_and_grad(cand)
        s, yk = cand - theta, g_new - g
        curvature = -float(s @ yk)
        step = float(s @ s) / curvature if curvature > 0 else 2.0 * step
        theta, L, g = cand, L_new, g_new
        gnorm = float(np.linalg.norm(g))
        it += 1
        trace.append((it, L))
    return theta, L, g, it, gnorm <= options.grad_tol, trace


def median_sqdist(X):
    diff = X[:, None, :] - X[None, :, :]
    D = np.sum(np.abs(diff) ** 2, axis=-1)
    iu = np.triu_indices(X.shape[0], 1)
    return float(np.median(D[iu])) if iu[0].size else 1.0


def _restart_points(spec, params, noise_var, dataset, objective, options):
    """Starting coordinates for the restarts.

    The given start always runs.  The remaining starts are the best points
    of a coarse likelihood scan: gamma log-spaced over
    ``[10^-2.5, 10] * median squared input distance`` crossed with random
    mu values in the box spanned by input differences (mu = 0 included).
    """
    base = pack(spec, params, noise_var)
    starts = [base]
    if options.restarts <= 1:
        return starts
    names = spec.names
    mu_names = [n for n in names if n.startswith("mu_")]
    if "gamma" not in names and not mu_names:
        return starts
    X = dataset.inputs
    rng = np.random.default_rng(options.seed)
    gammas = [params.gamma] if "gamma" not in names else median_sqdist(X) * 10 ** np.linspace(-2.5, 1.0, 8)
    mus = [np.zeros(len(mu_names))]
    if mu_names:
        half = np.array(
            [0.5 * np.ptp(X[:, int(n.rsplit("_", 1)[1])].real if "_re_" in n else X[:, int(n.rsplit("_", 1)[1])].imag) for n in mu_names]
        )
        mus += list(rng.uniform(-1.0, 1.0, (options.scan_points, len(mu_names))) * half)
    scored = []
    for gamma in gammas:
        for mu in mus:
            p = params.set("gamma", np.log(gamma)) if "gamma" in names else params
            for name, value in zip(mu_names, mu):
                p = p.set(name, value)
            theta = pack(spec, p, noise_var)
            scored.append((objective.value(theta), len(scored), theta))
    scored.sort(key=lambda t: (-t[0], t[1]))
    for L, _, theta in scored:
        if len(starts) >= options.restarts:
            break
        if np.isfinite(L) and not any(np.allclose(theta, s) for s in starts):
            starts.append(theta)
    return starts


def maximize(dataset, kind, spec, options=None, base_params=None, noise_var=None, starts=None):
    """Maximize the log marginal likelihood over the hyperparameters in ``spec``.

    Parameters
    ----------
    dataset : ComplexDataset
    kind : KernelKind or str
    spec : HyperSpec
    options : OptimizeOptions, optional
    base_params : KernelParams, optional
        Values for hyperparameters not in ``spec`` (and defaults for those
        that are).
    noise_var : float, optional
        Noise variance used when ``noise_var`` is not optimized.
    starts : list of array_like, optional
        Explicit starting coordinates; overrides the restart scheme.

    Returns
    -------
    params : KernelParams
    noise_var : float
    report : OptimizeReport
        The best run by final log likelihood (lowest restart index on ties);
        ``report.restarts`` holds the per-restart summaries.
    """
    options = options or OptimizeOptions()
    if dataset.n < 2:
        raise ValueError("need at least two observations")
    if not len(spec):
        raise ValueError("empty hyperparameter spec")
    kind = KernelKind.parse(kind)
    spec.validate(kind, dataset.dim)
    params = base_params or KernelParams(mu=(0j,) * dataset.dim)
    noise = 0.1 * float(np.mean(np.abs(dataset.outputs) ** 2)) if noise_var is None else noise_var
    params, noise = initial_values(spec, params, noise)
    objective = _Objective(dataset, kind, spec, params, noise)
    if starts is None:
        starts = _restart_points(spec, params, noise, dataset, objective, options)

    runs = []
    for index, theta0 in enumerate(starts):
        try:
            theta, L, g, it, ok, trace = gradient_ascent(objective, theta0, options)
        except NotPositiveDefinite:
            if index == 0 and len(starts) == 1:
                raise
            log.debug("restart %d failed to factor at its start", index)
            continue
        runs.append((L, index, theta, g, it, ok, trace))
        log.debug("restart %d: L=%.6g after %d iterations (|g|=%.3g)", index, L, it, np.linalg.norm(g))
    if not runs:
        raise NotPositiveDefinite("every restart failed to factor", params={"starts": [list(s) for s in starts]})
    best = max(runs, key=lambda r: (r[0], -r[1]))
    L, index, theta, g, it, ok, trace = best
    best_params, best_noise = unpack(spec, theta, params, noise)
    report = OptimizeReport(
        params=best_params,
        noise_var=best_noise,
        log_likelihood=float(L),
        iterations=it,
        grad_norm=float(np.linalg.norm(g)),
        converged=bool(ok),
        trace=trace,
        restart=index,
        restarts=[{"restart": r[1], "log_likelihood": float(r[0]), "iterations": r[4], "converged": bool(r[5])} for r in runs],
    )
    return best_params, best_noise, report
