"""Simulation harness: data generation, vectorized runners, metrics, CSV.

Data model: hypotheses arrive in batches of size ``b``; test statistics
within a batch are equicorrelated Gaussian (exact common-factor
construction), batches are independent.  Each index is an alternative with
probability ``pi_a`` (mean shift +3) and a null otherwise (mean ``mu_n`` <=
0, i.e. possibly conservative); one-sided z-test p-values.

The engines in :mod:`.engines` process one trajectory at a time, which is
the right shape for live streams but too slow for thousand-trial sweeps.
This module therefore re-expresses each level recursion with the trial axis
vectorized; the test suite cross-checks these runners against the sequential
engines to 1e-12 on sampled trajectories.

Reproducibility: every trial uses its own counter-based RNG keyed by
``(seed, trial_index)``, so results are independent of execution order and
thread count.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr, ndtri

from .errors import EmptyOutcomeSet, InvalidConfig
from .gammas import GammaSpec

CSV_HEADER = (
    "procedure,gamma_id,n,b,rho,pi_A,mu_N,e,trials,"
    "fwer,fwer_se,pfer,power,power_se,fdr,fdr_se,mfdr"
)
ALT_SHIFT = 3.0
CORR_QUAD_NODES = 512
QUAD_SPAN = 8.0

FWER_PROCEDURES = (
    "spending-local",
    "graph-conf",
    "graph-conf-u",
    "closed-spending",
    "closed-graph",
)
ALL_PROCEDURES = FWER_PROCEDURES + ("adaptive-graph-corr", "fdr-graph")


@dataclass(frozen=True)
class SimConfig:
    """One grid point of the experiment design."""

    procedure: str = "graph-conf-u"
    gamma: str = "basel"
    n: int = 100
    b: int = 1
    rho: float = 0.5
    pi_a: float = 0.5
    mu_n: float = -0.5
    e: int | None = None
    trials: int = 1000
    seed: int = 1
    alpha: float = 0.2
    tau: float = 0.8
    lam: float = 0.16
    w0: float | None = None

    def __post_init__(self):
        if self.procedure not in ALL_PROCEDURES:
            raise InvalidConfig(f"unknown procedure {self.procedure!r}")
        if self.n < 1 or self.b < 1 or self.n % self.b:
            raise InvalidConfig(f"hypothesis count {self.n} must be divisible by batch size {self.b}")
        if not 0.0 < self.rho < 1.0:
            raise InvalidConfig(f"correlation must lie in (0,1), got {self.rho}")
        if not 0.0 < self.pi_a < 1.0:
            raise InvalidConfig(f"alternative probability must lie in (0,1), got {self.pi_a}")
        if self.mu_n > 0.0:
            raise InvalidConfig(f"null mean must be <= 0, got {self.mu_n}")
        if self.trials < 1:
            raise InvalidConfig("need at least one trial")
        if self.seed < 0:
            raise InvalidConfig("seed must be a nonnegative integer")
        if self.e is not None and (self.e < 0 or self.b != 1):
            raise InvalidConfig("asynchronous duration e needs e >= 0 and batch size 1")

    @property
    def gamma_spec(self) -> GammaSpec:
        return GammaSpec.parse(self.gamma)

    def lags(self) -> np.ndarray:
        """Per-index conflict lags implied by the batch / asynchrony design."""
        i = np.arange(1, self.n + 1)
        if self.e is not None:
            return np.minimum(self.e, i - 1)
        return (i - 1) % self.b


# ---------------------------------------------------------------------------
# data generation


def generate_trial(config: SimConfig, trial_index: int) -> tuple[np.ndarray, np.ndarray]:
    """P-values and truth labels for one trial (counter-based substream)."""
    rng = np.random.Generator(
        np.random.Philox(key=np.array([config.seed, trial_index], dtype=np.uint64))
    )
    n, b = config.n, config.b
    labels = rng.random(n) < config.pi_a
    z0 = rng.standard_normal(n // b)
    eps = rng.standard_normal(n)
    x = np.sqrt(config.rho) * np.repeat(z0, b) + np.sqrt(1.0 - config.rho) * eps
    z = x + np.where(labels, ALT_SHIFT, config.mu_n)
    return ndtr(-z), labels


def generate_data(config: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Stacked (trials, n) p-value and label matrices."""
    p = np.empty((config.trials, config.n))
    labels = np.empty((config.trials, config.n), dtype=bool)
    for t in range(config.trials):
        p[t], labels[t] = generate_trial(config, t)
    return p, labels


# ---------------------------------------------------------------------------
# vectorized level runners (trial axis first)


def _indicator_arrays(p, tau, lam):
    s = (p <= tau).astype(np.float64)
    c = (p <= lam).astype(np.float64)
    return s, c, c - s + 1.0


def levels_spending_local(p, lags, alpha, tau, lam, spec: GammaSpec) -> np.ndarray:
    n = p.shape[1]
    gam = spec.values(2 * n + 2)
    s, c, _ = _indicator_arrays(p, tau, lam)
    cs = np.concatenate(
        [np.zeros((p.shape[0], 1)), np.cumsum((s - c), axis=1)], axis=1
    )
    i = np.arange(1, n + 1)
    t = (1 + lags + cs[:, i - lags - 1]).astype(np.int64)
    return alpha * (tau - lam) * gam[t - 1]


def _renorm_table(spec: GammaSpec, lags, n: int) -> np.ndarray:
    """Static conflict-renormalized shifted-gamma weights W[j, i] (1-based)."""
    gam = spec.values(n + 1)
    w = np.zeros((n + 1, n + 1))
    lags = np.asarray(lags)
    d = np.arange(2, n + 2)  # d[j-1]: first non-conflicting target of j
    for i in range(1, n + 1):
        lo = i - lags[i - 1]
        d[lo - 1 : i - 1] = np.maximum(d[lo - 1 : i - 1], i + 1)
    for j in range(1, n + 1):
        dj = int(d[j - 1])
        if dj > n:
            continue
        denom = spec.tail_sum(dj - 1 - j)
        if denom <= 1e-12:
            continue
        w[j, dj:] = gam[dj - j - 1 : n - j] / denom
    return w


def levels_graph_conf(p, lags, alpha, tau, lam, spec: GammaSpec) -> np.ndarray:
    n = p.shape[1]
    gam = spec.values(n)
    w = _renorm_table(spec, lags, n)
    _, _, u = _indicator_arrays(p, tau, lam)
    at = np.zeros((p.shape[0], n))
    for i0 in range(n):
        at[:, i0] = alpha * gam[i0]
        if i0:
            at[:, i0] += (u[:, :i0] * at[:, :i0]) @ w[1 : i0 + 1, i0 + 1]
    return (tau - lam) * at


def _confu_levels_chunk(p, lags, alpha, tau, lam, spec: GammaSpec) -> np.ndarray:
    ttr, n = p.shape
    _, _, u = _indicator_arrays(p, tau, lam)
    t = np.empty((ttr, n), dtype=np.int64)
    t[:, 0] = 1
    if n > 1:
        t[:, 1:] = 1 + np.cumsum(1.0 - u[:, :-1], axis=1).astype(np.int64)
    gl = spec.values(int(t.max()) + n + 1)

    g = np.zeros((ttr, n + 1, n + 1))
    for j in range(1, n + 1):
        if n - j > 0:
            idx = t[:, j - 1 : j] + np.arange(1, n - j + 1)[None, :]
            g[:, j, j + 1 :] = (gl[idx - 2] - gl[idx - 1]) / gl[t[:, j - 1 : j] - 1]

    gm = np.zeros((ttr, n + 1, n + 1))
    for l in range(2, n + 1):
        lo = l - int(lags[l - 1])
        col = g[:, 1:l, l]
        inflow = np.einsum("tjm,tm->tj", gm[:, 1:l, 1:l], col)
        if lo <= l - 1:
            window = np.einsum("tjm,tm->tj", gm[:, 1:l, lo:l], g[:, lo:l, l])
        else:
            window = np.zeros((ttr, l - 1))
        blocked = np.arange(1, l) >= lo
        gm[:, 1:l, l] = np.where(blocked[None, :], col + inflow, window)

    at = np.zeros((ttr, n))
    for i0 in range(n):
        i = i0 + 1
        c = i - int(lags[i0])
        if c > 1:
            col = g[:, 1:c, i] + np.einsum(
                "tjm,tm->tj", gm[:, 1:c, 1:c], g[:, 1:c, i]
            )
            carried = np.einsum("tj,tj->t", col, u[:, : c - 1] * at[:, : c - 1])
        else:
            carried = 0.0
        at[:, i0] = alpha * spec.value(i) + carried
    return (tau - lam) * at


def levels_graph_conf_u(p, lags, alpha, tau, lam, spec: GammaSpec) -> np.ndarray:
    n = p.shape[1]
    chunk = max(1, 4_000_000 // max(n * n, 1))
    out = np.empty_like(p)
    for start in range(0, p.shape[0], chunk):
        out[start : start + chunk] = _confu_levels_chunk(
            p[start : start + chunk], lags, alpha, tau, lam, spec
        )
    return out


def levels_closed_spending(p, lags, alpha, tau, lam, spec: GammaSpec) -> np.ndarray:
    ttr, n = p.shape
    gam = spec.values(2 * n + 2)
    s, c, _ = _indicator_arrays(p, tau, lam)
    levels = np.empty((ttr, n))
    r = np.empty((ttr, n))
    # prefix sums maintained as levels (and hence rejections) become known
    cs_smax = np.zeros((ttr, n + 1))  # sum_{j<=k} (S_j - max(R_j, C_j))
    cs_r = np.zeros((ttr, n + 1))  # sum_{j<=k} R_j
    for i0 in range(n):
        i = i0 + 1
        lag = int(lags[i0])
        t = (
            1
            + (lag - (cs_r[:, i - 1] - cs_r[:, i - lag - 1]))
            + cs_smax[:, i - lag - 1]
        ).astype(np.int64)
        levels[:, i0] = alpha * (tau - lam) * gam[t - 1]
        r[:, i0] = p[:, i0] <= levels[:, i0]
        cs_r[:, i] = cs_r[:, i - 1] + r[:, i0]
        cs_smax[:, i] = cs_smax[:, i - 1] + s[:, i0] - np.maximum(r[:, i0], c[:, i0])
    return levels


def levels_closed_graph(p, lags, alpha, tau, lam, spec: GammaSpec) -> np.ndarray:
    ttr, n = p.shape
    gam = spec.values(n)
    s, c, _ = _indicator_arrays(p, tau, lam)
    w = np.zeros((n + 1, n + 1))
    for j in range(1, n + 1):
        w[j, j + 1 :] = gam[: n - j]
    at = np.zeros((ttr, n))
    r = np.empty((ttr, n))
    for i0 in range(n):
        i = i0 + 1
        lo = i - int(lags[i0])
        coef = np.empty((ttr, i0))
        if lo > 1:
            sl = slice(0, lo - 1)
            coef[:, sl] = np.maximum(r[:, sl], c[:, sl]) - s[:, sl] + 1.0
        if lo <= i0:
            coef[:, lo - 1 : i0] = r[:, lo - 1 : i0]
        at[:, i0] = alpha * gam[i0]
        if i0:
            at[:, i0] += (coef * at[:, :i0]) @ w[1:i, i]
        r[:, i0] = p[:, i0] <= (tau - lam) * at[:, i0]
    return (tau - lam) * at


def levels_fdr_graph(p, e, alpha, tau, lam, w0, spec: GammaSpec) -> np.ndarray:
    ttr, n = p.shape
    gam = spec.values(n)
    denom = spec.tail_sum(e)
    w = np.zeros((n + 1, n + 1))
    for j in range(1, n + 1):
        if j + e < n:
            w[j, j + e + 1 :] = gam[e : n - j] / denom
    _, _, u = _indicator_arrays(p, tau, lam)
    at_hat = np.zeros((ttr, n))
    levels = np.empty((ttr, n))
    reward = np.empty((ttr, n))  # per-index reward coefficient once rejected
    r = np.empty((ttr, n))
    k_flag = np.zeros(ttr)
    for i0 in range(n):
        i = i0 + 1
        at_hat[:, i0] = w0 * gam[i0]
        if i0:
            at_hat[:, i0] += (u[:, :i0] * at_hat[:, :i0]) @ w[1:i, i]
            at_hat[:, i0] += (r[:, :i0] * reward[:, :i0]) @ w[1:i, i]
        levels[:, i0] = np.minimum((tau - lam) * at_hat[:, i0], lam)
        r[:, i0] = p[:, i0] <= levels[:, i0]
        reward[:, i0] = alpha * k_flag + (alpha - w0) * (1.0 - k_flag)
        k_flag = np.maximum(k_flag, r[:, i0])
    return levels


def levels_adaptive_corr(
    p, b, rho, alpha, lam, spec: GammaSpec, nodes: int = CORR_QUAD_NODES
) -> tuple[np.ndarray, np.ndarray]:
    """Levels and frozen joint-tail values for the batch correlation procedure.

    The joint tail is evaluated on a fixed Gauss-Legendre grid over the
    common factor; the prefix product over earlier non-candidates in the
    batch is carried forward one member at a time.
    """
    ttr, n = p.shape
    gam = spec.values(n)
    lags = (np.arange(1, n + 1) - 1) % b
    w = _renorm_table(spec, lags, n)
    c_ind = (p <= lam).astype(np.float64)
    x, wq = leggauss(nodes)
    z = QUAD_SPAN * x
    wq = QUAD_SPAN * wq * np.exp(-0.5 * z**2) / np.sqrt(2.0 * np.pi)
    sr, s1 = np.sqrt(rho), np.sqrt(1.0 - rho)

    levels = np.empty((ttr, n))
    alpha_c = np.empty((ttr, n))
    coef = np.zeros((ttr, n))
    for start in range(0, n, b):
        for i0 in range(start, start + b):
            levels[:, i0] = (1.0 - lam) * (
                alpha * gam[i0] + coef[:, :start] @ w[1 : start + 1, i0 + 1]
            )
        crit = ndtri(1.0 - levels[:, start : start + b])
        cond = ndtr((crit[:, :, None] - sr * z[None, None, :]) / s1)
        prefix = np.ones((ttr, nodes))
        n_prior = np.zeros(ttr)
        for j0 in range(b):
            i0 = start + j0
            est = (prefix * (1.0 - cond[:, j0, :])) @ wq
            # empty intersection set: the tail is the level itself, exactly
            alpha_c[:, i0] = np.where(n_prior == 0, levels[:, i0], est)
            keep = c_ind[:, i0] == 0.0
            prefix *= np.where(keep[:, None], cond[:, j0, :], 1.0)
            n_prior += keep
            coef[:, i0] = np.where(
                c_ind[:, i0] == 1.0,
                levels[:, i0],
                levels[:, i0] - alpha_c[:, i0],
            ) / (1.0 - lam)
    return levels, alpha_c


def compute_levels(config: SimConfig, p: np.ndarray) -> np.ndarray:
    """Dispatch to the vectorized runner for the configured procedure."""
    spec = config.gamma_spec
    lags = config.lags()
    a, t, l = config.alpha, config.tau, config.lam
    if config.procedure == "spending-local":
        return levels_spending_local(p, lags, a, t, l, spec)
    if config.procedure == "graph-conf":
        return levels_graph_conf(p, lags, a, t, l, spec)
    if config.procedure == "graph-conf-u":
        return levels_graph_conf_u(p, lags, a, t, l, spec)
    if config.procedure == "closed-spending":
        return levels_closed_spending(p, lags, a, t, l, spec)
    if config.procedure == "closed-graph":
        return levels_closed_graph(p, lags, a, t, l, spec)
    if config.procedure == "fdr-graph":
        e = config.e if config.e is not None else 0
        w0 = config.w0 if config.w0 is not None else a
        return levels_fdr_graph(p, e, a, t, l, w0, spec)
    if config.procedure == "adaptive-graph-corr":
        levels, _ = levels_adaptive_corr(p, config.b, config.rho, a, l, spec)
        return levels
    raise InvalidConfig(f"unknown procedure {config.procedure!r}")


def max_budget_spend(p, levels, tau: float, lam: float) -> np.ndarray:
    """Worst prefix of the adaptive-discarding budget, per trial.

    Array counterpart of the ledger-based certifier: for each trial row,
    max_i sum_{j<=i} alpha_j/(tau-lam) (S_j - C_j); error control requires
    this to stay at or below the overall alpha.
    """
    p = np.atleast_2d(p)
    levels = np.atleast_2d(levels)
    s = (p <= tau).astype(np.float64)
    c = (p <= lam).astype(np.float64)
    spend = np.cumsum(levels / (tau - lam) * (s - c), axis=1)
    return np.max(spend, axis=1)


# ---------------------------------------------------------------------------
# outcomes and metrics


@dataclass
class TrialOutcome:
    """Per-trial record: truth, data, levels and decisions."""

    labels: np.ndarray
    p_values: np.ndarray
    levels: np.ndarray
    rejected: np.ndarray

    @property
    def r_count(self) -> int:
        return int(np.sum(self.rejected))

    @property
    def v_count(self) -> int:
        return int(np.sum(self.rejected & ~self.labels))

    @property
    def power_fraction(self) -> float | None:
        n_alt = int(np.sum(self.labels))
        if n_alt == 0:
            return None
        return float(np.sum(self.rejected & self.labels) / n_alt)


@dataclass
class MetricsRow:
    """One CSV row of aggregated error and power estimates."""

    config: SimConfig
    fwer: float
    fwer_se: float
    pfer: float
    power: float | None
    power_se: float | None
    fdr: float
    fdr_se: float
    mfdr: float
    power_trials: int = 0  # trials with at least one alternative

    @staticmethod
    def _fmt(x) -> str:
        if x is None:
            return ""
        if isinstance(x, float):
            return f"{x:.10g}"
        return str(x)

    def to_csv(self) -> str:
        c = self.config
        cells = [
            c.procedure,
            c.gamma_spec.name,
            c.n,
            c.b,
            c.rho,
            c.pi_a,
            c.mu_n,
            "" if c.e is None else c.e,
            c.trials,
            self.fwer,
            self.fwer_se,
            self.pfer,
            self.power,
            self.power_se,
            self.fdr,
            self.fdr_se,
            self.mfdr,
        ]
        return ",".join(self._fmt(x) for x in cells)


def metrics(outcomes, config: SimConfig) -> MetricsRow:
    """Aggregate trial outcomes into the standard metrics with their SEs."""
    outcomes = list(outcomes)
    if not outcomes:
        raise EmptyOutcomeSet("metrics need at least one trial outcome")
    t = len(outcomes)
    v = np.array([o.v_count for o in outcomes], dtype=np.float64)
    r = np.array([o.r_count for o in outcomes], dtype=np.float64)
    fwer = float(np.mean(v > 0))
    fwer_se = float(np.sqrt(fwer * (1.0 - fwer) / t))
    pfer = float(np.mean(v))
    fdp = v / np.maximum(r, 1.0)
    fdr = float(np.mean(fdp))
    fdr_se = float(np.std(fdp, ddof=1) / np.sqrt(t)) if t > 1 else 0.0
    mfdr = float(np.mean(v) / np.mean(np.maximum(r, 1.0)))
    fracs = [o.power_fraction for o in outcomes if o.power_fraction is not None]
    if fracs:
        power = float(np.mean(fracs))
        power_se = (
            float(np.std(fracs, ddof=1) / np.sqrt(len(fracs))) if len(fracs) > 1 else 0.0
        )
    else:
        power, power_se = None, None
    return MetricsRow(
        config=config,
        fwer=fwer,
        fwer_se=fwer_se,
        pfer=pfer,
        power=power,
        power_se=power_se,
        fdr=fdr,
        fdr_se=fdr_se,
        mfdr=mfdr,
        power_trials=len(fracs),
    )


@dataclass
class TrialSet:
    """All trials of one grid point, kept as matrices."""

    config: SimConfig
    p: np.ndarray
    labels: np.ndarray
    levels: np.ndarray

    @property
    def rejected(self) -> np.ndarray:
        return self.p <= self.levels

    def outcomes(self):
        rej = self.rejected
        for t in range(self.config.trials):
            yield TrialOutcome(self.labels[t], self.p[t], self.levels[t], rej[t])

    def metrics(self) -> MetricsRow:
        return metrics(self.outcomes(), self.config)


def run_config(config: SimConfig, data=None) -> TrialSet:
    """Generate (or reuse) data and compute all levels for one grid point."""
    p, labels = generate_data(config) if data is None else data
    return TrialSet(config=config, p=p, labels=labels, levels=compute_levels(config, p))


# ---------------------------------------------------------------------------
# grids


def expand_grid(base: SimConfig, **lists) -> list[SimConfig]:
    """Cross product of list-valued overrides, in deterministic order."""
    configs = [base]
    for key, values in lists.items():
        configs = [replace(c, **{key: v}) for c in configs for v in values]
    return configs


_GRID_KEYS = {
    "procedure": str,
    "gamma": str,
    "n": int,
    "b": int,
    "rho": float,
    "pi_a": float,
    "mu_n": float,
    "e": int,
    "trials": int,
    "seed": int,
    "alpha": float,
    "tau": float,
    "lam": float,
    "w0": float,
}


def parse_grid_file(path) -> list[SimConfig]:
    """Flat ``key = value[, value...]`` grid file -> cross-product of configs.

    Keys mirror :class:`SimConfig`; list-valued keys expand to a grid in the
    order they appear.  ``#`` starts a comment.
    """
    single: dict = {}
    multi: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidConfig(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, rhs = line.partition("=")
            key = key.strip().replace("-", "_").lower()
            if key == "lambda":
                key = "lam"
            if key not in _GRID_KEYS:
                raise InvalidConfig(f"{path}:{lineno}: unknown key {key!r}")
            conv = _GRID_KEYS[key]
            try:
                values = [conv(v.strip()) for v in rhs.split(",") if v.strip()]
            except ValueError as exc:
                raise InvalidConfig(f"{path}:{lineno}: {exc}") from None
            if not values:
                raise InvalidConfig(f"{path}:{lineno}: no values for {key!r}")
            if len(values) == 1:
                single[key] = values[0]
            else:
                multi[key] = values
    base = SimConfig(**single)
    return expand_grid(base, **multi)


def run_grid(configs, csv_path=None, threads: int = 1) -> list[MetricsRow]:
    """Run every grid point; emit one CSV row per point in input order.

    Grid points sharing identical data settings reuse the same generated
    trials, so procedures are compared on paired data.
    """
    configs = list(configs)
    data_cache: dict = {}

    def data_key(c: SimConfig):
        return (c.n, c.b, c.rho, c.pi_a, c.mu_n, c.trials, c.seed)

    def run_one(c: SimConfig) -> MetricsRow:
        key = data_key(c)
        if key not in data_cache:
            data_cache[key] = generate_data(c)
        return run_config(c, data=data_cache[key]).metrics()

    if threads > 1:
        # prefill the cache sequentially so workers only read it
        for c in configs:
            key = data_key(c)
            if key not in data_cache:
                data_cache[key] = generate_data(c)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_one, configs))
    else:
        rows = [run_one(c) for c in configs]

    if csv_path is not None:
        write_csv(rows, csv_path)
    return rows


def write_csv(rows, path_or_buffer) -> None:
    if isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__"):
        with open(path_or_buffer, "w", newline="") as fh:
            _write_csv(rows, fh)
    else:
        _write_csv(rows, path_or_buffer)


def _write_csv(rows, fh: io.TextIOBase) -> None:
    fh.write(CSV_HEADER + "\n")
    for row in rows:
        fh.write(row.to_csv() + "\n")
