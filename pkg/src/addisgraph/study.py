"""Platform-study replay: conflict structure from entry/exit intervals,
engine replay over recorded p-values, and remaining-future-level accounting.

Study file format (line-oriented text, ``#`` comments):

    # optional defaults
    alpha = 0.05
    tau = 0.8
    lambda = 0.3
    # one line per hypothesis, in entry order
    T1 enter=1 exit=10 p=0.002
    T2 enter=2 exit=11 p=NA
    ...
    # optional explicit conflict overrides
    conflicts T10 = 5, 7, 8, 9

Conflicts are derived from interval overlap — an earlier hypothesis whose
exit time is at or after a later one's entry time shares concurrent control
data with it — unless overridden explicitly.  Placeholder p-values (``NA``)
mark structure-only files; replaying them raises ``MissingData``.

Future-level accounting: after the recorded horizon the stream is assumed to
continue conflict-free with full recycling disabled (tau = 1, lambda = 0),
so the level still available to future hypotheses is the untouched seed tail
plus every recorded source's carried mass beyond the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConflictStructure, validate_conflicts
from .engines import GraphConf
from .errors import InvalidConfig, MissingData
from .gammas import GammaSpec


@dataclass
class StudyHypothesis:
    index: int
    name: str
    enter: float
    exit: float
    p: float | None


@dataclass
class ReplayStudy:
    """A recorded study: hypotheses in entry order plus their conflict sets."""

    hypotheses: list[StudyHypothesis]
    conflict_sets: list[frozenset[int]]
    defaults: dict

    @property
    def n(self) -> int:
        return len(self.hypotheses)

    @property
    def has_p_values(self) -> bool:
        return all(h.p is not None for h in self.hypotheses)

    def p_values(self) -> np.ndarray:
        if not self.has_p_values:
            missing = [h.name for h in self.hypotheses if h.p is None]
            raise MissingData(
                f"study file has placeholder p-values for {missing}; "
                "fill them in to replay"
            )
        return np.array([h.p for h in self.hypotheses])

    @classmethod
    def parse(cls, path) -> "ReplayStudy":
        hyps: list[StudyHypothesis] = []
        overrides: dict[int, frozenset[int]] = {}
        defaults: dict = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                try:
                    if line.lower().startswith("conflicts"):
                        head, _, rhs = line.partition("=")
                        name = head.split()[1].strip()
                        idx = int(name.lstrip("T"))
                        members = frozenset(
                            int(v.strip().lstrip("T")) for v in rhs.split(",") if v.strip()
                        )
                        overrides[idx] = members
                    elif line.startswith("T"):
                        parts = line.split()
                        idx = int(parts[0].lstrip("T"))
                        fields = dict(kv.split("=", 1) for kv in parts[1:])
                        p_raw = fields.get("p", "NA")
                        p = None if p_raw.upper() in ("NA", "?", "NONE") else float(p_raw)
                        if p is not None and not 0.0 <= p <= 1.0:
                            raise ValueError(f"p-value {p} outside [0, 1]")
                        hyps.append(
                            StudyHypothesis(
                                index=idx,
                                name=parts[0],
                                enter=float(fields["enter"]),
                                exit=float(fields["exit"]),
                                p=p,
                            )
                        )
                    else:
                        key, _, rhs = line.partition("=")
                        key = key.strip().lower()
                        if key == "lambda":
                            key = "lam"
                        if key not in ("alpha", "tau", "lam", "q"):
                            raise ValueError(f"unknown key {key!r}")
                        defaults[key] = float(rhs.strip())
                except (ValueError, KeyError, IndexError) as exc:
                    raise InvalidConfig(f"{path}:{lineno}: {exc}") from None
        hyps.sort(key=lambda h: h.index)
        if [h.index for h in hyps] != list(range(1, len(hyps) + 1)):
            raise InvalidConfig("hypothesis indices must be consecutive from T1")
        sets = []
        for i, h in enumerate(hyps, start=1):
            if i in overrides:
                sets.append(overrides[i])
            else:
                sets.append(
                    frozenset(j for j in range(1, i) if hyps[j - 1].exit >= h.enter)
                )
        validate_conflicts(ConflictStructure(sets))
        return cls(hypotheses=hyps, conflict_sets=sets, defaults=defaults)


@dataclass
class ReplayReport:
    procedure: str
    q: float
    rejections: int
    future_level: float
    levels: np.ndarray
    decisions: np.ndarray

    def summary(self, full_precision: bool = False) -> str:
        fl = repr(self.future_level) if full_precision else f"{self.future_level:.4f}"
        return (
            f"procedure={self.procedure} q={self.q:g} "
            f"rejections={self.rejections} future-level={fl}"
        )


def _generalized_spending_levels(sets, p, alpha, tau, lam, spec: GammaSpec) -> np.ndarray:
    """Spending counter generalized to arbitrary monotone conflict sets.

    t(i) = 1 + |X_i| + sum_{j < i, j not in X_i} (S_j - C_j); under
    contiguous-suffix sets this is the usual locally shifted counter.
    """
    n = len(sets)
    s = (p <= tau).astype(int)
    c = (p <= lam).astype(int)
    levels = np.empty(n)
    for i in range(1, n + 1):
        x = sets[i - 1]
        t = 1 + len(x) + sum(s[j - 1] - c[j - 1] for j in range(1, i) if j not in x)
        levels[i - 1] = alpha * (tau - lam) * spec.value(t)
    return levels


def replay_study(
    study: ReplayStudy,
    procedure: str = "graph",
    q: float = 0.6,
    alpha: float | None = None,
    tau: float | None = None,
    lam: float | None = None,
) -> ReplayReport:
    """Replay a recorded study and report rejections plus future level.

    ``procedure`` is ``"graph"`` (conflict-renormalized recycling graph) or
    ``"spending"`` (generalized locally shifted spending); the seed sequence
    is geometric with ratio ``q``.
    """
    alpha = study.defaults.get("alpha", 0.05) if alpha is None else alpha
    tau = study.defaults.get("tau", 0.8) if tau is None else tau
    lam = study.defaults.get("lam", 0.3) if lam is None else lam
    spec = GammaSpec(kind="geometric", q=q)
    p = study.p_values()
    n = study.n
    sets = study.conflict_sets
    s = (p <= tau).astype(int)
    c = (p <= lam).astype(int)

    if procedure == "spending":
        levels = _generalized_spending_levels(sets, p, alpha, tau, lam, spec)
        decisions = p <= levels
        # continuation counter: no conflicts past the horizon
        t_next = 1 + int(np.sum(s - c))
        future = alpha * spec.tail_sum(t_next - 1)
    elif procedure == "graph":
        engine = GraphConf(alpha=alpha, tau=tau, lam=lam, gamma=spec)
        levels = np.empty(n)
        observed: set[int] = set()
        for i in range(1, n + 1):
            for j in range(1, i):
                if j not in sets[i - 1] and j not in observed:
                    engine.observe(j, float(p[j - 1]))
                    observed.add(j)
            levels[i - 1] = engine.level(i, conflicts=sets[i - 1])
        for j in range(1, n + 1):
            if j not in observed:
                engine.observe(j, float(p[j - 1]))
        decisions = p <= levels
        u = c - s + 1
        carried = sum(
            u[j - 1] * engine._alpha_tilde[j - 1] * engine._renorm.tail_mass(j, n)
            for j in range(1, n + 1)
        )
        future = alpha * spec.tail_sum(n) + carried
    else:
        raise InvalidConfig(f"unknown replay procedure {procedure!r}")

    return ReplayReport(
        procedure=procedure,
        q=q,
        rejections=int(np.sum(decisions)),
        future_level=float(future),
        levels=levels,
        decisions=decisions,
    )


def untested_future_level(spec: GammaSpec, alpha: float) -> float:
    """Future level before anything is tested: the whole seed budget."""
    return alpha * spec.tail_sum(0)
