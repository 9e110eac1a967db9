"""Time-to-event analysis: Kaplan-Meier, two-group log-rank, Cox regression.

Ties are handled the standard way throughout: subjects censored at an event
time stay in the risk set for that time, and the Cox partial likelihood uses
the Breslow approximation for tied events.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc

from .errors import (
    ConstantCovariateError,
    DivergedError,
    EmptyCohortError,
    NegativeStatisticError,
    NoEventsError,
)


@dataclass(frozen=True)
class SubjectRecord:
    id: str
    time_years: float
    event: bool
    covariates: dict[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.time_years > 0:
            raise ValueError(f"subject {self.id}: follow-up time must be positive")


def chi2_sf(x: float, df: int = 1) -> float:
    """Chi-squared upper tail via the regularized incomplete gamma."""
    if x < 0:
        raise NegativeStatisticError(f"chi-squared statistic must be nonnegative, got {x}")
    if df < 1:
        raise ValueError("df must be a positive integer")
    return float(gammaincc(df / 2.0, x / 2.0))


def normal_sf(z: float) -> float:
    """Standard normal upper tail."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


# --- Kaplan-Meier --------------------------------------------------------------


@dataclass(frozen=True)
class KmCurve:
    """Product-limit estimate: survival steps at the distinct event times."""

    times: tuple[float, ...]  # distinct event times, ascending
    survival: tuple[float, ...]  # S(t) just after each event time
    at_risk: tuple[int, ...]  # n at risk just before each event time
    n_events: tuple[int, ...]  # events at each time
    censoring_times: tuple[float, ...]  # censored follow-up times, ascending


def kaplan_meier(records) -> KmCurve:
    records = list(records)
    if not records:
        raise EmptyCohortError("empty cohort")
    for r in records:
        r.validate()
    times = np.asarray([r.time_years for r in records])
    events = np.asarray([r.event for r in records], dtype=bool)
    event_times = np.unique(times[events])
    out_t, out_s, out_n, out_d = [], [], [], []
    s = 1.0
    for t in event_times:
        n_at_risk = int((times >= t).sum())
        d = int(((times == t) & events).sum())
        # (n - d)/n rather than 1 - d/n: exact for small integer counts, so
        # hand-computed fractions like 2/3 compare bit-for-bit
        s *= (n_at_risk - d) / n_at_risk
        out_t.append(float(t))
        out_s.append(s)
        out_n.append(n_at_risk)
        out_d.append(d)
    return KmCurve(
        times=tuple(out_t),
        survival=tuple(out_s),
        at_risk=tuple(out_n),
        n_events=tuple(out_d),
        censoring_times=tuple(sorted(float(t) for t, e in zip(times, events) if not e)),
    )


def km_event_estimate(curve: KmCurve, horizon: float) -> float:
    """Cumulative event probability 1 - S(horizon); 0 before the first event."""
    est = 0.0
    for t, s in zip(curve.times, curve.survival):
        if t <= horizon:
            est = 1.0 - s
        else:
            break
    return est


def km_to_csv(curve: KmCurve) -> str:
    lines = ["time_years,survival,at_risk,events"]
    lines.append(f"0.0,1.0,{(curve.at_risk[0] if curve.at_risk else 0)},0")
    for t, s, n, d in zip(curve.times, curve.survival, curve.at_risk, curve.n_events):
        lines.append(f"{t!r},{s!r},{n},{d}")
    return "\n".join(lines) + "\n"


# --- log-rank -------------------------------------------------------------------


@dataclass(frozen=True)
class LogRankResult:
    chi2: float
    p_value: float
    observed_a: float
    expected_a: float


def log_rank(group_a, group_b) -> LogRankResult:
    """Two-group log-rank test with the hypergeometric variance.

    Time points where the pooled risk set has a single subject contribute no
    variance. Zero total variance (e.g. identical groups of one) gives
    chi2 = 0, p = 1.
    """
    a = list(group_a)
    b = list(group_b)
    if not a or not b:
        raise EmptyCohortError("both groups must be nonempty")
    for r in a + b:
        r.validate()
    ta = np.asarray([r.time_years for r in a])
    ea = np.asarray([r.event for r in a], dtype=bool)
    tb = np.asarray([r.time_years for r in b])
    eb = np.asarray([r.event for r in b], dtype=bool)
    pooled_event_times = np.unique(np.concatenate([ta[ea], tb[eb]]))
    if pooled_event_times.size == 0:
        raise NoEventsError("no events in either group")
    obs_a = exp_a = var = u = 0.0
    for t in pooled_event_times:
        n_a = int((ta >= t).sum())
        n_b = int((tb >= t).sum())
        d_a = int(((ta == t) & ea).sum())
        d_b = int(((tb == t) & eb).sum())
        n = n_a + n_b
        d = d_a + d_b
        obs_a += d_a
        exp_a += d * n_a / n
        # integer cross product keeps the statistic exactly antisymmetric
        # under a group swap, so chi2 is bit-identical either way round
        u += (d_a * n_b - d_b * n_a) / n
        if n > 1:
            var += d * (n_a / n) * (n_b / n) * (n - d) / (n - 1)
    if var == 0.0:
        return LogRankResult(chi2=0.0, p_value=1.0, observed_a=obs_a, expected_a=exp_a)
    chi2 = u ** 2 / var
    return LogRankResult(chi2=chi2, p_value=chi2_sf(chi2, 1), observed_a=obs_a, expected_a=exp_a)


# --- Cox proportional hazards ----------------------------------------------------


@dataclass(frozen=True)
class CoxCovariateResult:
    name: str
    beta: float
    se: float
    hazard_ratio: float
    ci_low: float
    ci_high: float
    p_value: float


@dataclass(frozen=True)
class CoxResult:
    covariates: tuple[CoxCovariateResult, ...]
    log_likelihood: float
    iterations: int

    def by_name(self, name: str) -> CoxCovariateResult:
        for c in self.covariates:
            if c.name == name:
                return c
        raise KeyError(name)


_Z_95 = 1.959964  # two-sided 95% normal quantile, fixed for reproducibility


def _cox_quantities(beta: np.ndarray, x: np.ndarray, times: np.ndarray, events: np.ndarray):
    """Breslow partial log-likelihood, score vector and information matrix."""
    order = np.argsort(-times, kind="mergesort")  # descending: suffix sums become prefixes
    xt = x[order]
    tt = times[order]
    ev = events[order]
    eta = xt @ beta
    eta -= eta.max()  # guard exp overflow; cancels in every ratio below
    w = np.exp(eta)
    p = x.shape[1]
    s0 = 0.0
    s1 = np.zeros(p)
    s2 = np.zeros((p, p))
    ll = 0.0
    score = np.zeros(p)
    info = np.zeros((p, p))
    i = 0
    n = len(tt)
    while i < n:
        j = i
        while j < n and tt[j] == tt[i]:
            j += 1
        # everyone with this time enters the risk set before its events score
        for m in range(i, j):
            s0 += w[m]
            s1 += w[m] * xt[m]
            s2 += w[m] * np.outer(xt[m], xt[m])
        d = int(ev[i:j].sum())
        if d > 0:
            xsum = xt[i:j][ev[i:j]].sum(axis=0)
            mean = s1 / s0
            # the max-shift on eta cancels: each event adds (eta - M) - (log s0 - M)
            ll += float(eta[i:j][ev[i:j]].sum()) - d * float(np.log(s0))
            score += xsum - d * mean
            info += d * (s2 / s0 - np.outer(mean, mean))
        i = j
    return ll, score, info


def cox_fit(records, covariate_names, max_iter: int = 50) -> CoxResult:
    """Newton-Raphson fit of a Cox proportional-hazards model (Breslow ties).

    Converges when max|score| < 1e-8 or the log-likelihood moves < 1e-10; the
    step is halved while it would decrease the likelihood. A coefficient
    walking past |beta| = 50, or a singular information matrix, raises
    DivergedError.
    """
    records = list(records)
    if not records:
        raise EmptyCohortError("empty cohort")
    for r in records:
        r.validate()
    names = list(covariate_names)
    if not names:
        raise ValueError("need at least one covariate")
    try:
        x = np.asarray([[float(r.covariates[c]) for c in names] for r in records])
    except KeyError as exc:
        raise ValueError(f"subject missing covariate {exc.args[0]!r}") from exc
    times = np.asarray([r.time_years for r in records])
    events = np.asarray([r.event for r in records], dtype=bool)
    if not events.any():
        raise NoEventsError("no observed events")
    for jc, name in enumerate(names):
        if np.ptp(x[:, jc]) == 0.0:
            raise ConstantCovariateError(f"covariate {name!r} is constant")
    center = x.mean(axis=0)
    xc = x - center  # centering leaves beta/se unchanged, improves conditioning

    beta = np.zeros(len(names))
    ll, score, info = _cox_quantities(beta, xc, times, events)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        try:
            delta = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as exc:
            raise DivergedError("singular information matrix") from exc
        new_beta = beta + delta
        new_ll, new_score, new_info = _cox_quantities(new_beta, xc, times, events)
        halvings = 0
        while not new_ll >= ll and halvings < 30:  # also catches nan
            delta /= 2.0
            new_beta = beta + delta
            new_ll, new_score, new_info = _cox_quantities(new_beta, xc, times, events)
            halvings += 1
        if not np.isfinite(new_ll):
            raise DivergedError("log-likelihood became non-finite")
        beta, prev_ll, ll, score, info = new_beta, ll, new_ll, new_score, new_info
        if np.any(np.abs(beta) > 50.0):
            raise DivergedError(f"coefficient left the trust region: {beta}")
        if np.max(np.abs(score)) < 1e-8 or abs(ll - prev_ll) < 1e-10:
            break
    else:
        raise DivergedError(f"no convergence in {max_iter} iterations")
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise DivergedError("singular information matrix at the optimum") from exc
    with np.errstate(invalid="ignore"):
        se = np.sqrt(np.diag(cov))
    # a flat partial likelihood (se beyond any usable scale) means the data
    # do not identify beta: perfect separation that stalled inside |beta|<=50
    if not np.all(np.isfinite(se)) or np.any(se > 100.0):
        raise DivergedError("near-zero information at the optimum, likely separation")
    out = []
    for jc, name in enumerate(names):
        b = float(beta[jc])
        s = float(se[jc])
        out.append(
            CoxCovariateResult(
                name=name,
                beta=b,
                se=s,
                hazard_ratio=math.exp(b),
                ci_low=math.exp(b - _Z_95 * s),
                ci_high=math.exp(b + _Z_95 * s),
                p_value=2.0 * normal_sf(abs(b) / s) if s > 0 else float("nan"),
            )
        )
    return CoxResult(covariates=tuple(out), log_likelihood=float(ll), iterations=iterations)


def cox_to_json(result: CoxResult) -> str:
    return json.dumps(
        {
            "log_likelihood": result.log_likelihood,
            "iterations": result.iterations,
            "covariates": [
                {
                    "name": c.name,
                    "beta": c.beta,
                    "se": c.se,
                    "hazard_ratio": c.hazard_ratio,
                    "ci_low": c.ci_low,
                    "ci_high": c.ci_high,
                    "p_value": c.p_value,
                }
                for c in result.covariates
            ],
        },
        sort_keys=True,
        indent=2,
    )


# --- cohort CSV -------------------------------------------------------------------

_FIXED_COLUMNS = ("id", "time_years", "event")
_KNOWN_COVARIATES = ("ai_cac", "cac", "ai_cac_category", "esc_class")


def cohort_to_csv(records) -> str:
    """Header: id,time_years,event, the known covariates in canonical order,
    then any extra covariates sorted by name."""
    records = list(records)
    extra = sorted({k for r in records for k in r.covariates} - set(_KNOWN_COVARIATES))
    known = [k for k in _KNOWN_COVARIATES if any(k in r.covariates for r in records)]
    cols = list(_FIXED_COLUMNS) + known + extra
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in records:
        row = [r.id, repr(float(r.time_years)), int(r.event)]
        row += [repr(float(r.covariates[k])) if k in r.covariates else "" for k in known + extra]
        writer.writerow(row)
    return buf.getvalue()


def cohort_from_csv(text: str) -> list[SubjectRecord]:
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows:
        raise ValueError("empty cohort file")
    header = rows[0]
    for col in _FIXED_COLUMNS:
        if col not in header:
            raise ValueError(f"cohort file lacks required column {col!r}")
    idx = {c: header.index(c) for c in header}
    cov_cols = [c for c in header if c not in _FIXED_COLUMNS]
    records = []
    for row in rows[1:]:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        covs = {}
        for c in cov_cols:
            cell = row[idx[c]].strip()
            if cell:
                covs[c] = float(cell)
        records.append(
            SubjectRecord(
                id=row[idx["id"]],
                time_years=float(row[idx["time_years"]]),
                event=bool(int(row[idx["event"]])),
                covariates=covs,
            )
        )
    return records
