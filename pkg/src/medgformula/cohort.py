"""Longitudinal cohort data model, validation, and the subject-interval
(counting process) transformation that feeds the outcome model.

Time semantics
--------------
A cohort with K mediator visits carries K+1 grid times ``visit_times`` with
``visit_times[0] == 0``.  Mediator measurement k (1-based) is taken at
``visit_times[k-1]``; it governs follow-up window k, which spans
``(visit_times[k-1], visit_times[k]]`` for k < K and is open-ended for k = K
(each subject's last window runs to their own event/censoring time).  The
death indicator ``D_k`` records a competing death anywhere inside window k.
``visit_times[K]`` is the nominal end of the measurement schedule and must
not exceed the reporting horizon.

Missing mediator values are allowed only after death ("missing by death");
any other missingness is rejected because imputation is out of scope here.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import CohortValidationError, EventTimeNonPositive

OUTCOME = "outcome"
COMPETING_DEATH = "competing_death"
CENSORED = "censored"

#: CSV ``event`` codes by position: 0 = censored, 1 = outcome, 2 = competing death.
EVENT_FLAGS = (CENSORED, OUTCOME, COMPETING_DEATH)

#: Literal cell token marking a mediator measurement missing because of death.
DEATH_TOKEN = "DEATH"


@dataclass(frozen=True)
class SubjectRecord:
    """One subject: baseline data, K mediator slots, K death indicators, exit event.

    ``mediator`` uses NaN for missing-by-death entries; the death indicator
    vector determines whether a NaN is legitimate.
    """

    id: str
    exposure: float
    baseline_covariates: np.ndarray
    mediator: np.ndarray
    death_indicator: np.ndarray
    event_time: float
    event_flag: str

    def __post_init__(self):
        object.__setattr__(self, "baseline_covariates",
                           np.asarray(self.baseline_covariates, dtype=float))
        object.__setattr__(self, "mediator", np.asarray(self.mediator, dtype=float))
        object.__setattr__(self, "death_indicator",
                           np.asarray(self.death_indicator, dtype=np.int8))
        for name in ("baseline_covariates", "mediator", "death_indicator"):
            getattr(self, name).flags.writeable = False


@dataclass(frozen=True)
class CohortDataset:
    """Ordered collection of subjects on a common visit grid."""

    subjects: tuple
    n_visits: int
    visit_times: tuple
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "visit_times", tuple(float(t) for t in self.visit_times))

    @property
    def n_subjects(self):
        return len(self.subjects)

    @property
    def n_baseline(self):
        return int(self.subjects[0].baseline_covariates.shape[0]) if self.subjects else 0


@dataclass(frozen=True)
class Violation:
    """One validation failure: offending subject (or None for grid issues) and rule."""

    subject_id: str | None
    rule: str
    detail: str

    def __str__(self):
        where = self.subject_id if self.subject_id is not None else "<dataset>"
        return f"[{self.rule}] subject={where}: {self.detail}"


def window_index(visit_times, n_visits, t):
    """1-based follow-up window containing time ``t`` (> 0).

    Interior boundaries are ``visit_times[1..K-1]``; everything after
    ``visit_times[K-1]`` belongs to window K.
    """
    interior = np.asarray(visit_times[1:n_visits])
    return int(np.searchsorted(interior, t, side="left")) + 1


def _check_grid(cohort):
    out = []
    vt = np.asarray(cohort.visit_times, dtype=float)
    k = cohort.n_visits
    if k < 1:
        out.append(Violation(None, "NonMonotoneVisitTimes", "n_visits must be >= 1"))
        return out
    if vt.shape[0] != k + 1:
        out.append(Violation(None, "NonMonotoneVisitTimes",
                             f"expected {k + 1} visit times, got {vt.shape[0]}"))
        return out
    if vt[0] != 0.0:
        out.append(Violation(None, "NonMonotoneVisitTimes", "visit_times[0] must be 0"))
    if np.any(np.diff(vt) <= 0):
        out.append(Violation(None, "NonMonotoneVisitTimes", "visit_times must be strictly increasing"))
    if not np.all(np.isfinite(vt)):
        out.append(Violation(None, "NonMonotoneVisitTimes", "visit_times must be finite"))
    if not (math.isfinite(cohort.horizon) and cohort.horizon >= vt[-1]):
        out.append(Violation(None, "NonMonotoneVisitTimes",
                             f"horizon {cohort.horizon} must be finite and >= visit_times[{k}]={vt[-1]}"))
    return out


def _check_subject(subj, k, p, visit_times):
    out = []
    sid = subj.id
    if subj.mediator.shape != (k,) or subj.death_indicator.shape != (k,):
        out.append(Violation(sid, "ShapeMismatch",
                             f"mediator/death vectors must have length {k}"))
        return out
    if subj.baseline_covariates.shape != (p,):
        out.append(Violation(sid, "ShapeMismatch",
                             f"baseline covariate vector must have length {p}"))
        return out
    if not math.isfinite(subj.exposure):
        out.append(Violation(sid, "NonFiniteValue", "exposure is not finite"))
    if not np.all(np.isfinite(subj.baseline_covariates)):
        out.append(Violation(sid, "NonFiniteValue", "baseline covariates contain non-finite values"))
    if subj.event_flag not in EVENT_FLAGS:
        out.append(Violation(sid, "UnknownEventFlag", f"event_flag {subj.event_flag!r}"))
        return out
    if not (math.isfinite(subj.event_time) and subj.event_time > 0):
        out.append(Violation(sid, "EventTimeNonPositive",
                             f"event_time {subj.event_time} must be positive and finite"))
        return out

    d = subj.death_indicator
    if np.any((d != 0) & (d != 1)):
        out.append(Violation(sid, "NonAbsorbingDeath", "death indicators must be 0/1"))
        return out
    if np.any(np.diff(d) < 0):
        out.append(Violation(sid, "NonAbsorbingDeath",
                             f"death vector {d.tolist()} is not non-decreasing"))
        return out

    j = window_index(visit_times, k, subj.event_time)
    if subj.event_flag == COMPETING_DEATH:
        expected = (np.arange(1, k + 1) >= j).astype(np.int8)
        if not np.array_equal(d, expected):
            out.append(Violation(sid, "DeathIndicatorMismatch",
                                 f"competing death in window {j} requires D={expected.tolist()}, got {d.tolist()}"))
    elif subj.event_flag == CENSORED:
        if np.any(d != 0):
            out.append(Violation(sid, "DeathIndicatorMismatch",
                                 "censored subject cannot carry observed death indicators"))
    else:  # outcome: no death may precede the event's window
        if np.any(d[: j - 1] != 0):
            out.append(Violation(sid, "DeathIndicatorMismatch",
                                 f"death indicator precedes outcome window {j}"))

    # Mediator k is measured at the start of window k, hence requires
    # survival through window k-1.
    for kk in range(1, k + 1):
        alive_at_measure = (kk == 1) or (d[kk - 2] == 0)
        value = subj.mediator[kk - 1]
        present = not np.isnan(value)
        if present and not np.isfinite(value):
            out.append(Violation(sid, "NonFiniteValue", f"mediator m_{kk} is not finite"))
        elif present and not alive_at_measure:
            out.append(Violation(sid, "MediatorAfterDeath",
                                 f"m_{kk} present but subject dead by window {kk - 1}"))
        elif (not present) and alive_at_measure:
            out.append(Violation(sid, "MediatorMissingAtRandom",
                                 f"m_{kk} missing without a preceding death (imputation is out of scope)"))
    return out


def collect_violations(cohort):
    """Complete list of invariant violations in ``cohort`` (empty when valid)."""
    violations = _check_grid(cohort)
    if violations:
        return violations
    if not cohort.subjects:
        return [Violation(None, "EmptyCohort", "dataset has no subjects")]
    p = cohort.n_baseline
    seen = set()
    for subj in cohort.subjects:
        if subj.id in seen:
            violations.append(Violation(subj.id, "DuplicateId", "subject id occurs more than once"))
        seen.add(subj.id)
        violations.extend(_check_subject(subj, cohort.n_visits, p, cohort.visit_times))
    return violations


def validate_cohort(raw):
    """Return ``raw`` unchanged iff every invariant holds.

    Raises :class:`CohortValidationError` carrying the complete violation
    list otherwise.  Idempotent: validating a validated dataset returns the
    same object.
    """
    violations = collect_violations(raw)
    if violations:
        raise CohortValidationError(violations)
    return raw


# ---------------------------------------------------------------------------
# Columnar view used by the engine and bootstrap internals.

@dataclass(frozen=True)
class CohortArrays:
    """Columnar copy of a cohort for vectorized work; rows follow subject order."""

    exposure: np.ndarray      # (n,)
    baseline: np.ndarray      # (n, p)
    mediator: np.ndarray      # (n, K), NaN = missing by death
    death: np.ndarray         # (n, K) int8
    event_time: np.ndarray    # (n,)
    flag_code: np.ndarray     # (n,) int8 indexing EVENT_FLAGS
    visit_times: tuple
    horizon: float

    @classmethod
    def from_dataset(cls, cohort):
        n = cohort.n_subjects
        k = cohort.n_visits
        p = cohort.n_baseline
        exposure = np.empty(n)
        baseline = np.empty((n, p))
        mediator = np.empty((n, k))
        death = np.empty((n, k), dtype=np.int8)
        event_time = np.empty(n)
        flag_code = np.empty(n, dtype=np.int8)
        flag_index = {name: i for i, name in enumerate(EVENT_FLAGS)}
        for i, s in enumerate(cohort.subjects):
            exposure[i] = s.exposure
            baseline[i] = s.baseline_covariates
            mediator[i] = s.mediator
            death[i] = s.death_indicator
            event_time[i] = s.event_time
            flag_code[i] = flag_index[s.event_flag]
        return cls(exposure, baseline, mediator, death, event_time, flag_code,
                   tuple(cohort.visit_times), float(cohort.horizon))

    @property
    def n_subjects(self):
        return self.exposure.shape[0]

    @property
    def n_visits(self):
        return self.mediator.shape[1]

    @property
    def n_baseline(self):
        return self.baseline.shape[1]

    def take(self, idx):
        """Row subset/resample (used by the bootstrap)."""
        return CohortArrays(self.exposure[idx], self.baseline[idx], self.mediator[idx],
                            self.death[idx], self.event_time[idx], self.flag_code[idx],
                            self.visit_times, self.horizon)


def as_arrays(cohort):
    if isinstance(cohort, CohortArrays):
        return cohort
    return CohortArrays.from_dataset(cohort)


# ---------------------------------------------------------------------------
# Counting process transformation.

@dataclass(frozen=True)
class CountingProcessTable:
    """Subject-interval rows ``(t_start, t_stop]`` with the current mediator value.

    ``subject_index`` maps each row back to its subject's position in the
    source cohort; ``l0_names`` label the baseline covariate columns.
    """

    subject_index: np.ndarray   # (R,) int
    subject_id: tuple           # per-subject ids, indexed by subject_index
    t_start: np.ndarray         # (R,)
    t_stop: np.ndarray          # (R,)
    outcome_event: np.ndarray   # (R,) int8
    exposure: np.ndarray        # (R,)
    baseline: np.ndarray        # (R, p)
    mediator: np.ndarray        # (R,)
    l0_names: tuple

    @property
    def n_rows(self):
        return self.t_start.shape[0]

    @property
    def column_names(self):
        return ("exposure", "mediator") + self.l0_names

    def design(self, covariates=None):
        """Design matrix for the requested columns (default: all)."""
        if covariates is None:
            covariates = self.column_names
        cols = []
        for name in covariates:
            if name == "exposure":
                cols.append(self.exposure)
            elif name == "mediator":
                cols.append(self.mediator)
            elif name in self.l0_names:
                cols.append(self.baseline[:, self.l0_names.index(name)])
            else:
                raise KeyError(f"unknown counting-process column {name!r}")
        return np.column_stack(cols), tuple(covariates)


def to_counting_process(cohort, clip_horizon=False):
    """Expand a validated cohort into counting-process rows.

    Each subject contributes one row per follow-up window intersecting
    ``(0, t]`` where ``t`` is their event/censoring time; the last row is
    clipped to ``t`` and carries the outcome event marker when the record
    ends in the outcome.  Competing death and censoring close the record
    with ``outcome_event = 0``.  With ``clip_horizon`` the follow-up is
    administratively cut at the cohort horizon.
    """
    arr = as_arrays(cohort)
    ids = (tuple(s.id for s in cohort.subjects)
           if isinstance(cohort, CohortDataset)
           else tuple(str(i) for i in range(arr.n_subjects)))
    if np.any(arr.event_time <= 0):
        bad = int(np.argmax(arr.event_time <= 0))
        raise EventTimeNonPositive(f"subject {ids[bad]}: event_time={arr.event_time[bad]}")

    k = arr.n_visits
    vt = np.asarray(arr.visit_times)
    win_start = vt[:k]
    outcome_code = EVENT_FLAGS.index(OUTCOME)

    t_eff = arr.event_time.copy()
    is_outcome = arr.flag_code == outcome_code
    if clip_horizon:
        over = t_eff > arr.horizon
        is_outcome = is_outcome & ~over
        t_eff = np.minimum(t_eff, arr.horizon)

    sub_idx, starts, stops, events, meds = [], [], [], [], []
    for i in range(arr.n_subjects):
        t = t_eff[i]
        for kk in range(k):
            if win_start[kk] >= t:
                break
            stop = t if kk == k - 1 else min(vt[kk + 1], t)
            med = arr.mediator[i, kk]
            if np.isnan(med):  # impossible on validated data: rows end before death
                raise AssertionError(f"missing mediator inside follow-up, subject {ids[i]}")
            sub_idx.append(i)
            starts.append(win_start[kk])
            stops.append(stop)
            events.append(1 if (stop == t and is_outcome[i]) else 0)
            meds.append(med)

    sub_idx = np.asarray(sub_idx, dtype=int)
    return CountingProcessTable(
        subject_index=sub_idx,
        subject_id=ids,
        t_start=np.asarray(starts, dtype=float),
        t_stop=np.asarray(stops, dtype=float),
        outcome_event=np.asarray(events, dtype=np.int8),
        exposure=arr.exposure[sub_idx],
        baseline=arr.baseline[sub_idx],
        mediator=np.asarray(meds, dtype=float),
        l0_names=tuple(f"l0_{j + 1}" for j in range(arr.n_baseline)),
    )


# ---------------------------------------------------------------------------
# CSV interface: id, exposure, l0_1..l0_p, m_1..m_K, d_1..d_K, time, event

def _fmt(x):
    return repr(float(x))


def write_cohort_csv(cohort, path):
    """Write the canonical cohort CSV; missing-by-death mediator cells are ``DEATH``."""
    k = cohort.n_visits
    p = cohort.n_baseline
    header = (["id", "exposure"]
              + [f"l0_{j + 1}" for j in range(p)]
              + [f"m_{j + 1}" for j in range(k)]
              + [f"d_{j + 1}" for j in range(k)]
              + ["time", "event"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for s in cohort.subjects:
            row = [s.id, _fmt(s.exposure)]
            row += [_fmt(v) for v in s.baseline_covariates]
            row += [DEATH_TOKEN if np.isnan(v) else _fmt(v) for v in s.mediator]
            row += [str(int(v)) for v in s.death_indicator]
            row += [_fmt(s.event_time), str(EVENT_FLAGS.index(s.event_flag))]
            w.writerow(row)


def read_cohort_csv(path, n_visits, visit_times, horizon,
                    exposure_column="exposure", covariate_columns=None):
    """Load a cohort CSV written in the canonical column layout.

    ``covariate_columns`` selects the baseline columns used downstream
    (default: every ``l0_*`` column in header order).  Visit times and the
    horizon come from run configuration, not the file.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortValidationError(
                [Violation(None, "EmptyCohort", f"{path}: empty file")]) from None
        rows = list(reader)

    col = {name: i for i, name in enumerate(header)}
    if covariate_columns is None:
        covariate_columns = [h for h in header if re.fullmatch(r"l0_\d+", h)]
    needed = ([str("id"), exposure_column] + list(covariate_columns)
              + [f"m_{j + 1}" for j in range(n_visits)]
              + [f"d_{j + 1}" for j in range(n_visits)]
              + ["time", "event"])
    missing = [c for c in needed if c not in col]
    if missing:
        raise CohortValidationError(
            [Violation(None, "MissingColumns", f"{path}: missing columns {missing}")])

    def parse_med(cell):
        return math.nan if cell.strip() == DEATH_TOKEN else float(cell)

    subjects = []
    for raw in rows:
        if not raw:
            continue
        code = int(raw[col["event"]])
        if code not in (0, 1, 2):
            raise CohortValidationError(
                [Violation(raw[col["id"]], "UnknownEventFlag", f"event code {code}")])
        subjects.append(SubjectRecord(
            id=raw[col["id"]],
            exposure=float(raw[col[exposure_column]]),
            baseline_covariates=[float(raw[col[c]]) for c in covariate_columns],
            mediator=[parse_med(raw[col[f"m_{j + 1}"]]) for j in range(n_visits)],
            death_indicator=[int(raw[col[f"d_{j + 1}"]]) for j in range(n_visits)],
            event_time=float(raw[col["time"]]),
            event_flag=EVENT_FLAGS[code],
        ))
    return CohortDataset(subjects=tuple(subjects), n_visits=n_visits,
                         visit_times=tuple(visit_times), horizon=float(horizon))
