"""Session-dependent and session-to-session protocols, accuracy tables and paired t-tests."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import csv
import io
import itertools
import json
import math
import multiprocessing
import os

import numpy as np

from .errors import InvalidStateError
from .methods import METHODS, make_method, method_name
from .nn import TrainConfig
from .rng import derive_rng, derive_seed
from .signal import CONDITIONS, Condition, design_highpass, filter_rows

SESSION_DEPENDENT = "session-dependent"
SESSION_TO_SESSION = "session-to-session"
PROTOCOLS = (SESSION_DEPENDENT, SESSION_TO_SESSION)


@dataclass(frozen=True)
class ProtocolSpec:
    kind: str
    montage: str
    speed: Condition
    method: str
    seed: int = 0
    k_folds: int = 5

    def __post_init__(self):
        if self.kind not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, got {self.kind!r}")
        object.__setattr__(self, "speed", Condition(self.speed))
        object.__setattr__(self, "method", method_name(self.method))
        if self.kind == SESSION_TO_SESSION and self.speed == Condition.STANDING:
            raise ValueError("session-to-session tests on a walking condition; Standing is the training side")
        if self.kind == SESSION_DEPENDENT and self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")

    @property
    def training_free(self):
        return self.method == "CCA"


def accuracy(pred, labels):
    pred, labels = np.asarray(pred), np.asarray(labels)
    if pred.shape != labels.shape or labels.size == 0:
        raise ValueError("predictions and labels must be equally long and nonempty")
    return float(np.sum(pred == labels)) / labels.size


def kfold_split(labels, k, seed=0):
    """Stratified k-fold partition as a list of ``(train_idx, test_idx)``.

    Each class is shuffled and dealt round-robin over the folds, so fold
    sizes differ by at most one per class.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    rng = derive_rng(seed, "kfold")
    fold_of = np.empty(n, dtype=int)
    offset = 0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        # continue the round-robin where the last class stopped to balance totals
        fold_of[idx] = (np.arange(len(idx)) + offset) % k
        offset = (offset + len(idx)) % k
    out = []
    for f in range(k):
        test = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        out.append((train, test))
    return out


def preprocess_set(epochs, fir=None):
    """High-pass every epoch of an ``EpochSet``; returns a new set."""
    fir = fir or design_highpass(rate=epochs.rate)
    out = epochs.select(np.arange(len(epochs)))
    out.data = filter_rows(fir, epochs.data)
    return out


# ------------------------------------------------------------ protocol runs

def _fit_predict(method, rate, n_samples, seed, train_cfg, x_train, y_train, x_test):
    m = make_method(method, rate, n_samples, seed, train_cfg)
    m.fit(x_train, y_train)
    return np.asarray(m.predict(x_test))


def _subject_task(args):
    kind, method, rate, seed, k_folds, train_cfg, sid, speed, x, y, x_test, y_test = args
    n_samples = x.shape[-1]
    if kind == SESSION_DEPENDENT:
        correct = 0
        folds = kfold_split(y, k_folds, derive_seed(seed, "folds", sid, speed))
        for fi, (tr, te) in enumerate(folds):
            if np.intersect1d(tr, te).size:
                raise InvalidStateError("train and test folds overlap")
            fseed = derive_seed(seed, SESSION_DEPENDENT, sid, speed, fi)
            pred = _fit_predict(method, rate, n_samples, fseed, train_cfg, x[tr], y[tr], x[te])
            correct += int(np.sum(pred == y[te]))
        return correct / len(y)
    fseed = derive_seed(seed, SESSION_TO_SESSION, sid, speed)
    pred = _fit_predict(method, rate, n_samples, fseed, train_cfg, x, y, x_test)
    return accuracy(pred, y_test)


def _run_tasks(tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [_subject_task(t) for t in tasks]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
        return list(pool.map(_subject_task, tasks))


def _subjects(epochs, condition):
    cond = Condition(condition).value
    sel = epochs.conditions == cond
    if not sel.any():
        raise ValueError(f"dataset has no {cond} trials")
    return sorted(int(s) for s in np.unique(epochs.subject_ids[sel]))


def run_session_dependent(epochs, spec, train_cfg=TrainConfig(), jobs=1):
    """Per-subject k-fold accuracy within ``spec.speed``; ``epochs`` must already be filtered.

    Returns ``{subject_id: accuracy}`` with accuracy pooled over folds.
    """
    if spec.kind != SESSION_DEPENDENT:
        raise ValueError("spec is not a session-dependent protocol")
    tasks = []
    for sid in _subjects(epochs, spec.speed):
        part = epochs.slice(sid, spec.speed)
        tasks.append((spec.kind, spec.method, epochs.rate, spec.seed, spec.k_folds, train_cfg,
                      sid, spec.speed.value, part.data, part.labels, None, None))
    sids = [t[6] for t in tasks]
    return dict(zip(sids, _run_tasks(tasks, jobs)))


def run_session_to_session(epochs, spec, train_cfg=TrainConfig(), jobs=1):
    """Per-subject accuracy training on all Standing trials, testing on ``spec.speed``."""
    if spec.kind != SESSION_TO_SESSION:
        raise ValueError("spec is not a session-to-session protocol")
    tasks = []
    test_subjects = _subjects(epochs, spec.speed)
    train_subjects = _subjects(epochs, Condition.STANDING)
    for sid in test_subjects:
        if sid not in train_subjects:
            raise ValueError(f"subject {sid} has no Standing trials to train on")
        train = epochs.slice(sid, Condition.STANDING)
        test = epochs.slice(sid, spec.speed)
        tasks.append((spec.kind, spec.method, epochs.rate, spec.seed, 0, train_cfg,
                      sid, spec.speed.value, train.data, train.labels, test.data, test.labels))
    sids = [t[6] for t in tasks]
    return dict(zip(sids, _run_tasks(tasks, jobs)))


def run_protocol(epochs, spec, train_cfg=TrainConfig(), jobs=1):
    if spec.kind == SESSION_DEPENDENT:
        return run_session_dependent(epochs, spec, train_cfg, jobs)
    return run_session_to_session(epochs, spec, train_cfg, jobs)


# ------------------------------------------------------------ tables

def _row_stats(accs):
    a = np.asarray(accs, dtype=float)
    sd = float(np.std(a, ddof=1)) if a.size > 1 else 0.0
    return float(np.mean(a)), sd


@dataclass
class AccuracyTable:
    """Accuracy per subject for each (speed, method) row, with mean and sample SD."""
    subjects: list
    speeds: list = field(default_factory=lambda: [c.value for c in CONDITIONS])
    methods: list = field(default_factory=lambda: list(METHODS))
    rows: dict = field(default_factory=dict)  # (speed, method) -> (accs, mean, sd)

    def set_row(self, speed, method, accs):
        speed, method = Condition(speed).value, method_name(method)
        if isinstance(accs, dict):
            accs = [accs[s] for s in self.subjects]
        accs = [float(a) for a in accs]
        if len(accs) != len(self.subjects):
            raise ValueError(f"row needs {len(self.subjects)} accuracies, got {len(accs)}")
        if any(not 0 <= a <= 1 for a in accs):
            raise ValueError("accuracies must lie in [0, 1]")
        self.rows[(speed, method)] = (accs, *_row_stats(accs))

    def missing(self):
        return [(s, m) for s in self.speeds for m in self.methods if (s, m) not in self.rows]

    def check(self):
        for key, (accs, mean, sd) in self.rows.items():
            m2, s2 = _row_stats(accs)
            if abs(m2 - mean) > 1e-12 or abs(s2 - sd) > 1e-12:
                raise InvalidStateError(f"row {key} mean/SD do not match its values")

    def ordered_rows(self):
        missing = self.missing()
        if missing:
            raise InvalidStateError("table is incomplete; missing rows: "
                                    + ", ".join(f"{s}/{m}" for s, m in missing))
        return [(s, m, *self.rows[(s, m)]) for s in self.speeds for m in self.methods]

    def mean(self, speed, method):
        return self.rows[(Condition(speed).value, method_name(method))][1]

    def __eq__(self, other):
        return (isinstance(other, AccuracyTable) and self.subjects == other.subjects
                and self.speeds == other.speeds and self.methods == other.methods
                and self.rows == other.rows)


def header(table):
    return ["Speed", "Method"] + [f"S{s}" for s in table.subjects] + ["Average", "SD"]


def emit_table(table, fmt="markdown"):
    rows = table.ordered_rows()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header(table))
        for speed, method, accs, mean, sd in rows:
            w.writerow([Condition(speed).speed_label, method] + [repr(a) for a in accs] + [repr(mean), repr(sd)])
        return buf.getvalue()
    if fmt != "markdown":
        raise ValueError(f"unknown table format {fmt!r}")
    h = header(table)
    lines = ["| " + " | ".join(h) + " |", "|" + "---|" * len(h)]
    for speed, method, accs, mean, sd in rows:
        cells = [Condition(speed).speed_label, method] + [f"{v:.2f}" for v in (*accs, mean, sd)]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


_SPEED_FROM_LABEL = {c.speed_label: c.value for c in CONDITIONS}


def parse_csv(text):
    """Inverse of ``emit_table(..., "csv")``."""
    reader = csv.reader(io.StringIO(text))
    head = next(reader)
    subjects = [int(h[1:]) for h in head[2:-2]]
    body = [r for r in reader if r]
    speeds, methods = [], []
    for r in body:
        sp = _SPEED_FROM_LABEL.get(r[0], r[0])
        speeds.append(sp) if sp not in speeds else None
        methods.append(r[1]) if r[1] not in methods else None
    table = AccuracyTable(subjects, speeds, methods)
    for r in body:
        speed = _SPEED_FROM_LABEL.get(r[0], r[0])
        accs = [float(v) for v in r[2:-2]]
        table.rows[(speed, r[1])] = (accs, float(r[-2]), float(r[-1]))
    table.check()
    return table


# ------------------------------------------------------------ t-test

def _betacf(a, b, x, eps=1e-16, max_iter=500):
    """Continued fraction of the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_reg(a, b, x):
    """Regularized incomplete beta ``I_x(a, b)``."""
    if not 0 <= x <= 1:
        raise ValueError("x must lie in [0, 1]")
    if x == 0 or x == 1:
        return float(x)
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the fraction converges fast only on this side of the mean
    if x < (a + 1) / (a + b + 2):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_tailed_p(t, df):
    """``P(|T| >= |t|)`` for Student's t with ``df`` degrees of freedom."""
    if not df > 0:
        raise ValueError("df must be positive")
    if not np.isfinite(t):
        return 0.0
    return min(1.0, max(0.0, betainc_reg(df / 2.0, 0.5, df / (df + t * t))))


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float
    mean_diff: float
    degenerate: bool = False

    def to_dict(self):
        return {"t": self.t, "df": self.df, "p": self.p, "mean_diff": self.mean_diff,
                "degenerate": self.degenerate}


def paired_ttest(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and equally long")
    n = a.size
    if n < 2:
        raise ValueError("need at least 2 pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0 or np.all(d == d[0]):
        if mean == 0:
            return TTestResult(0.0, n - 1, 1.0, 0.0)
        return TTestResult(math.copysign(math.inf, mean), n - 1, 0.0, mean, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, n - 1, t_two_tailed_p(t, n - 1), mean)


def table_ttests(table, montage=None):
    """One paired test per method pair per speed, in table order."""
    out = []
    for speed in table.speeds:
        present = [m for m in table.methods if (speed, m) in table.rows]
        for m1, m2 in itertools.combinations(present, 2):
            res = paired_ttest(table.rows[(speed, m1)][0], table.rows[(speed, m2)][0])
            entry = {"speed": speed, "a": m1, "b": m2, **res.to_dict()}
            if montage is not None:
                entry["montage"] = montage
            out.append(entry)
    return out


def speed_deltas(table):
    """Mean accuracy change from Standing to each walking speed, in percentage points."""
    out = []
    if Condition.STANDING.value not in table.speeds:
        return out
    for m in table.methods:
        base = table.rows.get((Condition.STANDING.value, m))
        if base is None:
            continue
        for s in table.speeds:
            if s != Condition.STANDING.value and (s, m) in table.rows:
                out.append({"method": m, "speed": s,
                            "delta_pp": 100.0 * (table.rows[(s, m)][1] - base[1])})
    return out


# ------------------------------------------------------------ report files

def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=False, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _finite(entry):
    # json has no infinity; degenerate tests carry the sign in mean_diff
    e = dict(entry)
    if not math.isfinite(e["t"]):
        e["t"] = None
    return e


def write_report(out_dir, tables, run_config, protocol):
    """``table_<montage>.csv/.md``, ``stats.json`` and ``run_config.json`` under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    tests, deltas = [], []
    for montage, table in tables.items():
        with open(os.path.join(out_dir, f"table_{montage}.csv"), "w") as fh:
            fh.write(emit_table(table, "csv"))
        with open(os.path.join(out_dir, f"table_{montage}.md"), "w") as fh:
            fh.write(emit_table(table, "markdown"))
        tests += [_finite(e) for e in table_ttests(table, montage)]
        deltas += [{"montage": montage, **d} for d in speed_deltas(table)]
    stats = {"protocol": protocol, "tests": tests, "speed_deltas_percentage_points": deltas,
             "training_free": ["CCA"]}
    _dump_json(os.path.join(out_dir, "stats.json"), stats)
    _dump_json(os.path.join(out_dir, "run_config.json"), run_config)
    return stats
