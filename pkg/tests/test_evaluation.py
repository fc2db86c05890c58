import json

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from ssvepnet.errors import InvalidStateError
from ssvepnet.evaluation import (SESSION_DEPENDENT, SESSION_TO_SESSION, AccuracyTable, ProtocolSpec, accuracy,
                                 betainc_reg, emit_table, kfold_split, paired_ttest, parse_csv, preprocess_set,
                                 run_protocol, run_session_dependent, run_session_to_session, t_two_tailed_p,
                                 table_ttests, write_report)
from ssvepnet.signal import Condition

# a 13-subject accuracy row with mean 0.5123 and sample SD 0.1155
REFERENCE_ROW = [0.40, 0.62, 0.42, 0.73, 0.70, 0.45, 0.47, 0.42, 0.57, 0.47, 0.37, 0.57, 0.47]


def t_density_p(t, df):
    """Two-tailed p by numerical integration of the Student t density (30 digits)."""
    mpmath.mp.dps = 30
    nu = mpmath.mpf(df)
    c = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))
    dens = lambda x: c * (1 + x * x / nu) ** (-(nu + 1) / 2)
    return float(2 * mpmath.quad(dens, [abs(mpmath.mpf(t)), mpmath.inf]))


# accuracy

def test_accuracy_definition():
    y = np.arange(90) % 3
    assert accuracy(y, y) == 1.0
    assert accuracy(np.zeros(90, int), y) == 1 / 3
    assert accuracy([0, 1, 1], [0, 1, 2]) == 2 / 3
    with pytest.raises(ValueError):
        accuracy([], [])


# folds

def test_kfold_sizes():
    y = np.repeat([0, 1, 2], 30)
    folds = kfold_split(y, 5, seed=0)
    for tr, te in folds:
        assert len(te) == 18
        assert np.bincount(y[te]).tolist() == [6, 6, 6]
        assert not np.intersect1d(tr, te).size


@given(st.integers(2, 10), st.lists(st.integers(0, 2), min_size=10, max_size=80), st.integers(0, 2 ** 31))
def test_kfold_partition(k, labels, seed):
    y = np.array(labels)
    if k > len(y):
        with pytest.raises(ValueError):
            kfold_split(y, k, seed)
        return
    folds = kfold_split(y, k, seed)
    tests = np.concatenate([te for _, te in folds])
    assert sorted(tests.tolist()) == list(range(len(y)))
    for tr, te in folds:
        assert sorted(np.concatenate([tr, te]).tolist()) == list(range(len(y)))
    for c in np.unique(y):
        per_fold = [np.sum(y[te] == c) for _, te in folds]
        assert max(per_fold) - min(per_fold) <= 1
    again = kfold_split(y, k, seed)
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(folds, again))


def test_kfold_errors():
    with pytest.raises(ValueError):
        kfold_split(np.zeros(4), 5)
    with pytest.raises(ValueError):
        kfold_split(np.zeros(4), 1)


# protocol spec

def test_protocol_spec_validation():
    with pytest.raises(ValueError):
        ProtocolSpec(SESSION_TO_SESSION, "ear", Condition.STANDING, "LDA")
    with pytest.raises(ValueError):
        ProtocolSpec(SESSION_DEPENDENT, "ear", "Walk08", "LDA", k_folds=1)
    with pytest.raises(ValueError):
        ProtocolSpec(SESSION_DEPENDENT, "ear", "Walk08", "SVM")
    assert ProtocolSpec(SESSION_TO_SESSION, "ear", "Walk16", "cca").training_free


# protocol runs on small data

def test_noiseless_cca_perfect(noiseless_small):
    for montage in ("scalp", "ear"):
        es = preprocess_set(noiseless_small.montage(montage))
        for cond in ("Standing", "Walk08", "Walk16"):
            accs = run_session_dependent(es, ProtocolSpec(SESSION_DEPENDENT, montage, cond, "CCA"))
            assert list(accs.values()) == [1.0, 1.0]


def test_noiseless_lda_session_to_session_equals_dependent(noiseless_small):
    es = preprocess_set(noiseless_small.montage("ear"))
    for cond in ("Walk08", "Walk16"):
        s2s = run_session_to_session(es, ProtocolSpec(SESSION_TO_SESSION, "ear", cond, "LDA"))
        sd = run_session_dependent(es, ProtocolSpec(SESSION_DEPENDENT, "ear", cond, "LDA"))
        assert list(s2s.values()) == list(sd.values()) == [1.0, 1.0]


def test_missing_condition(noiseless_small):
    es = preprocess_set(noiseless_small.ear.slice(condition="Standing"))
    with pytest.raises(ValueError):
        run_session_dependent(es, ProtocolSpec(SESSION_DEPENDENT, "ear", "Walk08", "LDA"))
    with pytest.raises(ValueError):
        run_session_to_session(es, ProtocolSpec(SESSION_TO_SESSION, "ear", "Walk08", "LDA"))


def test_randomized_labels_at_chance():
    from ssvepnet.synthgen import GenConfig, gen_dataset

    es = preprocess_set(gen_dataset(GenConfig(preset="high")).ear.slice(condition="Standing"))
    es.labels = np.random.default_rng(0).permutation(es.labels)
    accs = run_session_dependent(es, ProtocolSpec(SESSION_DEPENDENT, "ear", "Standing", "LDA"))
    assert len(accs) == 13
    assert 0.26 <= np.mean(list(accs.values())) <= 0.40


def test_jobs_do_not_change_results(high_small):
    es = preprocess_set(high_small.montage("ear"))
    spec = ProtocolSpec(SESSION_DEPENDENT, "ear", "Walk16", "LDA", seed=3)
    assert run_protocol(es, spec, jobs=1) == run_protocol(es, spec, jobs=2)


# t-test

def test_ttest_critical_value():
    p = t_two_tailed_p(2.1788, 12)
    assert p == pytest.approx(0.050, abs=0.001)
    rng = np.random.default_rng(0)
    d = rng.normal(size=13)
    d = (d - d.mean()) / d.std(ddof=1)
    res = paired_ttest(d + 2.1788 / np.sqrt(13), np.zeros(13))
    assert res.df == 12 and res.t == pytest.approx(2.1788) and res.p == pytest.approx(0.050, abs=0.001)


def test_ttest_matches_density_integration():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 30))
        a = rng.normal(size=n)
        b = a + rng.normal(rng.normal(0, 0.5), 1.0, size=n)
        res = paired_ttest(a, b)
        worst = max(worst, abs(res.p - t_density_p(res.t, res.df)))
    assert worst < 1e-9


def test_ttest_equal_samples():
    res = paired_ttest([0.4, 0.5, 0.6], [0.4, 0.5, 0.6])
    assert res.t == 0 and res.p == 1.0 and not res.degenerate


def test_ttest_constant_shift_degenerate():
    res = paired_ttest([0.5, 0.6, 0.7], [0.4, 0.5, 0.6])
    assert res.degenerate and res.p == 0.0 and res.t > 0


@given(st.lists(st.floats(0, 1), min_size=2, max_size=20), st.integers(0, 2 ** 31))
def test_ttest_symmetry(a, seed):
    a = np.array(a)
    b = np.random.default_rng(seed).uniform(0, 1, size=len(a))
    r1, r2 = paired_ttest(a, b), paired_ttest(b, a)
    assert 0 <= r1.p <= 1
    assert r1.p == pytest.approx(r2.p, abs=1e-12)
    if r1.degenerate or r1.t == 0:
        return
    assert r1.t == pytest.approx(-r2.t)
    assert np.sign(r1.t) == np.sign(r1.mean_diff)


def test_betainc_reference_points():
    mpmath.mp.dps = 30
    for a, b, x in [(0.5, 6.0, 0.3), (6.0, 0.5, 0.95), (2.0, 3.0, 0.5), (10.0, 0.5, 0.01)]:
        assert betainc_reg(a, b, x) == pytest.approx(float(mpmath.betainc(a, b, 0, x, regularized=True)), abs=1e-13)
    assert betainc_reg(2.0, 3.0, 0.0) == 0.0 and betainc_reg(2.0, 3.0, 1.0) == 1.0


# tables

def _table(n=13, seed=0, methods=("CCA", "LDA", "Proposed")):
    rng = np.random.default_rng(seed)
    t = AccuracyTable(list(range(1, n + 1)), methods=list(methods))
    for s in ("Standing", "Walk08", "Walk16"):
        for m in methods:
            t.set_row(s, m, rng.integers(0, 91, size=n) / 90)
    return t


def test_reference_row_renders():
    t = AccuracyTable(list(range(1, 14)), ["Standing"], ["CCA"])
    t.set_row("Standing", "CCA", REFERENCE_ROW)
    md = emit_table(t, "markdown")
    row = md.strip().splitlines()[-1].split(" | ")
    assert row[-2] == "0.51" and row[-1].rstrip(" |") == "0.12"


def test_header_exact():
    csv_text = emit_table(_table(), "csv")
    assert csv_text.splitlines()[0] == ",".join(["Speed", "Method"] + [f"S{i}" for i in range(1, 14)] + ["Average", "SD"])
    body = [r.split(",")[:2] for r in csv_text.splitlines()[1:]]
    assert body == [[s, m] for s in ("Standing", "0.8m/s", "1.6m/s") for m in ("CCA", "LDA", "Proposed")]


def test_all_zero_table():
    t = AccuracyTable(list(range(1, 14)))
    for s in ("Standing", "Walk08", "Walk16"):
        for m in ("CCA", "LDA", "Proposed"):
            t.set_row(s, m, [0.0] * 13)
    for line in emit_table(t).strip().splitlines()[2:]:
        assert line.split(" | ")[-2] == "0.00"


def test_csv_round_trip_full_precision():
    t = _table(seed=5)
    assert parse_csv(emit_table(t, "csv")) == t


def test_incomplete_table_lists_missing():
    t = _table()
    del t.rows[("Walk08", "LDA")]
    with pytest.raises(InvalidStateError, match="Walk08/LDA"):
        emit_table(t)


def test_row_stats_recompute():
    t = _table(seed=2)
    t.check()
    for accs, mean, sd in t.rows.values():
        assert abs(np.mean(accs) - mean) <= 1e-12 and abs(np.std(accs, ddof=1) - sd) <= 1e-12
    key = next(iter(t.rows))
    accs, mean, sd = t.rows[key]
    t.rows[key] = (accs, mean + 1e-9, sd)
    with pytest.raises(InvalidStateError):
        t.check()


def test_set_row_rejects_out_of_range():
    with pytest.raises(ValueError):
        AccuracyTable([1, 2]).set_row("Standing", "CCA", [0.5, 1.5])


def test_stats_count_and_report(tmp_path):
    t = _table()
    assert len(table_ttests(t)) == 9
    stats = write_report(tmp_path, {"ear": t}, {"seed": 0}, SESSION_DEPENDENT)
    assert len(stats["tests"]) == 9
    on_disk = json.loads((tmp_path / "stats.json").read_text())
    assert on_disk["training_free"] == ["CCA"]
    assert {p.name for p in tmp_path.iterdir()} == {"table_ear.csv", "table_ear.md", "stats.json", "run_config.json"}
    deltas = on_disk["speed_deltas_percentage_points"]
    d = next(x for x in deltas if x["method"] == "LDA" and x["speed"] == "Walk16")
    assert d["delta_pp"] == pytest.approx(100 * (t.mean("Walk16", "LDA") - t.mean("Standing", "LDA")))
