"""Smoke test for the vrobust extension module.

Imports an installed `vrobust`, or falls back to the cdylib cargo built
(`cargo build -p vrobust-python --features extension-module`).
"""

import importlib
import json
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


def load():
    try:
        return importlib.import_module("vrobust")
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libvrobust.so"
        if lib.exists():
            tmp = pathlib.Path(tempfile.mkdtemp())
            shutil.copy(lib, tmp / "vrobust.so")
            sys.path.insert(0, str(tmp))
            return importlib.import_module("vrobust")
    sys.exit("vrobust not importable; build crates/python first")


def fixture(name):
    return (FIXTURES / name).read_text()


def main():
    vr = load()

    fig2 = vr.Workload(fixture("fig2.workload"))
    assert fig2.transaction_ids == ["T1", "T2", "T3"]
    assert vr.Workload(fig2.render()).render() == fig2.render()

    s1 = vr.Schedule(fixture("s1.schedule"), vr.Workload(fixture("s1.workload")))
    assert sorted(s1.serialization_graph()) == [
        ("T1", "T2"), ("T1", "T4"), ("T2", "T3"), ("T2", "T4"), ("T3", "T4"), ("T4", "T2"),
    ]
    assert s1.is_conflict_serializable() == (False, ["T2", "T4"])

    s2 = vr.Schedule(fixture("s2.schedule"), fig2)
    assert s2.view_witness() == ["T1", "T2", "T3"]
    assert not s2.is_conflict_serializable()[0]

    s3 = vr.Schedule(fixture("s3.schedule"), vr.Workload(fixture("s3.workload")))
    assert not s3.is_view_serializable()
    assert s3.is_split_schedule()

    view = fig2.robust("view")
    assert not view["robust"] and view["counterexample"]["subset"] == ["T1", "T2"]
    assert fig2.robust("exact-view")["robust"]
    assert not fig2.robust("conflict", method="split")["robust"]

    lu_si = vr.Workload("txn T1: R(t) W(t) C\ntxn T2: R(t) W(t) C\nalloc T1=SI T2=SI")
    assert lu_si.robust("conflict")["robust"]
    assert all(s.allowed(lu_si)["allowed"] for s in lu_si.enumerate_allowed())

    try:
        fig2.robust("view", max_txns=2)
    except vr.LimitExceeded:
        pass
    else:
        raise AssertionError("expected LimitExceeded")
    try:
        vr.Workload("txn T1: R(t)")
    except ValueError:
        pass
    else:
        raise AssertionError("expected a parse error")

    poly = vr.Polygraph(fixture("single_choice.polygraph"))
    assert poly.is_acyclic()
    report = poly.verify()
    assert report["passed"] and report["acyclic"] and report["view_serializable"]
    workload, schedule = poly.reduce()
    assert vr.Schedule(schedule.render(), workload) == schedule
    assert not vr.Polygraph(fixture("two_cycle.polygraph")).is_acyclic()

    code, out = vr.run(["robust", "--mode", "view", str(FIXTURES / "fig2.workload"), "--json"])
    assert code == 1
    parsed = json.loads(out)
    assert parsed["schema"] == "report-v1" and parsed["verdict"] is False
    try:
        import jsonschema
    except ImportError:
        print("jsonschema not installed; skipping schema validation")
    else:
        jsonschema.Draft202012Validator(json.loads(vr.REPORT_SCHEMA)).validate(parsed)

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
