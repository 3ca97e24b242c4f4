#!/usr/bin/env python3
"""Run the discat CLI on the demo inputs and validate every JSON document it prints
against the schemas in docs/schemas. Also checks a few numeric cross-properties that
are awkward to express in CMake script.

usage: check_schemas.py <discat executable> <source dir>
"""
import hashlib
import json
import math
import pathlib
import subprocess
import sys
import tempfile

import jsonschema
from referencing import Registry, Resource

cli, src = sys.argv[1], pathlib.Path(sys.argv[2])
schema_dir = src / "docs" / "schemas"
schemas = {p.name.split(".")[0]: json.loads(p.read_text()) for p in schema_dir.glob("*.schema.json")}
registry = Registry().with_resources(
    (s["$id"], Resource.from_contents(s)) for s in schemas.values())

failures = 0


def check(ok, what):
    global failures
    print(("ok: " if ok else "FAILED: ") + what)
    if not ok:
        failures += 1


def run(*args, cwd=None):
    r = subprocess.run([cli, *args], capture_output=True, text=True, cwd=cwd)
    return r.returncode, r.stdout, r.stderr


def validate(kind, doc, what):
    v = jsonschema.Draft202012Validator(schemas[kind], registry=registry)
    errs = sorted(v.iter_errors(doc), key=lambda e: list(e.path))
    for e in errs[:5]:
        print("   ", list(e.path), e.message[:200])
    check(not errs, f"{what} validates against {kind}.schema.json")


for s in schemas.values():
    jsonschema.Draft202012Validator.check_schema(s)
check(True, "schemas are well-formed")

table = str(src / "demos" / "a3_table.csv")
matrix = str(src / "demos" / "neuroticism_robust.csv")

with tempfile.TemporaryDirectory() as work:
    w = pathlib.Path(work)
    rows = ["A,B,C,D"]
    # deterministic ordinal data with positive association
    for i in range(300):
        base = (i * 7919) % 5
        rows.append(",".join(str(1 + (base + ((i * k * 31) % 3 == 0)) % 5) for k in (1, 2, 3, 4)))
    (w / "items.csv").write_text("\n".join(rows) + "\n")

    for c in ("1.6", "inf", "1"):
        rc, out, err = run("fit", "--input", table, "--c", c)
        check(rc == 0, f"fit --c {c} exits 0")
        validate("fit", json.loads(out), f"fit --c {c}")

    bh = json.loads(run("celltest", "--input", table, "--adjust", "bh")[1])
    none = json.loads(run("celltest", "--input", table, "--adjust", "none")[1])
    validate("celltest", bh, "celltest --adjust bh")
    validate("celltest", none, "celltest --adjust none")
    diffv = json.loads(run("celltest", "--input", table, "--variance", "difference")[1])
    validate("celltest", diffv, "celltest --variance difference")
    le = all(a["p_adj"] <= b["p_adj"] + 1e-15 for a, b in zip(none["tests"], bh["tests"]) if a["tested"])
    check(le, "--adjust none p-values are cellwise <= --adjust bh p-values")

    rc, out, _ = run("polymat", "--raw", str(w / "items.csv"))
    check(rc in (0, 2), "polymat on raw items runs")
    validate("polymat", json.loads(out), "polymat")
    rc, out, _ = run("cfa", "--raw", str(w / "items.csv"), "--estimator", "mle")
    validate("cfa", json.loads(out), "cfa from raw items")
    rc, out, _ = run("cfa", "--from-matrix", matrix, "--reverse", "N1_N,N2_N,N3_N,N4_N,N5_N,N6_N")
    check(rc == 0, "cfa --from-matrix exits 0")
    validate("cfa", json.loads(out), "cfa from matrix")

    rc, _, _ = run("simulate", "--reps", "5", "--out-dir", str(w / "sim"))
    validate("manifest", json.loads((w / "sim" / "manifest.json").read_text()), "simulate manifest")

    # 2x2 tables are saturated, so the fit is exact for every c
    (w / "sat.csv").write_text("x,y,count\n1,1,40\n1,2,10\n2,1,15\n2,2,35\n")
    t_inf = json.loads(run("fit", "--input", str(w / "sat.csv"), "--c", "inf")[1])["theta"]
    t_16 = json.loads(run("fit", "--input", str(w / "sat.csv"), "--c", "1.6")[1])["theta"]
    diff = max(abs(t_inf[k] - t_16[k]) for k in t_inf)
    check(diff < 1e-6, f"--c inf and --c 1.6 agree on a perfectly fitted table (max diff {diff:.1e})")

    # digests are of the bytes read
    doc = json.loads(run("fit", "--input", table)[1])
    check(doc["manifest"]["inputs"][0]["sha256"] == hashlib.sha256(pathlib.Path(table).read_bytes()).hexdigest(),
          "manifest digest matches the input file")
    check(math.isfinite(doc["theta"]["rho"]), "theta is finite")

print(f"{failures} failure(s)")
sys.exit(1 if failures else 0)
