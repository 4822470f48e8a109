#!/usr/bin/env python3
"""Smoke test for the kklab_py extension module.

Build the module first, then run with the shared object on the path:

    cargo build -p kklab-py --release
    cp target/release/libkklab_py.so kklab_py.so
    python python/smoke_test.py
"""

import json
import math

import kklab_py as kk


def check(name, ok, detail=""):
    print(f"{'ok' if ok else 'FAIL'}  {name}{'  ' + detail if detail else ''}")
    if not ok:
        raise SystemExit(1)


def main():
    # Algebra construction and recognition.
    a = kk.Algebra.multi_matrix([2, 1], 3)
    check("multi_matrix(2,1) dims", a.dim == 5 and a.ambient_dim == 3)
    check("block recognition", a.block_sizes == [2, 1])
    check("structure residual", a.structure_residual() < 1e-12,
          f"{a.structure_residual():.2e}")

    f2 = kk.Algebra.full(2)
    e11 = [[1, 0], [0, 0]]
    check("membership", f2.contains(e11, 1e-9))
    check("projection fixes members",
          max(abs(x - y) for rp, rq in zip(f2.project(e11), e11)
              for x, y in zip(rp, rq)) < 1e-12)

    # From an explicit spanning set (diagonal subalgebra of M_2).
    d = kk.Algebra(2, [[[1, 0], [0, 0]], [[0, 0], [0, 1]]])
    check("diagonal algebra", d.dim == 2 and d.block_sizes == [1, 1])

    # Operator norm sanity.
    check("op_norm", abs(kk.op_norm([[0, 2], [0, 0]]) - 2.0) < 1e-12)

    # Canonical virtual diagonal certificate.
    cert = kk.diagonal_certificate(a, starts=16)
    check("diagonal certificate", cert["passes"],
          f"c1={cert['c1_residual']:.2e} h=[{cert['h_norm_lower']:.6f},"
          f"{cert['h_norm_upper']:.6f}]")

    # cb norm of the transpose on M_2 is exactly 2.
    lo, hi = kk.cb_norm_transpose(2, starts=24)
    check("transpose cb norm", abs(lo - 2) < 1e-6 and abs(hi - 2) < 1e-6,
          f"[{lo:.8f}, {hi:.8f}]")

    # Chain audit and the feasibility threshold.
    audit = json.loads(kk.audit_chain(1.0 / 164.0))
    check("audit eps < 1", 0 < audit["eps"] < 1, f"eps={audit['eps']:.4f}")
    thr = kk.gamma_threshold()
    check("gamma threshold > 1/164", thr > 1.0 / 164.0, f"{thr:.6f}")

    # Distance of an algebra to itself is zero; the certified upper
    # bound comes from the analytic hint.
    lo, hi = kk.kk_distance(d, d, gamma_upper_hint=0.0, starts=8)
    check("kk_distance(d, d) ~ 0", lo < 1e-9 and hi < 1e-9,
          f"[{lo:.2e}, {hi:.2e}]")
    # The diagonal sits far from all of M_2: dist(e12, diagonal) = 1.
    lo, _ = kk.kk_distance(kk.Algebra.full(2), d, starts=8)
    check("kk_distance(M2, diag) large", lo > 0.4, f"lower={lo:.4f}")

    # End-to-end pipeline on a generated instance.
    rep = json.loads(kk.pipeline_generated([1, 1], 1e-4, 7, starts=16))
    check("pipeline verdict", rep["verdict"] == "SUCCESS", rep["verdict"])
    check("conjugation residual", rep["conjugation_residual_m"] <= 1e-8,
          f"{rep['conjugation_residual_m']:.2e}")
    check("certified bound",
          rep["s_minus_identity"] <= rep["bound_656"] + 1e-12,
          f"{rep['s_minus_identity']:.2e} <= {rep['bound_656']:.2e}")

    # Batch summary.
    summary = json.loads(kk.batch([1, 1], [1e-5], [0, 1], starts=16))
    verdicts = [r["verdict"] for r in summary["records"]]
    check("batch all SUCCESS", verdicts == ["SUCCESS"] * 2, str(verdicts))

    check("constants", kk.GAMMA_DENOMINATOR == 164
          and kk.SIMILARITY_CONSTANT == 656)

    print("smoke test passed")


if __name__ == "__main__":
    main()
