"""Smoke test for the stu_py extension module.

Build and run from the repository root:

    cargo build --release -p stu-py --features extension-module
    cp target/release/libstu_py.so python/stu_py.so
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import stu_py


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def main():
    assert stu_py.cbg_to_tract("120570101001") == "12057010100"
    try:
        stu_py.cbg_to_tract("12057")
    except ValueError:
        pass
    else:
        raise AssertionError("short GEOID accepted")

    policy = stu_py.DwellPolicy(open_bucket_minutes=300.0)
    assert policy.minutes[-1] == 300.0
    total = stu_py.expected_poi_dwell_total([1, 0, 0, 0, 0, 0, 2], policy)
    assert close(total, 2.0 + 600.0), total

    assert close(stu_py.shannon_diversity([0.5, 0.25, 0.25]), 1.5 * math.log(2))
    assert close(stu_py.shannon_diversity({"445110": 3.0, "722511": 3.0}), math.log(2))
    assert stu_py.gini_stu([1, 1, 1, 1], [1, 0, 0, 0]) == 0.75

    samples = [271.2 * math.exp(0.6 * z) for z in normal_quantiles(2000)]
    fit = stu_py.fit_distribution(samples, "lognormal")
    assert abs(fit.shape / 0.6 - 1) < 0.05 and fit.p_value > 0.05, fit
    ranked = stu_py.select_best_family(samples, ["lognormal", "normal", "exponential"])
    assert ranked[0].family == "lognormal", ranked

    d, p = stu_py.two_sample_ks([1.0, 2.0, 3.0, 4.0], [10.0, 11.0, 12.0, 13.0])
    assert d == 1.0 and p < 0.05

    m = stu_py.morans_i([1.0, 0.0, 0.0, 1.0], seed=1, grid=(2, 2), permutations=99)
    assert close(m["statistic"], -1.0), m

    r = stu_py.pearson_r([1, 2, 3, 4, 5], [2, 4, 6, 8, 10.5])
    assert r["ci_low"] <= r["r"] <= r["ci_high"]

    values, unmapped = stu_py.apply_crosswalk(
        {"a": 10.0, "b": 5.0, "c": 1.0}, [("a", "a", 0.7), ("a", "b", 0.3), ("b", "b", 1.0)]
    )
    assert close(values["b"], 8.0) and unmapped == ["c"]

    with tempfile.TemporaryDirectory() as tmp:
        info = stu_py.synth(os.path.join(tmp, "in"), seed=42, config="tracts = 20\npois = 100\nweeks = 2\n")
        assert info["tracts"] == 20
        summary = stu_py.compute(os.path.join(tmp, "in"), os.path.join(tmp, "out"), strict=True)
        assert summary["rows"]["tract"] == 40, summary
        assert len(summary["weeks"]) == 2

    print("stu_py smoke test passed")


def normal_quantiles(n):
    # Deterministic standard-normal sample via inverse CDF at midpoints.
    from statistics import NormalDist

    nd = NormalDist()
    return [nd.inv_cdf((i + 0.5) / n) for i in range(n)]


if __name__ == "__main__":
    main()
