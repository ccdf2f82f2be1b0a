"""Smoke test for the posbench extension module."""

import json
import pathlib
import tempfile
import urllib.request

import posbench


def main():
    assert posbench.percentile([5.0, 1.0, 3.0, 2.0, 4.0], 50) == 3.0
    assert round(posbench.relative_difference(238.42, 183.69), 1) == 23.0

    gcp = posbench.estimate_cost("gcp", 1_000_000, 1_000_000_000)
    assert gcp["total_usd"] == "0.52", gcp
    try:
        posbench.estimate_cost("nowhere", 1, 1)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown platform accepted")

    ops = posbench.sample_operations(seed=3, n=20)
    assert ops == posbench.sample_operations(seed=3, n=20)

    with posbench.Server(profile="instant") as server:
        with urllib.request.urlopen(server.url + "/healthz") as r:
            assert json.load(r)["status"] == "ok"

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        config = {
            "targets": [{"label": "sim", "profile": "paper-gcp", "virtual_clock": True}],
            "scenarios": [
                {"name": "Baseline", "concurrent_users": 4, "ramp_up_s": 1,
                 "steady_s": 5, "repetitions": 1, "rest_between_runs_s": 0}
            ],
        }
        (tmp / "c.json").write_text(json.dumps(config))
        raw = posbench.run_campaign(str(tmp / "c.json"), out_dir=str(tmp / "out"))
        report = posbench.build_report(raw, str(tmp / "out" / "report"))
        assert "tables/response_times.csv" in report["files"], report["files"]

        try:
            posbench.build_report(str(tmp), str(tmp / "r"))
        except posbench.PosbenchError as e:
            assert e.args[1] == 4, e.args
        else:
            raise AssertionError("empty raw dir accepted")

    print("posbench python smoke test: ok")


if __name__ == "__main__":
    main()
