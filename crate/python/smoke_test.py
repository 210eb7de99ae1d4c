#!/usr/bin/env python3
"""Builds the poolsel_py extension and drives it end to end."""

import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def build_extension(workdir: Path) -> None:
    subprocess.run(
        ["cargo", "build", "-p", "poolsel-py"],
        cwd=REPO,
        check=True,
    )
    built = REPO / "target" / "debug" / "libpoolsel_py.so"
    shutil.copy(built, workdir / "poolsel_py.so")


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        workdir = Path(tmp)
        build_extension(workdir)
        sys.path.insert(0, str(workdir))
        import poolsel_py as ps

        train = ps.Dataset.synthetic(
            n=240, p=3, beta=[1.5, -1.0, 0.5], noise_sd=1.2, seed=11
        )
        test = ps.Dataset.synthetic(
            n=80, p=3, beta=[1.5, -1.0, 0.5], noise_sd=1.2, seed=12
        )
        assert train.n == 240 and train.p == 3
        assert len(train) == 240
        assert train.score_range == (2, 12)
        assert len(train.features()) == 240
        assert len(train.features()[0]) == 3

        design = ps.select(train, "fedorov", 24, seed=7)
        assert design.algorithm == "fedorov"
        assert len(design) == 24
        assert len(set(design.indices)) == 24
        assert design.criterion_value is not None

        again = ps.select(train, "fedorov", 24, seed=7)
        assert again.indices == design.indices, "selection must be deterministic"

        design_path = workdir / "design.txt"
        design.save(design_path)
        loaded = ps.Design.load(design_path, train)
        assert loaded.indices == design.indices

        grown = ps.select(train, "fedorov", 30, seed=7, augment=design)
        assert len(grown) == 30
        assert set(design.indices) <= set(grown.indices)

        model = ps.fit(train, lambda_=1.0, design=design)
        assert len(model.coefficients) == 3
        predicted = model.predict(test)
        assert len(predicted) == test.n
        lo, hi = test.score_range
        assert all(lo <= s <= hi for s in predicted)

        r = ps.pearson([float(s) for s in predicted], [float(s) for s in test.scores()])
        assert 0.0 < r <= 1.0, f"unexpected test correlation {r}"

        model_path = workdir / "model.json"
        model.save(model_path)
        restored = ps.Model.load(model_path)
        assert restored.predict(test) == predicted
        assert ps.Model.from_json(model.to_json()).coefficients == model.coefficients

        trials = ps.simulate(
            train, test, m_grid=[10, 20], iterations=2, algorithms=["random", "fedorov"]
        )
        assert len(trials) == 8
        assert {t.algorithm for t in trials} == {"random", "fedorov"}
        assert all(t.reference_r is not None for t in trials)

        rows = ps.summarize(trials)
        assert len(rows) == 4
        table = ps.percent_table(rows)
        assert "percent change in mean r vs random" in table

        assert abs(ps.fisher_z(0.5) - 0.549306) < 1e-6
        t_stat, p_value = ps.welch_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert t_stat == 0.0 and p_value == 1.0
        assert ps.derive_seed(1, ["a"]) != ps.derive_seed(1, ["b"])

        try:
            ps.select(train, "sobol", 5)
        except ValueError:
            pass
        else:
            raise AssertionError("unknown algorithm must raise ValueError")

        try:
            ps.Dataset.load(workdir / "missing.csv", workdir / "missing.json")
        except IOError:
            pass
        else:
            raise AssertionError("missing files must raise IOError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
