"""Smoke test for the swaf extension module.

Build first: pip install --no-build-isolation -e crates/python
"""

import sys
import tempfile
from pathlib import Path

import swaf


def main() -> int:
    assert swaf.iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0
    assert abs(swaf.iou((0, 0, 10, 10), (5, 0, 15, 10)) - 1 / 3) < 1e-12

    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "data"
        train, test = swaf.synth("slot-filling", str(out), seed=3, systems=3,
                                 train_keys=120, test_keys=80)
        assert train.systems == ["sys01", "sys02", "sys03"]
        assert len(test) > 0 and test.has_gold

        model = swaf.Model.train(train, seed=3)
        assert len(model.weights) == len(model.feature_names)
        fused = model.evaluate(test)
        best_single = max(r["f1"] for _, r in test.score_systems())
        curve, best_t = test.vote_sweep()
        print(f"fused f1 {fused['f1']:.4f}, best single {best_single:.4f}, vote t={best_t}")

        path = Path(tmp) / "model.txt"
        model.save(str(path))
        again = swaf.Model.load(str(path))
        assert again.weights == model.weights and again.bias == model.bias
        assert again.predict(test) == model.predict(test)

        report = swaf.run("vote-sweep", task="slot-filling",
                          inputs=[str(out / "test" / f"sys0{i}.tsv") for i in (1, 2, 3)],
                          gold=str(out / "test" / "gold.tsv"),
                          out=str(Path(tmp) / "curve.tsv"))
        assert (Path(tmp) / "curve.tsv").exists(), report

        two = swaf.Dataset.load("slot-filling",
                                [str(out / "test" / f"sys0{i}.tsv") for i in (1, 2)],
                                docs=str(out / "test" / "docs.tsv"))
        narrow = swaf.Model.train(swaf.Dataset.load(
            "slot-filling", [str(out / "train" / f"sys0{i}.tsv") for i in (1, 2)],
            gold=str(out / "train" / "gold.tsv"), docs=str(out / "train" / "docs.tsv")))
        narrow.predict(two)
        try:
            narrow.predict(test)
        except swaf.IncompatibleModelError:
            pass
        else:
            raise AssertionError("expected IncompatibleModelError")

    print("smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
