import logging
import sys
import tempfile
from pathlib import Path

from sitswin import Dataset, SegmentationModel, evaluate, fit, format_report, preset, synth_dataset


def main(workdir: Path) -> None:
    """Synthesize a small dataset, train the tiny preset on it and print the report."""
    config = preset("tiny")
    cfg = config.model

    # 64 train / 16 val tiles of the tiny geometry
    data_dir = workdir / "data"
    synth_dataset(data_dir, 80, cfg.num_classes, cfg.time_steps, cfg.in_channels, seed=7, val_fraction=0.2, test_fraction=0.0)
    dataset = Dataset.open(data_dir, cfg.time_steps)

    model = SegmentationModel(cfg, config.train.seed)
    result = fit(model, dataset.split("train"), config.train, val_tiles=dataset.split("val"), stop_epoch=30)
    for line in result.log_lines():
        print(line)

    best = result.best.build_model() if result.best is not None else model
    columns = [(split, evaluate(best, dataset.split(split))) for split in ("train", "val")]
    print(format_report(columns, [c.name for c in dataset.index.classes]))


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    if len(sys.argv) > 1:
        main(Path(sys.argv[1]))
    else:
        with tempfile.TemporaryDirectory() as tmp:
            main(Path(tmp))
