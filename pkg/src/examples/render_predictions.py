import sys
from pathlib import Path

from sitswin.data import Dataset, batch_tiles
from sitswin.render import Palette, render_class_map, render_diff, render_rgb, stitch, write_ppm
from sitswin.train import load_checkpoint


def main(checkpoint: str, data_dir: str, out_dir: str) -> None:
    """Input composite, prediction, ground truth and disagreement for each test tile."""
    ckpt = load_checkpoint(checkpoint)
    model = ckpt.build_model().eval()
    dataset = Dataset.open(data_dir, ckpt.config.model.time_steps)
    palette = Palette.from_classes(dataset.index.classes)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    tiles = dataset.split("test")
    for i, tile in enumerate(tiles):
        pred = model.predict(batch_tiles([tile])[0])[0]
        bands = (2, 1, 0) if tile.bands >= 3 else (0, 0, 0)
        panels = [
            render_rgb(tile.values, tile.time_steps // 2, bands, gain=1.5),
            render_class_map(pred, palette),
            render_class_map(tile.labels, palette),
            render_diff(pred, tile.labels),
        ]
        write_ppm(out / f"tile_{i:03d}.ppm", stitch(panels, 1, len(panels)))

    print(f"wrote {len(tiles)} panels to {out}")


if __name__ == "__main__":
    if len(sys.argv) != 4:
        print("usage: render_predictions.py CHECKPOINT DATA_DIR OUT_DIR")
        sys.exit(2)
    main(*sys.argv[1:])
