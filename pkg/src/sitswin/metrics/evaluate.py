from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

from sitswin.data.tile import IGNORE_ID, SitsTile, batch_tiles
from sitswin.decoder.model import SegmentationModel
from sitswin.errors import ParameterError
from sitswin.metrics.confusion import ConfusionMatrix

logger = logging.getLogger(__name__)


def _partial(model: SegmentationModel, tiles: Sequence[SitsTile], ignore_id: int) -> ConfusionMatrix:
    cm = ConfusionMatrix(model.cfg.num_classes)
    for tile in tiles:
        values, labels = batch_tiles([tile])
        cm.accumulate(model.predict(values)[0], labels[0], ignore_id)
    return cm


def evaluate(
    model: SegmentationModel,
    tiles: Sequence[SitsTile],
    threads: int = 1,
    ignore_id: int = IGNORE_ID,
) -> ConfusionMatrix:
    """
    Pooled confusion matrix of `model` over `tiles`.

    With threads > 1 the tiles are dealt round-robin to workers, each filling
    its own matrix; the partial matrices are summed at the end.
    """
    if threads < 1:
        raise ParameterError(f"evaluate: threads must be >= 1, got {threads}")
    was_training = model.training
    model.eval()
    try:
        if threads == 1 or len(tiles) < 2:
            cm = _partial(model, tiles, ignore_id)
        else:
            shares = [tiles[i::threads] for i in range(threads)]
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda share: _partial(model, share, ignore_id), shares))
            cm = ConfusionMatrix(model.cfg.num_classes)
            for part in parts:
                cm = cm + part
    finally:
        model.train(was_training)
    logger.info("evaluate: %d tiles, %d scored pixels, %d threads", len(tiles), cm.total, threads)
    return cm
