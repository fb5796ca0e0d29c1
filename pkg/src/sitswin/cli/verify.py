"""
Property suites run by `sitswin verify`.

Each suite returns CheckResults; the command prints one PASS/FAIL line per
check and exits non-zero when any check fails.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from sitswin.config import preset
from sitswin.data.tile import IGNORE_ID
from sitswin.decoder.blocks import ResidualBlock, UpConcat
from sitswin.decoder.model import SegmentationModel
from sitswin.errors import UndefinedKappaError
from sitswin.metrics.confusion import ConfusionMatrix, weighted_average
from sitswin.swin.attention import WindowAttention
from sitswin.swin.block import PatchMerging, SwinBlock
from sitswin.swin.windows import (
    WindowSpec,
    attention_mask,
    cyclic_shift,
    relative_position_index,
    window_partition,
    window_reverse,
)
from sitswin.tensor import ops
from sitswin.tensor.core import Tensor, no_grad, precision
from sitswin.tensor.gradcheck import gradcheck, numerical_gradient, relative_error
from sitswin.tensor.nn import Module

logger = logging.getLogger(__name__)

SEEDS = (0, 1, 2)
OP_RTOL = 1e-5
MODEL_RTOL = 1e-3
ORACLE_TOL = 1e-5


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.suite}/{self.name}" + (f": {self.detail}" if self.detail else "")


GradCase = Tuple[str, Callable[..., Tensor], List[Tensor]]


def _leaf(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _scramble(module: Module, rng: np.random.Generator, scale: float = 0.5) -> Module:
    """Replace every parameter with N(0, scale) so no gradient entry is vanishingly small."""
    for p in module.parameters():
        p.data = rng.standard_normal(p.shape) * scale
    return module


def op_cases(rng: np.random.Generator) -> List[GradCase]:
    """Every differentiable op on small extents (at most 6 per axis)."""
    labels = rng.integers(0, 3, size=(2, 2, 3))
    labels[0, 0, 0] = IGNORE_ID
    rows = np.array([0, 2, 2, 1, 0])

    def chain(x: Tensor, w: Tensor) -> Tensor:
        logits = ops.softmax_last(ops.gelu(ops.matmul(x, w)))
        return ops.cross_entropy(ops.rearrange(logits, "b h w k -> b k h w"), labels)

    return [
        ("add", ops.add, [_leaf(rng, 3, 4), _leaf(rng, 4)]),
        ("sub", ops.sub, [_leaf(rng, 3, 4), _leaf(rng, 3, 1)]),
        ("mul", ops.mul, [_leaf(rng, 3, 4), _leaf(rng, 3, 1)]),
        ("matmul", ops.matmul, [_leaf(rng, 2, 3, 4), _leaf(rng, 4, 5)]),
        ("gelu", ops.gelu, [_leaf(rng, 3, 5)]),
        ("leaky_relu", lambda x: ops.leaky_relu(x, 0.01), [_leaf(rng, 3, 5)]),
        ("softmax_last", ops.softmax_last, [_leaf(rng, 3, 5)]),
        ("layer_norm", lambda x, g, b: ops.layer_norm(x, g, b), [_leaf(rng, 3, 6), _leaf(rng, 6), _leaf(rng, 6)]),
        ("instance_norm", ops.instance_norm, [_leaf(rng, 2, 3, 2, 2, 2)]),
        ("rearrange", lambda x: ops.rearrange(x, "b (d w) c -> b c d w", w=2), [_leaf(rng, 2, 4, 3)]),
        ("roll", lambda x: ops.roll(x, (1, -2), (1, 2)), [_leaf(rng, 2, 3, 4)]),
        ("concat", lambda a, b: ops.concat([a, b], axis=1), [_leaf(rng, 2, 2, 3), _leaf(rng, 2, 1, 3)]),
        ("take_rows", lambda t: ops.take_rows(t, rows), [_leaf(rng, 3, 4)]),
        ("mean", lambda x: ops.mean(x, axis=1), [_leaf(rng, 3, 4, 2)]),
        ("conv3d", lambda x, w, b: ops.conv3d(x, w, b, pad=1), [_leaf(rng, 1, 2, 3, 3, 3), _leaf(rng, 3, 2, 3, 3, 3), _leaf(rng, 3)]),
        ("conv3d_strided", lambda x, w: ops.conv3d(x, w, stride=2), [_leaf(rng, 1, 2, 4, 4, 4), _leaf(rng, 3, 2, 2, 2, 2)]),
        ("conv3d_transpose", lambda x, w: ops.conv3d_transpose(x, w, 2), [_leaf(rng, 1, 3, 2, 2, 2), _leaf(rng, 3, 2, 2, 2, 2)]),
        ("cross_entropy", lambda z: ops.cross_entropy(z, labels), [_leaf(rng, 2, 3, 2, 3)]),
        ("matmul_gelu_softmax_cross_entropy", chain, [_leaf(rng, 2, 2, 3, 4), _leaf(rng, 4, 3)]),
    ]


def block_cases(rng: np.random.Generator) -> List[GradCase]:
    """Composite blocks, checked with respect to their input and every parameter."""
    spec = WindowSpec.shifted((2, 2, 2))
    attention = _scramble(WindowAttention(4, 2, spec, rng), rng)
    mask = attention_mask((4, 2, 2), spec)
    swin = _scramble(SwinBlock(4, 2, (4, 4, 2), (2, 2, 2), True, rng), rng)
    merge = _scramble(PatchMerging(2, rng), rng)
    residual = _scramble(ResidualBlock(2, 3, rng), rng)
    up = _scramble(UpConcat(4, 2, rng), rng)
    cases: List[GradCase] = [
        ("window_attention", lambda x, *_: attention(x, mask), [_leaf(rng, 4, 8, 4)] + attention.parameters()),
        ("swin_block_shifted", lambda x, *_: swin(x), [_leaf(rng, 1, 4, 4, 2, 4)] + swin.parameters()),
        ("patch_merging", lambda x, *_: merge(x), [_leaf(rng, 1, 2, 4, 2, 2)] + merge.parameters()),
        ("residual_block", lambda x, *_: residual(x), [_leaf(rng, 1, 2, 2, 3, 3)] + residual.parameters()),
        ("up_concat", lambda low, skip, *_: up(low, skip), [_leaf(rng, 1, 4, 1, 2, 2), _leaf(rng, 1, 2, 2, 4, 4)] + up.parameters()),
    ]
    return cases


def model_gradient_error(seed: int, samples: int = 20) -> float:
    """
    End-to-end check of the gradcheck preset at 32-bit.

    Analytic float32 gradients of the loss are compared with float64 central
    differences taken at the same parameter values, on `samples` parameter
    entries drawn from those with the largest analytic gradients.
    """
    cfg = preset("gradcheck").model
    rng = np.random.default_rng(seed)
    values = rng.random((1,) + cfg.input_shape)
    labels = rng.integers(0, cfg.num_classes, size=(1, cfg.height, cfg.width))

    with precision(np.float32):
        model = SegmentationModel(cfg, seed)
    loss = ops.cross_entropy(model(Tensor(values.astype(np.float32))), labels)
    loss.backward()
    named = dict(model.named_parameters())
    state = model.state_dict()

    with precision(np.float64):
        reference = SegmentationModel(cfg, seed)
    reference.load_state_dict(state)
    reference_params = dict(reference.named_parameters())

    def evaluate() -> float:
        with no_grad():
            return ops.cross_entropy(reference(Tensor(values)), labels).item()

    flat = [(name, i, abs(float(g))) for name, p in named.items() for i, g in enumerate(p.grad.reshape(-1))]
    flat.sort(key=lambda entry: -entry[2])
    pool = flat[: max(samples, len(flat) // 10)]
    picks = rng.choice(len(pool), size=min(samples, len(pool)), replace=False)
    worst = 0.0
    for pick in picks:
        name, i, _ = pool[int(pick)]
        analytic = np.float64(named[name].grad.reshape(-1)[i])
        numeric = numerical_gradient(evaluate, reference_params[name].data, eps=1e-6, positions=[i]).reshape(-1)[i]
        worst = max(worst, relative_error(np.array([analytic]), np.array([numeric]), atol=1e-6))
    return worst


def gradcheck_suite() -> List[CheckResult]:
    results = []
    with precision(np.float64):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            for name, fn, inputs in op_cases(rng) + block_cases(rng):
                outcome = gradcheck(fn, inputs, rtol=OP_RTOL, seed=seed)
                results.append(CheckResult("gradcheck", f"{name}[seed={seed}]", outcome.passed, f"max rel err {outcome.max_error:.3e}"))
    for seed in SEEDS:
        error = model_gradient_error(seed)
        results.append(CheckResult("gradcheck", f"model_float32[seed={seed}]", error < MODEL_RTOL, f"max rel err {error:.3e}"))
    return results


# ---- Windows ----

def dense_shifted_attention(x: np.ndarray, attention: WindowAttention) -> np.ndarray:
    """
    Shifted-window attention computed without windows: every token attends
    to the tokens that share its shifted window and are not reached through
    the cyclic wrap, with the relative position bias of their displacement.
    """
    spec = attention.spec
    b, d, h, w, c = x.shape
    heads, hd = attention.num_heads, attention.head_dim
    grid = np.stack(np.meshgrid(np.arange(d), np.arange(h), np.arange(w), indexing="ij"), axis=-1).reshape(-1, 3)
    dims = np.array([d, h, w])
    window = np.array(spec.window)
    shifted_cell = ((grid - np.array(spec.shift)) % dims) // window
    same_window = (shifted_cell[:, None, :] == shifted_cell[None, :, :]).all(-1)
    displacement = grid[:, None, :] - grid[None, :, :]
    contiguous = (np.abs(displacement) < window).all(-1)
    allowed = same_window & contiguous

    wd, wh, ww = spec.window
    rel = displacement + window - 1
    bias_index = (rel[..., 0] * (2 * wh - 1) + rel[..., 1]) * (2 * ww - 1) + rel[..., 2]
    bias = attention.bias_table.data[np.where(allowed, bias_index, 0)]

    tokens = x.reshape(b, -1, c)
    qkv = tokens @ attention.qkv.weight.data + attention.qkv.bias.data
    q, k, v = (qkv[..., i * c:(i + 1) * c].reshape(b, -1, heads, hd) for i in range(3))
    out = np.zeros((b, tokens.shape[1], heads, hd))
    for head in range(heads):
        scores = np.einsum("bid,bjd->bij", q[:, :, head] * attention.scale, k[:, :, head]) + bias[..., head]
        scores = np.where(allowed, scores, -np.inf)
        scores -= scores.max(axis=-1, keepdims=True)
        weights = np.exp(scores)
        weights /= weights.sum(axis=-1, keepdims=True)
        out[:, :, head] = weights @ v[:, :, head]
    out = out.reshape(b, -1, c) @ attention.proj.weight.data + attention.proj.bias.data
    return out.reshape(b, d, h, w, c)


def windowed_shifted_attention(x: np.ndarray, attention: WindowAttention) -> np.ndarray:
    """The same attention through shift, partition, masked window attention, reverse and unshift."""
    spec = attention.spec
    b, d, h, w, c = x.shape
    with no_grad():
        shifted = cyclic_shift(Tensor(x), spec.shift, +1)
        windows = window_partition(shifted, spec).reshape(-1, spec.tokens, c)
        out = attention(windows, attention_mask((d, h, w), spec)).reshape((-1,) + spec.window + (c,))
        out = cyclic_shift(window_reverse(out, spec, (b, d, h, w)), spec.shift, -1)
    return out.data


def shifted_window_oracle_error(seed: int, dims: Sequence[int] = (4, 6, 6), window: Sequence[int] = (2, 3, 3)) -> float:
    """max |windowed - dense| for shifted-window attention on one random volume."""
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        attention = _scramble(WindowAttention(8, 2, WindowSpec.shifted(window), rng), rng)
        x = rng.standard_normal((2,) + tuple(dims) + (8,))
        return float(np.abs(windowed_shifted_attention(x, attention) - dense_shifted_attention(x, attention)).max())


def random_window_config(rng: np.random.Generator) -> Tuple[Tuple[int, ...], WindowSpec]:
    window = tuple(int(v) for v in rng.integers(1, 4, size=3))
    counts = rng.integers(1, 4, size=3)
    shape = (int(rng.integers(1, 3)),) + tuple(int(w * n) for w, n in zip(window, counts)) + (int(rng.integers(1, 5)),)
    return shape, WindowSpec(window)


def windows_suite(configs: int = 50) -> List[CheckResult]:
    results = []
    rng = np.random.default_rng(0)
    failures = 0
    for _ in range(configs):
        shape, spec = random_window_config(rng)
        x = rng.standard_normal(shape).astype(np.float32)
        with no_grad():
            back = window_reverse(window_partition(Tensor(x), spec), spec, shape[:4]).data
        failures += int(back.dtype != x.dtype or back.tobytes() != x.tobytes())
    results.append(CheckResult("windows", "partition_reverse_round_trip", failures == 0, f"{configs - failures}/{configs} bit-exact"))

    for seed in SEEDS:
        error = shifted_window_oracle_error(seed)
        results.append(
            CheckResult("windows", f"shifted_mask_matches_dense[seed={seed}]", error < ORACLE_TOL, f"max abs diff {error:.3e}")
        )

    plain = attention_mask((4, 6, 6), WindowSpec((2, 3, 3))).data
    results.append(CheckResult("windows", "unshifted_mask_is_zero", not plain.any(), f"{int(np.count_nonzero(plain))} nonzero"))

    spec = WindowSpec((2, 3, 3))
    index, size = relative_position_index(spec)
    diagonal = set(np.diag(index).tolist())
    centre = ((spec.window[0] - 1) * (2 * spec.window[1] - 1) + spec.window[1] - 1) * (2 * spec.window[2] - 1) + spec.window[2] - 1
    ok = size == 75 and set(np.unique(index).tolist()) == set(range(size)) and diagonal == {centre}
    results.append(CheckResult("windows", "relative_position_index", ok, f"table {size}, centre {centre}"))
    return results


# ---- Metrics ----

def metrics_suite(matrices: int = 1000) -> List[CheckResult]:
    results = []
    cm = ConfusionMatrix.from_counts([[40, 10], [20, 30]])
    kappa, oa = cm.cohen_kappa(), cm.overall_accuracy()
    results.append(CheckResult("metrics", "kappa_hand_oracle", abs(kappa - 0.4) < 1e-12, f"kappa {kappa!r}"))
    results.append(CheckResult("metrics", "accuracy_hand_oracle", abs(oa - 0.70) < 1e-12, f"OA {oa!r}"))

    perfect = ConfusionMatrix.from_counts(np.diag([5, 7, 3]))
    results.append(CheckResult("metrics", "perfect_agreement", perfect.cohen_kappa() == 1.0 and perfect.overall_accuracy() == 1.0))

    rng = np.random.default_rng(0)
    above, recall_mismatch = 0, 0
    for _ in range(matrices):
        k = int(rng.integers(2, 7))
        counts = rng.integers(0, 50, size=(k, k))
        counts[0, 0] += 1
        cm = ConfusionMatrix.from_counts(counts)
        oa = cm.overall_accuracy()
        try:
            kappa = cm.cohen_kappa()
        except UndefinedKappaError:
            continue
        above += int(kappa > oa + 1e-12)
        _, recall, _ = weighted_average(cm.per_class_prf())
        recall_mismatch += int(abs(recall - oa) > 1e-12)
    results.append(CheckResult("metrics", "kappa_at_most_accuracy", above == 0, f"{above} violations in {matrices}"))
    results.append(CheckResult("metrics", "weighted_recall_is_accuracy", recall_mismatch == 0, f"{recall_mismatch} violations in {matrices}"))
    return results


SUITES: Dict[str, Callable[[], List[CheckResult]]] = {
    "gradcheck": gradcheck_suite,
    "windows": windows_suite,
    "metrics": metrics_suite,
}


def run_suites(names: Sequence[str]) -> List[CheckResult]:
    results: List[CheckResult] = []
    for name in names:
        logger.info("verify: running suite %s", name)
        results.extend(SUITES[name]())
    return results
