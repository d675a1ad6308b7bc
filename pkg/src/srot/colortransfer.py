"""Palette-based color transfer.

Each image is reduced to a median-cut palette, read as a weighted point cloud
in normalized RGB, and the source palette is moved onto the target palette by
the barycentric projection of a transport plan.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DiscreteMeasure, TransportPlan, cost_matrix, l1_error
from .exact import solve_exact
from .sinkhorn import SolverConfig, solve_eot, solve_with_reference
from .sliced import SlicedConfig, sot_plan

METHODS = ("sot", "eot", "srot", "exact")


class ImageFormatError(ValueError):
    pass


@dataclass
class Palette:
    """Quantized image: ``centroids`` in ``[0, 1]^3``, pixel-fraction ``weights``.

    ``assignment`` maps every pixel (row-major) to its centroid and ``shape``
    is the ``(height, width)`` of the image it came from.
    """

    centroids: np.ndarray
    weights: np.ndarray
    assignment: np.ndarray
    shape: tuple

    @property
    def size(self) -> int:
        return len(self.weights)


def _as_pixels(image) -> tuple[np.ndarray, tuple]:
    arr = np.asarray(image)
    if arr.ndim == 3 and arr.shape[2] == 3:
        shape = arr.shape[:2]
        arr = arr.reshape(-1, 3)
    elif arr.ndim == 2 and arr.shape[1] == 3:
        shape = (arr.shape[0], 1)
    else:
        raise ImageFormatError(f"expected (h, w, 3) or (n, 3) pixels, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ImageFormatError("image has no pixels")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255):
            raise ImageFormatError("pixel values must lie in [0, 255]")
        arr = np.rint(arr).astype(np.uint8)
    return arr, shape


def median_cut(image, k: int = 256) -> Palette:
    """Median-cut quantization to at most ``k`` colors, no dithering.

    Works on the distinct colors weighted by their pixel counts. The box with
    the most pixels is split next (earliest-created box on ties) along its
    widest channel, at the count-weighted median value: colors at or below
    the median go to the lower box. Boxes holding a single color are never
    split, so an image with at most ``k`` colors is reproduced exactly.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pixels, shape = _as_pixels(image)
    colors, inverse, counts = np.unique(pixels, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    colors = colors.astype(np.int64)
    # box = (creation id, member color indices)
    boxes = [(0, np.arange(len(colors)))]
    created = 1
    while len(boxes) < k:
        best = None
        for pos, (cid, members) in enumerate(boxes):
            if len(members) < 2:
                continue
            key = (-int(counts[members].sum()), cid)
            if best is None or key < best[0]:
                best = (key, pos)
        if best is None:
            break
        pos = best[1]
        members = boxes[pos][1]
        sub = colors[members]
        axis = int(np.argmax(sub.max(axis=0) - sub.min(axis=0)))
        vals = sub[:, axis]
        order = np.argsort(vals, kind="stable")
        cum = np.cumsum(counts[members][order])
        median = vals[order][int(np.searchsorted(cum, cum[-1] / 2.0))]
        lower = vals <= median
        if lower.all():
            lower = vals < median
        boxes[pos] = (boxes[pos][0], members[lower])
        boxes.append((created, members[~lower]))
        created += 1
    label = np.empty(len(colors), dtype=np.int64)
    centroids = np.empty((len(boxes), 3))
    weights = np.empty(len(boxes))
    total = counts.sum()
    for b, (_, members) in enumerate(boxes):
        label[members] = b
        c = counts[members]
        centroids[b] = (colors[members] * c[:, None]).sum(axis=0) / c.sum() / 255.0
        weights[b] = c.sum() / total
    return Palette(centroids, weights, label[inverse], tuple(shape))


def palette_measure(palette: Palette) -> DiscreteMeasure:
    return DiscreteMeasure(palette.centroids, palette.weights)


def transfer(source: Palette, plan, target: Palette) -> np.ndarray:
    """Barycentric image of each source centroid, clamped to the unit cube.

    A source color whose plan row is empty keeps its own value (with a
    warning).
    """
    P = plan.entries if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)
    if P.shape != (source.size, target.size):
        raise ValueError(f"plan shape {P.shape} vs palettes ({source.size}, {target.size})")
    rows = P.sum(axis=1)
    empty = rows <= 0
    out = source.centroids.astype(float).copy()
    if empty.any():
        warnings.warn(f"{int(empty.sum())} source colors have no outgoing mass; left unchanged", stacklevel=2)
    full = ~empty
    out[full] = (P[full] / rows[full, None]) @ target.centroids
    return np.clip(out, 0.0, 1.0)


def recolor(palette: Palette, centroids) -> np.ndarray:
    """``(h, w, 3)`` float image with each pixel replaced by its new centroid."""
    centroids = np.asarray(centroids, dtype=float)
    return np.clip(centroids[palette.assignment], 0.0, 1.0).reshape(*palette.shape, 3)


def quantize(image) -> np.ndarray:
    """``[0, 1]`` floats to 8-bit by ``round(255 v)``, clamped."""
    return np.clip(np.rint(np.asarray(image, dtype=float) * 255.0), 0, 255).astype(np.uint8)


def quantized_image(palette: Palette) -> np.ndarray:
    return quantize(recolor(palette, palette.centroids))


# -- image I/O ---------------------------------------------------------------

def _ppm_tokens(data: bytes, count: int):
    """First ``count`` header tokens (comments skipped) and the offset after them."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ImageFormatError("truncated PPM header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    # A single whitespace byte separates the header from the raster.
    return tokens, pos + 1


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, offset = _ppm_tokens(data, 4)
    if tokens[0] != b"P6":
        raise ImageFormatError(f"{path}: not a binary PPM (P6) file")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError(f"{path}: malformed PPM header") from exc
    if maxval != 255:
        raise ImageFormatError(f"{path}: only 8-bit PPM (maxval 255) is supported")
    raster = data[offset:offset + w * h * 3]
    if len(raster) != w * h * 3:
        raise ImageFormatError(f"{path}: truncated PPM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy()


def write_ppm(image, path) -> None:
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = quantize(img)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_image(path) -> np.ndarray:
    """8-bit RGB array from a PPM (P6) or PNG file; alpha is dropped."""
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        return read_ppm(path)
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_image(image, path) -> None:
    path = Path(path)
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = quantize(img)
    if path.suffix.lower() in (".ppm", ".pnm"):
        write_ppm(img, path)
    elif path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(img, mode="RGB").save(path)
    else:
        raise ImageFormatError(f"unsupported output extension {path.suffix!r} (use .ppm or .png)")


# -- pipeline ----------------------------------------------------------------

@dataclass
class ColorTransferResult:
    image: np.ndarray  # uint8 (h, w, 3)
    plan: TransportPlan
    exact_plan: TransportPlan
    l1_vs_exact: float
    runtime_ms: float
    method: str
    epsilon: float
    converged: bool = True


def method_plan(method: str, source: DiscreteMeasure, target: DiscreteMeasure, cost,
                solver: SolverConfig, sliced: SlicedConfig, exact_plan: TransportPlan | None = None):
    """``(plan, converged)`` for one of :data:`METHODS`."""
    if method == "exact":
        if exact_plan is None:
            exact_plan = solve_exact(cost, source, target).plan
        return exact_plan, True
    if method == "sot":
        return sot_plan(source, target, cost, sliced), True
    if method == "eot":
        plan, duals = solve_eot(source, target, cost, solver)
        return plan, duals.converged
    if method == "srot":
        plan, duals = solve_with_reference(source, target, cost, sot_plan(source, target, cost, sliced), solver)
        return plan, duals.converged
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def run_color_transfer(source_image, target_image, method: str, solver: SolverConfig | None = None,
                       sliced: SlicedConfig | None = None, k: int = 256) -> ColorTransferResult:
    """Recolor ``source_image`` with the palette of ``target_image``.

    The reported ``l1_vs_exact`` compares the method's plan with the exact
    OT plan between the two palettes.
    """
    solver = solver or SolverConfig()
    sliced = sliced or SlicedConfig()
    src = median_cut(source_image, k)
    tgt = median_cut(target_image, k)
    mu, nu = palette_measure(src), palette_measure(tgt)
    C = cost_matrix(mu, nu)
    exact = solve_exact(C, mu, nu).plan
    t0 = time.perf_counter()
    plan, converged = method_plan(method, mu, nu, C, solver, sliced, exact)
    runtime = 1e3 * (time.perf_counter() - t0)
    image = quantize(recolor(src, transfer(src, plan, tgt)))
    return ColorTransferResult(image, plan, exact, l1_error(plan, exact), runtime, method,
                               solver.epsilon, converged)


def write_diagnostics(rows, path) -> None:
    """CSV with columns pair, method, epsilon, l1_vs_exact, runtime_ms."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair", "method", "epsilon", "l1_vs_exact", "runtime_ms"])
        for pair, res in rows:
            w.writerow([pair, res.method, f"{res.epsilon:.17g}", f"{res.l1_vs_exact:.17g}",
                        f"{res.runtime_ms:.3f}"])


def read_pairs(path) -> list[tuple[str, Path, Path]]:
    """Image pairs from a CSV with columns ``source,target`` (paths relative to the file).

    Returns ``(name, source_path, target_path)`` with ``name = "<source stem>-><target stem>"``.
    """
    path = Path(path)
    pairs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            src, tgt = path.parent / row["source"], path.parent / row["target"]
            pairs.append((f"{src.stem}->{tgt.stem}", src, tgt))
    if not pairs:
        raise ValueError(f"{path}: no image pairs")
    return pairs


def synthetic_image(seed: int, height: int = 48, width: int = 64) -> np.ndarray:
    """Smooth random color field: blurred gradients plus a few colored blobs."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width] / np.array([height, width])[:, None, None]
    base = rng.uniform(0, 1, (3, 3))
    img = (base[0][None, None, :] * (1 - xx[..., None]) + base[1][None, None, :] * xx[..., None]) * 0.6
    img += 0.4 * base[2][None, None, :] * yy[..., None]
    for _ in range(rng.integers(3, 7)):
        cy, cx = rng.uniform(0, 1, 2)
        r = rng.uniform(0.08, 0.3)
        color = rng.uniform(0, 1, 3)
        mask = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
        img = img * (1 - mask[..., None]) + color[None, None, :] * mask[..., None]
    img += rng.normal(0, 0.02, img.shape)
    return quantize(np.clip(img, 0, 1))
