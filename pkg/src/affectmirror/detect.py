"""Haar-cascade face detection: integral images, staged window evaluation,
multi-scale scanning, and rectangle grouping.

Cascade files use the common XML interchange format, either the old stage
layout (per-stage ``<trees>`` with inline features) or the new one (separate
``<features>`` table with ``internalNodes``/``leafValues``). Only depth-1
(stump) classifiers and upright features are supported; that covers the widely
distributed frontal-face files.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, ParseError, SchemaError, WindowOutOfBounds
from .frames import Frame


@dataclass(frozen=True)
class IntegralImage:
    """Cumulative sums with a zero border row/column, so any rectangle sum is
    four lookups. Carries the squared-pixel integral for variance lookups."""

    sums: np.ndarray  # (h+1, w+1) int64
    sq: np.ndarray    # (h+1, w+1) int64

    @property
    def width(self) -> int:
        return self.sums.shape[1] - 1

    @property
    def height(self) -> int:
        return self.sums.shape[0] - 1


def integral_image(frame: Frame | np.ndarray) -> IntegralImage:
    px = frame.pixels if isinstance(frame, Frame) else frame
    if px.ndim != 2:
        raise ValueError("integral_image needs a grayscale image")
    p = px.astype(np.int64)
    sums = np.zeros((p.shape[0] + 1, p.shape[1] + 1), dtype=np.int64)
    sq = np.zeros_like(sums)
    np.cumsum(np.cumsum(p, axis=0), axis=1, out=sums[1:, 1:])
    np.cumsum(np.cumsum(p * p, axis=0), axis=1, out=sq[1:, 1:])
    return IntegralImage(sums, sq)


def rect_sum(ii: IntegralImage, x: int, y: int, w: int, h: int) -> int:
    s = ii.sums
    return int(s[y + h, x + w] - s[y, x + w] - s[y + h, x] + s[y, x])


@dataclass(frozen=True)
class HaarRect:
    x: int
    y: int
    w: int
    h: int
    weight: float


@dataclass(frozen=True)
class WeakClassifier:
    rects: tuple[HaarRect, ...]
    node_threshold: float
    fail_value: float  # added when the normalized feature is below threshold
    pass_value: float


@dataclass(frozen=True)
class Stage:
    stage_threshold: float
    weak_classifiers: tuple[WeakClassifier, ...]


@dataclass(frozen=True)
class CascadeModel:
    window_w: int
    window_h: int
    stages: tuple[Stage, ...]


@dataclass(frozen=True)
class FaceBox:
    x: int
    y: int
    w: int
    h: int
    neighbors: int = 0
    score: float = 0.0

    @property
    def area(self) -> int:
        return self.w * self.h


@dataclass(frozen=True)
class DetectParams:
    scale_factor: float = 1.1
    min_neighbors: int = 3
    min_size: int = 48
    step: int = 2

    def __post_init__(self):
        if not 1.0 < self.scale_factor <= 2.0:
            raise ValueError(f"scale_factor must be in (1, 2], got {self.scale_factor}")
        if self.min_neighbors < 0 or self.min_size < 1 or self.step < 1:
            raise ValueError("min_neighbors, min_size and step must be non-negative/positive")


# --- cascade XML -------------------------------------------------------------


def _parse_rect_line(text: str) -> HaarRect:
    parts = text.split()
    if len(parts) != 5:
        raise SchemaError(f"rect needs 5 fields, got {text!r}")
    x, y, w, h = (int(p) for p in parts[:4])
    return HaarRect(x, y, w, h, float(parts[4]))


def _check_rect(rect: HaarRect, win_w: int, win_h: int):
    if rect.w <= 0 or rect.h <= 0 or rect.x < 0 or rect.y < 0:
        raise BoundsError(f"degenerate haar rect {rect}")
    if rect.x + rect.w > win_w or rect.y + rect.h > win_h:
        raise BoundsError(
            f"rect ({rect.x},{rect.y},{rect.w},{rect.h}) outside {win_w}x{win_h} window"
        )


def _load_new_style(cascade: ET.Element) -> CascadeModel:
    def req(parent, tag):
        el = parent.find(tag)
        if el is None:
            raise SchemaError(f"missing <{tag}>")
        return el

    win_w = int(req(cascade, "width").text)
    win_h = int(req(cascade, "height").text)
    features = []
    for feat in req(cascade, "features"):
        tilted = feat.find("tilted")
        if tilted is not None and int(tilted.text) != 0:
            raise SchemaError("tilted features are not supported")
        rects = tuple(_parse_rect_line(r.text) for r in req(feat, "rects"))
        for r in rects:
            _check_rect(r, win_w, win_h)
        features.append(rects)
    stages = []
    for stage_el in req(cascade, "stages"):
        thr = float(req(stage_el, "stageThreshold").text)
        weaks = []
        for weak in req(stage_el, "weakClassifiers"):
            nodes = req(weak, "internalNodes").text.split()
            leaves = req(weak, "leafValues").text.split()
            if len(nodes) != 4 or len(leaves) != 2:
                raise SchemaError("only depth-1 (stump) weak classifiers are supported")
            feat_idx = int(nodes[2])
            if feat_idx >= len(features):
                raise SchemaError(f"feature index {feat_idx} out of range")
            weaks.append(
                WeakClassifier(
                    rects=features[feat_idx],
                    node_threshold=float(nodes[3]),
                    fail_value=float(leaves[0]),
                    pass_value=float(leaves[1]),
                )
            )
        if not weaks:
            raise SchemaError("stage with no weak classifiers")
        stages.append(Stage(thr, tuple(weaks)))
    if not stages:
        raise SchemaError("cascade with no stages")
    return CascadeModel(win_w, win_h, tuple(stages))


def _load_old_style(root_el: ET.Element) -> CascadeModel:
    size = root_el.find("size")
    if size is None or not size.text:
        raise SchemaError("missing <size>")
    win_w, win_h = (int(t) for t in size.text.split())
    stages_el = root_el.find("stages")
    if stages_el is None:
        raise SchemaError("missing <stages>")
    stages = []
    for stage_el in stages_el:
        thr_el = stage_el.find("stage_threshold")
        trees_el = stage_el.find("trees")
        if thr_el is None or trees_el is None:
            raise SchemaError("stage missing <stage_threshold> or <trees>")
        weaks = []
        for tree in trees_el:
            nodes = list(tree)
            if len(nodes) != 1:
                raise SchemaError("only depth-1 (stump) trees are supported")
            node = nodes[0]
            feat = node.find("feature")
            thr = node.find("threshold")
            if feat is None or thr is None or node.find("left_val") is None or node.find("right_val") is None:
                raise SchemaError("tree node missing feature, threshold, or leaf values")
            tilted = feat.find("tilted")
            if tilted is not None and int(tilted.text) != 0:
                raise SchemaError("tilted features are not supported")
            rects_el = feat.find("rects")
            if rects_el is None:
                raise SchemaError("feature missing <rects>")
            rects = tuple(_parse_rect_line(r.text) for r in rects_el)
            for r in rects:
                _check_rect(r, win_w, win_h)
            weaks.append(
                WeakClassifier(
                    rects=rects,
                    node_threshold=float(thr.text),
                    fail_value=float(node.find("left_val").text),
                    pass_value=float(node.find("right_val").text),
                )
            )
        if not weaks:
            raise SchemaError("stage with no weak classifiers")
        stages.append(Stage(float(thr_el.text), tuple(weaks)))
    if not stages:
        raise SchemaError("cascade with no stages")
    return CascadeModel(win_w, win_h, tuple(stages))


def load_cascade(data: bytes) -> CascadeModel:
    try:
        root = ET.fromstring(data)
    except ET.ParseError as e:
        raise ParseError(f"malformed cascade XML: {e}") from None
    for child in root:
        type_id = child.get("type_id", "")
        if type_id == "opencv-cascade-classifier" or child.find("stageType") is not None:
            return _load_new_style(child)
        if type_id == "opencv-haar-classifier" or child.find("trees") is not None or (
            child.find("stages") is not None and child.find("size") is not None
        ):
            return _load_old_style(child)
    raise SchemaError("no cascade element found")


# --- window evaluation -------------------------------------------------------


def _scaled_rect(rect: HaarRect, scale: float, win_w: int, win_h: int):
    """Scale a base-window rect: corners map through round(v * scale), half up,
    then clamp to the scaled window."""
    x1 = int(rect.x * scale + 0.5)
    y1 = int(rect.y * scale + 0.5)
    x2 = min(int((rect.x + rect.w) * scale + 0.5), win_w)
    y2 = min(int((rect.y + rect.h) * scale + 0.5), win_h)
    return x1, y1, x2, y2


def _window_dims(model: CascadeModel, scale: float) -> tuple[int, int]:
    return int(model.window_w * scale + 0.5), int(model.window_h * scale + 0.5)


@dataclass(frozen=True)
class WindowResult:
    passed: bool
    score: float


def evaluate_window(
    model: CascadeModel, ii: IntegralImage, x: int, y: int, scale: float
) -> WindowResult:
    """Run the staged classifier on one window.

    Each weak classifier compares its normalized feature value
    (sum of weight * rect-sum, times 1/window-area) against
    node_threshold * window-std; below threshold contributes fail_value,
    otherwise pass_value. A stage whose accumulated sum falls below its
    stage threshold rejects the window. Zero-variance windows are rejected
    outright. The score is the final evaluated stage's margin.
    """
    win_w, win_h = _window_dims(model, scale)
    if x < 0 or y < 0 or x + win_w > ii.width or y + win_h > ii.height:
        raise WindowOutOfBounds(
            f"window ({x},{y},{win_w},{win_h}) outside {ii.width}x{ii.height} image"
        )
    area = win_w * win_h
    inv_area = 1.0 / area
    total = rect_sum(ii, x, y, win_w, win_h)
    s = ii.sq
    total_sq = int(s[y + win_h, x + win_w] - s[y, x + win_w] - s[y + win_h, x] + s[y, x])
    mean = total * inv_area
    var = total_sq * inv_area - mean * mean
    if var <= 0:
        return WindowResult(False, 0.0)
    std = var**0.5
    margin = 0.0
    for stage in model.stages:
        ssum = 0.0
        for weak in stage.weak_classifiers:
            fval = 0.0
            for rect in weak.rects:
                rx1, ry1, rx2, ry2 = _scaled_rect(rect, scale, win_w, win_h)
                fval += rect.weight * rect_sum(
                    ii, x + rx1, y + ry1, rx2 - rx1, ry2 - ry1
                )
            if fval * inv_area < weak.node_threshold * std:
                ssum += weak.fail_value
            else:
                ssum += weak.pass_value
        margin = ssum - stage.stage_threshold
        if ssum < stage.stage_threshold:
            return WindowResult(False, margin)
    return WindowResult(True, margin)


def detect_multiscale(
    model: CascadeModel, frame: Frame, params: DetectParams = DetectParams()
) -> list[FaceBox]:
    """Scan all window positions and scales, then group the raw hits.

    Scales start at min_size / window-width and multiply by scale_factor while
    the scaled window fits the frame. The scan stride is
    max(1, round(step * scale)). Returns grouped boxes sorted by descending
    neighbors, then score.
    """
    if frame.channels != 1:
        raise ValueError("detect_multiscale needs a grayscale frame")
    if params.min_size < model.window_w:
        raise ValueError(
            f"min_size {params.min_size} below cascade base window {model.window_w}"
        )
    ii = integral_image(frame)
    raw = _scan(model, ii, params)
    grouped = group_boxes(raw, params.min_neighbors, eps=0.2)
    grouped.sort(key=lambda b: (-b.neighbors, -b.score, b.x, b.y, b.w, b.h))
    return grouped


def _scan(model: CascadeModel, ii: IntegralImage, params: DetectParams) -> list[FaceBox]:
    W, H = ii.width, ii.height
    boxes: list[FaceBox] = []
    scale = params.min_size / model.window_w
    while True:
        win_w, win_h = _window_dims(model, scale)
        if win_w > W or win_h > H:
            break
        stride = max(1, int(params.step * scale + 0.5))
        xs = np.arange(0, W - win_w + 1, stride, dtype=np.int64)
        ys = np.arange(0, H - win_h + 1, stride, dtype=np.int64)
        gx, gy = np.meshgrid(xs, ys)
        gx, gy = gx.ravel(), gy.ravel()

        s, q = ii.sums, ii.sq
        inv_area = 1.0 / (win_w * win_h)

        def grid_sum(table, x1, y1, x2, y2, gx=gx, gy=gy):
            return (
                table[gy + y2, gx + x2]
                - table[gy + y1, gx + x2]
                - table[gy + y2, gx + x1]
                + table[gy + y1, gx + x1]
            )

        mean = grid_sum(s, 0, 0, win_w, win_h) * inv_area
        var = grid_sum(q, 0, 0, win_w, win_h) * inv_area - mean * mean
        alive = var > 0
        gx, gy = gx[alive], gy[alive]
        std = np.sqrt(var[alive])
        margin = np.zeros(gx.shape, dtype=np.float64)
        for stage in model.stages:
            if gx.size == 0:
                break
            ssum = np.zeros(gx.shape, dtype=np.float64)
            for weak in stage.weak_classifiers:
                fval = np.zeros(gx.shape, dtype=np.float64)
                for rect in weak.rects:
                    rx1, ry1, rx2, ry2 = _scaled_rect(rect, scale, win_w, win_h)
                    fval += rect.weight * grid_sum(s, rx1, ry1, rx2, ry2, gx, gy)
                ssum += np.where(
                    fval * inv_area < weak.node_threshold * std,
                    weak.fail_value,
                    weak.pass_value,
                )
            margin = ssum - stage.stage_threshold
            keep = ssum >= stage.stage_threshold
            gx, gy, std, margin = gx[keep], gy[keep], std[keep], margin[keep]
        for i in range(gx.size):
            boxes.append(FaceBox(int(gx[i]), int(gy[i]), win_w, win_h, 0, float(margin[i])))
        scale *= params.scale_factor
    return boxes


# --- grouping ----------------------------------------------------------------


def _similar(a: FaceBox, b: FaceBox, eps: float) -> bool:
    dx = eps * 0.5 * (a.w + b.w)
    dy = eps * 0.5 * (a.h + b.h)
    return (
        abs(a.x - b.x) <= dx
        and abs(a.y - b.y) <= dy
        and abs((a.x + a.w) - (b.x + b.w)) <= dx
        and abs((a.y + a.h) - (b.y + b.h)) <= dy
    )


def group_boxes(raw: list[FaceBox], min_neighbors: int, eps: float = 0.2) -> list[FaceBox]:
    """Partition boxes into similarity classes (union-find over the pairwise
    predicate) and average each class with population > min_neighbors."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    n = len(raw)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if _similar(raw[i], raw[j], eps):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    classes: dict[int, list[FaceBox]] = {}
    for i in range(n):
        classes.setdefault(find(i), []).append(raw[i])
    out = []
    for members in classes.values():
        if len(members) <= min_neighbors:
            continue
        k = len(members)
        out.append(
            FaceBox(
                x=int(round(sum(b.x for b in members) / k)),
                y=int(round(sum(b.y for b in members) / k)),
                w=int(round(sum(b.w for b in members) / k)),
                h=int(round(sum(b.h for b in members) / k)),
                neighbors=k,
                score=sum(b.score for b in members) / k,
            )
        )
    return out


def largest_box(boxes: list[FaceBox]) -> FaceBox | None:
    """The single box forwarded downstream: one viewer at a time."""
    if not boxes:
        return None
    return max(boxes, key=lambda b: (b.area, b.neighbors, b.score))


def iou(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union else 0.0
