"""Trajectory lifting and roadbook encoding.

Raw demonstration traces are noisy and overfit to one run. Lifting abstracts
them into a corridor-level route: smooth, reject junk, find corners, add
lateral noise between corners, resample at a fixed step. Roadbooks then slice
the near field of a route into egocentric waypoints plus a turn cue, which is
the only route conditioning the policy ever sees.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from .geom import (
    Pose2,
    arc_length,
    as_polyline,
    cumulative_arc,
    point_at_arc,
    resample,
    self_intersects,
    to_egocentric,
)

ROADBOOK_LOOKAHEAD_M = 40.0
ROADBOOK_STEP_M = 2.0
ROADBOOK_CAPACITY = 20  # lookahead / step


@dataclass
class HtlParams:
    """Tuning knobs for the lifting pipeline.

    Defaults detect a 90 degree sidewalk turn sampled at 0.5 m while leaving
    gentle arcs alone.
    """

    sg_window: int = 9
    sg_order: int = 3
    corner_window: int = 5
    corner_angle_threshold: float = 0.4363  # 25 degrees
    corner_min_spacing: float = 5.0
    noise_sigma: float = 0.5
    resample_step: float = 2.0
    min_length: float = 5.0
    max_gap: float = 5.0
    control_spacing: float = 10.0

    def __post_init__(self):
        if self.sg_window % 2 != 1 or self.sg_window <= self.sg_order:
            raise ValueError("sg_window must be odd and greater than sg_order")
        if self.corner_window < 1:
            raise ValueError("corner_window must be >= 1")
        for name in ("corner_angle_threshold", "corner_min_spacing", "resample_step", "control_spacing"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


class LiftRejected(ValueError):
    """Raised when a raw trajectory fails the quality gate."""

    def __init__(self, reason: str):
        super().__init__(f"trajectory rejected: {reason}")
        self.reason = reason


def sg_smooth(traj, window: int = 9, order: int = 3) -> np.ndarray:
    """Savitzky-Golay smoothing of each coordinate channel.

    Point count is unchanged. End windows are fitted with their own
    least-squares polynomial so inputs that already are polynomials of
    degree <= order pass through bit-near-exactly. Trajectories shorter
    than the window are returned unchanged with a warning.
    """
    traj = as_polyline(traj)
    if window % 2 != 1 or window <= order:
        raise ValueError("window must be odd and greater than order")
    if len(traj) < window:
        warnings.warn("trajectory shorter than smoothing window; returned unsmoothed", RuntimeWarning, stacklevel=2)
        return traj.copy()
    return savgol_filter(traj, window, order, axis=0, mode="interp")


def reject_low_quality(traj, min_length: float = 5.0, max_gap: float = 5.0):
    """Quality gate for raw traces. Returns a reason string, or None to accept.

    Rejects paths that cross themselves, are shorter than ``min_length``
    meters, or contain a consecutive-point jump larger than ``max_gap``
    meters (sensor teleports).
    """
    traj = as_polyline(traj)
    if arc_length(traj) < min_length:
        return "too-short"
    d = np.diff(traj, axis=0)
    if len(d) and float(np.hypot(d[:, 0], d[:, 1]).max()) > max_gap:
        return "teleport-gap"
    if self_intersects(traj):
        return "self-intersection"
    return None


def turning_angle(poly: np.ndarray, i: int, k: int) -> float:
    """Signed angle between chords (p[i]-p[i-k]) and (p[i+k]-p[i]).

    Positive means a left (counter-clockwise) turn. Indices are clamped to
    the valid range so the call is safe near the ends.
    """
    poly = as_polyline(poly)
    lo = max(i - k, 0)
    hi = min(i + k, len(poly) - 1)
    a = poly[i] - poly[lo]
    b = poly[hi] - poly[i]
    cross = a[0] * b[1] - a[1] * b[0]
    dot = a[0] * b[0] + a[1] * b[1]
    return float(np.arctan2(cross, dot))


def detect_corners(poly, params: HtlParams | None = None) -> np.ndarray:
    """Find corner indices of a polyline.

    Every interior index whose chord turning angle exceeds the threshold is
    a candidate; runs of consecutive candidates collapse to their middle
    index; a final greedy pass drops corners closer than the minimum arc
    spacing to the previously kept one. Returns sorted indices.
    """
    params = params or HtlParams()
    poly = as_polyline(poly)
    k = params.corner_window
    n = len(poly)
    if n < 2 * k + 1:
        return np.empty(0, dtype=np.int64)
    idx = np.arange(k, n - k)
    a = poly[idx] - poly[idx - k]
    b = poly[idx + k] - poly[idx]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = np.einsum("ij,ij->i", a, b)
    angles = np.abs(np.arctan2(cross, dot))
    cand = idx[angles > params.corner_angle_threshold]
    if len(cand) == 0:
        return np.empty(0, dtype=np.int64)
    # merge consecutive candidate runs to their middle element
    runs = np.split(cand, np.where(np.diff(cand) > 1)[0] + 1)
    merged = [run[len(run) // 2] for run in runs]
    cum = cumulative_arc(poly)
    kept: list[int] = []
    for i in merged:
        if not kept or cum[i] - cum[kept[-1]] >= params.corner_min_spacing:
            kept.append(int(i))
    return np.asarray(kept, dtype=np.int64)


def split_at_corners(poly, corners) -> list[np.ndarray]:
    """Cut a polyline at corner indices; neighbors share the corner vertex."""
    poly = as_polyline(poly)
    bounds = [0, *[int(c) for c in corners], len(poly) - 1]
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi > lo:
            out.append(poly[lo : hi + 1].copy())
    return out or [poly.copy()]


def _unit_normals(seg: np.ndarray) -> np.ndarray:
    # left-hand normal of the central-difference tangent at each vertex
    t = np.gradient(seg, axis=0)
    norm = np.hypot(t[:, 0], t[:, 1])
    norm = np.where(norm > 0.0, norm, 1.0)
    t = t / norm[:, None]
    return np.stack([-t[:, 1], t[:, 0]], axis=1)


def perturb_segments(segments, sigma: float, rng_seed: int, control_spacing: float = 10.0) -> list[np.ndarray]:
    """Add a smooth lateral offset field to each segment.

    Offsets are drawn N(0, sigma^2) at control points every
    ``control_spacing`` meters along a segment and cosine-blended in
    between; both segment endpoints are pinned at zero offset so adjacent
    segments still meet at corners. Deterministic given the seed; each
    segment consumes an independent child stream.
    """
    segments = [as_polyline(s) for s in segments]
    children = np.random.SeedSequence(rng_seed).spawn(len(segments))
    out = []
    for seg, child in zip(segments, children):
        if sigma == 0.0 or len(seg) < 2:
            out.append(seg.copy())
            continue
        rng = np.random.Generator(np.random.PCG64(child))
        cum = cumulative_arc(seg)
        total = cum[-1]
        ctrl_s = np.append(np.arange(0.0, total, control_spacing), total)
        offsets = rng.normal(0.0, sigma, size=len(ctrl_s))
        offsets[0] = 0.0
        offsets[-1] = 0.0
        # cosine blend between neighboring control offsets
        seg_idx = np.clip(np.searchsorted(ctrl_s, cum, side="right") - 1, 0, len(ctrl_s) - 2)
        span = ctrl_s[seg_idx + 1] - ctrl_s[seg_idx]
        u = (cum - ctrl_s[seg_idx]) / np.where(span > 0.0, span, 1.0)
        w = 0.5 * (1.0 - np.cos(np.pi * u))
        lateral = offsets[seg_idx] * (1.0 - w) + offsets[seg_idx + 1] * w
        lateral[0] = 0.0
        lateral[-1] = 0.0
        out.append(seg + lateral[:, None] * _unit_normals(seg))
    return out


def concat_segments(segments) -> np.ndarray:
    parts = [as_polyline(segments[0])]
    for seg in segments[1:]:
        parts.append(as_polyline(seg)[1:])
    return np.concatenate(parts, axis=0)


def lift(raw, params: HtlParams | None = None, rng_seed: int = 0, smooth: bool = True) -> np.ndarray:
    """Abstract a raw trace into a route polyline.

    Pipeline: optional smoothing (pass ``smooth=False`` for trajectories
    that come out of the simulator already clean), quality gate, corner
    detection, per-segment lateral noise, concatenation, resampling at the
    route step. The route always ends where the demonstration ended;
    consecutive points are otherwise exactly one step apart.

    Raises LiftRejected when the quality gate fails.
    """
    params = params or HtlParams()
    traj = as_polyline(raw)
    if smooth:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            traj = sg_smooth(traj, params.sg_window, params.sg_order)
    reason = reject_low_quality(traj, params.min_length, params.max_gap)
    if reason is not None:
        raise LiftRejected(reason)
    corners = detect_corners(traj, params)
    segments = split_at_corners(traj, corners)
    perturbed = perturb_segments(segments, params.noise_sigma, rng_seed, params.control_spacing)
    merged = concat_segments(perturbed)
    return resample(merged, params.resample_step)


# -- roadbook ----------------------------------------------------------------

@dataclass
class TurnCue:
    direction: str  # "left" | "right" | "straight-to-goal"
    distance: float


@dataclass
class Roadbook:
    """Near-field conditioning: egocentric waypoints plus the next turn."""

    waypoints: np.ndarray  # (m, 2) in the agent frame, m <= ROADBOOK_CAPACITY
    turn_cue: TurnCue


def encode_roadbook(
    route,
    agent: Pose2,
    route_progress: float,
    params: HtlParams | None = None,
    corners: np.ndarray | None = None,
    lookahead: float = ROADBOOK_LOOKAHEAD_M,
    step: float = ROADBOOK_STEP_M,
) -> Roadbook:
    """Encode the next stretch of a route relative to the agent.

    Waypoints sit at arc positions progress + step, progress + 2*step, ...
    within ``lookahead`` meters, expressed in the agent frame; at least one
    waypoint (the route end) is emitted while any route remains. The turn
    cue names the next corner past the current progress, classified left or
    right by the sign of its turning angle, or straight-to-goal with the
    remaining route length when no corner is left.

    ``corners`` takes precomputed corner indices; otherwise they are
    detected on the spot.
    """
    route = as_polyline(route)
    params = params or HtlParams()
    total = arc_length(route)
    if not (-1e-9 <= route_progress <= total + 1e-9):
        raise ValueError(f"route_progress {route_progress} outside [0, {total}]")
    progress = float(np.clip(route_progress, 0.0, total))
    remaining = total - progress

    capacity = int(round(lookahead / step))
    count = min(capacity, int(np.floor(min(remaining, lookahead) / step + 1e-9)))
    if count == 0 and remaining > 1e-9:
        count = 1
    if count > 0:
        arcs = np.minimum(progress + step * np.arange(1, count + 1), total)
        world = point_at_arc(route, arcs)
        waypoints = to_egocentric(world, agent)
    else:
        waypoints = np.empty((0, 2), dtype=np.float64)

    if corners is None:
        corners = detect_corners(route, params)
    cum = cumulative_arc(route)
    cue = TurnCue("straight-to-goal", remaining)
    for i in corners:
        if cum[i] > progress + 1e-9:
            angle = turning_angle(route, int(i), params.corner_window)
            cue = TurnCue("left" if angle > 0 else "right", float(cum[i] - progress))
            break
    return Roadbook(waypoints=waypoints, turn_cue=cue)


def _fmt(v: float) -> str:
    r = round(float(v), 1) + 0.0  # normalize -0.0
    return f"{r:.1f}"


def render_prompt(rb: Roadbook) -> str:
    """Render a roadbook as its canonical instruction sentence.

    Coordinates at 0.1 m precision; distinct roadbooks at that precision
    render to distinct strings.
    """
    wps = "; ".join(f"({_fmt(x)},{_fmt(y)})" for x, y in np.atleast_2d(rb.waypoints)) if len(rb.waypoints) else ""
    if rb.turn_cue.direction == "straight-to-goal":
        tail = f"then continue straight to the goal in {_fmt(rb.turn_cue.distance)} meters."
    else:
        tail = f"then turn {rb.turn_cue.direction} in {_fmt(rb.turn_cue.distance)} meters."
    return f"Follow the route through waypoints: {wps}; {tail}"
