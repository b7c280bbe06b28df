"""The closed registration loop.

A translation prior derived from physical motion parameters seeds the
first pair; each pair's matches refine the prior, and the refined value
feeds forward into the next pair.  The search radius around the projected
prior comes either from a worst-case speed bound or from a truncated
normal speed model at a chosen coverage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from .errors import InvalidPrior
from .features import ExtractorConfig, FeatureSet, extract
from .geometry import (
    TranslationModel,
    estimate_homography_dlt,
    estimate_translation,
    rmse,
)
from .matching import GateConfig, MatchSet, match_gated, match_lowest_ssd

R_MIN = 3.0  # px floor on derived search radii


@dataclass(frozen=True)
class MotionPrior:
    """Physical parameters mapping web speed to a per-frame pixel offset."""

    v: float  # meters/second, signed
    f: float  # frames/second
    d: float  # meters/pixel

    def __post_init__(self):
        if self.f <= 0 or self.d <= 0:
            raise InvalidPrior("frame rate and pixel scale must be positive")


@dataclass(frozen=True)
class SpeedUncertainty:
    """Truncated-normal speed model with hard bounds and a target coverage."""

    mu: float
    sigma: float
    a: float
    b: float
    coverage: float = 0.95

    def __post_init__(self):
        if not self.a < self.b:
            raise InvalidPrior("lower bound must be below upper bound")
        if self.sigma <= 0:
            raise InvalidPrior("sigma must be positive")
        if not (self.a <= self.mu <= self.b):
            raise InvalidPrior("mean must lie within the bounds")
        if not (0.0 < self.coverage < 1.0):
            raise InvalidPrior("coverage must lie in (0, 1)")


@dataclass(frozen=True)
class FrameRecord:
    frame: int
    dx: float
    dy: float
    r: float
    n_matches: int
    rmse: float
    flagged: bool


@dataclass(frozen=True)
class FeedbackState:
    """Running translation prior carried between consecutive pairs."""

    dx: float
    dy: float
    r: float
    frame_index: int = 0
    history: tuple = ()

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("search radius must be positive")
        if not (math.isfinite(self.dx) and math.isfinite(self.dy)):
            raise ValueError("prior offsets must be finite")

    @property
    def all_flagged(self) -> bool:
        return bool(self.history) and all(rec.flagged for rec in self.history)


@dataclass(frozen=True)
class RegistrationConfig:
    """Per-pair pipeline settings shared by the library and the CLI."""

    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    gate_threshold: float = 0.5
    min_matches: int = 8
    feedback_stat: str = "mean"  # or "median"
    method: str = "gated"  # or "lowest-ssd" for baseline comparison runs
    kernel: str = "vectorized"


@dataclass(frozen=True)
class SequenceResult:
    match_sets: list
    homographies: list
    state: FeedbackState


def initial_offset(p: MotionPrior) -> TranslationModel:
    """Per-frame pixel offset dx = v / (f * d); dy starts at zero."""
    return TranslationModel(p.v / (p.f * p.d), 0.0)


def radius_worst_case(dx: float, rel_uncertainty: float = 0.1) -> float:
    """Search radius from the hard speed bound: r = |dx| * rel_uncertainty.

    Returns the raw value; callers floor it to R_MIN.
    """
    if not (0.0 < rel_uncertainty < 1.0):
        raise ValueError("relative uncertainty must lie in (0, 1)")
    return abs(dx) * rel_uncertainty


def _phi(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def truncated_normal_pdf(u: SpeedUncertainty, x) -> np.ndarray:
    """Density of the speed model: normal pdf renormalized to (a, b), 0 outside."""
    x = np.asarray(x, dtype=float)
    z = ndtr((u.b - u.mu) / u.sigma) - ndtr((u.a - u.mu) / u.sigma)
    inside = (x > u.a) & (x < u.b)
    out = np.where(inside, _phi((x - u.mu) / u.sigma) / (u.sigma * z), 0.0)
    return out if out.ndim else float(out)


def truncated_normal_cdf(u: SpeedUncertainty, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    z = ndtr((u.b - u.mu) / u.sigma) - ndtr((u.a - u.mu) / u.sigma)
    core = (ndtr((np.clip(x, u.a, u.b) - u.mu) / u.sigma) - ndtr((u.a - u.mu) / u.sigma)) / z
    out = np.where(x <= u.a, 0.0, np.where(x >= u.b, 1.0, core))
    return out if out.ndim else float(out)


def radius_coverage(u: SpeedUncertainty, p: MotionPrior) -> float:
    """Smallest search radius whose speed interval reaches the target coverage.

    Finds by bisection the smallest delta with
    P(mu - delta <= speed <= mu + delta) >= coverage under the truncated
    normal model, maps it to pixels through the motion prior and floors the
    result to R_MIN.  As coverage -> 1 this recovers the worst-case radius
    implied by the hard bounds.
    """
    delta_max = max(u.mu - u.a, u.b - u.mu)
    if delta_max <= 0:
        return R_MIN

    def prob(delta: float) -> float:
        return truncated_normal_cdf(u, u.mu + delta) - truncated_normal_cdf(u, u.mu - delta)

    lo, hi = 0.0, delta_max
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if prob(mid) >= u.coverage:
            hi = mid
        else:
            lo = mid
    return max(R_MIN, hi / (p.f * p.d))


def update_state(
    state: FeedbackState,
    matches: MatchSet,
    *,
    pair_rmse: float = float("nan"),
    min_matches: int = 8,
    stat: str = "mean",
) -> FeedbackState:
    """Fold one pair's matches into the running prior.

    The update is accepted only when there are enough matches and the new
    offset stays within the search radius of the previous one; otherwise
    the previous values are retained and the frame is flagged.  The
    history gains a record either way.
    """
    dx, dy = state.dx, state.dy
    flagged = True
    n = len(matches)
    if n >= min_matches:
        delta = matches.src_xy - matches.dst_xy
        if stat == "median":
            ndx = float(np.median(delta[:, 0]))
            ndy = float(np.median(delta[:, 1]))
        else:
            t = estimate_translation(matches.to_correspondences())
            ndx, ndy = t.dx, t.dy
        if math.hypot(ndx - state.dx, ndy - state.dy) <= state.r:
            dx, dy = ndx, ndy
            flagged = False
    rec = FrameRecord(
        frame=state.frame_index + 1,
        dx=dx,
        dy=dy,
        r=state.r,
        n_matches=n,
        rmse=pair_rmse,
        flagged=flagged,
    )
    return replace(
        state,
        dx=dx,
        dy=dy,
        frame_index=state.frame_index + 1,
        history=state.history + (rec,),
    )


def register_pair(
    img_prev,
    img_curr,
    state: FeedbackState,
    cfg: RegistrationConfig = RegistrationConfig(),
    feats_prev: FeatureSet | None = None,
    feats_curr: FeatureSet | None = None,
):
    """Match one consecutive pair and refine the feedback state.

    Features may be passed in to reuse a previous extraction.  Returns
    (matches, homography, new_state); an empty match set is a flagged
    success, not an error.  The homography falls back to the current
    translation prior when fewer than 4 matches exist or the DLT is
    degenerate.
    """
    fp = feats_prev if feats_prev is not None else extract(img_prev, cfg.extractor)
    fc = feats_curr if feats_curr is not None else extract(img_curr, cfg.extractor)
    prior = TranslationModel(state.dx, state.dy)
    if cfg.method == "lowest-ssd":
        ms = match_lowest_ssd(fp, fc, cfg.gate_threshold, kernel=cfg.kernel)
    else:
        ms = match_gated(fp, fc, prior, GateConfig(state.r, cfg.gate_threshold), kernel=cfg.kernel)

    h = None
    if len(ms) >= 4:
        try:
            h = estimate_homography_dlt(ms.to_correspondences())
        except Exception:
            h = None
    if h is None:
        h = prior.to_homography()
    pair_rmse = rmse(ms.to_correspondences(), h) if len(ms) else float("nan")
    new_state = update_state(
        state, ms, pair_rmse=pair_rmse, min_matches=cfg.min_matches, stat=cfg.feedback_stat
    )
    return ms, h, new_state


def make_state(initial, radius: float | None = None) -> FeedbackState:
    """Build the loop's starting state from a prior.

    ``initial`` may be a MotionPrior, a TranslationModel, or a plain dx in
    pixels.  When no radius is given the worst-case 10% rule is used,
    floored to R_MIN.
    """
    if isinstance(initial, MotionPrior):
        t = initial_offset(initial)
    elif isinstance(initial, TranslationModel):
        t = initial
    else:
        t = TranslationModel(float(initial), 0.0)
    r = radius if radius is not None else radius_worst_case(t.dx)
    return FeedbackState(dx=t.dx, dy=t.dy, r=max(R_MIN, r))


def register_sequence(
    images,
    initial,
    cfg: RegistrationConfig = RegistrationConfig(),
    radius: float | None = None,
) -> SequenceResult:
    """Run the closed loop over every consecutive pair of a sequence.

    Features for each image are extracted exactly once; the refined
    translation threads forward through the FeedbackState.  Flagged pairs
    do not stop the sequence.
    """
    images = list(images)
    if len(images) < 2:
        raise ValueError("need at least 2 images")
    shapes = {np.asarray(im).shape for im in images}
    if len(shapes) != 1:
        raise ValueError(f"inconsistent image dimensions: {sorted(shapes)}")

    state = make_state(initial, radius)
    match_sets, homographies = [], []
    feats_prev = extract(images[0], cfg.extractor)
    for img in images[1:]:
        feats_curr = extract(img, cfg.extractor)
        ms, h, state = register_pair(
            None, None, state, cfg, feats_prev=feats_prev, feats_curr=feats_curr
        )
        match_sets.append(ms)
        homographies.append(h)
        feats_prev = feats_curr
    return SequenceResult(match_sets=match_sets, homographies=homographies, state=state)


def save_trace(history, path) -> None:
    """Feedback trace CSV: frame,dx,dy,r,n_matches,rmse,flagged."""
    with open(path, "w") as fh:
        fh.write("frame,dx,dy,r,n_matches,rmse,flagged\n")
        for rec in history:
            fh.write(
                f"{rec.frame},{float(rec.dx)!r},{float(rec.dy)!r},{float(rec.r)!r},"
                f"{rec.n_matches},{float(rec.rmse)!r},{int(rec.flagged)}\n"
            )


def load_trace(path) -> list:
    records = []
    with open(path) as fh:
        next(fh)
        for line in fh:
            line = line.strip()
            if not line:
                continue
            f, dx, dy, r, n, e, fl = line.split(",")
            records.append(
                FrameRecord(int(f), float(dx), float(dy), float(r), int(n), float(e), bool(int(fl)))
            )
    return records
