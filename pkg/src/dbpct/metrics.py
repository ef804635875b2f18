"""Image quality metrics and test-set aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate

from .validation import as_image

__all__ = ["psnr", "ssim", "MetricsReport", "evaluate"]


def psnr(a, b, peak: float = 1.0, mask=None) -> float:
    """Peak signal-to-noise ratio in dB: ``10 log10(peak^2 / mse)``.

    Identical inputs return ``inf`` (excluded from aggregation).  An
    optional boolean mask restricts the mse to a pixel subset.
    """
    a = as_image(a, "first image")
    b = as_image(b, "second image")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    if mask is not None:
        diff = diff[np.asarray(mask, dtype=bool)]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def ssim(a, b, dynamic_range: float = 1.0) -> float:
    """Single-scale structural similarity with an 11x11 Gaussian window
    (sigma 1.5) and the reference constants K1=0.01, K2=0.03.

    The mean is taken over every window position; near the borders the
    window is truncated to the in-range pixels and renormalized.
    """
    a = as_image(a, "first image")
    b = as_image(b, "second image")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] < _SSIM_WINDOW:
        raise ValueError(
            f"image size {a.shape[0]} is smaller than the {_SSIM_WINDOW}-pixel window"
        )
    w = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)

    def wmean(x):
        return correlate(x, w, mode="constant", cval=0.0)

    # window mass that falls inside the frame, for border renormalization
    mass = wmean(np.ones_like(a))
    mu_a = wmean(a) / mass
    mu_b = wmean(b) / mass
    var_a = wmean(a * a) / mass - mu_a * mu_a
    var_b = wmean(b * b) / mass - mu_b * mu_b
    cov = wmean(a * b) / mass - mu_a * mu_b
    c1 = (_SSIM_K1 * dynamic_range) ** 2
    c2 = (_SSIM_K2 * dynamic_range) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class MetricsReport:
    """Per-scan metric rows plus per-method aggregates.

    Rows are ``(scan_id, method, psnr_db, ssim)``.  Aggregates are the
    mean and sample standard deviation (n-1 denominator) per method;
    infinite PSNR rows are excluded from the PSNR aggregate.
    """

    rows: list[tuple[int, str, float, float]] = field(default_factory=list)

    def methods(self) -> list[str]:
        seen = []
        for _, method, _, _ in self.rows:
            if method not in seen:
                seen.append(method)
        return seen

    def aggregate(self, method: str) -> dict[str, float]:
        psnrs = [r[2] for r in self.rows if r[1] == method]
        ssims = [r[3] for r in self.rows if r[1] == method]
        if not psnrs:
            raise ValueError(f"no rows for method {method!r}")
        finite = [p for p in psnrs if math.isfinite(p)]
        return {
            "psnr_mean": float(np.mean(finite)) if finite else math.inf,
            "psnr_std": _sample_std(finite),
            "ssim_mean": float(np.mean(ssims)),
            "ssim_std": _sample_std(ssims),
        }

    def to_csv(self) -> str:
        """Comma-separated text: header, one row per (scan, method), then
        ``# aggregate`` comment rows formatted as ``mean +/- std``."""
        lines = ["scan,method,psnr_db,ssim"]
        for scan, method, p, s in self.rows:
            lines.append(f"{scan},{method},{_fmt(p)},{_fmt(s)}")
        for method in self.methods():
            agg = self.aggregate(method)
            lines.append(
                f"# aggregate,{method},psnr_db,"
                f"{_fmt_pm(agg['psnr_mean'], agg['psnr_std'])}"
            )
            lines.append(
                f"# aggregate,{method},ssim,"
                f"{_fmt_pm(agg['ssim_mean'], agg['ssim_std'])}"
            )
        return "\n".join(lines) + "\n"


def _sample_std(values) -> float:
    if len(values) < 2:
        return math.nan
    return float(np.std(values, ddof=1))


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return f"{x:.6f}"


def _fmt_pm(mean: float, std: float) -> str:
    m = "inf" if math.isinf(mean) else f"{mean:.2f}"
    s = "n/a" if math.isnan(std) else f"{std:.2f}"
    return f"{m} ± {s}"


def evaluate(predictions, targets) -> MetricsReport:
    """Score every method against the ground-truth images.

    ``predictions`` maps method name to ``{scan_id: image}``; ``targets``
    maps ``scan_id`` to the clean image.  Every method must cover exactly
    the target scan ids.
    """
    report = MetricsReport()
    target_ids = sorted(targets)
    for method, preds in predictions.items():
        if sorted(preds) != target_ids:
            raise ValueError(
                f"method {method!r} scan ids do not match ground truth"
            )
    for scan in target_ids:
        for method, preds in predictions.items():
            report.rows.append(
                (
                    scan,
                    method,
                    psnr(preds[scan], targets[scan]),
                    ssim(preds[scan], targets[scan]),
                )
            )
    return report
