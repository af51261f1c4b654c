"""Detection metrics and the generators-by-discriminators cross-evaluation.

Positives are protected-brand logos. A true positive is a correct brand
identification above the threshold; a false positive is an unprotected logo
identified as any protected brand. The fooling ratio is the fraction of
(perturbed) protected-brand logos classified as unknown.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dataset import LogoImage, UNKNOWN_BRAND
from .discriminators.base import Discriminator, discriminator_hash
from .generation import PerturbationGenerator, craft_batch, generator_checksum

log = logging.getLogger(__name__)

#: offset added above the highest confidence when calibration saturates
SATURATION_MARGIN = 1e-6


class ScoredRecord(NamedTuple):
    confidence: float
    pred_brand: int
    true_brand: int


class Counts(NamedTuple):
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass(frozen=True)
class RocCurve:
    """Operating points (theta, fpr, tpr) sorted by theta descending."""

    points: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        thetas = [p[0] for p in self.points]
        if any(a < b for a, b in zip(thetas, thetas[1:])):
            raise ValueError("points must be sorted by theta descending")
        for series in (1, 2):
            vals = [p[series] for p in self.points]
            if any(a > b + 1e-12 for a, b in zip(vals, vals[1:])):
                raise ValueError("fpr and tpr must be nondecreasing as theta decreases")

    def as_rows(self) -> list[tuple[float, float, float]]:
        return list(self.points)


@dataclass(frozen=True)
class ThresholdCalibration:
    theta: float
    fpr: float
    tpr: float
    saturated: bool = False


@dataclass
class EvalReport:
    discriminator: str
    generator: str | None
    roc: RocCurve | None
    theta_at: dict[float, float]
    tpr_at: dict[float, float]
    fooling_at: dict[float, float] = field(default_factory=dict)
    counts_at: dict[float, Counts] = field(default_factory=dict)
    saturated_at: dict[float, bool] = field(default_factory=dict)
    generator_matched: bool | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "discriminator": self.discriminator,
            "generator": self.generator,
            "roc": [list(p) for p in self.roc.points] if self.roc else None,
            "theta_at": {str(k): v for k, v in self.theta_at.items()},
            "tpr_at": {str(k): v for k, v in self.tpr_at.items()},
            "fooling_at": {str(k): v for k, v in self.fooling_at.items()},
            "counts_at": {str(k): list(v) for k, v in self.counts_at.items()},
            "saturated_at": {str(k): v for k, v in self.saturated_at.items()},
            "generator_matched": self.generator_matched,
            "notes": list(self.notes),
        }


def score_corpus(disc: Discriminator, protected_test: list[LogoImage],
                 unprotected: list[LogoImage]) -> list[ScoredRecord]:
    """One record per image: native max confidence, argmax brand, true brand."""
    if not protected_test or not unprotected:
        raise ValueError("both protected_test and unprotected must be nonempty")
    records = []
    for img, vec in zip(protected_test + unprotected,
                        disc.predict_batch(list(protected_test) + list(unprotected))):
        brand, conf = vec.top()
        records.append(ScoredRecord(confidence=conf, pred_brand=brand,
                                    true_brand=img.brand_id))
    return records


def tpr_fpr(records: list[ScoredRecord], theta: float) -> tuple[float, float, Counts]:
    """Rates at a threshold; identification requires confidence > theta."""
    n_prot = sum(1 for r in records if r.true_brand != UNKNOWN_BRAND)
    n_unprot = len(records) - n_prot
    if n_unprot == 0:
        raise ValueError("no unprotected records; FPR is undefined")
    if n_prot == 0:
        raise ValueError("no protected records; TPR is undefined")
    tp = fp = tn = fn = 0
    for r in records:
        identified = r.confidence > theta
        if r.true_brand == UNKNOWN_BRAND:
            if identified:
                fp += 1
            else:
                tn += 1
        else:
            if identified and r.pred_brand == r.true_brand:
                tp += 1
            else:
                fn += 1
    return tp / n_prot, fp / n_unprot, Counts(tp, fp, tn, fn)


def roc_curve(records: list[ScoredRecord]) -> RocCurve:
    """Exact sweep over the distinct observed confidences plus +-inf sentinels."""
    thetas = sorted({r.confidence for r in records}, reverse=True)
    thetas = [float("inf")] + thetas + [float("-inf")]
    points = []
    for theta in thetas:
        tpr, fpr, _ = tpr_fpr(records, theta)
        points.append((theta, fpr, tpr))
    return RocCurve(tuple(points))


def threshold_at_fpr(records: list[ScoredRecord], fpr_target: float) -> ThresholdCalibration:
    """Smallest theta whose empirical FPR is <= fpr_target.

    When the target is below 1/|unprotected| it cannot be resolved
    empirically; the calibration then returns the maximum observed confidence
    plus a margin and flags saturation.
    """
    if not 0.0 <= fpr_target <= 1.0:
        raise ValueError(f"fpr_target must be in [0, 1], got {fpr_target}")
    n_unprot = sum(1 for r in records if r.true_brand == UNKNOWN_BRAND)
    if n_unprot == 0:
        raise ValueError("cannot calibrate FPR without unprotected records")
    if fpr_target < 1.0 / n_unprot:
        theta = max(r.confidence for r in records) + SATURATION_MARGIN
        tpr, fpr, _ = tpr_fpr(records, theta)
        return ThresholdCalibration(theta=theta, fpr=fpr, tpr=tpr, saturated=True)
    candidates = sorted({r.confidence for r in records})
    candidates = [float("-inf")] + candidates
    for theta in candidates:  # ascending: first hit is the smallest
        tpr, fpr, _ = tpr_fpr(records, theta)
        if fpr <= fpr_target:
            return ThresholdCalibration(theta=theta, fpr=fpr, tpr=tpr, saturated=False)
    raise AssertionError("unreachable: the largest candidate always has FPR 0")


def fooling_ratio(disc: Discriminator, theta: float,
                  adversarial_logos: list[LogoImage]) -> float:
    """Fraction of protected-brand logos classified as unknown at theta."""
    if not adversarial_logos:
        raise ValueError("fooling_ratio needs at least one logo")
    if any(l.brand_id == UNKNOWN_BRAND for l in adversarial_logos):
        raise ValueError("fooling_ratio expects protected-brand logos")
    vectors = disc.predict_batch(adversarial_logos)
    fooled = sum(1 for v in vectors if v.top()[1] <= theta)
    return fooled / len(adversarial_logos)


def evaluate_clean(disc: Discriminator, protected_test: list[LogoImage],
                   unprotected: list[LogoImage], fpr_targets: list[float]) -> EvalReport:
    """ROC plus calibrated operating points on unperturbed data."""
    records = score_corpus(disc, protected_test, unprotected)
    roc = roc_curve(records)
    report = EvalReport(discriminator=discriminator_hash(disc), generator=None,
                        roc=roc, theta_at={}, tpr_at={})
    for target in fpr_targets:
        cal = threshold_at_fpr(records, target)
        report.theta_at[target] = cal.theta
        report.tpr_at[target] = cal.tpr
        report.saturated_at[target] = cal.saturated
        _, _, counts = tpr_fpr(records, cal.theta)
        report.counts_at[target] = counts
        if cal.saturated:
            report.notes.append(f"fpr target {target} saturated at theta {cal.theta:.6f}")
    return report


def evaluate_attack(disc: Discriminator, gen: PerturbationGenerator,
                    protected_test: list[LogoImage], unprotected: list[LogoImage],
                    fpr_targets: list[float],
                    adversarial_logos: list[LogoImage] | None = None) -> EvalReport:
    """Fooling ratios of a generator's crafted logos at thresholds calibrated
    on clean data. Pre-crafted logos may be passed to avoid recrafting."""
    report = evaluate_clean(disc, protected_test, unprotected, fpr_targets)
    disc_hash = report.discriminator
    if adversarial_logos is None:
        adversarial_logos = craft_batch(gen, protected_test)
    report.generator = generator_checksum(gen.core)
    report.generator_matched = gen.trained_against == disc_hash
    if not report.generator_matched:
        report.notes.append("generator was trained against a different discriminator")
    p_adv = gen.metadata.get("p_adversarial")
    for target in fpr_targets:
        theta = report.theta_at[target]
        report.fooling_at[target] = fooling_ratio(disc, theta, adversarial_logos)
        if p_adv is not None and disc.kind == "probability" and theta <= p_adv:
            note = (f"calibrated theta {theta:.4f} at fpr {target} does not exceed "
                    f"p_adversarial {p_adv}")
            report.notes.append(note)
            log.warning("%s", note)
    return report


@dataclass
class CrossEvalResult:
    generator_labels: list[str]
    discriminator_labels: list[str]
    fpr_targets: list[float]
    fooling: np.ndarray  # (generators, discriminators, targets)
    clean_reports: list[EvalReport]
    attack_reports: list[list[EvalReport]]

    def fooling_of(self, gen_label: str, disc_label: str, target: float) -> float:
        gi = self.generator_labels.index(gen_label)
        di = self.discriminator_labels.index(disc_label)
        ti = self.fpr_targets.index(target)
        return float(self.fooling[gi, di, ti])


def cross_eval(generators: list[PerturbationGenerator], discs: list[Discriminator],
               protected_test: list[LogoImage], unprotected: list[LogoImage],
               fpr_targets: list[float],
               generator_labels: list[str] | None = None,
               discriminator_labels: list[str] | None = None) -> CrossEvalResult:
    """Evaluate every generator's crafted test logos against every
    discriminator at thresholds calibrated per discriminator."""
    if not generators or not discs:
        raise ValueError("need at least one generator and one discriminator")
    gen_labels = generator_labels or [generator_checksum(g.core)[:12] for g in generators]
    disc_labels = discriminator_labels or [discriminator_hash(d)[:12] for d in discs]
    crafted = [craft_batch(g, protected_test) for g in generators]
    clean_reports = [evaluate_clean(d, protected_test, unprotected, fpr_targets)
                     for d in discs]
    fooling = np.zeros((len(generators), len(discs), len(fpr_targets)))
    attack_reports: list[list[EvalReport]] = []
    for gi, gen in enumerate(generators):
        row = []
        for di, disc in enumerate(discs):
            report = evaluate_attack(disc, gen, protected_test, unprotected,
                                     fpr_targets, adversarial_logos=crafted[gi])
            for ti, target in enumerate(fpr_targets):
                fooling[gi, di, ti] = report.fooling_at[target]
            row.append(report)
        attack_reports.append(row)
    return CrossEvalResult(generator_labels=gen_labels, discriminator_labels=disc_labels,
                           fpr_targets=list(fpr_targets), fooling=fooling,
                           clean_reports=clean_reports, attack_reports=attack_reports)
