"""Logo-based phishing decision pipeline.

A page's logo is identified under a decision threshold; an identified brand
whose registered domains do not include the page's domain means phishing.
Logos that clear no brand above the threshold are treated as unknown and the
page is considered benign, which is exactly the behavior an adversarial logo
exploits.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .dataset import BrandRegistry, LogoImage, UNKNOWN_BRAND
from .discriminators.base import Discriminator

DECISION_PHISHING = "phishing"
DECISION_BENIGN = "benign"

REASON_UNKNOWN_LOGO = "unknown_logo"
REASON_DOMAIN_MATCH = "domain_match"
REASON_DOMAIN_MISMATCH = "domain_mismatch"

_DOMAIN_RE = re.compile(r"^[a-z0-9]([a-z0-9-]*[a-z0-9])?(\.[a-z0-9]([a-z0-9-]*[a-z0-9])?)+$")


@dataclass(frozen=True)
class BrandVerdict:
    brand_id: int
    confidence: float
    threshold_used: float

    def __post_init__(self):
        identified = self.brand_id != UNKNOWN_BRAND
        if identified != (self.confidence > self.threshold_used):
            raise ValueError("brand is identified iff confidence exceeds the threshold")


@dataclass(frozen=True)
class PageRecord:
    logo: LogoImage
    domain: str

    def __post_init__(self):
        validate_domain(self.domain)


@dataclass(frozen=True)
class PhishVerdict:
    decision: str
    matched_brand: int | None
    reason: str

    def __post_init__(self):
        if (self.decision == DECISION_PHISHING) != (self.reason == REASON_DOMAIN_MISMATCH):
            raise ValueError("phishing verdicts require (exactly) a domain mismatch")


def validate_domain(domain: str) -> None:
    """Registrable domains only: nonempty, lowercase, no scheme or path."""
    if not domain or not _DOMAIN_RE.match(domain):
        raise ValueError(f"malformed domain {domain!r}")


def classify_logo(disc: Discriminator, image: LogoImage, theta: float) -> BrandVerdict:
    """Identify the brand of a logo under a decision threshold.

    The confidence is the maximum of the discriminator's native confidence
    vector; the argmax brand is reported only when the confidence is strictly
    greater than theta (ties break to the lowest brand id), otherwise the
    logo is unknown.
    """
    brand, confidence = disc.predict(image).top()
    if confidence > theta:
        return BrandVerdict(brand_id=brand, confidence=confidence, threshold_used=theta)
    return BrandVerdict(brand_id=UNKNOWN_BRAND, confidence=confidence, threshold_used=theta)


def detect_phishing(page: PageRecord, registry: BrandRegistry, disc: Discriminator,
                    theta: float) -> PhishVerdict:
    """Flag a page as phishing when an identified brand's domains exclude the
    page's domain; unknown logos make the page benign."""
    if registry.k != disc.k:
        raise ValueError(f"registry has {registry.k} brands but discriminator expects {disc.k}")
    validate_domain(page.domain)
    verdict = classify_logo(disc, page.logo, theta)
    if verdict.brand_id == UNKNOWN_BRAND:
        return PhishVerdict(DECISION_BENIGN, matched_brand=None, reason=REASON_UNKNOWN_LOGO)
    if page.domain in registry.domains_of(verdict.brand_id):
        return PhishVerdict(DECISION_BENIGN, matched_brand=verdict.brand_id,
                            reason=REASON_DOMAIN_MATCH)
    return PhishVerdict(DECISION_PHISHING, matched_brand=verdict.brand_id,
                        reason=REASON_DOMAIN_MISMATCH)
