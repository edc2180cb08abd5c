"""
Phenomenological bio/chem -> electrical models.

DNA complementarity and hybridization (exact reverse-complement match, no
melting physics), the affine hybridized-fraction -> redox-cycling current map,
Gaussian device mismatch and Gaussian-approximated shot noise. Also holds the
readers for the plain-text chip-layout and sample files.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .engine import as_generator
from .errors import InputFileError, InvalidArgumentError

Q_E = 1.602e-19  # elementary charge [C]

BASES = "ACGT"
_PAIR = {"A": "T", "T": "A", "C": "G", "G": "C"}
_PAIR_TABLE = str.maketrans("ACGT", "TGCA")

# Array bounds of the DNA chip; TestSite positions are validated against these.
DNA_ROWS = 16
DNA_COLS = 8


def validate_sequence(seq: str) -> str:
    """Return ``seq`` upper-cased, or raise if it is empty or holds non-ACGT symbols."""
    s = seq.strip().upper()
    if not s:
        raise InvalidArgumentError("DNA sequence must contain at least one base")
    bad = set(s) - set(BASES)
    if bad:
        raise InvalidArgumentError(f"invalid base(s) {''.join(sorted(bad))!r} in {seq!r}")
    return s


def complement(base: str) -> str:
    """Watson-Crick partner of a single base (A<->T, C<->G)."""
    try:
        return _PAIR[base]
    except KeyError:
        raise InvalidArgumentError(f"not a DNA base: {base!r}") from None


def reverse_complement(seq: str) -> str:
    return seq.translate(_PAIR_TABLE)[::-1]


def is_match(probe: str, target: str) -> bool:
    """True iff the probe's reverse complement occurs contiguously in the target.

    A probe hybridizes with a target strand running antiparallel to it, so the
    target must carry the reverse complement of the probe somewhere along it.
    """
    if len(probe) > len(target):
        raise InvalidArgumentError(
            f"probe ({len(probe)} bases) longer than target ({len(target)} bases)"
        )
    return reverse_complement(probe) in target


@dataclass(frozen=True)
class TestSite:
    """One probe spot on the chip."""

    __test__ = False  # keep pytest from collecting this class

    row: int
    col: int
    probe: str
    hybridized_fraction: float = 0.0

    def __post_init__(self):
        if not (0 <= self.row < DNA_ROWS and 0 <= self.col < DNA_COLS):
            raise InvalidArgumentError(f"site ({self.row}, {self.col}) outside the 16x8 array")
        object.__setattr__(self, "probe", validate_sequence(self.probe))
        if not 0.0 <= self.hybridized_fraction <= 1.0:
            raise InvalidArgumentError("hybridized_fraction must lie in [0, 1]")


def hybridize(site: TestSite, sample, cross_talk: float = 0.0) -> TestSite:
    """Flood ``site`` with ``sample`` and wash.

    Fully double-stranded (fraction 1) if any target matches the probe,
    otherwise ``cross_talk``, which stands for residue left by imperfect
    washing. Targets shorter than the probe cannot match and are skipped.
    """
    if not 0.0 <= cross_talk < 0.5:
        raise InvalidArgumentError("cross_talk must lie in [0, 0.5)")
    rc = reverse_complement(site.probe)
    hit = any(rc in t for t in sample)
    return replace(site, hybridized_fraction=1.0 if hit else float(cross_talk))


@dataclass(frozen=True)
class RedoxConfig:
    """Sensor current at a fully mismatched (floor) and fully hybridized site."""

    i_floor: float = 1e-12
    i_full: float = 100e-9

    def __post_init__(self):
        # i_floor == 0 is allowed as an idealized background-free site
        if not 0.0 <= self.i_floor < self.i_full <= 1e-7:
            raise InvalidArgumentError(
                "redox currents must satisfy 0 <= i_floor < i_full <= 100 nA"
            )
        if 0.0 < self.i_floor < 1e-12:
            raise InvalidArgumentError("non-zero i_floor must be at least 1 pA")


def redox_current(fraction, cfg: RedoxConfig):
    """Affine map from hybridized fraction to electrode current [A]."""
    f = np.asarray(fraction, dtype=float)
    if np.any((f < 0) | (f > 1)):
        raise InvalidArgumentError("fraction must lie in [0, 1]")
    i = cfg.i_floor + f * (cfg.i_full - cfg.i_floor)
    return float(i) if i.ndim == 0 else i


@dataclass(frozen=True)
class MismatchSpec:
    sigma_vth: float = 0.0
    sigma_beta_rel: float = 0.0

    def __post_init__(self):
        if self.sigma_vth < 0 or self.sigma_beta_rel < 0:
            raise InvalidArgumentError("mismatch sigmas must be non-negative")


BETA_FACTOR_MIN = 0.1


def draw_mismatch(spec: MismatchSpec, rng, size=None):
    """Draw ``(delta_vth [V], beta_factor)``.

    ``delta_vth ~ N(0, sigma_vth)``; ``beta_factor ~ N(1, sigma_beta_rel)``
    truncated to values above 0.1 by rejection. With ``size`` the two arrays
    have that shape, otherwise scalars are returned.
    """
    gen = as_generator(rng)
    dvth = gen.normal(0.0, 1.0, size=size) * spec.sigma_vth
    beta = 1.0 + gen.normal(0.0, 1.0, size=size) * spec.sigma_beta_rel
    if size is None:
        while beta <= BETA_FACTOR_MIN:
            beta = 1.0 + gen.normal() * spec.sigma_beta_rel
        return float(dvth), float(beta)
    beta = np.asarray(beta)
    bad = beta <= BETA_FACTOR_MIN
    while np.any(bad):
        beta[bad] = 1.0 + gen.normal(0.0, 1.0, size=int(bad.sum())) * spec.sigma_beta_rel
        bad = beta <= BETA_FACTOR_MIN
    return dvth, beta


def shot_noise_std(current, bandwidth: float):
    """Standard deviation of Gaussian shot noise, ``sqrt(2 q I B)``."""
    return np.sqrt(2.0 * Q_E * np.asarray(current, dtype=float) * bandwidth)


def shot_noise_current(current, bandwidth: float, rng, enabled: bool = True):
    """Noisy instantaneous current ``I + N(0, sqrt(2 q I B))``.

    Works elementwise on arrays. Returns the input unchanged when ``enabled``
    is false; zero current stays exactly zero.
    """
    i = np.asarray(current, dtype=float)
    if np.any(i < 0):
        raise InvalidArgumentError("current must be non-negative")
    if not bandwidth > 0:
        raise InvalidArgumentError("bandwidth must be positive")
    if not enabled:
        return float(i) if i.ndim == 0 else i.copy()
    gen = as_generator(rng)
    noisy = i + gen.standard_normal(i.shape) * shot_noise_std(i, bandwidth)
    noisy = np.where(i == 0, 0.0, noisy)
    return float(noisy) if noisy.ndim == 0 else noisy


def _content_lines(path: Path):
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise InputFileError(path, "file not found") from None
    except OSError as exc:
        raise InputFileError(path, f"cannot read file: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def read_layout(path) -> list[TestSite]:
    """Parse a chip-layout file with one ``row col PROBESEQ`` record per line."""
    path = Path(path)
    sites = {}
    for lineno, line in _content_lines(path):
        fields = line.split()
        if len(fields) != 3:
            raise InputFileError(path, f"expected 'row col PROBESEQ', got {line!r}", lineno)
        try:
            row, col = int(fields[0]), int(fields[1])
            site = TestSite(row, col, fields[2])
        except (ValueError, InvalidArgumentError) as exc:
            raise InputFileError(path, str(exc), lineno) from None
        if (row, col) in sites:
            raise InputFileError(path, f"duplicate site ({row}, {col})", lineno)
        sites[(row, col)] = site
    return [sites[k] for k in sorted(sites)]


def read_sample(path) -> list[str]:
    """Parse a sample file with one target sequence per line."""
    path = Path(path)
    targets = []
    for lineno, line in _content_lines(path):
        if len(line.split()) != 1:
            raise InputFileError(path, "expected a single sequence per line", lineno)
        try:
            targets.append(validate_sequence(line))
        except InvalidArgumentError as exc:
            raise InputFileError(path, str(exc), lineno) from None
    return targets


def write_layout(path, sites) -> None:
    lines = ["# row col PROBESEQ"]
    lines += [f"{s.row} {s.col} {s.probe}" for s in sites]
    Path(path).write_text("\n".join(lines) + "\n")


def write_sample(path, targets) -> None:
    Path(path).write_text("\n".join(["# one target per line", *targets]) + "\n")


def random_sequence(n: int, gen: np.random.Generator) -> str:
    return "".join(np.asarray(list(BASES))[gen.integers(0, 4, size=n)])

