"""Synthetic brain phantom and gradient-echo scan simulation.

Generates randomized nested-region label maps (background / CSF / gray
matter / white matter), renders them with a spoiled gradient-echo
steady-state signal model under a configurable scanner protocol, and
extracts labeled intensity patches for downstream training.

Everything here is a pure function of its inputs and an explicit seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .seeding import as_generator

PATCH_SIZE = 15
PATCH_MARGIN = PATCH_SIZE // 2

MIN_PHANTOM_SIZE = 2 * PATCH_SIZE + 1


class Tissue(IntEnum):
    BACKGROUND = 0
    CSF = 1
    GRAY_MATTER = 2
    WHITE_MATTER = 3


BRAIN_TISSUES = (Tissue.CSF, Tissue.GRAY_MATTER, Tissue.WHITE_MATTER)


class TissueExhaustedError(ValueError):
    """Raised when a tissue has fewer candidate patch centers than requested."""

    def __init__(self, tissue: Tissue, available: int, requested: int):
        self.tissue = tissue
        self.available = available
        self.requested = requested
        super().__init__(
            f"tissue exhausted: {tissue.name} has {available} candidate "
            f"patch centers, {requested} requested"
        )


@dataclass(frozen=True)
class TissueParams:
    """NMR constants of one tissue: relaxation times in ms, proton density in [0,1]."""

    t1_ms: float
    t2star_ms: float
    pd: float

    def __post_init__(self):
        if self.t1_ms <= 0 or self.t2star_ms <= 0:
            raise ValueError(f"relaxation times must be positive, got {self}")
        if not 0.0 <= self.pd <= 1.0:
            raise ValueError(f"proton density must lie in [0,1], got {self.pd}")


# Tunable default tissue tables (see config module). Orderings follow the
# literature (CSF has the longest T1 and T2*, T1 grows and T2* shrinks with
# field strength, PD: CSF > GM > WM); the 1.5T CSF T1 is compressed below
# its physical value so the two default protocols render clearly different
# normalized contrast for two of the three tissues, not just one.
# Background has zero proton density.
TISSUE_TABLE_1P5T: dict[Tissue, TissueParams] = {
    Tissue.BACKGROUND: TissueParams(t1_ms=1.0, t2star_ms=1.0, pd=0.0),
    Tissue.CSF: TissueParams(t1_ms=1400.0, t2star_ms=300.0, pd=1.0),
    Tissue.GRAY_MATTER: TissueParams(t1_ms=1000.0, t2star_ms=70.0, pd=0.85),
    Tissue.WHITE_MATTER: TissueParams(t1_ms=650.0, t2star_ms=55.0, pd=0.70),
}

TISSUE_TABLE_3T: dict[Tissue, TissueParams] = {
    Tissue.BACKGROUND: TissueParams(t1_ms=1.0, t2star_ms=1.0, pd=0.0),
    Tissue.CSF: TissueParams(t1_ms=4300.0, t2star_ms=200.0, pd=1.0),
    Tissue.GRAY_MATTER: TissueParams(t1_ms=1900.0, t2star_ms=50.0, pd=0.85),
    Tissue.WHITE_MATTER: TissueParams(t1_ms=850.0, t2star_ms=45.0, pd=0.70),
}


@dataclass(frozen=True)
class ScannerProtocol:
    """One acquisition setup: flip angle, timing, noise level and tissue table.

    ``noise_sigma`` may be given explicitly (intensity units) or left as
    ``None``, in which case scans use 2% of the maximum noiseless tissue
    signal under this protocol.
    """

    name: str
    flip_angle_deg: float
    tr_ms: float
    te_ms: float
    noise_sigma: float | None = None
    tissue_params: dict[Tissue, TissueParams] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.flip_angle_deg <= 90.0:
            raise ValueError(f"flip angle must lie in (0, 90] degrees, got {self.flip_angle_deg}")
        if not self.tr_ms > self.te_ms > 0.0:
            raise ValueError(f"need TR > TE > 0, got TR={self.tr_ms}, TE={self.te_ms}")
        if self.noise_sigma is not None and self.noise_sigma < 0.0:
            raise ValueError(f"noise sigma must be nonnegative, got {self.noise_sigma}")

    def signal(self, tissue: Tissue) -> float:
        p = self.tissue_params[tissue]
        return gradient_echo_signal(
            p.pd, p.t1_ms, p.t2star_ms, self.flip_angle_deg, self.tr_ms, self.te_ms
        )

    def max_signal(self) -> float:
        return max(self.signal(t) for t in self.tissue_params)

    def effective_noise_sigma(self) -> float:
        if self.noise_sigma is not None:
            return self.noise_sigma
        return 0.02 * self.max_signal()


def gradient_echo_signal(
    pd: float, t1_ms: float, t2star_ms: float,
    flip_angle_deg: float, tr_ms: float, te_ms: float,
) -> float:
    """Steady-state signal of a spoiled gradient-echo sequence.

    S = PD * sin(theta) * (1 - E1) * E2 / (1 - cos(theta) * E1)
    with E1 = exp(-TR/T1) and E2 = exp(-TE/T2*).
    """
    theta = np.deg2rad(flip_angle_deg)
    e1 = np.exp(-tr_ms / t1_ms)
    e2 = np.exp(-te_ms / t2star_ms)
    return float(pd * np.sin(theta) * (1.0 - e1) * e2 / (1.0 - np.cos(theta) * e1))


def default_protocols() -> tuple[ScannerProtocol, ScannerProtocol]:
    """The two built-in scanner protocols.

    Scanner A is a 1.5T-style gradient echo (flip 20 deg, TR 13.8 ms,
    TE 2.8 ms); scanner B is a 3T-style one (flip 90 deg, TR 7.9 ms,
    TE 4.5 ms). Tissue tables hold field-dependent defaults.
    """
    a = ScannerProtocol(
        name="scanner-a-1p5t",
        flip_angle_deg=20.0,
        tr_ms=13.8,
        te_ms=2.8,
        tissue_params=dict(TISSUE_TABLE_1P5T),
    )
    b = ScannerProtocol(
        name="scanner-b-3t",
        flip_angle_deg=90.0,
        tr_ms=7.9,
        te_ms=4.5,
        tissue_params=dict(TISSUE_TABLE_3T),
    )
    return a, b


@dataclass(frozen=True)
class LabelMap:
    """A per-pixel tissue segmentation of one synthetic subject."""

    labels: np.ndarray  # (size, size) uint8 of Tissue values
    subject_id: int

    @property
    def size(self) -> int:
        return self.labels.shape[0]

    def tissue_counts(self) -> dict[Tissue, int]:
        return {t: int(np.count_nonzero(self.labels == t)) for t in Tissue}


@dataclass(frozen=True)
class Scan:
    """A simulated acquisition of one label map under one protocol."""

    image: np.ndarray  # (size, size) float64
    label_map: LabelMap
    protocol: ScannerProtocol
    scanner_id: str  # "A" or "B"
    subject_id: int


@dataclass(frozen=True)
class Patch:
    """A 15x15 window labeled by the tissue of its center pixel."""

    pixels: np.ndarray  # (15, 15) float64 in [0, 1]
    tissue: Tissue
    scanner_id: str
    subject_id: int
    center: tuple[int, int]


class PatchSet:
    """A column-oriented collection of patches.

    Stores pixels as one (n, 15, 15) array alongside per-patch tissue,
    scanner, subject and center columns; indexing returns a ``Patch`` view.
    """

    def __init__(
        self,
        pixels: np.ndarray,
        tissues: np.ndarray,
        scanner_ids: np.ndarray,
        subject_ids: np.ndarray,
        centers: np.ndarray,
    ):
        n = pixels.shape[0]
        if pixels.shape[1:] != (PATCH_SIZE, PATCH_SIZE):
            raise ValueError(f"expected (n, {PATCH_SIZE}, {PATCH_SIZE}) pixels, got {pixels.shape}")
        for name, col, width in [
            ("tissues", tissues, None),
            ("scanner_ids", scanner_ids, None),
            ("subject_ids", subject_ids, None),
            ("centers", centers, 2),
        ]:
            if col.shape[0] != n or (width is not None and col.shape[1:] != (width,)):
                raise ValueError(f"column {name} has shape {col.shape}, expected {n} rows")
        self.pixels = np.asarray(pixels, dtype=np.float64)
        self.tissues = np.asarray(tissues, dtype=np.uint8)
        self.scanner_ids = np.asarray(scanner_ids, dtype="U1")
        self.subject_ids = np.asarray(subject_ids, dtype=np.int32)
        self.centers = np.asarray(centers, dtype=np.int32)

    def __len__(self) -> int:
        return self.pixels.shape[0]

    def __getitem__(self, i: int) -> Patch:
        return Patch(
            pixels=self.pixels[i],
            tissue=Tissue(int(self.tissues[i])),
            scanner_id=str(self.scanner_ids[i]),
            subject_id=int(self.subject_ids[i]),
            center=(int(self.centers[i, 0]), int(self.centers[i, 1])),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @staticmethod
    def empty() -> "PatchSet":
        return PatchSet(
            pixels=np.zeros((0, PATCH_SIZE, PATCH_SIZE)),
            tissues=np.zeros(0, dtype=np.uint8),
            scanner_ids=np.zeros(0, dtype="U1"),
            subject_ids=np.zeros(0, dtype=np.int32),
            centers=np.zeros((0, 2), dtype=np.int32),
        )

    @staticmethod
    def concat(sets: list["PatchSet"]) -> "PatchSet":
        if not sets:
            return PatchSet.empty()
        return PatchSet(
            pixels=np.concatenate([s.pixels for s in sets]),
            tissues=np.concatenate([s.tissues for s in sets]),
            scanner_ids=np.concatenate([s.scanner_ids for s in sets]),
            subject_ids=np.concatenate([s.subject_ids for s in sets]),
            centers=np.concatenate([s.centers for s in sets]),
        )

    def select(self, index: np.ndarray) -> "PatchSet":
        return PatchSet(
            pixels=self.pixels[index],
            tissues=self.tissues[index],
            scanner_ids=self.scanner_ids[index],
            subject_ids=self.subject_ids[index],
            centers=self.centers[index],
        )

    def tissue_counts(self) -> dict[Tissue, int]:
        return {t: int(np.count_nonzero(self.tissues == t)) for t in Tissue}

    def network_inputs(self) -> np.ndarray:
        """Pixels shaped for the network: (n, 15, 15, 1)."""
        return self.pixels[..., np.newaxis]

    def flat_pixels(self) -> np.ndarray:
        """Pixels flattened row-major to (n, 225), for linear models."""
        return self.pixels.reshape(len(self), PATCH_SIZE * PATCH_SIZE)


def generate_phantom(seed: int, size: int = 256, subject_id: int = 0) -> LabelMap:
    """Generate a randomized nested-region brain-like label map.

    The layout is background outside a perturbed head boundary, a CSF rim,
    a gray-matter band, a white-matter interior, and two CSF ventricles
    near the center. Boundary perturbations, the head center and the
    ventricle geometry are drawn per (seed, subject_id), so one seed gives
    a reproducible population of distinct subjects.
    """
    if size < MIN_PHANTOM_SIZE:
        raise ValueError(
            f"size {size} is too small to fit a {PATCH_SIZE}x{PATCH_SIZE} patch "
            f"fully inside each tissue region; need size >= {MIN_PHANTOM_SIZE}"
        )
    rng = as_generator(seed, subject_id)

    half = size / 2.0
    center_r = half + rng.uniform(-0.02, 0.02) * size
    center_c = half + rng.uniform(-0.02, 0.02) * size
    head_radius = 0.44 * size

    rows = np.arange(size)[:, None] - center_r
    cols = np.arange(size)[None, :] - center_c
    radius = np.hypot(rows, cols)
    angle = np.arctan2(rows, cols)

    # Low-order angular perturbation of the head boundary, +-4% of radius.
    boundary = np.full_like(radius, head_radius)
    for k in range(2, 6):
        amp = rng.uniform(0.005, 0.02)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        boundary += head_radius * amp * np.cos(k * angle + phase)

    # Nested fractions of the local boundary radius. The rim is kept at
    # least ~2 px thick so CSF survives at the smallest allowed size.
    csf_inner = np.minimum(0.87 * boundary, boundary - 2.0)
    gm_inner = 0.62 * boundary

    labels = np.full((size, size), Tissue.BACKGROUND, dtype=np.uint8)
    labels[radius <= boundary] = Tissue.CSF
    labels[radius <= csf_inner] = Tissue.GRAY_MATTER
    labels[radius <= gm_inner] = Tissue.WHITE_MATTER

    # Two elliptical CSF ventricles inside the white matter.
    for side in (-1.0, 1.0):
        off_c = side * rng.uniform(0.12, 0.20) * head_radius
        off_r = rng.uniform(-0.06, 0.06) * head_radius
        semi_r = rng.uniform(0.16, 0.22) * head_radius
        semi_c = rng.uniform(0.06, 0.10) * head_radius
        tilt = rng.uniform(-0.4, 0.4)
        dr = rows - off_r
        dc = cols - off_c
        u = np.cos(tilt) * dr - np.sin(tilt) * dc
        v = np.sin(tilt) * dr + np.cos(tilt) * dc
        inside = (u / semi_r) ** 2 + (v / semi_c) ** 2 <= 1.0
        labels[inside & (labels == Tissue.WHITE_MATTER)] = Tissue.CSF

    label_map = LabelMap(labels=labels, subject_id=subject_id)
    missing = [t.name for t, n in label_map.tissue_counts().items() if n == 0]
    if missing:
        raise ValueError(f"generated phantom is missing tissues: {missing}")
    return label_map


def simulate_scan(label_map: LabelMap, protocol: ScannerProtocol, seed: int) -> Scan:
    """Render a label map as a noisy gradient-echo scan.

    Each tissue pixel takes the closed-form steady-state signal of its
    tissue plus additive zero-mean Gaussian noise with the protocol's
    sigma; background pixels stay at exactly 0 (noiseless).
    """
    for t in Tissue:
        if t not in protocol.tissue_params:
            raise ValueError(f"protocol {protocol.name!r} lacks parameters for {t.name}")
    rng = as_generator(seed)
    lut = np.array([protocol.signal(t) for t in Tissue], dtype=np.float64)
    image = lut[label_map.labels]
    sigma = protocol.effective_noise_sigma()
    if sigma > 0.0:
        image = image + rng.normal(0.0, sigma, size=image.shape)
        image[label_map.labels == Tissue.BACKGROUND] = 0.0
    scanner_id = "A" if protocol.name.startswith("scanner-a") else "B"
    return Scan(
        image=image,
        label_map=label_map,
        protocol=protocol,
        scanner_id=scanner_id,
        subject_id=label_map.subject_id,
    )


def normalize_scan(image: np.ndarray) -> np.ndarray:
    """Min-max normalize a scan to [0, 1]; constant scans map to zeros."""
    lo = float(image.min())
    hi = float(image.max())
    if hi == lo:
        return np.zeros_like(image)
    return (image - lo) / (hi - lo)


def extract_patches(
    scan: Scan,
    label_map: LabelMap,
    n_per_tissue: int,
    tissues: tuple[Tissue, ...] = BRAIN_TISSUES,
    seed: int = 0,
) -> PatchSet:
    """Sample labeled patches from a scan, ``n_per_tissue`` for each tissue.

    Candidate centers are pixels of the requested tissue whose 15x15
    window lies fully inside the image; centers are drawn uniformly
    without replacement. The scan is min-max normalized before windows
    are cut, so patch intensities lie in [0, 1].
    """
    if scan.image.shape != label_map.labels.shape:
        raise ValueError("scan and label map dimensions differ")
    rng = as_generator(seed)
    normalized = normalize_scan(scan.image)
    windows = sliding_window_view(normalized, (PATCH_SIZE, PATCH_SIZE))
    inner = label_map.labels[
        PATCH_MARGIN:-PATCH_MARGIN, PATCH_MARGIN:-PATCH_MARGIN
    ]

    parts = []
    for tissue in sorted(set(tissues)):
        cand_r, cand_c = np.nonzero(inner == tissue)
        available = cand_r.shape[0]
        if available < n_per_tissue:
            raise TissueExhaustedError(Tissue(tissue), available, n_per_tissue)
        pick = rng.choice(available, size=n_per_tissue, replace=False)
        rows = cand_r[pick] + PATCH_MARGIN
        cols = cand_c[pick] + PATCH_MARGIN
        parts.append(
            PatchSet(
                pixels=windows[rows - PATCH_MARGIN, cols - PATCH_MARGIN].copy(),
                tissues=np.full(n_per_tissue, int(tissue), dtype=np.uint8),
                scanner_ids=np.full(n_per_tissue, scan.scanner_id, dtype="U1"),
                subject_ids=np.full(n_per_tissue, scan.subject_id, dtype=np.int32),
                centers=np.stack([rows, cols], axis=1),
            )
        )
    return PatchSet.concat(parts)
