"""Voltage-controlled optical antenna model and pattern synthesis.

Each node couples its emitter through a nonlinear medium; a static control
field biases the medium so element amplitude follows the applied voltage up to
saturation.  Switching elements between 0 and v_sat reshapes the radiated
pattern.  A pattern table is the per-node set of selectable patterns; the
channel only ever asks it for a scalar gain toward a direction, so tables can
be backed either by an element array with synthesized masks or by sampled
azimuth profiles loaded from a file.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from itertools import product

import numpy as np

EXHAUSTIVE_LIMIT = 12  # full mask search up to 2^12 weight vectors


@dataclass(frozen=True)
class NonlinearMedium:
    chi1: float = 1.0
    chi2: float = 0.0
    chi3: float = 1.0
    eps0: float = 1.0


def polarization(e_opt: float, e_static: float, medium: NonlinearMedium) -> float:
    """Scalar polarization response P(E) with E = optical + static bias."""
    e = e_opt + e_static
    return medium.eps0 * (medium.chi1 * e + medium.chi2 * e * e + medium.chi3 * e ** 3)


@dataclass(frozen=True)
class ElementConfig:
    a_off: float = 0.0
    a_on: float = 1.0
    v_sat: float = 1.0

    def __post_init__(self) -> None:
        if self.v_sat <= 0:
            raise ValueError("v_sat must be positive")
        if self.a_on < self.a_off:
            raise ValueError("a_on must be >= a_off")


def element_amplitude(voltage: float, cfg: ElementConfig = ElementConfig()) -> float:
    """Amplitude of one element vs control voltage: linear ramp, then saturation."""
    if voltage < 0:
        raise ValueError("voltage must be non-negative")
    return cfg.a_off + (cfg.a_on - cfg.a_off) * min(voltage / cfg.v_sat, 1.0)


class ElementArray:
    """Emitting elements at fixed positions sharing one carrier wavelength."""

    def __init__(self, positions, wavelength: float, element: ElementConfig = ElementConfig()):
        self.positions = np.asarray(positions, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must be an (n, 3) array")
        if len(self.positions) == 0:
            raise ValueError("array needs at least one element")
        if wavelength <= 0:
            raise ValueError("wavelength must be positive")
        self.wavelength = wavelength
        self.element = element

    def __len__(self) -> int:
        return len(self.positions)

    def weights_for(self, voltages) -> np.ndarray:
        return np.array([element_amplitude(v, self.element) for v in voltages])


def array_factor(arr: ElementArray, weights, direction) -> complex:
    """Coherent sum of element contributions toward a unit direction."""
    w = np.asarray(weights, dtype=float)
    u = np.asarray(direction, dtype=float)
    phases = (2.0 * math.pi / arr.wavelength) * (arr.positions @ u)
    return complex(np.sum(w * np.exp(1j * phases)))


def gain(arr: ElementArray, weights, direction) -> float:
    """|AF|^2 normalized by the active weight budget; 1.0 at perfect coherence."""
    w = np.asarray(weights, dtype=float)
    denom = np.sum(np.abs(w)) ** 2
    if denom == 0:
        return 0.0
    return abs(array_factor(arr, w, direction)) ** 2 / denom


def _steered_power(arr: ElementArray, mask: np.ndarray, direction, on_amp: float) -> float:
    # Synthesis objective: absolute power toward the target for a fixed element
    # budget, |AF|^2 / n_total^2.  Normalizing by active weights instead would
    # rate any single element a perfect pattern.
    af = array_factor(arr, mask * on_amp, direction)
    return abs(af) ** 2 / (len(arr) * on_amp) ** 2


@dataclass
class SynthesizedPattern:
    mask: tuple[int, ...]  # 1 = element at v_sat, 0 = off
    target: tuple[float, float, float] | None
    target_power: float


def synthesize_pattern(arr: ElementArray, target) -> SynthesizedPattern:
    """Best on/off mask toward one target direction.

    Exhaustive over all masks up to EXHAUSTIVE_LIMIT elements (ties resolve to
    the lexicographically smallest mask); deterministic greedy flips beyond.
    """
    on_amp = element_amplitude(arr.element.v_sat, arr.element)
    u = np.asarray(target, dtype=float)
    n = len(arr)
    if n <= EXHAUSTIVE_LIMIT:
        best_mask: tuple[int, ...] | None = None
        best_p = -1.0
        for bits in product((0, 1), repeat=n):
            p = _steered_power(arr, np.array(bits, dtype=float), u, on_amp)
            if p > best_p + 1e-15:
                best_mask, best_p = bits, p
        assert best_mask is not None
        return SynthesizedPattern(best_mask, tuple(u), best_p)
    mask = np.ones(n)
    best_p = _steered_power(arr, mask, u, on_amp)
    improved = True
    while improved:
        improved = False
        for k in range(n):
            mask[k] = 1.0 - mask[k]
            p = _steered_power(arr, mask, u, on_amp)
            if p > best_p + 1e-15:
                best_p = p
                improved = True
            else:
                mask[k] = 1.0 - mask[k]
    return SynthesizedPattern(tuple(int(m) for m in mask), tuple(u), best_p)


def synthesize_pattern_table(arr: ElementArray, targets, n_patterns: int = 4) -> "ArrayPatternTable":
    """Pattern 0 is all elements on; patterns 1.. steer toward the targets."""
    if n_patterns < 1:
        raise ValueError("n_patterns must be at least 1")
    if len(targets) != n_patterns - 1:
        raise ValueError(f"need exactly {n_patterns - 1} targets for {n_patterns} patterns")
    on_amp = element_amplitude(arr.element.v_sat, arr.element)
    patterns = [SynthesizedPattern((1,) * len(arr), None, 0.0)]
    patterns += [synthesize_pattern(arr, t) for t in targets]
    return ArrayPatternTable(arr, patterns, on_amp)


def azimuth_deg(direction) -> float:
    """Lateral azimuth of a 3D direction in [0, 360); straight up/down maps to 0."""
    az = math.degrees(math.atan2(direction[1], direction[0]))
    return az % 360.0 if (direction[0], direction[1]) != (0.0, 0.0) else 0.0


class PatternTable:
    """Interface the channel consumes: scalar gain per (pattern id, direction)."""

    n_patterns: int

    def gain(self, pattern: int, direction) -> float:
        raise NotImplementedError

    def to_text(self, azimuth_step_deg: float = 5.0) -> str:
        """Dump as `pattern <id> mask <bits|->` blocks with azimuth/gain rows."""
        out = io.StringIO()
        azs = np.arange(0.0, 360.0, azimuth_step_deg)
        for p in range(self.n_patterns):
            out.write(f"pattern {p} mask {self.mask_text(p)}\n")
            for az in azs:
                rad = math.radians(az)
                g = self.gain(p, (math.cos(rad), math.sin(rad), 0.0))
                out.write(f"{az:.1f} {g:.9e}\n")
            out.write("\n")
        return out.getvalue()

    def mask_text(self, pattern: int) -> str:
        return "-"


class ArrayPatternTable(PatternTable):
    def __init__(self, arr: ElementArray, patterns: list[SynthesizedPattern], on_amp: float):
        self.array = arr
        self.patterns = patterns
        self.on_amp = on_amp
        self.n_patterns = len(patterns)

    def gain(self, pattern: int, direction) -> float:
        mask = np.array(self.patterns[pattern].mask, dtype=float)
        return gain(self.array, mask * self.on_amp, direction)

    def mask_text(self, pattern: int) -> str:
        return "".join(str(b) for b in self.patterns[pattern].mask)


class SampledPatternTable(PatternTable):
    """Azimuth-sampled gain profiles with periodic linear interpolation.

    Gain is taken over the lateral azimuth of the direction; elevation is not
    resolved (detector sides handle the vertical dimension separately).
    """

    def __init__(self, azimuths_deg, gains):
        self.azimuths = np.asarray(azimuths_deg, dtype=float)
        self.gains = np.asarray(gains, dtype=float)
        if self.gains.ndim != 2 or self.gains.shape[1] != len(self.azimuths):
            raise ValueError("gains must be (n_patterns, n_azimuths)")
        if np.any(np.diff(self.azimuths) <= 0):
            raise ValueError("azimuths must be strictly increasing")
        if np.any(self.gains < 0):
            raise ValueError("gains must be non-negative")
        self.n_patterns = self.gains.shape[0]

    def gain(self, pattern: int, direction) -> float:
        az = azimuth_deg(direction)
        xs = np.concatenate([self.azimuths, [self.azimuths[0] + 360.0]])
        ys = np.concatenate([self.gains[pattern], [self.gains[pattern][0]]])
        return float(np.interp(az, xs, ys))

    @classmethod
    def from_text(cls, text: str) -> "SampledPatternTable":
        azimuths: list[float] = []
        gains: list[list[float]] = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("pattern "):
                gains.append([])
                continue
            az_s, g_s = line.split()
            if len(gains) == 1:
                azimuths.append(float(az_s))
            gains[-1].append(float(g_s))
        return cls(azimuths, gains)
