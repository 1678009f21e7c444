"""Aperture geometry and the radiation / gain model of the holographic radar.

Directions are azimuths in radians measured from the aperture boresight,
positive counter-clockwise. Elevation is fixed at broadside, so a direction
projects onto the aperture plane as ``(sin(azimuth), 0)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ZeroReceivePattern

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True, eq=False)
class ApertureGeometry:
    """Element and feed layout of one aperture.

    Parameters
    ----------
    element_positions : ndarray, shape (M, 2)
        Element coordinates on the aperture plane in metres. Column 0 is the
        scan axis, column 1 the (unused) elevation axis.
    feed_position : ndarray, shape (2,)
        Feed coordinate in metres.
    wavelength : float
        Carrier wavelength in metres.
    surface_index : float
        Refractive index seen by the surface wave travelling from the feed.
    """

    element_positions: np.ndarray
    feed_position: np.ndarray
    wavelength: float
    surface_index: float = 1.2

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.element_positions, dtype=float))
        feed = np.asarray(self.feed_position, dtype=float).reshape(2)
        if pos.shape[1] != 2 or pos.shape[0] < 1:
            raise ValueError("element_positions must have shape (M, 2) with M >= 1")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.surface_index < 1:
            raise ValueError("surface_index must be >= 1")
        if pos.shape[0] > 1:
            gaps = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
            np.fill_diagonal(gaps, np.inf)
            if gaps.min() <= 0:
                raise ValueError("element spacing must be positive")
        object.__setattr__(self, "element_positions", pos)
        object.__setattr__(self, "feed_position", feed)

    @property
    def element_count(self) -> int:
        return self.element_positions.shape[0]

    @property
    def wavenumber(self) -> float:
        return 2 * np.pi / self.wavelength

    @classmethod
    def uniform_linear(cls, count: int, wavelength: float, spacing: float | None = None,
                       surface_index: float = 1.2) -> "ApertureGeometry":
        """Line array centred on the origin with the feed at the first element.

        ``spacing`` defaults to a quarter wavelength.
        """
        if count < 1:
            raise ValueError("count must be >= 1")
        d = wavelength / 4 if spacing is None else spacing
        u = (np.arange(count) - (count - 1) / 2) * d
        pos = np.column_stack([u, np.zeros(count)])
        return cls(pos, pos[0].copy(), wavelength, surface_index)

    def digest(self) -> str:
        """Stable short hash of the geometry, used to key pattern banks."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.element_positions, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.feed_position, dtype="<f8").tobytes())
        h.update(np.array([self.wavelength, self.surface_index], dtype="<f8").tobytes())
        return h.hexdigest()[:16]


def steering_vector(geometry: ApertureGeometry, azimuth) -> np.ndarray:
    """Far-field phase profile toward ``azimuth``.

    Returns shape (M,) for a scalar azimuth and (n, M) for an array of n
    azimuths. Entry m is ``exp(j k <p_m, (sin az, 0)>)``.
    """
    az = np.asarray(azimuth, dtype=float)
    direction = np.stack([np.sin(az), np.zeros_like(az)], axis=-1)
    phase = geometry.wavenumber * (direction @ geometry.element_positions.T)
    return np.exp(1j * phase)


def feed_phase_vector(geometry: ApertureGeometry) -> np.ndarray:
    """Surface-wave phase accumulated from the feed to each element."""
    dist = np.linalg.norm(geometry.element_positions - geometry.feed_position, axis=1)
    return np.exp(-1j * geometry.wavenumber * geometry.surface_index * dist)


@dataclass
class HolographicPattern:
    """Per-element radiation amplitudes of one aperture in one slot."""

    psi: np.ndarray
    role: Literal["tx", "rx"] = "tx"
    slot_index: int = 0

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float).reshape(-1)
        if np.any(self.psi < 0) or np.any(self.psi > 1) or not np.all(np.isfinite(self.psi)):
            raise ValueError("holographic amplitudes must lie in [0, 1]")
        if self.role not in ("tx", "rx"):
            raise ValueError(f"unknown role {self.role!r}")


@dataclass
class PhaseOnlyPattern:
    """Phase weights of the unit-amplitude phased-array baseline."""

    phases: np.ndarray
    role: Literal["tx", "rx"] = "tx"
    slot_index: int = 0

    def __post_init__(self):
        self.phases = np.asarray(self.phases, dtype=float).reshape(-1)


def phased_element_count(rhs_elements: int, cost_ratio: float = 6.0) -> int:
    """Elements affordable for a phased array at the same cost as the RHS."""
    return int(np.floor(rhs_elements / cost_ratio))


def _array_factor(weights: np.ndarray, geometry: ApertureGeometry, azimuth):
    return steering_vector(geometry, azimuth) @ weights


def overall_gain(pattern_tx: HolographicPattern, pattern_rx: HolographicPattern,
                 geom_tx: ApertureGeometry, geom_rx: ApertureGeometry, azimuth):
    """Two-way gain ``q_R^T Psi_R a_R a_T^T Psi_T q_T`` toward ``azimuth``."""
    rx = _array_factor(pattern_rx.psi * feed_phase_vector(geom_rx), geom_rx, azimuth)
    tx = _array_factor(pattern_tx.psi * feed_phase_vector(geom_tx), geom_tx, azimuth)
    return rx * tx


def snr(pattern_tx: HolographicPattern, pattern_rx: HolographicPattern,
        geom_tx: ApertureGeometry, geom_rx: ApertureGeometry, azimuth, sigma: float):
    """Received SNR ``|h|^2 / (sum psi_R^2 sigma^2)`` toward ``azimuth``.

    Raises
    ------
    ZeroReceivePattern
        If every receive amplitude is zero.
    """
    denom = np.sum(pattern_rx.psi ** 2) * sigma ** 2
    if denom <= 0:
        raise ZeroReceivePattern("receive pattern is identically zero")
    h = overall_gain(pattern_tx, pattern_rx, geom_tx, geom_rx, azimuth)
    return np.abs(h) ** 2 / denom


def phased_array_gain(pattern: PhaseOnlyPattern, geometry: ApertureGeometry, azimuth):
    """One-way gain of unit-amplitude phase weights toward ``azimuth``."""
    return _array_factor(np.exp(1j * pattern.phases), geometry, azimuth)


def conjugate_phases(geometry: ApertureGeometry, azimuth: float) -> np.ndarray:
    """Phases that co-phase every element toward ``azimuth``."""
    return -np.angle(steering_vector(geometry, azimuth))


@dataclass(eq=False)
class Beam:
    """Complex element weights of a Tx/Rx aperture pair for one scan slot.

    Holographic and phased-array slots both reduce to this form, so signal
    synthesis and dictionary construction never need to know which hardware
    produced the beam. ``tx_weights`` carry the radiated power.
    """

    tx_weights: np.ndarray
    rx_weights: np.ndarray
    tx_geometry: ApertureGeometry
    rx_geometry: ApertureGeometry
    slot_index: int = 0
    kind: str = "rhs"

    @classmethod
    def holographic(cls, pattern_tx: HolographicPattern, pattern_rx: HolographicPattern,
                    geom_tx: ApertureGeometry, geom_rx: ApertureGeometry,
                    slot_index: int = 0) -> "Beam":
        return cls(pattern_tx.psi * feed_phase_vector(geom_tx),
                   pattern_rx.psi * feed_phase_vector(geom_rx),
                   geom_tx, geom_rx, slot_index, "rhs")

    @classmethod
    def phased(cls, pattern_tx: PhaseOnlyPattern, pattern_rx: PhaseOnlyPattern,
               geometry: ApertureGeometry, tx_power: float, slot_index: int = 0) -> "Beam":
        n = pattern_tx.phases.size
        amp = np.sqrt(tx_power / n)
        return cls(amp * np.exp(1j * pattern_tx.phases), np.exp(1j * pattern_rx.phases),
                   geometry, geometry, slot_index, "phased")

    def gain(self, azimuth):
        """Two-way gain h toward ``azimuth`` (scalar or array)."""
        return (_array_factor(self.rx_weights, self.rx_geometry, azimuth)
                * _array_factor(self.tx_weights, self.tx_geometry, azimuth))

    @property
    def noise_gain(self) -> float:
        """Receive noise power gain ``sum |w_R|^2``."""
        return float(np.sum(np.abs(self.rx_weights) ** 2))

    @property
    def tx_power(self) -> float:
        return float(np.sum(np.abs(self.tx_weights) ** 2))
