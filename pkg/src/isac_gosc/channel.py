"""Closed-form ISAC link physics.

Beam pattern synthesis over a uniform angular grid, monostatic sensing SNR,
range/angle detection variances, polar-to-Cartesian measurement sampling and
the Rician downlink SNR / latency used for C&C delivery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DegenerateSystemError, InvalidGeometryError

C0 = 299_792_458.0  # speed of light [m/s]


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class RadioConfig:
    """BS array / OFDM parameters. Units as labelled; dB quantities converted once."""

    n_antennas: int = 128  # K
    n_subcarriers: int = 2500  # M
    subcarrier_spacing: float = 120e3  # Δf [Hz]
    carrier_freq: float = 60e9  # f_c [Hz]
    tx_power_dbm: float = 20.0
    noise_psd_dbm_hz: float = -174.0
    rcs: float = 0.1  # σ_RCS [m^2]
    rician_k_db: float = 8.0
    mapping_reps: int = 50  # L
    payload_bits: int = 1000  # S
    bits_per_symbol: int = 2  # QPSK
    n_grid: int = 500  # N_θ
    confidence: float = 2.576  # B
    altitude: float = 10.0  # H [m]

    wavelength: float = field(init=False, repr=False, compare=False)
    element_spacing: float = field(init=False, repr=False, compare=False)
    tx_power: float = field(init=False, repr=False, compare=False)
    noise_psd: float = field(init=False, repr=False, compare=False)
    rician_k: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lam = C0 / self.carrier_freq
        object.__setattr__(self, "wavelength", lam)
        object.__setattr__(self, "element_spacing", lam / 2.0)
        object.__setattr__(self, "tx_power", dbm_to_watt(self.tx_power_dbm))
        object.__setattr__(self, "noise_psd", dbm_to_watt(self.noise_psd_dbm_hz))
        object.__setattr__(self, "rician_k", db_to_linear(self.rician_k_db))

    @property
    def n_cc(self) -> int:
        """Number of C&C symbols carrying the payload."""
        return math.ceil(self.payload_bits / self.bits_per_symbol)

    @property
    def noise_power(self) -> float:
        """Total in-band noise power M·Δf·σ0² [W]."""
        return self.n_subcarriers * self.subcarrier_spacing * self.noise_psd

    def validate(self):
        checks = {
            "n_antennas": self.n_antennas >= 1,
            "n_subcarriers": self.n_subcarriers >= 1,
            "subcarrier_spacing": self.subcarrier_spacing > 0,
            "carrier_freq": self.carrier_freq > 0,
            "rcs": self.rcs > 0,
            "mapping_reps": self.mapping_reps >= 1,
            "payload_bits": self.payload_bits >= 1,
            "bits_per_symbol": self.bits_per_symbol >= 1,
            "n_grid": self.n_grid >= 2,
            "confidence": self.confidence >= 0,
            "altitude": self.altitude >= 0,
        }
        return [k for k, ok in checks.items() if not ok]


@dataclass
class Beamformer:
    weights: np.ndarray  # complex K-vector f
    window: tuple[float, float]  # (θ_min, θ_max) after clamping; may be empty


@dataclass
class Measurement:
    """UAV detection: polar estimate, its variances and the Cartesian view."""

    r: float  # detected horizontal range r̂ [m]
    theta: float  # detected azimuth θ̂ [rad]
    var_r: float
    var_theta: float
    position: np.ndarray  # p̂
    cov: np.ndarray  # Γ̂


def steering_vector(theta: float, cfg: RadioConfig) -> np.ndarray:
    k = np.arange(cfg.n_antennas)
    phase = -2.0 * np.pi * k * cfg.element_spacing * np.sin(theta) / cfg.wavelength
    return np.exp(1j * phase)


def array_angle(azimuth: float) -> float:
    """Fold an azimuth onto the ULA's visible range [-π/2, π/2] (same sin θ)."""
    return math.asin(max(-1.0, min(1.0, math.sin(azimuth))))


@lru_cache(maxsize=8)
def _beam_grid(cfg: RadioConfig):
    grid = np.linspace(-np.pi / 2, np.pi / 2, cfg.n_grid)
    k = np.arange(cfg.n_antennas)
    # rows are a_tx(ϑ_u)^T, so the beam pattern over the grid is S @ f
    S = np.exp(-2j * np.pi * np.outer(np.sin(grid), k) * cfg.element_spacing / cfg.wavelength)
    normal = S.conj().T @ S
    normal = normal + 1e-9 * np.real(np.trace(normal)) * np.eye(cfg.n_antennas)
    try:
        chol = cho_factor(normal, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DegenerateSystemError("beamforming normal matrix is singular") from exc
    return grid, S, chol


_REFINE_STEPS = 50


def _chol_solve(chol, rhs: np.ndarray) -> np.ndarray:
    return cho_solve(chol, rhs)


def beam_grid(cfg: RadioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Angular grid and the N_θ × K steering matrix (rows a_tx(ϑ_u)^T)."""
    grid, S, _ = _beam_grid(cfg)
    return grid, S


def desired_pattern(theta_hat: float, sigma_theta: float, cfg: RadioConfig):
    """Desired beam pattern b_D over the grid and the clamped window.

    If the window is non-empty but falls between grid points, the grid point
    nearest to θ̂ carries the mainlobe.
    """
    grid, _, _ = _beam_grid(cfg)
    half = cfg.confidence * max(sigma_theta, 0.0)
    lo = max(theta_hat - half, -np.pi / 2)
    hi = min(theta_hat + half, np.pi / 2)
    b = np.zeros(cfg.n_grid)
    if lo > hi:
        return b, (lo, hi)
    inside = (grid >= lo) & (grid <= hi)
    if not inside.any():
        centre = min(max(theta_hat, -np.pi / 2), np.pi / 2)
        inside[np.argmin(np.abs(grid - centre))] = True
    b[inside] = cfg.n_antennas
    return b, (lo, hi)


def synthesize_beamformer(theta_hat: float, sigma_theta: float, cfg: RadioConfig) -> Beamformer:
    """Least-squares beam pattern synthesis via ridge-regularised normal equations."""
    _, S, chol = _beam_grid(cfg)
    b, window = desired_pattern(theta_hat, sigma_theta, cfg)
    if not b.any():
        return Beamformer(np.zeros(cfg.n_antennas, dtype=complex), window)
    # iterated Tikhonov: repeated ridge solves on the residual remove the ridge bias
    f = _chol_solve(chol, S.conj().T @ b)
    r = b - S @ f
    best = float(np.vdot(r, r).real)
    for _ in range(_REFINE_STEPS):
        cand = f + _chol_solve(chol, S.conj().T @ r)
        r_cand = b - S @ cand
        res = float(np.vdot(r_cand, r_cand).real)
        if not res < best - 1e-13 * best - 1e-12:
            if res < best:
                f, best = cand, res
            break
        f, r, best = cand, r_cand, res
    if not np.all(np.isfinite(f)):
        raise DegenerateSystemError("beamformer solve produced non-finite weights")
    return Beamformer(f, window)


def beam_residual(bf: Beamformer, theta_hat: float, sigma_theta: float, cfg: RadioConfig) -> float:
    """‖b_D − A_tx^T f‖² for a synthesized beamformer."""
    _, S, _ = _beam_grid(cfg)
    b, _ = desired_pattern(theta_hat, sigma_theta, cfg)
    return float(np.sum(np.abs(b - S @ bf.weights) ** 2))


def array_gain(theta: float, bf: Beamformer, cfg: RadioConfig) -> float:
    """|a_tx(θ)^T f|²."""
    return float(np.abs(steering_vector(theta, cfg) @ bf.weights) ** 2)


def sensing_snr(r: float, theta: float, bf: Beamformer, cfg: RadioConfig) -> float:
    """Echo SNR across the array; ``r`` is the 3-D BS-UAV distance."""
    xi2 = cfg.rcs * cfg.wavelength**2 / ((4.0 * np.pi) ** 3 * r**4)
    return cfg.n_antennas * cfg.tx_power * xi2 * array_gain(theta, bf, cfg) / cfg.noise_power


def detection_variances(snr: float, theta: float, r: float, cfg: RadioConfig) -> tuple[float, float]:
    """Angle (MUSIC) and range (PIFFT) detection variances ``(σθ², σr²)``.

    ``r`` is accepted for interface symmetry; neither closed form depends on it
    beyond the SNR.
    """
    cos2 = math.cos(theta) ** 2
    if cos2 < 1e-12:
        raise InvalidGeometryError(f"angle {theta!r} is at the array endfire singularity")
    if not snr > 0:
        raise InvalidGeometryError(f"sensing SNR must be positive, got {snr!r}")
    var_theta = 6.0 / (snr * np.pi**2 * cos2 * cfg.n_antennas**3)
    resolution = C0 / (2.0 * cfg.n_subcarriers * cfg.subcarrier_spacing)
    var_r = resolution**2 / (16.0 * np.pi**2 * snr)
    return var_theta, var_r


def polar_jacobian(r: float, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -r * s], [s, r * c]])


def polar_to_cartesian_cov(r: float, theta: float, var_r: float, var_theta: float) -> np.ndarray:
    J = polar_jacobian(r, theta)
    cov = J @ np.diag([var_r, var_theta]) @ J.T
    return 0.5 * (cov + cov.T)


def uav_geometry(p: np.ndarray, cfg: RadioConfig) -> tuple[float, float, float]:
    """Horizontal range, azimuth and 3-D distance of a UAV at horizontal position ``p``."""
    rho = float(math.hypot(p[0], p[1]))
    return rho, math.atan2(p[1], p[0]), math.sqrt(rho**2 + cfg.altitude**2)


def measurement_from_polar(r_hat: float, theta_hat: float, var_r: float, var_theta: float) -> Measurement:
    pos = np.array([r_hat * math.cos(theta_hat), r_hat * math.sin(theta_hat)])
    cov = polar_to_cartesian_cov(r_hat, theta_hat, var_r, var_theta)
    return Measurement(r_hat, theta_hat, var_r, var_theta, pos, cov)


def sample_measurement(p_true, cfg: RadioConfig, bf: Beamformer, rng: np.random.Generator) -> Measurement:
    """Detect the UAV: variances from the echo SNR, Gaussian polar errors, Jacobian covariance."""
    p_true = np.asarray(p_true, dtype=float)
    rho, theta, dist = uav_geometry(p_true, cfg)
    snr = sensing_snr(dist, array_angle(theta), bf, cfg)
    var_theta, var_r = detection_variances(snr, theta, dist, cfg)
    r_hat = rho + math.sqrt(var_r) * rng.standard_normal()
    theta_hat = theta + math.sqrt(var_theta) * rng.standard_normal()
    return measurement_from_polar(r_hat, theta_hat, var_r, var_theta)


def rician_draws(theta: float, cfg: RadioConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` small-scale fading vectors g_l (rows), NLoS entries CN(0, 1/K)."""
    kappa = cfg.rician_k
    K = cfg.n_antennas
    los = steering_vector(theta, cfg)
    if math.isinf(kappa):
        return np.tile(los, (n, 1))
    z = (rng.standard_normal((n, K)) + 1j * rng.standard_normal((n, K))) * math.sqrt(0.5 / K)
    return math.sqrt(kappa / (kappa + 1.0)) * los + math.sqrt(1.0 / (kappa + 1.0)) * z


def cc_latency(snr_c: float, cfg: RadioConfig) -> float:
    """C&C delivery latency; infinite when the link carries no rate."""
    rate = math.log2(1.0 + snr_c) if snr_c > 0 else 0.0
    if rate <= 0:
        return math.inf
    return 2.0 * cfg.mapping_reps * cfg.n_cc / (cfg.n_subcarriers * cfg.subcarrier_spacing * rate)


def comm_snr_latency(r: float, theta: float, bf: Beamformer, cfg: RadioConfig, rng: np.random.Generator):
    """Downlink MRC SNR over L Rician realizations and the resulting latency ``(SNR_c, τ_c)``.

    ``r`` is the 3-D distance; ``theta`` the array angle of the UAV.
    """
    beta = (cfg.wavelength / (4.0 * np.pi * r)) ** 2
    g = rician_draws(theta, cfg, rng, cfg.mapping_reps)
    combined = float(np.sum(np.abs(g @ bf.weights) ** 2))
    snr_c = cfg.tx_power * beta / cfg.noise_power * combined
    return snr_c, cc_latency(snr_c, cfg)
