"""Indoor-factory downlink channel model.

Large-scale loss follows the 3GPP TR 38.901 InF dense-clutter/low-BS NLOS
model, combined with per-user lognormal shadowing and per-subchannel
Rayleigh block fading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LinkParams",
    "ChannelState",
    "path_loss_inf_dl",
    "path_loss_inf_los",
    "path_loss_inf_sl",
    "path_loss_nlos",
    "noise_power_w",
    "sample_channel",
    "dbm_to_w",
    "w_to_dbm",
]

# Valid range of the InF models, metres.
MIN_DISTANCE_M = 1.0
MAX_DISTANCE_M = 100.0


def dbm_to_w(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def w_to_dbm(p_w):
    p_w = np.asarray(p_w, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(p_w) + 30.0


@dataclass(frozen=True)
class LinkParams:
    """Link budget of the cell (Table-I style parameters)."""

    carrier_freq_ghz: float = 3.7
    tx_antenna_gain_dbi: float = 0.0
    rx_antenna_gain_dbi: float = 0.0
    noise_psd_dbm_hz: float = -174.0
    subchannel_bw_hz: float = 180e3
    num_subchannels: int = 133
    cell_radius_m: float = 100.0
    shadow_sigma_db: float = 7.2
    # Extra noise-plus-interference on every subchannel, dB above thermal.
    interference_margin_db: float = 0.0

    def __post_init__(self):
        if not self.carrier_freq_ghz > 0:
            raise ValueError("carrier_freq_ghz must be positive")
        if not self.subchannel_bw_hz > 0:
            raise ValueError("subchannel_bw_hz must be positive")
        if int(self.num_subchannels) != self.num_subchannels or self.num_subchannels < 1:
            raise ValueError("num_subchannels must be an integer >= 1")
        if not MIN_DISTANCE_M <= self.cell_radius_m <= MAX_DISTANCE_M:
            raise ValueError(
                f"cell_radius_m must lie in [{MIN_DISTANCE_M}, {MAX_DISTANCE_M}]"
            )
        if self.shadow_sigma_db < 0:
            raise ValueError("shadow_sigma_db must be nonnegative")


@dataclass(frozen=True)
class ChannelState:
    """Per-slot linear power gains ``gains[i, j]`` of user i on subchannel j."""

    gains: np.ndarray
    noise_power_w: float
    subchannel_bw_hz: float

    @property
    def num_users(self) -> int:
        return self.gains.shape[0]

    @property
    def num_subchannels(self) -> int:
        return self.gains.shape[1]

    @property
    def snr_per_watt(self) -> np.ndarray:
        """``h_ij / sigma^2``, the receive SNR per watt of transmit power."""
        return self.gains / self.noise_power_w


def _check_distance(d):
    d = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(d)) or np.any(d < MIN_DISTANCE_M) or np.any(d > MAX_DISTANCE_M):
        raise ValueError(
            f"3D distance outside the model range [{MIN_DISTANCE_M}, {MAX_DISTANCE_M}] m"
        )
    return d


def _check_freq(f_c_ghz):
    f = np.asarray(f_c_ghz, dtype=float)
    if np.any(f <= 0):
        raise ValueError("carrier frequency must be positive")
    return f


def path_loss_inf_dl(d_3d_m, f_c_ghz):
    """InF dense clutter, low BS (NLOS) path loss in dB."""
    d = _check_distance(d_3d_m)
    f = _check_freq(f_c_ghz)
    return 18.6 + 35.7 * np.log10(d) + 20.0 * np.log10(f)


def path_loss_inf_los(d_3d_m, f_c_ghz):
    """InF line-of-sight path loss in dB (TR 38.901 Table 7.4.1-1)."""
    d = _check_distance(d_3d_m)
    f = _check_freq(f_c_ghz)
    return 31.84 + 21.50 * np.log10(d) + 19.00 * np.log10(f)


def path_loss_inf_sl(d_3d_m, f_c_ghz):
    """InF sparse clutter, low BS (NLOS) path loss in dB."""
    d = _check_distance(d_3d_m)
    f = _check_freq(f_c_ghz)
    return 33.0 + 25.5 * np.log10(d) + 20.0 * np.log10(f)


def path_loss_nlos(d_3d_m, f_c_ghz):
    """NLOS InF-DL path loss, lower-bounded by the LOS and InF-SL models."""
    return np.maximum(
        path_loss_inf_dl(d_3d_m, f_c_ghz),
        np.maximum(path_loss_inf_los(d_3d_m, f_c_ghz), path_loss_inf_sl(d_3d_m, f_c_ghz)),
    )


def noise_power_w(params: LinkParams) -> float:
    """Thermal noise (plus interference margin) over one subchannel, in W."""
    dbm = (
        params.noise_psd_dbm_hz
        + 10.0 * np.log10(params.subchannel_bw_hz)
        + params.interference_margin_db
    )
    return float(dbm_to_w(dbm))


def sample_channel(
    params: LinkParams,
    user_distances,
    rng_seed,
    *,
    shadowing: bool = True,
    fading: bool = True,
) -> ChannelState:
    """Draw one slot of channel gains.

    Parameters
    ----------
    params : LinkParams
        Link budget and number of subchannels K.
    user_distances : sequence of float
        3D distance of each user to the BS, metres, within ``[1, cell_radius_m]``.
    rng_seed : int or sequence of int or numpy.random.SeedSequence
        Seed for this slot's draw. Identical seeds give bit-identical gains.
    shadowing, fading : bool
        Disable the shadowing or the Rayleigh term (used by tests).

    Returns
    -------
    ChannelState
        ``gains`` has shape ``(N, K)``.
    """
    d = np.asarray(user_distances, dtype=float).reshape(-1)
    n, k = d.size, int(params.num_subchannels)
    noise = noise_power_w(params)
    if n == 0:
        return ChannelState(np.zeros((0, k)), noise, params.subchannel_bw_hz)
    _check_distance(d)
    if np.any(d > params.cell_radius_m):
        raise ValueError("user distance exceeds the cell radius")

    rng = np.random.default_rng(rng_seed)
    # Draw both terms unconditionally so toggling one hook does not shift
    # the random stream of the other.
    sf_db = rng.normal(0.0, params.shadow_sigma_db, size=n)
    rayleigh = rng.exponential(1.0, size=(n, k))

    loss_db = (
        path_loss_nlos(d, params.carrier_freq_ghz)
        - params.tx_antenna_gain_dbi
        - params.rx_antenna_gain_dbi
    )
    if shadowing:
        loss_db = loss_db + sf_db
    large_scale = 10.0 ** (-loss_db / 10.0)
    gains = large_scale[:, None] * (rayleigh if fading else np.ones((n, k)))
    return ChannelState(gains, noise, params.subchannel_bw_hz)
