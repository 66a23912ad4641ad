"""
Multipath ULA channels whose geometry is shared by the uplink and downlink.

A user is described by a :class:`UserGeometry` (angles, attenuations, path
distances and reflection phases). The same geometry is rendered at the UL
and DL wavelengths by :func:`synthesize_pair`; only the carrier changes.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = ['SPEED_OF_LIGHT', 'ArrayConfig', 'UserGeometry', 'PathLossModel',
           'ScenarioConfig', 'ChannelPair', 'PHASE_MODELS', 'wavelength',
           'array_response', 'steering_matrix', 'path_gain',
           'path_gains', 'synthesize_pair', 'path_loss_db', 'attenuation_from_db',
           'ATTENUATION_CONVENTIONS', 'sample_geometry', 'hexagon_contains']

SPEED_OF_LIGHT = 299_792_458.0

#: Ways of carrying a path's UL phase over to the DL carrier.
#:
#: ``'propagation'``: the propagation phase ``2 pi r / lambda_ul`` is reduced
#: to [0, 2 pi) and scaled by ``kappa`` for the DL; the reflection phase is
#: shared. UL/DL path gains then correlate as ``eta * b**2``.
#: ``'principal'``: the whole UL phase is taken on [0, 2 pi) and the DL phase
#: is ``kappa * ul_phase + (1 - kappa) * phi``. This is the premise under which
#: the fractional-power (nonlinear) estimator is the conditional mean.
#: ``'exact'``: both gains use the raw path distance. Over realistic distance
#: spreads the UL and DL phases decorrelate completely.
PHASE_MODELS = ('propagation', 'principal', 'exact')


def wavelength(freq_hz):
    return SPEED_OF_LIGHT / freq_hz


@dataclass(frozen=True)
class ArrayConfig:
    """
    Uniform linear array seen at two carriers.

    ``d`` defaults to half the UL wavelength.
    """
    N: int
    lambda_ul: float
    lambda_dl: float
    d: float = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f'N must be >= 1, got {self.N}')
        if self.lambda_ul <= 0 or self.lambda_dl <= 0:
            raise ValueError('wavelengths must be positive')
        if self.d is None:
            object.__setattr__(self, 'd', self.lambda_ul / 2)
        if self.d <= 0:
            raise ValueError('antenna spacing must be positive')

    @classmethod
    def from_frequencies(cls, N, f_ul_hz, f_dl_hz, d=None):
        return cls(N, wavelength(f_ul_hz), wavelength(f_dl_hz), d)

    @property
    def kappa(self):
        """Wavelength ratio ``lambda_ul / lambda_dl`` (= f_dl / f_ul)."""
        return self.lambda_ul / self.lambda_dl

    def with_N(self, N):
        return ArrayConfig(N, self.lambda_ul, self.lambda_dl, self.d)


@dataclass(frozen=True)
class UserGeometry:
    """
    Frequency-invariant path parameters of one user.

    Paths are stored in canonical order: attenuation ``b`` descending, ties
    broken by ascending angle. Arrays are reordered on construction.

    Attributes
    ----------
    theta : ndarray
        Angles of arrival/departure in radians, inside (-pi/2, pi/2).
    b : ndarray
        Linear path attenuations (amplitude), >= 0.
    r : ndarray
        Path distances in meters, > 0.
    phi : ndarray
        Reflection phases in [0, 2 pi).
    """
    theta: np.ndarray
    b: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    distance: float = float('nan')

    def __post_init__(self):
        arrs = [np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
                for name in ('theta', 'b', 'r', 'phi')]
        L = arrs[0].size
        if L == 0:
            raise ValueError('a geometry needs at least one path')
        if any(a.shape != (L,) for a in arrs):
            raise ValueError('theta, b, r and phi must all have length L')
        theta, b, r, phi = arrs
        if np.any(np.abs(theta) >= np.pi / 2):
            raise ValueError('angles must lie in (-pi/2, pi/2)')
        if np.any(b < 0):
            raise ValueError('attenuations must be nonnegative')
        if np.any(r <= 0):
            raise ValueError('path distances must be positive')
        order = np.lexsort((theta, -b))
        for name, a in zip(('theta', 'b', 'r', 'phi'), arrs):
            a = a[order]
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def L(self):
        return self.theta.size

    @property
    def sigma(self):
        """Path power matrix ``diag(b**2)``."""
        return np.diag(self.b ** 2)

    def replace(self, **changes):
        fields = dict(theta=self.theta, b=self.b, r=self.r, phi=self.phi,
                      distance=self.distance)
        fields.update(changes)
        return UserGeometry(**fields)


#: How a path loss in dB maps to the amplitude attenuation ``b``.
#: ``'power'``: the loss is a power ratio, ``b**2 = 10**(-PL / 10)``.
#: ``'literal'``: ``-10 log10(b) = PL``, doubling every dB difference in
#: received power.
ATTENUATION_CONVENTIONS = ('power', 'literal')


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance path loss, ``10 m log10(r / r0)`` beyond the free-space
    reference at ``r0``, plus log-normal shadowing of ``shadow_sigma`` dB.
    ``attenuation`` selects the dB-to-``b`` mapping, see
    :data:`ATTENUATION_CONVENTIONS`."""
    r0: float = 1.0
    m: float = 3.0
    shadow_sigma: float = 4.0
    attenuation: str = 'power'

    def __post_init__(self):
        if self.r0 <= 0:
            raise ValueError('reference distance must be positive')
        if self.shadow_sigma < 0:
            raise ValueError('shadowing deviation must be nonnegative')
        if self.attenuation not in ATTENUATION_CONVENTIONS:
            raise ValueError(f'attenuation must be one of {ATTENUATION_CONVENTIONS}')


@dataclass(frozen=True)
class ScenarioConfig:
    """Single hexagonal cell with the BS at its center."""
    L: int = 3
    isd: float = 500.0
    bs_height: float = 32.0
    ue_height: float = 1.5
    min_distance: float = 35.0
    angular_spread_deg: float = 15.0
    excess_distance_max: float = 30.0
    min_separation_deg: float = 0.0
    path_loss: PathLossModel = field(default_factory=PathLossModel)
    f_ul_hz: float = 10e9

    @property
    def cell_radius(self):
        """Hexagon circumradius ``isd / sqrt(3)``."""
        return self.isd / np.sqrt(3.0)


@dataclass(frozen=True)
class ChannelPair:
    h_ul: np.ndarray
    h_dl: np.ndarray


def array_response(theta, lam, cfg):
    """
    Steering vector ``exp(-j 2 pi / lam * n d sin(theta))``, n = 0..N-1.

    Entry 0 is the phase reference and always equals 1.
    """
    n = np.arange(cfg.N)
    return np.exp(-2j * np.pi / lam * cfg.d * n * np.sin(theta))


def steering_matrix(theta, lam, cfg):
    """Columns are :func:`array_response` at each angle, shape (N, L)."""
    theta = np.atleast_1d(theta)
    n = np.arange(cfg.N)[:, None]
    return np.exp(-2j * np.pi / lam * cfg.d * n * np.sin(theta)[None, :])


def path_gain(b, r, phi, lam):
    """Narrowband path gain ``b exp(-j 2 pi r / lam + j phi)``."""
    return b * np.exp(-2j * np.pi * r / lam + 1j * phi)


def path_gains(geo, cfg, phase_model='propagation'):
    """
    UL and DL complex gains of every path, see :data:`PHASE_MODELS`.

    Returns
    -------
    g_ul, g_dl : ndarray, shape (L,)
    """
    if phase_model not in PHASE_MODELS:
        raise ValueError(f'unknown phase model {phase_model!r}')
    kappa = cfg.kappa
    if phase_model == 'exact':
        g_ul = path_gain(geo.b, geo.r, geo.phi, cfg.lambda_ul)
        g_dl = path_gain(geo.b, geo.r, geo.phi, cfg.lambda_dl)
    elif phase_model == 'propagation':
        r_eff = np.mod(geo.r, cfg.lambda_ul)
        g_ul = path_gain(geo.b, r_eff, geo.phi, cfg.lambda_ul)
        g_dl = path_gain(geo.b, r_eff, geo.phi, cfg.lambda_dl)
    else:
        g_ul = path_gain(geo.b, geo.r, geo.phi, cfg.lambda_ul)
        s = np.mod(np.angle(g_ul), 2 * np.pi)
        g_dl = geo.b * np.exp(1j * (kappa * s + (1 - kappa) * geo.phi))
    if cfg.lambda_ul == cfg.lambda_dl:
        g_dl = g_ul.copy()
    return g_ul, g_dl


def synthesize_pair(geo, cfg, phase_model='propagation'):
    """
    Render one geometry at both carriers.

    ``h = sum_l g_l a(theta_l, lambda)`` with the path gains of
    :func:`path_gains`. Equal wavelengths give bit-identical vectors.
    """
    g_ul, g_dl = path_gains(geo, cfg, phase_model)
    h_ul = steering_matrix(geo.theta, cfg.lambda_ul, cfg) @ g_ul
    if cfg.lambda_ul == cfg.lambda_dl:
        return ChannelPair(h_ul, h_ul.copy())
    h_dl = steering_matrix(geo.theta, cfg.lambda_dl, cfg) @ g_dl
    return ChannelPair(h_ul, h_dl)


def path_loss_db(r, lam, model, shadow_db=0.0):
    """
    ``20 log10(4 pi r0 / lam) + 10 m log10(r / r0) + shadow_db``.

    Distances below ``r0`` are clamped to ``r0`` with a ``RuntimeWarning``.
    :func:`attenuation_from_db` turns the result into ``b``.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < model.r0):
        warnings.warn(f'path distance below reference distance {model.r0} m '
                      'clamped', RuntimeWarning, stacklevel=2)
        r = np.maximum(r, model.r0)
    return (20 * np.log10(4 * np.pi * model.r0 / lam)
            + 10 * model.m * np.log10(r / model.r0) + shadow_db)


def attenuation_from_db(pl_db, model):
    """Amplitude attenuation ``b`` of a path loss given in dB."""
    pl_db = np.asarray(pl_db, dtype=float)
    if model.attenuation == 'literal':
        return 10.0 ** (-pl_db / 10.0)
    return 10.0 ** (-pl_db / 20.0)


def hexagon_contains(x, y, circumradius):
    """Point-in-hexagon test for a flat-topped hexagon centered at 0."""
    ax, ay = np.abs(x), np.abs(y)
    apothem = circumradius * np.sqrt(3) / 2
    return (ay <= apothem) & (np.sqrt(3) * ax + ay <= np.sqrt(3) * circumradius)


def _drop_user(rng, scenario):
    R = scenario.cell_radius
    while True:
        x, y = rng.uniform(-R, R, size=2)
        if hexagon_contains(x, y, R) and np.hypot(x, y) >= scenario.min_distance:
            return x, y


def _fold_angle(theta):
    # a ULA only sees sin(theta); fold onto the open front half-plane
    folded = np.arcsin(np.clip(np.sin(theta), -1.0, 1.0))
    lim = np.pi / 2 - 1e-6
    return np.clip(folded, -lim, lim)


def sample_geometry(rng, scenario, L=None):
    """
    Drop one user uniformly in the hexagonal cell and draw its paths.

    Parameters
    ----------
    rng : numpy Generator or seed
    scenario : ScenarioConfig
    L : int, optional
        Overrides ``scenario.L``.

    Returns
    -------
    UserGeometry
    """
    rng = np.random.default_rng(rng)
    L = scenario.L if L is None else L
    if L < 1:
        raise ValueError('L must be >= 1')
    x, y = _drop_user(rng, scenario)
    d2 = np.hypot(x, y)
    d3 = np.hypot(d2, scenario.bs_height - scenario.ue_height)
    bearing = _fold_angle(np.arctan2(y, x))

    spread = np.deg2rad(scenario.angular_spread_deg)
    min_sep = np.deg2rad(scenario.min_separation_deg)
    for _ in range(1000):
        theta = _fold_angle(bearing + rng.uniform(-spread, spread, size=L))
        if L == 1 or np.min(np.diff(np.sort(theta))) >= min_sep:
            break
    else:
        raise ValueError('could not satisfy min_separation_deg; widen the '
                         'angular spread')
    r = d3 + rng.uniform(0.0, scenario.excess_distance_max, size=L)
    phi = rng.uniform(0.0, 2 * np.pi, size=L)
    shadow = rng.normal(0.0, scenario.path_loss.shadow_sigma, size=L)
    pl = path_loss_db(r, wavelength(scenario.f_ul_hz), scenario.path_loss,
                      shadow)
    b = attenuation_from_db(pl, scenario.path_loss)
    return UserGeometry(theta, b, r, phi, distance=float(d3))
