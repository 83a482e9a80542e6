"""
Hexagonal network geometry and long-term channel gains.

Distances are normalized so that neighbouring sites are one unit apart. A
gain is the pure path-loss value ``d ** -alpha``; the transmit power ``rho``
is applied later, exactly once, by the rate and simulation code.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi

__all__ = ['NetworkTopology', 'build_hex_grid', 'reference_layout',
           'corner_mobile', 'gain_map', 'reference_gain_row',
           'cyclic_gain_rows', 'density_bound', 'residual_interference_coeff',
           'hex_axial_coords', 'axial_to_cartesian']

_SQRT3_2 = np.sqrt(3.0) / 2.0


def hex_axial_coords(rings):
    """Axial coordinates ``(q, r)`` of a centered hexagonal patch.

    Sites are listed ring by ring; inside a ring the order is lexicographic
    in ``(q, r)``.
    """
    if rings < 0:
        raise ValueError("rings must be non-negative")
    q, r = np.meshgrid(np.arange(-rings, rings + 1),
                       np.arange(-rings, rings + 1), indexing='ij')
    q = q.ravel()
    r = r.ravel()
    ring = np.maximum.reduce([np.abs(q), np.abs(r), np.abs(q + r)])
    keep = ring <= rings
    q, r, ring = q[keep], r[keep], ring[keep]
    order = np.lexsort((r, q, ring))
    return np.column_stack([q[order], r[order]])


def axial_to_cartesian(axial):
    axial = np.asarray(axial, dtype=float)
    x = axial[:, 0] + 0.5 * axial[:, 1]
    y = _SQRT3_2 * axial[:, 1]
    return np.column_stack([x, y])


def _cartesian_to_axial(xy):
    xy = np.asarray(xy, dtype=float)
    r = xy[:, 1] / _SQRT3_2
    q = xy[:, 0] - 0.5 * r
    axial = np.column_stack([q, r])
    rounded = np.round(axial)
    if not np.allclose(axial, rounded, atol=1e-6):
        raise ValueError("sites do not lie on the unit hexagonal lattice")
    return rounded.astype(int)


@dataclass
class NetworkTopology:
    """Site/mobile geometry of a cooperating network.

    Parameters
    ----------
    sites : ndarray, shape (S, 2)
        Site positions (inter-site distance 1).
    antennas_per_site : int
        Co-located antennas per site. All antennas of a site share its
        position, so their gain columns are identical.
    mobiles : ndarray, shape (N, 2)
        Mobile positions.
    alpha : float
        Path-loss exponent, must exceed 2.
    residual_noise_coeff : float
        Power (per unit ``rho``, relative to the strongest simulated gain)
        of interference from sites that are not simulated.
    """
    sites: np.ndarray
    antennas_per_site: int = 1
    mobiles: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    alpha: float = 4.0
    residual_noise_coeff: float = 0.0

    def __post_init__(self):
        self.sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        self.mobiles = np.asarray(self.mobiles, dtype=float).reshape(-1, 2)
        if self.alpha <= 2:
            raise ValueError("path-loss exponent must be > 2")
        if self.antennas_per_site < 1:
            raise ValueError("antennas_per_site must be >= 1")

    @property
    def num_sites(self):
        return self.sites.shape[0]

    @property
    def num_antennas(self):
        return self.num_sites * self.antennas_per_site

    @property
    def antenna_positions(self):
        return np.repeat(self.sites, self.antennas_per_site, axis=0)

    @property
    def gain(self):
        return gain_map(self)

    def with_mobiles(self, mobiles):
        return NetworkTopology(self.sites, self.antennas_per_site, mobiles,
                               self.alpha, self.residual_noise_coeff)

    # -- serialization ----------------------------------------------------
    def to_dict(self):
        return {
            'sites': self.sites.tolist(),
            'antennas_per_site': int(self.antennas_per_site),
            'mobiles': self.mobiles.tolist(),
            'alpha': float(self.alpha),
            'residual_noise_coeff': float(self.residual_noise_coeff),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(sites=np.asarray(data['sites'], dtype=float),
                   antennas_per_site=int(data.get('antennas_per_site', 1)),
                   mobiles=np.asarray(data.get('mobiles', []), dtype=float),
                   alpha=float(data.get('alpha', 4.0)),
                   residual_noise_coeff=float(
                       data.get('residual_noise_coeff', 0.0)))

    def save(self, path):
        with open(path, 'w') as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save_gain_csv(self, path):
        """Write the gain matrix, one row per mobile, full precision."""
        np.savetxt(path, self.gain, delimiter=',', fmt='%.17g')


def build_hex_grid(rings, antennas_per_site=1, trim_corners=False,
                   alpha=4.0):
    """Centered hexagonal patch of ``1 + 3 rings (rings + 1)`` sites.

    With ``trim_corners`` the 6 corner sites of the outermost ring are
    removed (61 -> 55 sites for ``rings=4``).
    """
    axial = hex_axial_coords(rings)
    if trim_corners and rings > 0:
        q, r = axial[:, 0], axial[:, 1]
        s = -q - r
        extremes = ((np.abs(q) == rings).astype(int) + (np.abs(r) == rings)
                    + (np.abs(s) == rings))
        axial = axial[extremes < 2]
    return NetworkTopology(axial_to_cartesian(axial), antennas_per_site,
                           alpha=alpha)


def corner_mobile(topology):
    """Voronoi vertex closest to the grid center.

    The returned point is equidistant from its three nearest sites. Ties
    between symmetric vertices are broken by the smallest polar angle.
    """
    sites = np.unique(np.round(topology.sites, 12), axis=0)
    if sites.shape[0] < 3:
        raise ValueError("need at least 3 distinct sites for a cell corner")
    try:
        vor = Voronoi(sites)
    except Exception as exc:  # qhull raises on degenerate (collinear) input
        raise ValueError("no Voronoi vertex exists for these sites") from exc
    verts = vor.vertices
    if verts.size == 0:
        raise ValueError("no Voronoi vertex exists for these sites")
    center = sites.mean(axis=0)
    rel = verts - center
    dist = np.round(np.hypot(rel[:, 0], rel[:, 1]), 9)
    angle = np.round(np.mod(np.arctan2(rel[:, 1], rel[:, 0]), 2 * np.pi), 9)
    best = np.lexsort((angle, dist))[0]
    return verts[best].copy()


def gain_map(topology):
    """Per-link gains ``d ** -alpha``, shape (mobiles, antennas)."""
    diff = topology.mobiles[:, None, :] - topology.antenna_positions[None]
    d = np.hypot(diff[..., 0], diff[..., 1])
    if np.any(d <= 0):
        raise ValueError("mobile co-located with an antenna (zero distance)")
    return d ** (-topology.alpha)


def reference_gain_row(topology, mobile=0, normalize=True, sort=True):
    """Gain row of one mobile, optionally normalized and sorted.

    Normalization divides by the strongest gain so that ``rho`` is the SNR
    of the nearest site. Sorting is descending with ties kept in antenna
    index order.
    """
    row = gain_map(topology)[mobile]
    if normalize:
        row = row / row.max()
    if sort:
        row = row[np.argsort(-row, kind='stable')]
    return row


def cyclic_gain_rows(reference_row, num_mobiles, stride=1):
    """Matrix whose i-th row is ``reference_row`` shifted right by
    ``i * stride``.

    ``stride`` equal to the antennas per site keeps co-located antennas
    together when the row holds duplicated site columns.
    """
    reference_row = np.asarray(reference_row)
    if num_mobiles > reference_row.size:
        raise ValueError("more mobiles than antennas")
    if stride < 1 or num_mobiles * stride > reference_row.size:
        raise ValueError("stride must fit the mobiles inside the row")
    return np.array([np.roll(reference_row, i * stride)
                     for i in range(num_mobiles)])


def density_bound(topology, mobile=0):
    """Tightest ``b`` such that ``j <= b * d_(j) ** 2`` for every j."""
    diff = topology.antenna_positions - topology.mobiles[mobile]
    d = np.sort(np.hypot(diff[:, 0], diff[:, 1]))
    j = np.arange(1, d.size + 1)
    return float(np.max(j / d ** 2))


def residual_interference_coeff(topology, horizon_rings, mobile=0,
                                normalize=True, tol=1e-6):
    """Summed gain of the lattice sites outside the simulated patch.

    The sum runs over every hexagonal lattice site within
    ``horizon_rings`` of the origin that is not a site of ``topology``.
    Each site contributes ``antennas_per_site`` antennas.

    Parameters
    ----------
    topology : NetworkTopology
        Simulated patch; must lie on the unit hexagonal lattice.
    horizon_rings : int
        Truncation radius of the infinite lattice, in rings.
    mobile : int
        Index of the mobile the interference is evaluated for.
    normalize : bool
        Divide by the strongest in-patch gain (SNR normalization).
    tol : float
        Convergence guard: the outermost ring may contribute at most this
        fraction of the total.

    Returns
    -------
    float
    """
    pos = topology.mobiles[mobile]
    axial = hex_axial_coords(horizon_rings)
    lattice = axial_to_cartesian(axial)
    ring = np.maximum.reduce([np.abs(axial[:, 0]), np.abs(axial[:, 1]),
                              np.abs(axial.sum(axis=1))])
    site_axial = _cartesian_to_axial(topology.sites)
    width = 2 * horizon_rings + 1
    codes = (axial[:, 0] + horizon_rings) * width + axial[:, 1] + horizon_rings
    inside = np.all(np.abs(site_axial) <= horizon_rings, axis=1)
    site_codes = ((site_axial[inside, 0] + horizon_rings) * width
                  + site_axial[inside, 1] + horizon_rings)
    in_patch = np.isin(codes, site_codes)
    d = np.hypot(*(lattice - pos).T)
    contrib = np.where(in_patch, 0.0, d ** (-topology.alpha))
    contrib *= topology.antennas_per_site
    total = contrib.sum()
    if total > 0:
        last = contrib[ring == horizon_rings].sum()
        if last > tol * total:
            raise RuntimeError(
                "insufficient horizon: outer ring holds %.3g of the sum"
                % (last / total))
    if normalize:
        dp = np.hypot(*(topology.antenna_positions - pos).T)
        total /= dp.min() ** (-topology.alpha)
    return float(total)


def reference_layout(alpha=4.0, antennas_per_site=1, horizon_rings=400):
    """55-site patch with the corner mobile and its residual coefficient."""
    topo = build_hex_grid(4, antennas_per_site, trim_corners=True,
                          alpha=alpha)
    topo = topo.with_mobiles(corner_mobile(topo)[None, :])
    topo.residual_noise_coeff = residual_interference_coeff(
        topo, horizon_rings)
    return topo
