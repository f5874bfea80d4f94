"""Near-field line-of-sight channels for the MA grid, the RIS, Bobs and Eve.

Every array is planar with a horizontal and a vertical axis.  Element
``(h, v)`` sits at ``ref + h*d*e_h + v*d*e_v`` where ``ref`` is the configured
anchor point of the array, so the reference distance ``r_l`` of a link is the
distance between the two anchors.  Kronecker ordering is ``n = h*N_v + v``,
which matches :func:`map_index_to_grid`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError

SPEED_OF_LIGHT = 299_792_458.0

# (horizontal, vertical) unit axes of each array type
BS_AXES = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]))   # x-o-z plane
RIS_AXES = (np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))  # y-o-z plane
RX_AXES = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))   # x-o-y plane, linear along x


def wavelength(frequency):
    return SPEED_OF_LIGHT / frequency


def path_loss(distance, lam):
    """Amplitude gain ``lambda / sqrt(4 pi d)``."""
    if distance <= 0:
        raise DomainError("distance must be positive")
    return lam / np.sqrt(4.0 * np.pi * distance)


@dataclass(frozen=True)
class Geometry:
    """Positions and array dimensions of one scenario (meters, Hz)."""

    bs_origin: np.ndarray
    ris_center: np.ndarray
    bob_positions: np.ndarray
    eve_position: np.ndarray
    grid_spacing: float
    grid_dims: tuple
    ris_dims: tuple
    ris_element_spacing: float
    frequency: float
    bob_antennas: int = 4
    eve_antennas: int = 4
    rx_spacing: float = None
    min_ris_aperture: float = 0.0

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("bs_origin", np.asarray(self.bs_origin, dtype=float).reshape(3))
        set_("ris_center", np.asarray(self.ris_center, dtype=float).reshape(3))
        set_("bob_positions", np.atleast_2d(np.asarray(self.bob_positions, dtype=float)))
        set_("eve_position", np.asarray(self.eve_position, dtype=float).reshape(3))
        set_("grid_dims", tuple(int(x) for x in self.grid_dims))
        set_("ris_dims", tuple(int(x) for x in self.ris_dims))
        if self.rx_spacing is None:
            set_("rx_spacing", self.wavelength / 2)
        if self.bob_positions.shape[1] != 3 or len(self.bob_positions) < 1:
            raise DomainError("bob_positions must be a (K, 3) array with K >= 1")
        if self.frequency <= 0:
            raise DomainError("frequency must be positive")
        if min(self.grid_dims) < 1 or min(self.ris_dims) < 1:
            raise DomainError("grid and RIS dimensions must be >= 1")
        if min(self.bob_antennas, self.eve_antennas) < 1:
            raise DomainError("receiver antenna counts must be >= 1")
        if min(self.grid_spacing, self.ris_element_spacing, self.rx_spacing) <= 0:
            raise DomainError("element spacings must be positive")
        nodes = [self.bs_origin, self.ris_center, self.eve_position, *self.bob_positions]
        for i in range(len(nodes)):
            for j in range(i + 1, len(nodes)):
                if np.linalg.norm(nodes[i] - nodes[j]) <= 0:
                    raise DomainError("two nodes share the same position")
        if self.ris_aperture < self.min_ris_aperture:
            raise DomainError(
                f"RIS aperture {self.ris_aperture:.4f} m below near-field threshold "
                f"{self.min_ris_aperture} m")

    @property
    def wavelength(self):
        return wavelength(self.frequency)

    @property
    def K(self):
        return len(self.bob_positions)

    @property
    def N(self):
        return self.grid_dims[0] * self.grid_dims[1]

    @property
    def M(self):
        return self.ris_dims[0] * self.ris_dims[1]

    @property
    def ris_aperture(self):
        """Longest side of the RIS in meters."""
        return max(self.ris_dims) * self.ris_element_spacing

    @property
    def d_G(self):
        return float(np.linalg.norm(self.ris_center - self.bs_origin))

    def d_f(self, k):
        return float(np.linalg.norm(self.bob_positions[k] - self.ris_center))

    def d_h(self, k):
        return float(np.linalg.norm(self.bob_positions[k] - self.bs_origin))

    def replace(self, **kw):
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return Geometry(**d)


def map_index_to_grid(n, n_v, n_h=None):
    """Candidate index -> ``(n_h, n_v)`` grid coordinates (row-major)."""
    n = int(n)
    upper = None if n_h is None else n_h * n_v
    if n_v < 1 or n < 0 or (upper is not None and n >= upper):
        raise DomainError(f"candidate index {n} out of range")
    return n // n_v, n - n_v * (n // n_v)


def grid_to_index(n_h, n_v, N_v):
    return n_h * N_v + n_v


def grid_coordinates(grid_dims, spacing):
    """(N, 2) in-plane coordinates of the candidate positions."""
    nh, nv = np.divmod(np.arange(grid_dims[0] * grid_dims[1]), grid_dims[1])
    return np.stack([nh * spacing, nv * spacing], axis=1)


def link_angles(src, dst, axes):
    """(azimuth, elevation) of ``dst`` seen from an array at ``src``.

    The elevation is the angle to the horizontal axis; azimuth is chosen so
    ``sin(el) sin(az)`` equals the direction cosine along the vertical axis.
    """
    u = np.asarray(dst, float) - np.asarray(src, float)
    r = np.linalg.norm(u)
    if r <= 0:
        raise DomainError("coincident link endpoints")
    u = u / r
    cos_el = np.clip(u @ axes[0], -1.0, 1.0)
    el = np.arccos(cos_el)
    s = np.sin(el)
    az = np.arcsin(np.clip((u @ axes[1]) / s, -1.0, 1.0)) if s > 1e-12 else 0.0
    return float(az), float(el)


def steering_pair(r_l, angles, spacing, counts, f):
    """Horizontal and vertical near-field steering vectors.

    Parameters
    ----------
    r_l : float
        Reference distance between the array anchor and the far end (m).
    angles : (azimuth, elevation)
    spacing : float
        Element spacing (m).
    counts : (n_horiz, n_vert)
    f : float
        Carrier frequency (Hz).
    """
    if r_l <= 0:
        raise DomainError("reference distance must be positive")
    if min(counts) < 1:
        raise DomainError("counts must be >= 1")
    az, el = angles
    k0 = 2 * np.pi * f / SPEED_OF_LIGHT

    def vec(n, cosine):
        i = np.arange(n) * spacing
        r = np.sqrt(np.maximum(r_l ** 2 + i ** 2 - 2 * r_l * i * cosine, 0.0))
        return np.exp(-1j * k0 * (r - r_l))

    return vec(counts[0], np.cos(el)), vec(counts[1], np.sin(el) * np.sin(az))


def _array_response(r_l, src, dst, axes, dims, spacing, f):
    a, b = steering_pair(r_l, link_angles(src, dst, axes), spacing, dims, f)
    return np.kron(a, b)


def los_matrix(pos_a, axes_a, dims_a, sp_a, pos_b, axes_b, dims_b, sp_b, f):
    """Rank-one LoS channel of shape ``(size_a, size_b)`` between two arrays."""
    r = float(np.linalg.norm(np.asarray(pos_b) - np.asarray(pos_a)))
    lam = wavelength(f)
    gain = path_loss(r, lam) * np.exp(-2j * np.pi * f * r / SPEED_OF_LIGHT)
    sa = _array_response(r, pos_a, pos_b, axes_a, dims_a, sp_a, f)
    sb = _array_response(r, pos_b, pos_a, axes_b, dims_b, sp_b, f)
    return gain * np.outer(sa, sb)


def build_bs_ris_channel(geo: Geometry):
    """BS -> RIS channel G, shape (M, N)."""
    return los_matrix(geo.ris_center, RIS_AXES, geo.ris_dims, geo.ris_element_spacing,
                      geo.bs_origin, BS_AXES, geo.grid_dims, geo.grid_spacing, geo.frequency)


def build_terminal_channels(geo: Geometry):
    """RIS/BS -> Bob and Eve channels.

    Returns
    -------
    F : (K, M, N_k) RIS -> Bob k
    H : (K, N, N_k) BS -> Bob k
    F_e : (M, N_e)
    H_e : (N, N_e)
    """
    f = geo.frequency
    ris = (geo.ris_center, RIS_AXES, geo.ris_dims, geo.ris_element_spacing)
    bs = (geo.bs_origin, BS_AXES, geo.grid_dims, geo.grid_spacing)

    def rx(pos, n):
        return (pos, RX_AXES, (n, 1), geo.rx_spacing)

    F = np.stack([los_matrix(*ris, *rx(p, geo.bob_antennas), f) for p in geo.bob_positions])
    H = np.stack([los_matrix(*bs, *rx(p, geo.bob_antennas), f) for p in geo.bob_positions])
    F_e = los_matrix(*ris, *rx(geo.eve_position, geo.eve_antennas), f)
    H_e = los_matrix(*bs, *rx(geo.eve_position, geo.eve_antennas), f)
    return F, H, F_e, H_e


def cascaded_channel(F_hat, u, G_hat):
    """``diag(u^H F^H) G``, shape (M, N)."""
    F_hat = np.atleast_2d(F_hat)
    u = np.asarray(u).reshape(-1)
    if F_hat.shape[1] != u.size or F_hat.shape[0] != G_hat.shape[0]:
        raise DomainError("dimension mismatch in cascaded channel")
    return np.conj(F_hat @ u)[:, None] * G_hat


def stacked_channel(F_hat, H_hat, u, G_hat):
    """``[H^c ; u^H H^H]``, shape (M+1, N); ``theta_hat @ A`` is the effective row."""
    return np.vstack([cascaded_channel(F_hat, u, G_hat), np.conj(H_hat @ u)[None, :]])


def sample_perturbation(H_hat, eps, rng):
    """Bounded error ``eps * rho * Z / ||Z||_F`` with rho ~ U[0, 1]."""
    if eps < 0:
        raise DomainError("error bound must be nonnegative")
    H_hat = np.asarray(H_hat)
    if eps == 0:
        return np.zeros_like(H_hat, dtype=complex)
    Z = (rng.standard_normal(H_hat.shape) + 1j * rng.standard_normal(H_hat.shape)) / np.sqrt(2)
    return eps * rng.uniform() * Z / np.linalg.norm(Z)


@dataclass
class ChannelSet:
    """Channel components plus absolute error bounds.

    ``eps_bob``/``eps_eve`` bound the Frobenius norm of the cascaded-channel
    error, ``eps_bob_direct``/``eps_eve_direct`` the direct-link error.
    """

    G: np.ndarray
    F: np.ndarray
    H: np.ndarray
    F_e: np.ndarray
    H_e: np.ndarray
    eps_bob: np.ndarray
    eps_eve: float
    eps_bob_direct: np.ndarray
    eps_eve_direct: float

    def __post_init__(self):
        M, N = self.G.shape
        K = self.F.shape[0]
        if self.F.shape[:2] != (K, M) or self.H.shape[:2] != (K, N):
            raise DomainError("Bob channel dimensions do not match G")
        if self.F_e.shape[0] != M or self.H_e.shape[0] != N:
            raise DomainError("Eve channel dimensions do not match G")
        if self.F.shape[2] != self.H.shape[2] or self.F_e.shape[1] != self.H_e.shape[1]:
            raise DomainError("receiver antenna counts differ between links")
        self.eps_bob = np.broadcast_to(np.asarray(self.eps_bob, float), (K,)).copy()
        self.eps_bob_direct = np.broadcast_to(np.asarray(self.eps_bob_direct, float), (K,)).copy()
        if np.any(self.eps_bob < 0) or np.any(self.eps_bob_direct < 0) \
                or self.eps_eve < 0 or self.eps_eve_direct < 0:
            raise DomainError("error bounds must be nonnegative")

    @property
    def K(self):
        return self.F.shape[0]

    @property
    def M(self):
        return self.G.shape[0]

    @property
    def N(self):
        return self.G.shape[1]

    @property
    def N_k(self):
        return self.F.shape[2]

    @property
    def N_e(self):
        return self.F_e.shape[1]

    @property
    def eps_bob_combined(self):
        return np.sqrt(self.eps_bob ** 2 + self.eps_bob_direct ** 2)

    @property
    def eps_eve_combined(self):
        return float(np.hypot(self.eps_eve, self.eps_eve_direct))

    def matrices(self):
        return dict(G=self.G, F=self.F, H=self.H, F_e=self.F_e, H_e=self.H_e)


@dataclass
class PerturbedChannelSet(ChannelSet):
    """Channels with sampled errors applied and their realized norms."""

    delta_norms: dict = field(default_factory=dict)
    delta_bounds: dict = field(default_factory=dict)


def build_channels(geo: Geometry, eps_bob, eps_eve, eps_bob_direct=None,
                   eps_eve_direct=None, relative=True):
    """Build the estimated channel set.

    With ``relative=True`` the bounds are fractions of the nominal norms:
    the cascaded bound becomes ``eps * ||F_k||_F * ||G||_F`` and the direct
    bound ``eps_hat * ||H_k||_F``.  Otherwise the values are absolute.
    """
    G = build_bs_ris_channel(geo)
    F, H, F_e, H_e = build_terminal_channels(geo)
    K = geo.K
    eps_bob = np.broadcast_to(np.asarray(eps_bob, float), (K,))
    eps_bob_direct = eps_bob if eps_bob_direct is None else \
        np.broadcast_to(np.asarray(eps_bob_direct, float), (K,))
    eps_eve_direct = eps_eve if eps_eve_direct is None else eps_eve_direct
    if relative:
        gn = np.linalg.norm(G)
        eps_bob = eps_bob * np.array([np.linalg.norm(F[k]) for k in range(K)]) * gn
        eps_bob_direct = eps_bob_direct * np.array([np.linalg.norm(H[k]) for k in range(K)])
        eps_eve = eps_eve * np.linalg.norm(F_e) * gn
        eps_eve_direct = eps_eve_direct * np.linalg.norm(H_e)
    return ChannelSet(G, F, H, F_e, H_e, eps_bob, float(eps_eve),
                      eps_bob_direct, float(eps_eve_direct))


def sample_channel_errors(ch: ChannelSet, rng):
    """Draw one bounded error realization of every estimated component.

    ``G`` is kept exact; the cascaded error is carried by ``F`` with bound
    ``eps / ||G||_F`` so ``||diag(u^H dF^H) G||_F <= eps`` for any unit ``u``.
    """
    gn = np.linalg.norm(ch.G)
    F, H = ch.F.copy(), ch.H.copy()
    norms, bounds = {}, {}
    for k in range(ch.K):
        bF, bH = ch.eps_bob[k] / gn, ch.eps_bob_direct[k]
        dF, dH = sample_perturbation(F[k], bF, rng), sample_perturbation(H[k], bH, rng)
        F[k] += dF
        H[k] += dH
        norms[f"F{k}"], bounds[f"F{k}"] = np.linalg.norm(dF), bF
        norms[f"H{k}"], bounds[f"H{k}"] = np.linalg.norm(dH), bH
    bF, bH = ch.eps_eve / gn, ch.eps_eve_direct
    dF, dH = sample_perturbation(ch.F_e, bF, rng), sample_perturbation(ch.H_e, bH, rng)
    norms["F_e"], bounds["F_e"] = np.linalg.norm(dF), bF
    norms["H_e"], bounds["H_e"] = np.linalg.norm(dH), bH
    return PerturbedChannelSet(ch.G.copy(), F, H, ch.F_e + dF, ch.H_e + dH,
                               ch.eps_bob, ch.eps_eve, ch.eps_bob_direct, ch.eps_eve_direct,
                               delta_norms=norms, delta_bounds=bounds)
