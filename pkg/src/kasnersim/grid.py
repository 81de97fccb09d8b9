"""Periodic structured grid on T^D with Fourier pseudo-spectral derivatives.

Fields live on a torus of side 2*pi in every coordinate but are allowed to
vary only along a small set of "active" coordinates (at most three); they
are constant along the remaining ones, whose derivatives vanish
identically.  Frame and coordinate indices still run over all D dimensions,
so a field array has shape (component indices...) + grid.shape with the
grid axes trailing, ordered like `active_dims`.

Quadratically nonlinear right-hand sides are optionally filtered with the
standard 2/3 dealiasing rule.
"""

from __future__ import annotations

import numpy as np


class Grid:
    """Torus grid: D total coordinates, fields varying along <= 3 of them."""

    def __init__(self, dim: int, active_dims, sizes):
        active = tuple(int(a) for a in active_dims)
        sizes = tuple(int(n) for n in sizes)
        if dim < 3:
            raise ValueError(f"need dim >= 3, got {dim}")
        if not 1 <= len(active) <= 3:
            raise ValueError(f"need 1..3 active dims, got {len(active)}")
        if len(set(active)) != len(active):
            raise ValueError(f"active dims must be distinct: {active}")
        if any(a < 0 or a >= dim for a in active):
            raise ValueError(f"active dims out of range for dim={dim}: {active}")
        if len(sizes) != len(active):
            raise ValueError("one size per active dim")
        if any(n < 8 or n % 2 for n in sizes):
            raise ValueError(f"grid sizes must be even and >= 8, got {sizes}")
        self.dim = int(dim)
        self.active = active
        self.shape = sizes
        self.spacing = tuple(2.0 * np.pi / n for n in sizes)

        # integer wavenumbers per active axis; Nyquist zeroed for odd-order
        # derivative symmetry
        self._ik = []
        self._keep = []  # 2/3-rule masks
        for n in sizes:
            k = np.fft.fftfreq(n) * n
            ik = 1j * k
            ik[n // 2] = 0.0
            self._ik.append(ik)
            self._keep.append(np.abs(k) <= n / 3.0)

    # -- coordinates -------------------------------------------------------

    def coords(self):
        """Sparse broadcastable coordinate arrays, one per active axis."""
        axes = [2.0 * np.pi * np.arange(n) / n for n in self.shape]
        return np.meshgrid(*axes, indexing="ij", sparse=True)

    @property
    def npoints(self) -> int:
        return int(np.prod(self.shape))

    def zeros(self, comps=()) -> np.ndarray:
        return np.zeros(tuple(comps) + self.shape)

    # -- differentiation ---------------------------------------------------

    def _axis_of(self, coord: int) -> int | None:
        if coord < 0 or coord >= self.dim:
            raise ValueError(f"coordinate {coord} out of range for dim={self.dim}")
        if coord not in self.active:
            return None
        return self.active.index(coord)

    def partial(self, f: np.ndarray, coord: int) -> np.ndarray:
        """d/dx^coord of f; exact zero field for inactive coordinates."""
        pos = self._axis_of(coord)
        if pos is None:
            return np.zeros_like(f)
        return self._partial_axis(f, pos)

    def _partial_axis(self, f: np.ndarray, pos: int) -> np.ndarray:
        axis = f.ndim - len(self.shape) + pos
        fh = np.fft.fft(f, axis=axis)
        shape = [1] * f.ndim
        shape[axis] = self.shape[pos]
        fh *= self._ik[pos].reshape(shape)
        return np.fft.ifft(fh, axis=axis).real

    def grad(self, f: np.ndarray) -> np.ndarray:
        """Stack of derivatives along every active axis: shape (d_a,) + f.shape."""
        return np.stack([self._partial_axis(f, p) for p in range(len(self.active))])

    def dealias(self, f: np.ndarray) -> np.ndarray:
        """Zero all spectral content above the 2/3 cutoff on each active axis."""
        ax0 = f.ndim - len(self.shape)
        axes = tuple(range(ax0, f.ndim))
        fh = np.fft.fftn(f, axes=axes)
        for pos, keep in enumerate(self._keep):
            shape = [1] * f.ndim
            shape[ax0 + pos] = self.shape[pos]
            fh *= keep.reshape(shape)
        return np.fft.ifftn(fh, axes=axes).real

    # -- reductions --------------------------------------------------------

    def sup(self, f: np.ndarray) -> float:
        return float(np.max(np.abs(f)))

    def integrate(self, f: np.ndarray) -> float:
        """Integral over the full torus T^D (constant along inactive dims)."""
        vol = (2.0 * np.pi) ** self.dim
        naxes = tuple(range(f.ndim - len(self.shape), f.ndim))
        return float(f.mean(axis=naxes) * vol)

    def l2(self, f: np.ndarray) -> float:
        """L^2 norm over T^D, summing squares over any component axes."""
        vol = (2.0 * np.pi) ** self.dim
        return float(np.sqrt((f * f).mean(axis=tuple(range(f.ndim - len(self.shape), f.ndim))).sum() * vol))

    def describe(self) -> dict:
        return {"dim": self.dim, "active_dims": self.active, "sizes": self.shape}


def frame_derivative(grid: Grid, e: np.ndarray, f: np.ndarray) -> np.ndarray:
    """All frame derivatives e_I f = e_I^c d_c f at once: shape (D,) + f.shape.

    Only the active coordinate components of e contribute, since the
    inactive partial derivatives vanish.
    """
    df = grid.grad(f)                      # (d_a,) + f.shape
    e_act = e[:, list(grid.active)]        # (D, d_a) + grid.shape
    return np.einsum("Id...,d...->I...", e_act, df)


def frame_divergence(grid: Grid, e: np.ndarray, v: np.ndarray) -> np.ndarray:
    """sum_C e_C v_C for a frame-indexed field v of shape (D,) + grid.shape."""
    dv = grid.grad(v)                      # (d_a, D) + grid.shape
    e_act = e[:, list(grid.active)]
    return np.einsum("Cd...,dC...->...", e_act, dv)
