"""Seeded synthetic data: a portable RNG, GARCH(1,1) paths and noisy RV.

Random numbers come from SplitMix64 used in counter mode: output ``i``
(1-based) is ``mix(seed + i * 0x9E3779B97F4A7C15 mod 2**64)``. Uniforms are
``((u >> 11) + 0.5) * 2**-53``, which lie strictly inside (0, 1). Normals are
the inverse CDF of those uniforms computed with Wichura's AS241 (PPND16)
rational approximation. Every step is plain 64-bit integer or IEEE double
arithmetic, so any language can reproduce the streams.

Test vector: seed 1234567 gives raw outputs

    6457827717110365317, 3203168211198807973, 9817491932198370423,
    4593380528125082431, 16408922859458223821
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .econo import GarchParams

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

_G = np.uint64(GOLDEN_GAMMA)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-based SplitMix64 stream; ``draws`` counts outputs consumed."""

    def __init__(self, seed: int) -> None:
        self.seed = int(seed) & MASK64
        self.draws = 0

    def next_u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.draws + 1, self.draws + n + 1, dtype=np.uint64)
        self.draws += n
        with np.errstate(over="ignore"):
            return _mix(np.uint64(self.seed) + idx * _G)

    def uniform(self, size) -> np.ndarray:
        n = int(np.prod(size))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64)
        return ((u + 0.5) * 2.0**-53).reshape(size)

    def normal(self, size) -> np.ndarray:
        return normal_ppf(self.uniform(size))


def derive_seed(seed: int, stream: int) -> int:
    """Independent child seed for a named sub-stream (deterministic)."""
    z = np.array([(int(seed) + (int(stream) + 1) * GOLDEN_GAMMA) & MASK64], dtype=np.uint64)
    return int(_mix(z)[0])


# AS241 PPND16 coefficients, highest degree first for np.polyval.
_A = [2.5090809287301226727e3, 3.3430575583588128105e4, 6.7265770927008700853e4,
      4.5921953931549871457e4, 1.3731693765509461125e4, 1.9715909503065514427e3,
      1.3314166789178437745e2, 3.3871328727963666080e0]
_B = [5.2264952788528545610e3, 2.8729085735721942674e4, 3.9307895800092710610e4,
      2.1213794301586595867e4, 5.3941960214247511077e3, 6.8718700749205790830e2,
      4.2313330701600911252e1, 1.0]
_C = [7.74545014278341407640e-4, 2.27238449892691845833e-2, 2.41780725177450611770e-1,
      1.27045825245236838258e0, 3.64784832476320460504e0, 5.76949722146069140550e0,
      4.63033784615654529590e0, 1.42343711074968357734e0]
_D = [1.05075007164441684324e-9, 5.47593808499534494600e-4, 1.51986665636164571966e-2,
      1.48103976427480074590e-1, 6.89767334985100004550e-1, 1.67638483018380384940e0,
      2.05319162663775882187e0, 1.0]
_E = [2.01033439929228813265e-7, 2.71155556874348757815e-5, 1.24266094738807843860e-3,
      2.65321895265761230930e-2, 2.96560571828504891230e-1, 1.78482653991729133580e0,
      5.46378491116411436990e0, 6.65790464350110377720e0]
_F = [2.04426310338993978564e-15, 1.42151175831644588870e-7, 1.84631831751005468180e-5,
      7.86869131145613259100e-4, 1.48753612908506148525e-2, 1.36929880922735805310e-1,
      5.99832206555887937690e-1, 1.0]


def normal_ppf(p) -> np.ndarray:
    """Standard normal quantile for p in (0, 1), AS241 (about 1e-16 relative)."""
    p = np.asarray(p, dtype=np.float64)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    q = p - 0.5
    out = np.empty_like(p)

    central = np.abs(q) <= 0.425
    qc = q[central]
    r = 0.180625 - qc * qc
    out[central] = qc * np.polyval(_A, r) / np.polyval(_B, r)

    tail = ~central
    qt = q[tail]
    r = np.sqrt(-np.log(np.where(qt < 0.0, p[tail], 1.0 - p[tail])))
    near = r <= 5.0
    val = np.empty_like(r)
    rn = r[near] - 1.6
    val[near] = np.polyval(_C, rn) / np.polyval(_D, rn)
    rf = r[~near] - 5.0
    val[~near] = np.polyval(_E, rf) / np.polyval(_F, rf)
    out[tail] = np.where(qt < 0.0, -val, val)
    return out


@dataclass(frozen=True)
class SimPath:
    returns: np.ndarray
    true_sigma2: np.ndarray
    params: GarchParams
    seed: int


def simulate_garch11(p: GarchParams, n: int, seed: int, burn_in: int = 1000) -> SimPath:
    """Simulate ``r_t = sigma_t * eps_t`` with GARCH(1,1) variance.

    The recursion starts at the unconditional variance; the first ``burn_in``
    steps are discarded.
    """
    p.validate("garch11")
    if n < 1 or burn_in < 0:
        raise ValueError("need n >= 1 and burn_in >= 0")
    total = n + burn_in
    eps = SplitMix64(seed).normal(total).tolist()
    omega, alpha, beta = p.omega, p.alpha, p.beta
    s2 = omega / (1.0 - alpha - beta)
    rets = [0.0] * total
    sig2 = [0.0] * total
    for t in range(total):
        if t > 0:
            r = rets[t - 1]
            s2 = omega + alpha * (r * r) + beta * s2
        sig2[t] = s2
        rets[t] = s2**0.5 * eps[t]
    return SimPath(
        returns=np.array(rets[burn_in:]),
        true_sigma2=np.array(sig2[burn_in:]),
        params=p,
        seed=seed,
    )


def simulate_rv_from_path(path: SimPath, noise: float, seed: int | None = None) -> np.ndarray:
    """Daily RV proxy ``sigma_t * exp(eta_t)`` with ``eta_t ~ N(0, noise**2)``.

    Without an explicit seed the noise stream is derived from the path seed.
    """
    if noise < 0:
        raise ValueError("noise scale must be >= 0")
    sigma = np.sqrt(path.true_sigma2)
    if noise == 0:
        return sigma.copy()
    rng = SplitMix64(derive_seed(path.seed, 1) if seed is None else seed)
    eta = noise * rng.normal(sigma.shape[0])
    return sigma * np.exp(eta)
