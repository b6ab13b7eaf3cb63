"""Fits for simulated measurement records.

* :func:`fit_flop` - four-component blue-sideband flop model
  ``P_D = aS0 sin^2(W01 t) + aD0 + aS1 sin^2(W12 t) + aD1 cos^2(W01 t)``
  with the coefficients constrained to the simplex.
* :func:`fit_stark_slope` - weighted straight line through shift vs. n.
* :func:`ramsey_contrast` - sinusoid through a phase-scanned Ramsey fringe.

The flop-model frequencies follow the ``sin^2(W t)`` form above, so W is
half the Rabi frequency of a coupling that transfers ``sin^2(Omega t/2)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

COEFF_NAMES = ("a_S0", "a_D0", "a_S1", "a_D1")
MAX_ITER = 500
STEP_TOL = 1e-10
# chi^2 gap below which two start guesses count as the same fit
ALIAS_CHI2 = 4.0
REWEIGHT_PASSES = 3
SQRT2 = np.sqrt(2.0)


class FitError(ValueError):
    pass


@dataclass
class FitResult:
    coefficients: np.ndarray  # a_S0, a_D0, a_S1, a_D1
    omega_01: float
    omega_12: float
    covariance: np.ndarray  # over (a_S0, a_D0, a_S1, a_D1, omega_01, omega_12)
    rss: float  # weighted residual sum of squares (chi^2)
    converged: bool
    rank_deficient: bool = False
    iterations: int = 0
    message: str = ""

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))

    @property
    def coefficient_errors(self) -> np.ndarray:
        return self.stderr[:4]

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[COEFF_NAMES.index(name)])

    def ratio(self) -> tuple[float, float]:
        """omega_12 / omega_01 with its propagated standard error."""
        r = self.omega_12 / self.omega_01
        g = np.array([-self.omega_12 / self.omega_01**2, 1 / self.omega_01])
        var = g @ self.covariance[4:, 4:] @ g
        return float(r), float(np.sqrt(max(var, 0.0)))

    def model(self, tau) -> np.ndarray:
        return flop_model(np.asarray(tau, float), self.coefficients, self.omega_01, self.omega_12)

    def to_dict(self) -> dict:
        err = self.stderr
        return {
            "model": "flop",
            "coefficients": {k: float(v) for k, v in zip(COEFF_NAMES, self.coefficients)},
            "coefficient_stderr": {k: float(v) for k, v in zip(COEFF_NAMES, err[:4])},
            "omega_01_rad_s": self.omega_01,
            "omega_12_rad_s": self.omega_12,
            "omega_01_stderr_rad_s": float(err[4]),
            "omega_12_stderr_rad_s": float(err[5]),
            "covariance": self.covariance.tolist(),
            "chi2": self.rss,
            "converged": self.converged,
            "rank_deficient": self.rank_deficient,
            "iterations": self.iterations,
            "message": self.message,
        }


def flop_model(tau, coeffs, omega_01, omega_12):
    s01 = np.sin(omega_01 * tau) ** 2
    s12 = np.sin(omega_12 * tau) ** 2
    return coeffs[0] * s01 + coeffs[1] + coeffs[2] * s12 + coeffs[3] * (1 - s01)


# --- simplex parameterizations ----------------------------------------------

def _affine_coeffs(z):
    a = np.array([z[0], z[1], z[2], 1.0 - z[0] - z[1] - z[2]])
    jac = np.vstack([np.eye(3), -np.ones((1, 3))])
    return a, jac


def _softmax_coeffs(z):
    logits = np.concatenate([z, [0.0]])
    e = np.exp(logits - logits.max())
    a = e / e.sum()
    full = np.diag(a) - np.outer(a, a)
    return a, full[:, :3]


def _softmax_inverse(a):
    a = np.clip(a, 1e-6, None)
    a = a / a.sum()
    return np.log(a[:3] / a[3])


_PARAM = {"affine": (_affine_coeffs, lambda a: np.asarray(a[:3], float)),
          "softmax": (_softmax_coeffs, _softmax_inverse)}


def _unpack(data):
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise FitError("data must be rows of (tau, P_D[, stderr])")
    tau, p = arr[:, 0], arr[:, 1]
    err = arr[:, 2] if arr.shape[1] == 3 else np.full_like(p, 0.05)
    err = np.where(err > 0, err, np.min(err[err > 0]) if np.any(err > 0) else 1.0)
    return tau, p, err


def dominant_frequency(tau, signal) -> float:
    """Angular frequency of the largest peak in the spectrum of ``signal``.

    Works on arbitrary sample times via a direct Fourier sum; among peaks of
    equal height the lower frequency wins.
    """
    tau = np.asarray(tau, float)
    y = np.asarray(signal, float) - np.mean(signal)
    span = np.ptp(tau)
    dt = np.min(np.diff(np.unique(tau)))
    w = np.linspace(0.5 * np.pi / span, np.pi / dt, 4096)
    power = np.abs(np.exp(-1j * np.outer(w, tau)) @ y) ** 2
    # ignore the low-frequency leakage lobe below one period over the record
    power[w < 2 * np.pi / span] = 0.0
    k = int(np.flatnonzero(power >= power.max() * (1 - 1e-9))[0])
    # parabolic refinement around the grid maximum
    if 0 < k < len(w) - 1:
        y0, y1, y2 = power[k - 1:k + 2]
        denom = y0 - 2 * y1 + y2
        if denom != 0:
            return float(w[k] + 0.5 * (y0 - y2) / denom * (w[1] - w[0]))
    return float(w[k])


def _linear_coeffs(tau, p, err, w01, w12):
    """Simplex-sum-constrained weighted linear solve for the coefficients."""
    s01, s12 = np.sin(w01 * tau) ** 2, np.sin(w12 * tau) ** 2
    basis = np.column_stack([s01, np.ones_like(tau), s12, 1 - s01])
    # substitute a_D1 = 1 - a_S0 - a_D0 - a_S1
    x = (basis[:, :3] - basis[:, 3:]) / err[:, None]
    y = (p - basis[:, 3]) / err
    z, *_ = np.linalg.lstsq(x, y, rcond=None)
    return np.array([z[0], z[1], z[2], 1 - z.sum()])


def _levenberg_marquardt(resid_jac, theta, max_iter=MAX_ITER):
    r, jac = resid_jac(theta)
    cost = r @ r
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        jtj = jac.T @ jac
        g = jac.T @ r
        d = np.diag(jtj).copy()
        d[d == 0] = 1.0
        try:
            step = -np.linalg.solve(jtj + lam * np.diag(d), g)
        except np.linalg.LinAlgError:
            lam *= 2
            continue
        trial = theta + step
        r_t, jac_t = resid_jac(trial)
        cost_t = r_t @ r_t
        if np.isfinite(cost_t) and cost_t <= cost:
            small = np.linalg.norm(step) <= STEP_TOL * (np.linalg.norm(theta) + STEP_TOL)
            theta, r, jac, cost = trial, r_t, jac_t, cost_t
            lam *= 0.5
            if small or cost == 0:
                converged = True
                break
        else:
            lam *= 2
            if lam > 1e16:
                converged = True  # no descent direction left: at a minimum to precision
                break
    return theta, r, jac, cost, converged, it


def fit_flop(data, lock_sqrt2: bool = False, fixed_frequencies: tuple | None = None,
             initial_omega_01: float | None = None, parameterization: str = "affine",
             dominant: str = "auto", shots: int | None = None) -> FitResult:
    """Weighted damped least-squares fit of the flop model.

    ``data`` rows are ``(tau [s], P_D, stderr)``.  The coefficients always sum
    to one: ``"affine"`` eliminates a_D1, ``"softmax"`` maps three free logits
    onto the simplex.  With ``lock_sqrt2`` the second frequency is tied to
    sqrt(2) times the first.  ``fixed_frequencies=(w01, w12)`` turns the fit
    into a linear one for the coefficients only.

    Without a frequency hint the start value comes from the strongest
    spectral peak.  ``dominant`` says which ladder step that peak belongs to
    (``"01"`` or ``"12"``); ``"auto"`` tries both and keeps the lower chi^2,
    or the lower Omega01 when the two chi^2 differ by less than ALIAS_CHI2.

    With ``shots`` the weights are binomial errors of the fitted model,
    sqrt(m (1 - m) / shots), refined over a few passes; errors estimated from
    the observed frequencies would overweight points that happen to land
    near 0 or 1.
    """
    tau, p, err = _unpack(data)
    if len(tau) < 8:
        raise FitError("need at least 8 data points")
    if parameterization not in _PARAM:
        raise ValueError(f"unknown parameterization {parameterization!r}")
    to_coeffs, from_coeffs = _PARAM[parameterization]

    if np.ptp(p) == 0:
        c = float(p[0])
        coeffs = np.array([0.0, c, 1.0 - c, 0.0])
        return FitResult(coeffs, 0.0, 0.0, np.zeros((6, 6)), 0.0, converged=False,
                         rank_deficient=True, message="constant data: frequencies undetermined")

    scale = float(np.max(np.abs(tau))) or 1.0
    x = tau / scale

    if fixed_frequencies is not None:
        w01, w12 = (float(w) * scale for w in fixed_frequencies)
        n_freq = 0
    else:
        n_freq = 1 if lock_sqrt2 else 2

    def unpack_theta(theta):
        z = theta[:3]
        if n_freq == 0:
            return z, w01, w12
        if n_freq == 1:
            return z, theta[3], SQRT2 * theta[3]
        return z, theta[3], theta[4]

    def resid_jac(theta):
        z, f01, f12 = unpack_theta(theta)
        a, da = to_coeffs(z)
        s01, s12 = np.sin(f01 * x) ** 2, np.sin(f12 * x) ** 2
        basis = np.column_stack([s01, np.ones_like(x), s12, 1 - s01])
        model = basis @ a
        cols = [basis @ da]
        d01 = x * np.sin(2 * f01 * x) * (a[0] - a[3])
        d12 = x * np.sin(2 * f12 * x) * a[2]
        if n_freq == 1:
            cols.append((d01 + SQRT2 * d12)[:, None])
        elif n_freq == 2:
            cols.append(d01[:, None])
            cols.append(d12[:, None])
        jac = np.hstack(cols) / err[:, None]
        return (model - p) / err, jac

    def start(f01, f12):
        a0 = _linear_coeffs(tau, p, err, f01 / scale, f12 / scale)
        if parameterization == "softmax":
            a0 = np.clip(a0, 0.02, None)
            a0 /= a0.sum()
        z0 = from_coeffs(a0)
        if n_freq == 0:
            return z0
        if n_freq == 1:
            return np.concatenate([z0, [f01]])
        return np.concatenate([z0, [f01, f12]])

    if n_freq == 0:
        guesses = [(w01, w12)]
    else:
        if initial_omega_01 is not None:
            peaks = [initial_omega_01 * scale]
        else:
            peak = dominant_frequency(x, p) / 2  # sin^2(W t) oscillates at 2W
            peaks = {"auto": [peak, peak / SQRT2], "01": [peak], "12": [peak / SQRT2]}[dominant]
        guesses = [(f, SQRT2 * f) for f in peaks]

    fits = [_levenberg_marquardt(resid_jac, start(f01, f12)) for f01, f12 in guesses]
    lowest = min(f[3] for f in fits)
    # a_S0 = a_D1 makes Omega01 and sqrt(2) Omega01 fit equally well; take the lower
    ties = [f for f in fits if f[3] <= lowest + ALIAS_CHI2]
    theta, r, jac, cost, converged, it = min(ties, key=lambda f: abs(unpack_theta(f[0])[1]))
    if shots is not None:
        floor = 1.0 / shots
        for _ in range(REWEIGHT_PASSES):
            m = r * err + p
            err = np.sqrt(np.clip(m * (1 - m), floor * (1 - floor), None) / shots)
            theta, r, jac, cost, converged, it = _levenberg_marquardt(resid_jac, theta)
    z, f01, f12 = unpack_theta(theta)
    a, da = to_coeffs(z)
    f01, f12 = abs(f01), abs(f12)

    jtj = jac.T @ jac
    rank_deficient = bool(np.linalg.cond(jtj) > 1e14) if jtj.size else False
    cov_theta = np.linalg.pinv(jtj) if jtj.size else np.zeros((0, 0))
    # map to (a_S0, a_D0, a_S1, a_D1, w01, w12) in physical units
    m = np.zeros((6, len(theta)))
    m[:4, :3] = da
    if n_freq == 1:
        m[4, 3] = 1 / scale
        m[5, 3] = SQRT2 / scale
    elif n_freq == 2:
        m[4, 3] = 1 / scale
        m[5, 4] = 1 / scale
    cov = m @ cov_theta @ m.T
    msg = "converged" if converged else f"no convergence after {it} iterations"
    return FitResult(a, f01 / scale, f12 / scale, cov, float(cost), converged,
                     rank_deficient, it, msg)


def single_sine_frequency(data) -> float:
    """First-pass fit of ``A sin^2(W t) + B``; returns W (rad/s)."""
    tau, p, err = _unpack(data)
    scale = float(np.max(np.abs(tau))) or 1.0
    x = tau / scale

    def resid_jac(theta):
        amp, off, w = theta
        s = np.sin(w * x) ** 2
        jac = np.column_stack([s, np.ones_like(x), amp * x * np.sin(2 * w * x)]) / err[:, None]
        return (amp * s + off - p) / err, jac

    w0 = dominant_frequency(x, p) / 2
    theta, *_ = _levenberg_marquardt(resid_jac, np.array([np.ptp(p), np.min(p), w0]))
    return float(abs(theta[2]) / scale)


# --- straight line ------------------------------------------------------------

@dataclass
class StarkFit:
    slope: float
    intercept: float
    slope_err: float
    intercept_err: float
    residuals: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"model": "stark", "slope_rad_s": self.slope, "intercept_rad_s": self.intercept,
                "slope_stderr_rad_s": self.slope_err, "intercept_stderr_rad_s": self.intercept_err,
                "slope_hz": self.slope / (2 * np.pi), "intercept_hz": self.intercept / (2 * np.pi)}


def fit_stark_slope(data) -> StarkFit:
    """Weighted straight-line fit of shift (rad/s) against phonon number."""
    arr = np.asarray(data, dtype=float)
    n, y = arr[:, 0], arr[:, 1]
    err = arr[:, 2] if arr.shape[1] > 2 else np.ones_like(y)
    err = np.where(err > 0, err, 1.0)
    if len(np.unique(n)) < 2:
        raise FitError("need at least two distinct phonon numbers")
    w = 1 / err**2
    s, sx, sy = w.sum(), (w * n).sum(), (w * y).sum()
    sxx, sxy = (w * n * n).sum(), (w * n * y).sum()
    det = s * sxx - sx**2
    slope = (s * sxy - sx * sy) / det
    intercept = (sxx * sy - sx * sxy) / det
    return StarkFit(float(slope), float(intercept), float(np.sqrt(s / det)),
                    float(np.sqrt(sxx / det)), y - (slope * n + intercept))


# --- Ramsey fringe ------------------------------------------------------------

@dataclass
class RamseyFit:
    contrast: float
    phase_offset: float
    baseline: float
    contrast_err: float
    raw_contrast: float
    converged: bool = True

    def to_dict(self) -> dict:
        return {"model": "ramsey", "contrast": self.contrast, "contrast_stderr": self.contrast_err,
                "phase_offset_rad": self.phase_offset, "baseline": self.baseline,
                "converged": self.converged}


def ramsey_contrast(data) -> RamseyFit:
    """Fit ``P_D = B + (c/2) cos(phase + phase_offset)``.

    Linear in (B, c cos, c sin), so the solve is closed form.  The contrast is
    clipped to [0, 1]; the unclipped value is kept in ``raw_contrast``.
    """
    arr = np.asarray(data, dtype=float)
    phi, p = arr[:, 0], arr[:, 1]
    err = arr[:, 2] if arr.shape[1] > 2 else np.ones_like(p)
    err = np.where(err > 0, err, np.min(err[err > 0]) if np.any(err > 0) else 1.0)
    if np.ptp(phi) < 2 * np.pi - 1e-9 and len(np.unique(np.mod(phi, 2 * np.pi))) < 3:
        raise FitError("phase scan must span a full period")
    x = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)]) / err[:, None]
    coef, *_ = np.linalg.lstsq(x, p / err, rcond=None)
    base, alpha, beta = coef
    amp = np.hypot(alpha, beta)
    cov = np.linalg.pinv(x.T @ x)
    if amp > 0:
        g = np.array([0.0, alpha, beta]) / amp
        amp_err = float(np.sqrt(max(g @ cov @ g, 0.0)))
    else:
        amp_err = float(np.sqrt(cov[1, 1]))
    raw = 2 * amp
    return RamseyFit(float(np.clip(raw, 0, 1)), float(np.arctan2(-beta, alpha)), float(base),
                     2 * amp_err, float(raw))


def write_report(result, path=None) -> str:
    text = json.dumps(result.to_dict(), indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
