"""sRGB <-> CIE-Lab (D65 white, 2° observer).

Formulas:

* sRGB companding: ``c_lin = c/12.92`` if ``c <= 0.04045`` else ``((c+0.055)/1.055)**2.4``
* linear RGB -> XYZ with the IEC 61966-2-1 matrix below
* ``f(t) = t**(1/3)`` if ``t > (6/29)**3`` else ``t/(3*(6/29)**2) + 4/29``
* ``L = 116 f(Y/Yn) - 16``, ``a = 500 (f(X/Xn) - f(Y/Yn))``, ``b = 200 (f(Y/Yn) - f(Z/Zn))``
"""
import numpy as np

D65_WHITE = np.array([0.95047, 1.0, 1.08883])

_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)

_DELTA = 6.0 / 29.0


def _f(t):
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)


def _finv(t):
    return np.where(t > _DELTA, t**3, 3 * _DELTA**2 * (t - 4.0 / 29.0))


def srgb_to_linear(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * np.power(np.maximum(c, 0.0), 1 / 2.4) - 0.055)


def rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Convert a 3×H×W sRGB array in [0, 1] to a 3×H×W Lab array."""
    lin = srgb_to_linear(rgb)
    xyz = np.tensordot(_RGB_TO_XYZ, lin, axes=1) / D65_WHITE[:, None, None]
    fx, fy, fz = _f(xyz)
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)])


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[0] + 16.0) / 116.0
    fx = fy + lab[1] / 500.0
    fz = fy - lab[2] / 200.0
    xyz = _finv(np.stack([fx, fy, fz])) * D65_WHITE[:, None, None]
    return linear_to_srgb(np.tensordot(_XYZ_TO_RGB, xyz, axes=1))
