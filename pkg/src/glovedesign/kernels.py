"""Backend selection for the hot kernels.

The compiled extension is used when importable; set ``GLOVEDESIGN_PURE_PYTHON=1``
to force the numpy fallback. Both backends are importable individually as
``glovedesign._pykernels`` and ``glovedesign._ckernels``.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("GLOVEDESIGN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "compiled"
    except ImportError:  # extension not built
        pass

_c = np.ascontiguousarray


def v1_grad(P, H, R, want_grad=True):
    return _impl.v1_grad(_c(P, dtype=float), _c(H, dtype=float), _c(R, dtype=float), want_grad)


def v2_value(H):
    return _impl.v2_value(_c(H, dtype=float))


def v2_flow(H):
    return _impl.v2_flow(_c(H, dtype=float))


def subset_scan(P, P2, P3, R, m, tol):
    return _impl.subset_scan(_c(P, dtype=float), _c(P2, dtype=float), _c(P3, dtype=float),
                             _c(R, dtype=float), int(m), float(tol))


def backends():
    """Return the importable backend modules, keyed by name."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["compiled"] = _ckernels
    except ImportError:
        pass
    return out
