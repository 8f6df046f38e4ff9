"""Select the Metropolis-Hastings kernel backend.

The compiled extension is used when it was built and imports cleanly; set
``ERPM_PURE_PYTHON=1`` to force the pure-Python fallback. Both backends expose
the same ``Chain`` class and produce identical chains for the same seed.
"""

import os

from . import _kernel_py

BACKEND = "python"
Chain = _kernel_py.Chain

if os.environ.get("ERPM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernel as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        Chain = _compiled.Chain
        BACKEND = "cython"


def get_chain_class(backend=None):
    """Return the ``Chain`` class for ``backend`` ('cython', 'python' or None for the default)."""
    if backend is None:
        return Chain
    if backend == "python":
        return _kernel_py.Chain
    if backend == "cython":
        from . import _kernel

        return _kernel.Chain
    raise ValueError(f"unknown backend {backend!r}")
