"""Kernel backend selection.

The compiled kernel is used when it imports cleanly; setting
``TOPM_PURE_PYTHON=1`` forces the pure-Python twin.
"""
from __future__ import annotations

import os

from . import _fallback

POLICY_CODES = {
    "EA": _fallback.EA,
    "AOAm": _fallback.AOAM,
    "OCBAm": _fallback.OCBAM_CADP,
    "OCBAm-corg": _fallback.OCBAM_CORG,
    "OCBAm+": _fallback.OCBAM_PLUS,
    "OCBAss": _fallback.OCBASS,
    "OCBASS": _fallback.OCBASSS,
}

# lower-case spellings accepted on the command line; OCBAss and OCBASS differ
# only in case, so the large-deviations variant gets its own alias
_ALIASES = {
    "ea": "EA",
    "aoam": "AOAm",
    "ocbam": "OCBAm",
    "ocbam-cadp": "OCBAm",
    "ocbam-corg": "OCBAm-corg",
    "ocbam+": "OCBAm+",
    "ocbam-plus": "OCBAm+",
    "ocbass": "OCBAss",
    "ocbasss": "OCBASS",
    "ocbass-ld": "OCBASS",
}

ALL_POLICIES = ("EA", "AOAm", "OCBAm", "OCBAm+", "OCBAss", "OCBASS")


def canonical_policy(name: str) -> str:
    if name in POLICY_CODES:
        return name
    key = name.strip().lower().replace("_", "-")
    if key in _ALIASES:
        return _ALIASES[key]
    raise KeyError(f"unknown policy {name!r}; known: {', '.join(POLICY_CODES)}")


def _load():
    if os.environ.get("TOPM_PURE_PYTHON", "") == "1":
        return _fallback, "python"
    try:
        from . import _kernel
    except ImportError:
        return _fallback, "python"
    return _kernel, "compiled"


kernel, BACKEND = _load()


def get_kernel(name: str | None = None):
    """Return the kernel module for ``name`` ('compiled' or 'python'), default active."""
    if name is None:
        return kernel
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _kernel

        return _kernel
    raise ValueError(f"unknown backend {name!r}")
