"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the pure-Python
module is used. Set ``PANAP_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("PANAP_PURE_PYTHON") == "1":
    from ._kernels_py import fnv1a64, hash_tokens, posting_sums, session_overlap

    BACKEND = "python"
else:
    try:
        from ._kernels import fnv1a64, hash_tokens, posting_sums, session_overlap

        BACKEND = "cython"
    except ImportError:
        from ._kernels_py import fnv1a64, hash_tokens, posting_sums, session_overlap

        BACKEND = "python"

__all__ = ["BACKEND", "fnv1a64", "hash_tokens", "posting_sums", "session_overlap"]
