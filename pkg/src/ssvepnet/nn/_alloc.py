"""glibc allocator tuning for the training loop.

Every SGD step allocates a few MB of LSTM activations. With default settings
glibc serves these from fresh mmap regions and returns them on free, so each
step pays for page faults on memory it just released. Raising the mmap and
trim thresholds keeps those blocks in the heap. Results are unaffected.
"""
import ctypes
import sys

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3
_MAX_MMAP_THRESHOLD = 32 * 1024 * 1024  # glibc's ceiling on 64-bit
_tuned = False


def tune_allocator():
    global _tuned
    if _tuned or not sys.platform.startswith("linux"):
        return
    _tuned = True
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(_M_MMAP_THRESHOLD, _MAX_MMAP_THRESHOLD)
        libc.mallopt(_M_TRIM_THRESHOLD, 4 * _MAX_MMAP_THRESHOLD)
    except (OSError, AttributeError):
        pass
