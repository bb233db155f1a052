import os

import scipy.fft

AXES = (-3, -2, -1)


def workers():
    value = os.environ.get("BESOVNS_THREADS")
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


def rfft3(x):
    return scipy.fft.rfftn(x, axes=AXES, norm="forward", workers=workers())


def irfft3(x, n):
    return scipy.fft.irfftn(x, s=(n, n, n), axes=AXES, norm="forward", workers=workers())
