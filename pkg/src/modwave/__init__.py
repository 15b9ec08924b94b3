"""Modified free evolution, spectral decomposition and Cesaro wave-limit checks
for half-line Schrodinger operators with slowly decaying potentials."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
