"""Safe RoCoF regions for swing-equation grids and conditional sampling of
disturbances that leave them."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
