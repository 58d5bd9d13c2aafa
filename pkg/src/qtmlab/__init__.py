"""qtmlab: small quantum Turing machines, halting subspaces, finite-precision
evolution channels, coverage decoding, and toy algorithmic complexity.

Submodules are imported lazily so the CLI can pin threading environment
variables before any numerical library loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "exactnum",
    "operators",
    "machines",
    "evolution",
    "halting",
    "channel",
    "decoder",
    "complexity",
    "mixture",
    "cli",
)

__all__ = list(_SUBMODULES) + ["__version__"]


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        module = importlib.import_module(f".{name}", __name__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
