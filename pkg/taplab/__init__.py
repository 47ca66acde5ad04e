"""taplab: numerical lab for the TAP complexity of mixed p-spin Ising spin glasses."""

__version__ = "0.1.0"
