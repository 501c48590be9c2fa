"""Exception hierarchy; the CLI maps these onto exit codes."""


class PorlabError(Exception):
    pass


class InputError(PorlabError, ValueError):
    """Bad arguments or malformed input data."""


class BuildError(InputError):
    """A dyadic build was requested with parameters the space cannot support."""


class DepthError(PorlabError):
    """A descent ran out of resolution before finding what it looked for."""


class NoHoleError(PorlabError):
    """The ball has no E-free hole, so no porosity certificate exists."""


class EstimationError(PorlabError):
    """Every sample was degenerate; nothing could be estimated."""


class InvariantError(PorlabError, AssertionError):
    """An asserted structural invariant failed."""
