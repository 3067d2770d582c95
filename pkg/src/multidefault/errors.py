class ModelError(ValueError):
    """Inconsistent model, reference measure or tree."""


class NegativeDensityError(ModelError):
    pass


class UnvalidatedModelError(ModelError):
    pass


class UnsupportedError(NotImplementedError):
    """Operation not available for this reference kind or scheme."""


class NotAdaptedError(ValueError):
    """Candidate process is not constant on observation atoms."""


class NotMartingaleError(ValueError):
    pass
