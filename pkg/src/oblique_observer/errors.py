class AssumptionViolation(ValueError):
    """A structural hypothesis of the observer does not hold.

    Raised for linearly dependent sensors (singular Vandermonde matrix) and
    for a failure of the direct sum ``H = W_S + (aux span)^perp`` (singular
    cross Gram matrix).
    """
