"""Exception hierarchy.

Every error carries a short ``code`` used by the command line front-end in its
``ERROR:<code>:`` prefix, and an ``exit_status`` (1 for validation problems,
2 for numerical failures).
"""


class EZSDUError(Exception):
    code = "GENERIC"
    exit_status = 1


class ConfigError(EZSDUError):
    code = "CONFIG"


class ThetaOutOfRegime(EZSDUError):
    code = "THETA"


class IllPosed(EZSDUError):
    code = "ILLPOSED"


class OutsideD(EZSDUError):
    code = "OUTSIDE_D"


class DivergentFamily(EZSDUError):
    code = "DIVERGENT"


class NotSelfOrder(EZSDUError):
    code = "NOT_SELF_ORDER"


class NotDominated(EZSDUError):
    code = "NOT_DOMINATED"


class HypothesisUnmet(EZSDUError):
    code = "HYPOTHESIS"


class NoContraction(EZSDUError):
    code = "NO_CONTRACTION"
    exit_status = 2


class MaxIterExceeded(EZSDUError):
    code = "MAX_ITER"
    exit_status = 2
