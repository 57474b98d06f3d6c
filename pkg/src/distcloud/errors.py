"""Exception hierarchy shared by every simulator module."""


class SimError(Exception):
    pass


class PastEvent(SimError):
    pass


class UnknownLink(SimError):
    pass


class UnknownImage(SimError):
    pass


class UnknownSample(SimError):
    pass


class UnknownSite(SimError):
    pass


class UnknownHandle(SimError):
    pass


class NoFreeSlot(SimError):
    pass


class NoCapacity(SimError):
    pass


class IllegalState(SimError):
    pass


class DuplicateId(SimError):
    pass


class BadParams(SimError):
    pass


class ScenarioError(SimError):
    pass


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    """Raised with every violation found, each prefixed by its field path."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
