"""Exception hierarchy.

``InputError`` subclasses describe bad or inconsistent inputs and map to
exit code 2 on the command line; everything else is treated as internal.
"""


class SpecDecodeError(Exception):
    pass


class InputError(SpecDecodeError, ValueError):
    pass


class EmptyCorpus(InputError):
    pass


class EmptyContext(InputError):
    pass


class MissingContext(InputError):
    pass


class MismatchedCorpus(InputError):
    pass


class SizeMismatch(InputError):
    pass


class InvalidTokenId(InputError, IndexError):
    pass


class DegenerateGroup(InputError):
    pass


class ExhaustedVocabulary(SpecDecodeError):
    pass


class FormatError(InputError):
    """A persisted file does not follow the expected JSON-lines layout."""


class ProtocolError(SpecDecodeError):
    pass


class BridgeTimeout(SpecDecodeError, TimeoutError):
    pass
