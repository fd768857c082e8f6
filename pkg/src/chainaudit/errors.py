"""Exception hierarchy shared by all modules."""


class ChainAuditError(Exception):
    """Base class for all toolkit errors."""


class MalformedRecord(ChainAuditError):
    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


class DuplicateTxid(ChainAuditError):
    pass


class DanglingTxid(ChainAuditError):
    """A block references transactions missing from the transaction store."""

    def __init__(self, missing):
        self.missing = sorted(missing)
        shown = ", ".join(self.missing[:5])
        more = "" if len(self.missing) <= 5 else f" (+{len(self.missing) - 5} more)"
        super().__init__(f"unresolvable txids: {shown}{more}")


class AmbiguousMarker(ChainAuditError):
    pass


class EmptyWindow(ChainAuditError):
    pass


class CycleDetected(ChainAuditError):
    pass


class NoCTxFound(ChainAuditError):
    pass


class NoCBlocks(ChainAuditError):
    pass


class DomainError(ChainAuditError):
    pass


class ApproximationInvalid(ChainAuditError):
    pass


class InsufficientHistory(ChainAuditError):
    pass


class UnknownPool(ChainAuditError):
    pass


class ConfigError(ChainAuditError):
    pass


class MismatchFound(ChainAuditError):
    def __init__(self, heights):
        self.heights = sorted(heights)
        super().__init__(f"candidate-set mismatch at heights {self.heights[:10]}"
                         + ("..." if len(self.heights) > 10 else ""))
