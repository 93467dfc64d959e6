"""Exception hierarchy shared by all modules."""


class EgoAggError(Exception):
    pass


class GraphParseError(EgoAggError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class SelfLoopError(GraphParseError):
    def __init__(self, lineno: int, node: str):
        super().__init__(lineno, f"self-loop on node {node!r} is not allowed")
        self.node = node


class NodeNotFoundError(EgoAggError, KeyError):
    def __init__(self, node):
        super().__init__(f"unknown node {node!r}")
        self.node = node

    def __str__(self):
        return self.args[0]


class OutOfOrderWriteError(EgoAggError):
    pass


class StructuralError(EgoAggError):
    """Overlay structure is unusable (cycle, dangling edge, failed repair)."""


class CapabilityError(EgoAggError):
    """Aggregate lacks a capability the overlay or operation requires."""


class UndefinedMetricError(EgoAggError):
    pass


class OverlayParseError(EgoAggError):
    pass


class MissingActivityError(EgoAggError, KeyError):
    def __init__(self, node: str):
        super().__init__(node)
        self.node = node

    def __str__(self):
        return f"no activity estimate for node {self.node}"
