"""Exception hierarchy. Everything the CLI maps to exit code 2 derives from DataError."""


class DataError(ValueError):
    """Input data is malformed or violates a documented precondition."""


class NetworkError(DataError):
    pass


class DisconnectedNetworkError(NetworkError):
    def __init__(self, node_a: int, node_b: int):
        self.node_a = node_a
        self.node_b = node_b
        super().__init__(f"road network is disconnected: node {node_a} cannot reach node {node_b}")


class TrajectoryError(DataError):
    pass


class ModelFormatError(DataError):
    """A persisted model or matrix file failed its magic, version or checksum check."""


class NetworkMismatchError(DataError):
    pass
