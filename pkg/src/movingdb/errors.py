"""Exception hierarchy shared by the indexes, the database layer and the cluster."""


class MovingDbError(Exception):
    pass


class EmptyIndex(MovingDbError):
    pass


class DuplicateId(MovingDbError):
    pass


class DuplicatePosition(MovingDbError):
    pass


class UnknownId(MovingDbError, KeyError):
    pass


class OutOfBounds(MovingDbError, ValueError):
    pass


class EmptyTable(MovingDbError, ValueError):
    pass


class EmptyCluster(MovingDbError):
    pass


class EmptyZone(MovingDbError):
    pass


class ConfigError(MovingDbError, ValueError):
    pass
