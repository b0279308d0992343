__all__ = ["SpringverbException"]


class SpringverbException(Exception):
    pass
