class UnsupportedFeature(Exception):
    """The analysis hit a construct it cannot handle; the verdict becomes Unknown."""


class InsufficientClones(UnsupportedFeature):
    def __init__(self, function: str, max_clones: int):
        self.function = function
        self.max_clones = max_clones
        super().__init__(
            f"insufficient number of threads: all {max_clones} clones of "
            f"'{function}' are in use (raise --max-clones)"
        )


class ArithmeticOverflow(UnsupportedFeature):
    pass
