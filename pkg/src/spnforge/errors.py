"""Exception types shared across the package."""


class SpnForgeError(Exception):
    """Base class for every error raised by spnforge."""


class SpnSyntaxError(SpnForgeError):
    """Malformed `.spn` text. Carries the offending line and column."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        loc = ""
        if line is not None:
            loc = f"line {line}"
            if col is not None:
                loc += f", col {col}"
            loc += ": "
        super().__init__(loc + message)


class CycleError(SpnForgeError):
    """A node references itself (the only cycle expressible in id order)."""


class DanglingRefError(SpnForgeError):
    """A child reference points at a node that is not yet defined."""


class MultiRootError(SpnForgeError):
    """More than one node has no parents."""


class InfeasibleParams(SpnForgeError):
    """Random-graph parameters cannot yield a valid connected SPN."""


class NotBinaryError(SpnForgeError):
    """Operation requires a binarized graph but got an n-ary node."""


class InputLengthError(SpnForgeError):
    """Input vector length does not match the graph's leaf count."""


class CapacityError(SpnForgeError):
    """A single instruction's operands cannot coexist in the register file."""


class SpillOverflow(SpnForgeError):
    """Data memory exhausted while spilling register rows."""


class AsmSyntaxError(SpnForgeError):
    """Malformed VLIW assembly text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class ConfigMismatch(SpnForgeError):
    """Assembly was compiled for a different machine configuration."""


class HazardFault(SpnForgeError):
    """Dynamic read of a register whose write has not completed yet."""


class UninitializedRead(SpnForgeError):
    """Dynamic read of a register or memory cell that was never written."""


class IllegalInstruction(SpnForgeError):
    """Instruction field outside the machine's structural envelope."""


class ScheduleDeadlock(SpnForgeError):
    """Internal guard: the scheduler stopped making progress."""
