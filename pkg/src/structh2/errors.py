"""Exception types shared across the package."""


class StructH2Error(Exception):
    """Base class for all package errors."""


class DimensionMismatch(StructH2Error):
    """Operands have incompatible shapes."""


class UnstableMatrix(StructH2Error):
    """A Schur-stable matrix was required (spectral radius < 1)."""


class UnstableClosedLoop(StructH2Error):
    """The closed loop A + B K is not Schur stable."""


class EmptySubspace(StructH2Error):
    """A gain subspace needs at least one basis element."""


class RankDeficientData(StructH2Error):
    """Data matrices [X-; U-] do not have full row rank (Psi22 not negative definite)."""


class EmptyInterior(StructH2Error):
    """The consistency set has no interior (Schur slack of Psi is not PSD)."""


class SingularInnerBlock(StructH2Error):
    """R + R^T - P is singular or indefinite where positive definiteness is required."""


class StructureViolation(StructH2Error):
    """A decoded gain left its subspace beyond tolerance (internal consistency error)."""


class UnboundedShape(StructH2Error):
    """An affine block references a variable that was never declared."""


class ConfigError(StructH2Error):
    """A run configuration file is missing, malformed, or inconsistent."""


class RankDeficientDataWarning(UserWarning):
    """Psi22 is not negative definite; the S-lemma condition may lose necessity."""
