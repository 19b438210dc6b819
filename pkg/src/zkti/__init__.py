"""Truth inference compiled to rank-1 constraint systems, with float circuits and a prove/verify protocol."""

from .field_r1cs import DEFAULT_PRIME, ConstraintSystem, FieldElement, is_satisfied
from .float_circuits import Float, float_decode, float_encode
from .truth_inference import Algorithm, AnswerMatrix, PriorFactors, run_inference
from .zkti_protocol import (
    ProofBundle,
    PublicParams,
    Reason,
    export_bundle,
    import_bundle,
    prove,
    setup,
    verify,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_PRIME",
    "Algorithm",
    "AnswerMatrix",
    "ConstraintSystem",
    "FieldElement",
    "Float",
    "PriorFactors",
    "ProofBundle",
    "PublicParams",
    "Reason",
    "export_bundle",
    "float_decode",
    "float_encode",
    "import_bundle",
    "is_satisfied",
    "prove",
    "run_inference",
    "setup",
    "verify",
]
