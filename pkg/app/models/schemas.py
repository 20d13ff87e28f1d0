"""Core Pydantic data models for FuncRC"""

from pydantic import BaseModel, Field, field_validator, model_validator
from typing import Optional, Dict, Any, List
from datetime import datetime
from enum import Enum

MIN_SUBGRID = 8

# ========== ENUMS ==========

class BasisFamily(str, Enum):
    """Eigenfunction families of the simulation models"""
    FOURIER = "fourier"
    GRAM_SCHMIDT_M2 = "gramSchmidtM2"
    LEGENDRE_M3 = "legendreM3"
    FOURIER_EXTENDED_M4 = "fourierExtendedM4"
    GRAM_SCHMIDT_EXTENDED_M5 = "gramSchmidtExtendedM5"
    LEGENDRE_EXTENDED_M6 = "legendreExtendedM6"
    CUSTOM = "custom"

class ErrorKind(str, Enum):
    """Measurement error processes"""
    BANDED = "banded"
    IID = "iid"
    NONE = "none"

class FitMethod(str, Enum):
    """Slope estimators"""
    RC = "rc"
    ST = "st"
    RC_QUADRATIC = "rc-quadratic"

class ResponseKind(str, Enum):
    """Response types"""
    SCALAR = "scalar"
    FUNCTIONAL = "functional"

class RankMethod(str, Enum):
    """Rank selection procedures"""
    MODE = "mode"
    ESSENTIAL = "essential"
    KNOWN = "known"

# ========== SIMULATION MODELS ==========

class ModelSpec(BaseModel):
    """Full description of a simulated covariate X and its response"""
    name: Optional[str] = Field(None, description="Canonical model name (M1..M6) or a free label")
    basis_family: BasisFamily = Field(..., description="Eigenfunction family")
    rank: int = Field(..., ge=1, description="Number of eigenfunctions r")
    eigenvalues: List[float] = Field(..., description="lambda_1 >= ... >= lambda_r > 0")
    slope_coefficients: List[float] = Field(default_factory=list, description="Slope beta on eta_1, eta_2, ...")
    response_noise: float = Field(default=1.0, ge=0, description="Standard deviation of the response noise")
    intercept: float = Field(default=0.0, description="Response intercept alpha")
    operator_coefficients: Optional[List[List[float]]] = Field(
        None, description="c_jk of a function-on-function slope sum c_jk eta_j x eta_k"
    )
    quadratic_coefficients: Optional[List[List[float]]] = Field(
        None, description="Symmetric c_jk of a quadratic term sum c_jk zeta_jk"
    )
    custom_basis: Optional[List[List[float]]] = Field(
        None, description="Grid-sampled functions for the custom family, orthonormalized on the grid"
    )

    @field_validator('eigenvalues')
    @classmethod
    def check_eigenvalues(cls, values: List[float]) -> List[float]:
        if any(v <= 0 for v in values):
            raise ValueError("eigenvalues must be positive")
        if any(b > a for a, b in zip(values, values[1:])):
            raise ValueError("eigenvalues must be non-increasing")
        return values

    @model_validator(mode='after')
    def check_dimensions(self) -> 'ModelSpec':
        r = self.rank
        if len(self.eigenvalues) != r:
            raise ValueError(f"{len(self.eigenvalues)} eigenvalues given for rank {r}")
        if len(self.slope_coefficients) > r:
            raise ValueError(f"{len(self.slope_coefficients)} slope coefficients exceed rank {r}")
        for label, matrix in (('operator', self.operator_coefficients), ('quadratic', self.quadratic_coefficients)):
            if matrix is None:
                continue
            size = len(matrix)
            if size > r or any(len(row) != size for row in matrix):
                raise ValueError(f"{label} coefficients must be a square matrix of size at most {r}")
        if self.quadratic_coefficients is not None:
            q = self.quadratic_coefficients
            if any(abs(q[j][k] - q[k][j]) > 1e-12 for j in range(len(q)) for k in range(len(q))):
                raise ValueError("quadratic coefficients must be symmetric")
        if self.operator_coefficients is not None and self.quadratic_coefficients is not None:
            raise ValueError("a model has either a functional or a quadratic response, not both")
        if self.basis_family == BasisFamily.CUSTOM:
            if not self.custom_basis or len(self.custom_basis) < r:
                raise ValueError(f"custom family needs at least {r} basis functions")
        return self

    @property
    def functional_response(self) -> bool:
        return self.operator_coefficients is not None

class ErrorSpec(BaseModel):
    """Measurement error process U"""
    kind: ErrorKind = Field(..., description="banded | iid | none")
    delta: Optional[float] = Field(None, gt=0, le=1, description="Bandwidth of the banded process")
    gammas: Optional[List[float]] = Field(None, description="Variances gamma_1..gamma_D of the tent components")
    variance: Optional[float] = Field(None, ge=0, description="Node variance of the i.i.d. process")

    @model_validator(mode='after')
    def check_kind(self) -> 'ErrorSpec':
        if self.kind == ErrorKind.BANDED:
            if self.delta is None:
                raise ValueError("banded error needs a bandwidth delta")
            if self.gammas is not None:
                if len(self.gammas) != self.D:
                    raise ValueError(f"banded error with delta={self.delta} needs D={self.D} variances")
                if any(g <= 0 for g in self.gammas):
                    raise ValueError("banded error variances must be positive")
        if self.kind == ErrorKind.IID and self.variance is None:
            raise ValueError("i.i.d. error needs a variance")
        return self

    @property
    def D(self) -> int:
        """Number of tent components floor(1/delta)"""
        return int(1.0 / self.delta + 1e-9) if self.delta else 0

# ========== RUN CONFIGURATION ==========

class RunConfig(BaseModel):
    """Validated parameters shared by the CLI commands and HTTP endpoints"""
    model: Optional[str] = Field(None, description="Canonical model name M1..M6")
    error: ErrorKind = Field(default=ErrorKind.BANDED, description="Error process")
    delta: float = Field(default=0.05, gt=0, le=1, description="Error bandwidth")
    iid_variance: float = Field(default=0.25, ge=0, description="Variance of i.i.d. node errors")
    n: int = Field(default=100, ge=2, description="Number of curves")
    L: int = Field(default=100, ge=1, description="Grid size")
    l_star: int = Field(default=25, ge=8, description="Target subgrid size L*")
    B: int = Field(default=100, ge=1, description="Number of subgrid draws")
    M: int = Field(default=10, ge=1, description="Largest rank scanned")
    c1_multiplier: float = Field(default=0.01, gt=0, description="Scree cutoff c1 = multiplier * L*^2")
    c2: float = Field(default=50.0, gt=1, description="Condition-number cap")
    delta_star: float = Field(default=0.15, ge=0, le=0.25, description="Band fraction of the mask")
    full_delta_star: Optional[float] = Field(None, ge=0, le=0.25, description="Band fraction on the full grid")
    cv_reps: int = Field(default=500, ge=1, description="CV repetitions")
    cv_folds: int = Field(default=2, ge=2, description="CV folds")
    k_max: int = Field(default=10, ge=1, description="Largest spectral truncation cutoff")
    rank_method: RankMethod = Field(default=RankMethod.MODE, description="mode | essential | known")
    known_rank: Optional[int] = Field(None, ge=1, description="Rank used when rank_method is known")
    method: FitMethod = Field(default=FitMethod.RC, description="Slope estimator")
    published_coefficients: bool = Field(default=False, description="Published var(X x X) inverse coefficients")
    seed: int = Field(default=2024, description="Base seed")
    threads: int = Field(default=1, ge=1, description="Worker threads")

    @property
    def m(self) -> int:
        """Stride whose subgrid size floor(L/m) is nearest L*, ties to the larger stride; 1 uses the full grid"""
        candidates = [m for m in range(2, self.L + 1) if self.L // m >= MIN_SUBGRID] + [1]
        return min(candidates, key=lambda m: (abs(self.L // m - self.l_star), -m))

    @property
    def subgrid_size(self) -> int:
        return self.L // self.m

    @property
    def draws(self) -> int:
        """Subgrid draws actually taken; the full grid admits only one"""
        return 1 if self.m == 1 else self.B

    @property
    def c1(self) -> float:
        """Scree cutoff scaled by the subgrid size actually used"""
        return self.c1_multiplier * self.subgrid_size ** 2

    @model_validator(mode='after')
    def check_rank_method(self) -> 'RunConfig':
        if self.rank_method == RankMethod.KNOWN and self.known_rank is None:
            raise ValueError("rank_method 'known' needs known_rank")
        return self

# ========== HTTP REQUEST MODELS ==========

class SimulateRequest(BaseModel):
    """Request model for POST /api/simulate"""
    model: str = Field(default="M1", description="Canonical model name")
    error: ErrorKind = Field(default=ErrorKind.BANDED)
    delta: float = Field(default=0.05, gt=0, le=1)
    n: int = Field(default=100, ge=2, le=5000)
    L: int = Field(default=100, ge=1, le=1000)
    seed: int = Field(default=2024)
    include_truth: bool = Field(default=True, description="Return X, U and the true slope")

class CurvesPayload(BaseModel):
    """Curves posted as JSON: grid nodes and an n x L data array"""
    grid: List[float] = Field(..., description="Ascending grid nodes in [0, 1]")
    curves: List[List[float]] = Field(..., description="n x L covariate values")

class RankRequest(CurvesPayload):
    """Request model for POST /api/rank"""
    method: RankMethod = Field(default=RankMethod.MODE)
    l_star: int = Field(default=25, ge=8)
    B: int = Field(default=20, ge=1, le=500)
    M: int = Field(default=10, ge=1)
    c1_multiplier: float = Field(default=0.01, gt=0)
    c2: float = Field(default=50.0, gt=1)
    delta_star: float = Field(default=0.15, ge=0, le=0.25)
    seed: int = Field(default=2024)

class FitRequest(RankRequest):
    """Request model for POST /api/fit"""
    y: Optional[List[float]] = Field(None, description="Scalar responses")
    y_curves: Optional[List[List[float]]] = Field(None, description="Functional responses on the covariate grid")
    fit_method: FitMethod = Field(default=FitMethod.RC)
    known_rank: Optional[int] = Field(None, ge=1)
    k: Optional[int] = Field(None, ge=1, description="Spectral truncation cutoff; CV-selected when absent")
    cv_reps: int = Field(default=20, ge=1, le=500)

    @model_validator(mode='after')
    def check_response(self) -> 'FitRequest':
        if (self.y is None) == (self.y_curves is None):
            raise ValueError("give exactly one of y and y_curves")
        return self

# ========== REPORT MODELS ==========

class RankReport(BaseModel):
    """JSON report of a rank selection run"""
    method: RankMethod
    rank: int
    l_star: int
    delta_star: float
    c1: float
    c2: Optional[float] = None
    B: int
    M: int
    seed: int
    details: Dict[str, Any] = Field(default_factory=dict)

class FitReport(BaseModel):
    """JSON report of a fitted slope"""
    method: FitMethod
    response: ResponseKind
    rank: Optional[int] = None
    k: Optional[int] = None
    fit: Dict[str, Any]
    eigenvalues: Optional[List[float]] = None
    thresholds: Dict[str, Any] = Field(default_factory=dict)
    l2_error: Optional[float] = None
    r_squared: Optional[float] = None

class StudyRow(BaseModel):
    """One replicate of one method in a comparison study"""
    model: str
    error: ErrorKind
    delta: Optional[float] = Field(None, description="Bandwidth, banded errors only")
    method: FitMethod
    seed: int
    n: int
    rank_chosen: Optional[int] = Field(None, description="Rank or spectral cut-off; empty when the fit failed")
    true_rank: int
    l2_error: float
    runtime: float

    class Config:
        use_enum_values = True

class HealthStatus(BaseModel):
    """Health check response model"""
    status: str = "healthy"
    service: str = "FuncRC"
    version: str = "1.0.0"
    timestamp: datetime = Field(default_factory=datetime.now)
    features: Dict[str, bool] = Field(default_factory=dict)
