"""First quantization estimation for aligned double-compressed JPEG images."""

__version__ = "0.1.0"

from .dctsim import (
    compress_once,
    constant_table,
    dequantize,
    double_compress,
    fdct_block,
    idct_block,
    quantize,
    reconstruct,
    standard_table,
    zigzag_position,
)
from .estimator import (
    DEGENERATE,
    OK,
    UNSUPPORTED,
    DistanceMatrix,
    EstimationParams,
    EstimationResult,
    distance_matrix,
    estimate,
    raw_estimates,
    reg_term,
    regularize,
)
from .jpegio import (
    JpegError,
    JpegFormatError,
    ParsedJpeg,
    PgmError,
    UnsupportedJpegError,
    crop_center,
    encode_baseline_gray,
    parse_jpeg,
    read_pgm,
)
from .refdata import (
    DatasetFormatError,
    NoCandidatesError,
    RefRecord,
    ReferenceDataset,
    SubDataset,
    build_reference,
    deserialize,
    min_distance,
    query,
    serialize,
)
from .stats import (
    CoeffHistogram,
    LaplacianParams,
    build_histogram,
    chi2,
    fit_laplacian,
    is_degenerate,
)
from .types import CoeffGrid, GrayImage, QuantTable

__all__ = [
    "CoeffGrid",
    "CoeffHistogram",
    "DEGENERATE",
    "DatasetFormatError",
    "DistanceMatrix",
    "EstimationParams",
    "EstimationResult",
    "GrayImage",
    "JpegError",
    "JpegFormatError",
    "LaplacianParams",
    "NoCandidatesError",
    "OK",
    "ParsedJpeg",
    "PgmError",
    "QuantTable",
    "RefRecord",
    "ReferenceDataset",
    "SubDataset",
    "UNSUPPORTED",
    "UnsupportedJpegError",
    "build_histogram",
    "build_reference",
    "chi2",
    "compress_once",
    "constant_table",
    "crop_center",
    "dequantize",
    "deserialize",
    "distance_matrix",
    "double_compress",
    "encode_baseline_gray",
    "estimate",
    "fdct_block",
    "fit_laplacian",
    "idct_block",
    "is_degenerate",
    "min_distance",
    "parse_jpeg",
    "quantize",
    "query",
    "raw_estimates",
    "read_pgm",
    "reconstruct",
    "reg_term",
    "regularize",
    "serialize",
    "standard_table",
    "zigzag_position",
]
