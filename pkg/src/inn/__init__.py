"""Interpolating neural networks: grid-based interpolatory models with
full, Tucker and CP forward passes, trained on data or solved against PDEs.
"""

import os as _os

# INN_THREADS caps BLAS/OpenMP workers; it must be applied before numpy loads.
if _os.environ.get("INN_THREADS", "").isdigit() and int(_os.environ["INN_THREADS"]) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["INN_THREADS"])

from .grid import DomainError, Grid1D, PatchScheme, ProductGrid, build_uniform_grid, uniform_product_grid  # noqa: E402
from .model import (  # noqa: E402
    CPModel,
    FullModel,
    INNModel,
    TuckerModel,
    count_params,
    forward,
    forward_batch,
    grad_input,
    grad_params,
    init_model,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "CPModel",
    "DomainError",
    "FullModel",
    "Grid1D",
    "INNModel",
    "PatchScheme",
    "ProductGrid",
    "TuckerModel",
    "build_uniform_grid",
    "count_params",
    "forward",
    "forward_batch",
    "grad_input",
    "grad_params",
    "init_model",
    "load_checkpoint",
    "save_checkpoint",
    "uniform_product_grid",
]
