import numpy as np

from ..errors import ValidationError
from ..numerics import check_distribution


def fuse(p_a, p_b, w):
    """Weighted average ``w * p_a + (1 - w) * p_b`` of two probability arrays."""
    if not 0.0 <= w <= 1.0:
        raise ValidationError("fusion weight must lie in [0, 1]")
    p_a = check_distribution(p_a, atol=1e-6)
    p_b = check_distribution(p_b, atol=1e-6)
    return w * p_a + (1.0 - w) * p_b
