"""
Quaternion utilities.

Conventions:
- Quaternions are stored (w, x, y, z) everywhere, including file formats.
- All functions take batches (..., 4) / (..., 3) as well as single rotations.
- Angles are in radians.
- Rotation matrices act on column vectors; column k is the image of basis vector k.
"""
import torch

# Below this angle the half-angle sine is replaced by its Taylor form.
SMALL_ANGLE = 1e-8


def quat_normalize(q: torch.Tensor) -> torch.Tensor:
    """Scale quaternions to unit length."""
    return q / torch.linalg.vector_norm(q, dim=-1, keepdim=True)


def quat_multiply(q0: torch.Tensor, q1: torch.Tensor) -> torch.Tensor:
    """Hamilton product q0 ⊗ q1."""
    w0, x0, y0, z0 = q0.unbind(-1)
    w1, x1, y1, z1 = q1.unbind(-1)
    return torch.stack(
        (
            w0 * w1 - x0 * x1 - y0 * y1 - z0 * z1,
            w0 * x1 + x0 * w1 + y0 * z1 - z0 * y1,
            w0 * y1 - x0 * z1 + y0 * w1 + z0 * x1,
            w0 * z1 + x0 * y1 - y0 * x1 + z0 * w1,
        ),
        dim=-1,
    )


def axis_angle_to_quat(a: torch.Tensor) -> torch.Tensor:
    """
    Convert angle-axis vectors to unit quaternions.

    Args:
        a: (..., 3) rotation vectors, angle = norm, axis = direction

    Returns:
        (..., 4) unit quaternions (w, x, y, z)
    """
    theta = torch.linalg.vector_norm(a, dim=-1, keepdim=True)
    small = theta < SMALL_ANGLE
    # keep the unused branch finite so autograd never sees 0/0
    safe_theta = torch.where(small, torch.ones_like(theta), theta)

    half = 0.5 * safe_theta
    exact = torch.cat((torch.cos(half), torch.sin(half) * a / safe_theta), dim=-1)
    taylor = quat_normalize(torch.cat((torch.ones_like(theta), 0.5 * a), dim=-1))
    return torch.where(small, taylor, exact)


def quat_to_rotmat(q: torch.Tensor) -> torch.Tensor:
    """
    Rotation matrices of (not necessarily unit) quaternions.

    Args:
        q: (..., 4) quaternions (w, x, y, z); normalised internally

    Returns:
        (..., 3, 3) rotation matrices
    """
    w, x, y, z = quat_normalize(q).unbind(-1)
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z

    rows = (
        torch.stack((1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy)), dim=-1),
        torch.stack((2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx)), dim=-1),
        torch.stack((2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy)), dim=-1),
    )
    return torch.stack(rows, dim=-2)


def quat_rotate(q: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Rotate vectors v (..., 3) by quaternions q (..., 4)."""
    return (quat_to_rotmat(q) @ v.unsqueeze(-1)).squeeze(-1)
