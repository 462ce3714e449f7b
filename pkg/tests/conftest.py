import numpy as np
import pytest
import torch
import torch.nn as nn


@pytest.fixture(autouse=True)
def _fixed_seed():
    torch.manual_seed(0)
    np.random.seed(0)


class IdentityInpaint(nn.Module):
    """Test double: returns the (unmasked) grayscale input unchanged."""

    def forward(self, masked, mask):
        return masked


class ConstantColor(nn.Module):
    """Test double: returns a constant RGB image."""

    def __init__(self, value=0.5):
        super().__init__()
        self.value = value

    def forward(self, gray, hint, indicator):
        b, _, h, w = gray.shape
        return torch.full((b, 3, h, w), self.value)


class OracleColor(nn.Module):
    """Test double: returns a preset ground-truth image."""

    def __init__(self, target):
        super().__init__()
        self.target = target

    def forward(self, gray, hint, indicator):
        return self.target.unsqueeze(0).expand(gray.shape[0], -1, -1, -1)


def central_difference_grads(f, params, eps=1e-6):
    """Numeric gradient of scalar f() wrt each tensor in params."""
    grads = []
    for p in params:
        g = torch.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            hi = float(f())
            flat[i] = orig - eps
            lo = float(f())
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads


def check_param_grads(loss_fn, module, rel_tol=1e-3, eps=1e-6):
    """Compare analytic parameter gradients of a scalar head against
    central finite differences; asserts relative agreement."""
    params = [p for p in module.parameters() if p.requires_grad]
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for p in params]
    with torch.no_grad():
        numeric = central_difference_grads(loss_fn, [p.data for p in params], eps=eps)
    scale = max(max(a.abs().max().item() for a in analytic), 1e-6)
    for a, n in zip(analytic, numeric):
        err = (a - n).abs().max().item() / scale
        assert err < rel_tol, f"gradient mismatch: rel err {err:.2e}"
