import numpy as np
import torch


def finite_difference_check(fn, x, n_coords=20, eps=1e-6, rtol=1e-3, seed=0):
    """Compare autograd of scalar ``fn(x)`` with central differences on random coordinates.

    Returns the worst relative error; ``x`` must be a float64 leaf tensor.
    """
    x = x.detach().clone().requires_grad_(True)
    (grad,) = torch.autograd.grad(fn(x), x)
    flat = x.detach().reshape(-1)
    rng = np.random.default_rng(seed)
    coords = rng.choice(flat.numel(), size=min(n_coords, flat.numel()), replace=False)
    worst = 0.0
    for i in coords:
        plus, minus = flat.clone(), flat.clone()
        plus[i] += eps
        minus[i] -= eps
        with torch.no_grad():
            num = (fn(plus.view_as(x)) - fn(minus.view_as(x))).item() / (2 * eps)
        ana = grad.reshape(-1)[i].item()
        err = abs(num - ana) / max(abs(num), abs(ana), 1e-6)
        worst = max(worst, err)
    return worst


_ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(_ACCEPTANCE, key=lambda r: str(r[0])):
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  {detail}")


def record(criterion, ok, detail=""):
    """Log one acceptance line and return ``ok`` so callers can assert on it."""
    _ACCEPTANCE.append((criterion, bool(ok), detail))
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
    return bool(ok)
